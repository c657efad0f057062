"""hdperm tests."""
