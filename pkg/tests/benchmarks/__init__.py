"""hdperm benchmarks and calibration checks."""
