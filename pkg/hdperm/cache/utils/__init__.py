"""Cache utilities."""

from .keys import CacheKeyGenerator, array_fingerprint

__all__ = ["CacheKeyGenerator", "array_fingerprint"]
