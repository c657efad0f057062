"""hdperm statistics cache.

Stores built statistic matrices under deterministic keys so that a single
(expensive) statistics build can feed several downstream analyses.
"""

from .backends.base import CacheBackend, CacheBackendUnavailable, CacheError
from .settings import CacheFilesystemSettings, CacheRedisSettings, CacheSettings
from .utils import CacheKeyGenerator

__all__ = [
    "CacheBackend",
    "CacheBackendUnavailable",
    "CacheError",
    "CacheSettings",
    "CacheRedisSettings",
    "CacheFilesystemSettings",
    "CacheKeyGenerator",
]
