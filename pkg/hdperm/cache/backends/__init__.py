"""Cache backends."""

from .base import CacheBackend
from .filesystem import FilesystemCacheBackend

__all__ = ["CacheBackend", "FilesystemCacheBackend"]
