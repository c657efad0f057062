"""Abstract cache backend interface."""

import abc
from typing import Any, Optional


class CacheBackend(abc.ABC):
    """Abstract cache backend interface.

    Defines the contract for the statistics cache backends (local
    directory and Redis).
    """

    @abc.abstractmethod
    def get(self, key: str) -> Optional[bytes]:
        """Retrieve data from cache.

        Args:
            key: Cache key to retrieve

        Returns:
            Cached data as bytes, or None if not found

        Raises:
            CacheError: On backend-specific errors (should be handled gracefully)
        """
        ...

    @abc.abstractmethod
    def set(self, key: str, value: bytes, ttl: Optional[int] = None) -> bool:
        """Store data in cache.

        Args:
            key: Cache key to store under
            value: Data to cache as bytes
            ttl: Time to live in seconds, None for backend default

        Returns:
            True if successfully stored, False on error
        """
        ...

    @abc.abstractmethod
    def delete(self, key: str) -> bool:
        """Delete single cache entry.

        Returns:
            True if key existed and was deleted, False otherwise
        """
        ...

    @abc.abstractmethod
    def clear_pattern(self, pattern: str) -> int:
        """Delete cache entries matching a glob pattern.

        Returns:
            Number of keys deleted
        """
        ...

    @abc.abstractmethod
    def health_check(self) -> dict[str, Any]:
        """Check backend health and return metrics."""
        ...

    def get_stats(self) -> dict[str, Any]:
        """Get cache statistics.

        Base implementation returns empty dict.
        """
        return {}


class CacheError(Exception):
    """Base exception for cache-related errors."""

    pass


class CacheBackendUnavailable(CacheError):
    """Raised when cache backend is unavailable."""

    pass
