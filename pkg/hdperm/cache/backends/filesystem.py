"""Local directory cache backend."""

import fnmatch
import hashlib
import logging
import os
import time
from pathlib import Path
from typing import Any, Optional

import orjson

from ..settings import CacheFilesystemSettings
from .base import CacheBackend, CacheError

logger = logging.getLogger(__name__)


class FilesystemCacheBackend(CacheBackend):
    """Store cache entries as files in a local directory.

    Each entry is a pair of files named after the md5 of the key: the
    payload (`.bin`) and a small JSON sidecar (`.json`) holding the key and
    its expiry time.
    """

    def __init__(self, path: str | os.PathLike):
        """Initialize the backend, creating the directory if needed."""
        self.root = Path(path)
        self.root.mkdir(parents=True, exist_ok=True)
        self._stats = {"hits": 0, "misses": 0, "errors": 0, "total_operations": 0}

    @classmethod
    def from_settings(cls, settings: CacheFilesystemSettings) -> "FilesystemCacheBackend":
        """Create backend from settings."""
        return cls(settings.path)

    def _paths(self, key: str) -> tuple[Path, Path]:
        digest = hashlib.md5(key.encode("utf-8")).hexdigest()
        return self.root / f"{digest}.bin", self.root / f"{digest}.json"

    def _read_meta(self, meta_path: Path) -> Optional[dict[str, Any]]:
        try:
            return orjson.loads(meta_path.read_bytes())
        except FileNotFoundError:
            return None

    def _expired(self, meta: dict[str, Any]) -> bool:
        expires = meta.get("expires_at")
        return expires is not None and expires <= time.time()

    def get(self, key: str) -> Optional[bytes]:
        """Retrieve data from the cache directory."""
        self._stats["total_operations"] += 1
        data_path, meta_path = self._paths(key)
        try:
            meta = self._read_meta(meta_path)
            if meta is None or self._expired(meta):
                self._stats["misses"] += 1
                logger.debug(f"Cache MISS for key: {key}")
                return None

            data = data_path.read_bytes()
        except FileNotFoundError:
            self._stats["misses"] += 1
            return None
        except Exception as e:
            self._stats["errors"] += 1
            logger.error(f"Filesystem get error for key {key}: {e}")
            raise CacheError(f"Failed to get key {key}: {e}") from e

        self._stats["hits"] += 1
        logger.debug(f"Cache HIT for key: {key}")
        return data

    def set(self, key: str, value: bytes, ttl: Optional[int] = None) -> bool:
        """Store data in the cache directory."""
        self._stats["total_operations"] += 1
        data_path, meta_path = self._paths(key)
        meta = {
            "key": key,
            "created_at": time.time(),
            "expires_at": time.time() + ttl if ttl is not None else None,
            "size": len(value),
        }
        try:
            data_path.write_bytes(value)
            meta_path.write_bytes(orjson.dumps(meta))
        except OSError as e:
            self._stats["errors"] += 1
            logger.error(f"Filesystem set error for key {key}: {e}")
            return False

        logger.debug(f"Cache SET for key: {key} (TTL: {ttl})")
        return True

    def delete(self, key: str) -> bool:
        """Delete single cache entry."""
        self._stats["total_operations"] += 1
        data_path, meta_path = self._paths(key)
        existed = meta_path.exists()
        data_path.unlink(missing_ok=True)
        meta_path.unlink(missing_ok=True)
        return existed

    def clear_pattern(self, pattern: str) -> int:
        """Delete entries whose key matches a glob pattern."""
        deleted = 0
        for meta_path in self.root.glob("*.json"):
            meta = self._read_meta(meta_path)
            if meta and fnmatch.fnmatchcase(meta["key"], pattern):
                if self.delete(meta["key"]):
                    deleted += 1

        logger.info(f"Cleared {deleted} keys matching pattern: {pattern}")
        return deleted

    def health_check(self) -> dict[str, Any]:
        """Check that the directory is writable."""
        writable = os.access(self.root, os.W_OK)
        return {
            "healthy": writable,
            "path": str(self.root),
            "entries": len(list(self.root.glob("*.json"))),
        }

    def get_stats(self) -> dict[str, Any]:
        """Get cache statistics."""
        total = self._stats["hits"] + self._stats["misses"]
        return {
            **self._stats,
            "hit_rate": self._stats["hits"] / total if total else 0.0,
        }
