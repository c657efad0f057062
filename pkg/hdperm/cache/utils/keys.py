"""Cache key generation utilities."""

import hashlib
import logging
from typing import Any, Optional
from urllib.parse import urlencode

logger = logging.getLogger(__name__)


class CacheKeyGenerator:
    """Generate deterministic cache keys from build parameters.

    Keys look like `{namespace}:{cache_type}:{part}:...:{params_hash}`;
    parameter order never changes the key.
    """

    def __init__(
        self,
        namespace: str,
        exclude_params: Optional[list[str]] = None,
        max_key_length: int = 512,
    ):
        """Initialize cache key generator.

        Args:
            namespace: Application namespace (e.g., "hdperm")
            exclude_params: Parameters that never participate in keys (e.g. thread count)
            max_key_length: Maximum cache key length
        """
        self.namespace = namespace
        self.exclude_params = {p.lower() for p in exclude_params or []}
        self.max_key_length = max_key_length

    def _filter_params(self, params: dict[str, Any]) -> dict[str, str]:
        """Drop excluded and empty parameters, stringify the rest."""
        filtered = {}
        for key, value in params.items():
            if key.lower() in self.exclude_params:
                logger.debug(f"Excluding parameter from cache key: {key}")
                continue

            normalized = str(value).strip() if value is not None else ""
            if normalized:
                filtered[key] = normalized

        return filtered

    def _generate_params_hash(self, params: dict[str, str]) -> str:
        """Generate a 16-character hash from sorted parameters."""
        if not params:
            return "noparams"

        params_string = urlencode(sorted(params.items()))
        return hashlib.md5(params_string.encode("utf-8")).hexdigest()[:16]

    def from_params(
        self,
        cache_type: str,
        parts: Optional[list[str]] = None,
        params: Optional[dict[str, Any]] = None,
    ) -> str:
        """Generate cache key from key parts and parameters.

        Args:
            cache_type: Type of cache entry (e.g., "stats")
            parts: Human readable key components (e.g., the method)
            params: Parameters hashed into the key

        Returns:
            Cache key string
        """
        params_hash = self._generate_params_hash(self._filter_params(params or {}))

        key_parts = [self.namespace, cache_type] + list(parts or []) + [params_hash]
        cache_key = ":".join(str(part) for part in key_parts if part)

        if len(cache_key) > self.max_key_length:
            key_hash = hashlib.md5(cache_key.encode("utf-8")).hexdigest()
            cache_key = f"{self.namespace}:{cache_type}:hash:{key_hash}"

        logger.debug(f"Generated cache key: {cache_key}")
        return cache_key

    def get_pattern_for_cache_type(
        self, cache_type: str, parts: Optional[list[str]] = None
    ) -> str:
        """Generate glob pattern for a cache type, optionally narrowed by key parts."""
        prefix = ":".join([self.namespace, cache_type, *(parts or [])])
        return f"{prefix}:*"


def array_fingerprint(*arrays: Any) -> str:
    """md5 fingerprint of array contents, shapes and dtypes."""
    digest = hashlib.md5()
    for array in arrays:
        digest.update(str(array.shape).encode("utf-8"))
        digest.update(str(array.dtype).encode("utf-8"))
        digest.update(array.tobytes())

    return digest.hexdigest()
