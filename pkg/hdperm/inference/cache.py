"""hdperm.inference.cache

Statistics cache: a built StatMatrix is stored under a key derived from
the dataset fingerprint and the build parameters, so one build can feed
several analyses.
"""

from __future__ import annotations

import io
import logging

import numpy as np

from hdperm.cache import CacheBackend, CacheError, CacheKeyGenerator
from hdperm.cache.backends import FilesystemCacheBackend
from hdperm.cache.utils import array_fingerprint

from .errors import ParseError
from .hdstats import StatMatrix, build_stats
from .models import DesignData
from .rng import Seed
from .selection import Selector
from .settings import StatsCacheSettings, cache_settings

logger = logging.getLogger(__name__)

CACHE_TYPE = "stats"

# full double precision in cached CSV
_CACHE_FLOAT_FORMAT = "%.17g"


def setup_cache_backend(
    settings: StatsCacheSettings | None = None,
) -> tuple[CacheBackend | None, CacheKeyGenerator | None]:
    """Setup cache backend and key generator."""
    settings = settings or cache_settings()
    if not settings.enable:
        logger.debug("Statistics cache disabled")
        return None, None

    logger.info(f"Setting up statistics cache with backend: {settings.backend}")
    key_generator = CacheKeyGenerator(
        namespace=settings.namespace, exclude_params=["n_jobs"]
    )

    if settings.backend == "redis" and settings.redis:
        from hdperm.cache.backends.redis import RedisCacheBackend

        backend: CacheBackend = RedisCacheBackend.from_settings(settings.redis)
    elif settings.backend == "filesystem" and settings.filesystem:
        backend = FilesystemCacheBackend.from_settings(settings.filesystem)
    else:
        logger.warning(f"Invalid cache configuration for backend: {settings.backend}")
        return None, None

    return backend, key_generator


def stats_cache_key(
    key_generator: CacheKeyGenerator,
    data: DesignData,
    method: str,
    Q: int,
    B: int,
    selector: Selector,
    seed: Seed,
) -> str:
    """Cache key of a statistics build."""
    params = {
        "data": array_fingerprint(data.y, data.x),
        "Q": Q,
        "B": B,
        "seed": _seed_token(seed),
        **selector.describe(),
    }
    return key_generator.from_params(CACHE_TYPE, parts=[method], params=params)


def _seed_token(seed: Seed) -> str:
    if isinstance(seed, np.random.SeedSequence):
        return f"{seed.entropy}/{'.'.join(map(str, seed.spawn_key))}"
    return str(seed)


def cached_stats(
    data: DesignData,
    method: str,
    Q: int,
    B: int,
    selector: Selector,
    seed: Seed = None,
    n_jobs: int = 1,
    backend: CacheBackend | None = None,
    key_generator: CacheKeyGenerator | None = None,
    ttl: int | None = None,
) -> StatMatrix:
    """build_stats with a cache lookup in front and a store behind.

    Unseeded builds are never cached. Backend errors and unreadable
    entries are logged and the statistics recomputed.
    """
    if backend is None or key_generator is None or seed is None:
        return build_stats(data, method, Q, B, selector, seed=seed, n_jobs=n_jobs)

    key = stats_cache_key(key_generator, data, method, Q, B, selector, seed)
    try:
        content = backend.get(key)
    except CacheError as e:
        logger.warning(f"Cache lookup failed for {key}: {e}")
        content = None

    if content is not None:
        logger.info(f"Cache hit: {key}")
        try:
            stats = StatMatrix.from_csv(io.StringIO(content.decode("utf-8")))
        except (ParseError, UnicodeDecodeError) as e:
            logger.warning(f"Unreadable cache entry {key}, rebuilding: {e}")
        else:
            if stats.names == data.names:
                return stats
            logger.warning(
                f"Cached entry {key} has different variable names, rebuilding"
            )

    logger.debug(f"Cache miss: {key}")
    stats = build_stats(data, method, Q, B, selector, seed=seed, n_jobs=n_jobs)
    try:
        backend.set(key, stats.to_csv(float_format=_CACHE_FLOAT_FORMAT).encode("utf-8"), ttl=ttl)
    except CacheError as e:
        logger.warning(f"Cache store failed for {key}: {e}")

    return stats


def cache_status(backend: CacheBackend, key_generator: CacheKeyGenerator) -> dict:
    """Backend type, namespace, health and operation counters."""
    return {
        "backend": type(backend).__name__.replace("CacheBackend", "").lower(),
        "namespace": key_generator.namespace,
        "health": backend.health_check(),
        "stats": backend.get_stats(),
    }


def clear_stats(
    backend: CacheBackend, key_generator: CacheKeyGenerator, method: str | None = None
) -> int:
    """Delete cached statistics, all of them or those of one method."""
    pattern = key_generator.get_pattern_for_cache_type(
        CACHE_TYPE, parts=[method] if method else None
    )
    deleted = backend.clear_pattern(pattern)
    logger.info(f"Deleted {deleted} cached statistics matching {pattern}")
    return deleted
