"""Tests for cached statistics builds."""

from unittest.mock import MagicMock, patch

import numpy as np
import pytest

from hdperm.cache import CacheError, CacheKeyGenerator
from hdperm.cache.backends import FilesystemCacheBackend
from hdperm.cache.backends.redis import RedisCacheBackend
from hdperm.inference import cache
from hdperm.inference.cache import (
    cache_status,
    cached_stats,
    clear_stats,
    setup_cache_backend,
    stats_cache_key,
)
from hdperm.inference.hdstats import build_stats
from hdperm.inference.models import DesignData
from hdperm.inference.selection import OracleSelector
from hdperm.inference.settings import StatsCacheSettings

SELECTOR = OracleSelector((0, 1), extra=1)


def _build(data, backend, seed=4, **kwargs):
    return cached_stats(
        data,
        "approximate",
        3,
        30,
        SELECTOR,
        seed=seed,
        backend=backend,
        key_generator=CacheKeyGenerator("hdperm", exclude_params=["n_jobs"]),
        **kwargs,
    )


class TestSetupCacheBackend:
    """Backend construction from settings."""

    def test_disabled(self):
        """No backend when the cache is disabled."""
        assert setup_cache_backend(StatsCacheSettings(enable=False)) == (None, None)

    def test_filesystem(self, tmp_path, monkeypatch):
        """Filesystem backend with the configured namespace."""
        monkeypatch.setenv("HDPERM_CACHE_FS_PATH", str(tmp_path))
        backend, key_generator = setup_cache_backend(
            StatsCacheSettings(enable=True, namespace="test")
        )
        assert isinstance(backend, FilesystemCacheBackend)
        assert key_generator.namespace == "test"
        assert key_generator.exclude_params == {"n_jobs"}

    def test_redis(self, monkeypatch):
        """Redis backend; no connection until first use."""
        pytest.importorskip("redis")
        monkeypatch.setenv("HDPERM_CACHE_REDIS_HOST", "cache.local")
        backend, _ = setup_cache_backend(StatsCacheSettings(enable=True, backend="redis"))
        assert isinstance(backend, RedisCacheBackend)
        assert backend.host == "cache.local"


class TestCachedStats:
    """Lookup, store and fallback."""

    def test_hit(self, small_design, tmp_path):
        """The second build is read back from the cache."""
        backend = FilesystemCacheBackend(tmp_path)
        first = _build(small_design, backend)

        with patch.object(cache, "build_stats", side_effect=AssertionError("rebuilt")):
            second = _build(small_design, backend, n_jobs=4)

        np.testing.assert_allclose(second.values, first.values, rtol=1e-15)
        assert second.names == small_design.names
        assert second.method == "approximate"

    def test_matches_uncached(self, small_design, fake_redis):
        """Cached builds equal direct ones."""
        backend = RedisCacheBackend(client=fake_redis)
        direct = build_stats(small_design, "approximate", 3, 30, SELECTOR, seed=4)
        np.testing.assert_array_equal(_build(small_design, backend).values, direct.values)
        assert len(fake_redis.keys("hdperm:stats:approximate:*")) == 1

    def test_other_data_misses(self, small_design, tmp_path):
        """Another dataset gets another entry."""
        backend = FilesystemCacheBackend(tmp_path)
        _build(small_design, backend)
        other = DesignData(small_design.y + 1.0, small_design.x, names=small_design.names)
        _build(other, backend)
        assert backend.health_check()["entries"] == 2

    def test_unseeded_not_cached(self, small_design):
        """Builds without a seed bypass the cache."""
        backend = MagicMock()
        _build(small_design, backend, seed=None)
        backend.get.assert_not_called()
        backend.set.assert_not_called()

    def test_ttl(self, small_design):
        """The TTL is passed to the backend."""
        backend = MagicMock()
        backend.get.return_value = None
        _build(small_design, backend, ttl=30)
        assert backend.set.call_args.kwargs["ttl"] == 30

    def test_backend_errors(self, small_design):
        """Failing lookups and stores fall back to building."""
        backend = MagicMock()
        backend.get.side_effect = CacheError("down")
        backend.set.side_effect = CacheError("down")
        stats = _build(small_design, backend)
        direct = build_stats(small_design, "approximate", 3, 30, SELECTOR, seed=4)
        np.testing.assert_array_equal(stats.values, direct.values)

    def test_renamed_columns(self, small_design, tmp_path):
        """An entry with other variable names is rebuilt."""
        backend = FilesystemCacheBackend(tmp_path)
        _build(small_design, backend)

        renamed = DesignData(small_design.y, small_design.x, names=list("abcdef"))
        key = stats_cache_key(
            CacheKeyGenerator("hdperm"), renamed, "approximate", 3, 30, SELECTOR, 4
        )
        assert backend.get(key) is not None
        assert _build(renamed, backend).names == tuple("abcdef")

    def test_corrupt_entry(self, small_design, tmp_path):
        """An unreadable entry is rebuilt and overwritten."""
        backend = FilesystemCacheBackend(tmp_path)
        key = stats_cache_key(
            CacheKeyGenerator("hdperm", exclude_params=["n_jobs"]),
            small_design,
            "approximate",
            3,
            30,
            SELECTOR,
            4,
        )
        backend.set(key, b"# method=approximate\n0,1,2,3\n1,2,oops,4\n")

        stats = _build(small_design, backend)
        direct = build_stats(small_design, "approximate", 3, 30, SELECTOR, seed=4)
        np.testing.assert_array_equal(stats.values, direct.values)

        with patch.object(cache, "build_stats", side_effect=AssertionError("rebuilt")):
            again = _build(small_design, backend)
        np.testing.assert_allclose(again.values, direct.values, rtol=1e-15)

    def test_undecodable_entry(self, small_design):
        """Non UTF-8 payloads are rebuilt."""
        backend = MagicMock()
        backend.get.return_value = b"\xff\xfe\x00"
        stats = _build(small_design, backend)
        assert stats.values.shape == (30, small_design.x.shape[1])
        backend.set.assert_called_once()


class TestCacheAdmin:
    """Status and clearing of cached statistics."""

    def test_clear_by_method(self, small_design, fake_redis):
        """Clearing one method leaves the other entries."""
        backend = RedisCacheBackend(client=fake_redis)
        key_generator = CacheKeyGenerator("hdperm", exclude_params=["n_jobs"])
        for method in ("exact", "approximate"):
            cached_stats(
                small_design,
                method,
                2,
                20,
                SELECTOR,
                seed=1,
                backend=backend,
                key_generator=key_generator,
            )

        assert clear_stats(backend, key_generator, "exact") == 1
        assert fake_redis.keys("hdperm:stats:exact:*") == []
        assert len(fake_redis.keys("hdperm:stats:approximate:*")) == 1
        assert clear_stats(backend, key_generator) == 1
        assert fake_redis.keys("hdperm:*") == []

    def test_status(self, tmp_path):
        """Backend name, namespace, health and counters."""
        backend = FilesystemCacheBackend(tmp_path)
        backend.get("hdperm:stats:x")
        status = cache_status(backend, CacheKeyGenerator("test"))
        assert status["backend"] == "filesystem"
        assert status["namespace"] == "test"
        assert status["health"]["healthy"]
        assert status["stats"]["misses"] == 1
