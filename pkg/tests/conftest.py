"""hdperm tests configuration."""

import os
from typing import Any, Generator

import numpy as np
import pytest

from hdperm.inference.models import DesignData
from hdperm.inference.settings import cache_settings, inference_settings


@pytest.fixture(autouse=True)
def clear_settings(monkeypatch):
    """Isolate tests from the environment and the settings caches."""
    for key in list(os.environ):
        if key.startswith("HDPERM_"):
            monkeypatch.delenv(key)

    inference_settings.cache_clear()
    cache_settings.cache_clear()
    yield
    inference_settings.cache_clear()
    cache_settings.cache_clear()


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded random generator."""
    return np.random.default_rng(20240101)


@pytest.fixture
def small_design(rng) -> DesignData:
    """40 x 6 Gaussian design, the first two variables active."""
    x = rng.standard_normal((40, 6))
    beta = np.array([2.0, -1.5, 0, 0, 0, 0])
    y = x @ beta + rng.standard_normal(40)
    return DesignData(y, x, names=[f"x{j}" for j in range(6)])


@pytest.fixture
def dataset_csv(tmp_path, small_design) -> Generator[tuple[str, str], Any, Any]:
    """Design and response CSV files (with header rows) of `small_design`."""
    design_path = tmp_path / "design.csv"
    response_path = tmp_path / "response.csv"

    header = ",".join(small_design.names)
    np.savetxt(design_path, small_design.x, delimiter=",", header=header, comments="")
    np.savetxt(response_path, small_design.y, delimiter=",", header="y", comments="")
    yield str(design_path), str(response_path)


@pytest.fixture
def fake_redis():
    """In-process fakeredis client."""
    fakeredis = pytest.importorskip("fakeredis")
    client = fakeredis.FakeRedis()
    yield client
    client.flushall()
