"""hdperm.inference.simulation

Simulation harness: Toeplitz designs, signal and noise calibration, and
repeated experiments tallying family-wise error rate, rejections and wall
time.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from collections.abc import Mapping, Sequence
from typing import Any, Literal, Self

import attr
import numpy as np
import orjson
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .combine import Combiner, closed_testing_tdp, maxt_adjusted, raw_pvalues
from .errors import (
    InvalidConfig,
    InvalidRho,
    NoConvergence,
    NonPositiveDf,
    SingularGram,
    TooManyFailures,
    ZeroSignal,
)
from .hdstats import build_stats, ordered_map, split_capacity
from .io import load_design
from .linalg import Matrix, Vector
from .models import DesignData
from .multisplit import multisplit_run
from .rng import Seed, Streams, generator, seed_sequence
from .scoreflip import rejection_count
from .selection import LassoSelector, OracleSelector, Selector, selection_size
from .settings import inference_settings

logger = logging.getLogger(__name__)

# largest subset the closed-testing combiner run enumerates
MAX_TDP_VARIABLES = 20

# data-stream slots of a replication
_DESIGN_SLOT = 0
_NOISE_SLOT = 1
_PLACEMENT_SLOT = 2


def gen_toeplitz_design(n: int, m: int, rho: float, seed: Seed = None) -> Matrix:
    """n x m Gaussian design with Cov(X_j, X_h) = rho^|j-h|.

    Columns follow the AR(1) recursion X_1 = Z_1,
    X_j = rho X_{j-1} + √(1 − rho²) Z_j.
    """
    if not 0 <= rho < 1:
        raise InvalidRho(f"rho must lie in [0, 1), got {rho}")

    z = generator(seed).standard_normal((n, m))
    if rho == 0 or m < 2:
        return z

    innovation = math.sqrt(1 - rho**2)
    x = np.empty_like(z)
    x[:, 0] = z[:, 0]
    for j in range(1, m):
        x[:, j] = rho * x[:, j - 1] + innovation * z[:, j]
    return x


def make_beta(
    m: int,
    m1: int,
    strength: str = "uniform",
    active: Sequence[int] | None = None,
) -> Vector:
    """Coefficients with m1 nonzero entries, at `active` or at the first m1 indices.

    `uniform` sets them to 1, `increasing` to 1, 2, ..., m1.
    """
    if not 0 <= m1 <= m:
        raise ValueError(f"m1 must lie in [0, {m}], got {m1}")
    if strength not in ("uniform", "increasing"):
        raise ValueError(f"Unknown strength {strength!r}")

    positions = np.arange(m1) if active is None else np.asarray(active, dtype=np.intp)
    if positions.size != m1:
        raise ValueError(f"{positions.size} active positions for m1={m1}")

    beta = np.zeros(m)
    beta[positions] = 1.0 if strength == "uniform" else np.arange(1, m1 + 1)
    return beta


def calibrate_sigma(x: Matrix, beta: Vector, snr: float) -> float:
    """σ = √(Var̂(Xβ)/snr), Var̂ the (population) variance of the signal entries."""
    if not snr > 0:
        raise ValueError(f"snr must be positive, got {snr}")

    variance = float(np.var(np.asarray(x) @ np.asarray(beta)))
    if variance <= 0:
        raise ZeroSignal("Signal Xβ has zero empirical variance")
    return math.sqrt(variance / snr)


def gen_response(x: Matrix, beta: Vector, sigma: float, seed: Seed = None) -> Vector:
    """Y = Xβ + σ ε with ε i.i.d. standard normal."""
    signal = np.asarray(x) @ np.asarray(beta)
    return signal + sigma * generator(seed).standard_normal(signal.size)


class ExperimentConfig(BaseModel):
    """One simulation scenario. Unknown keys are errors."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    n: int = Field(default=100, ge=4)
    m: int = Field(default=100, ge=1)
    m1: int = Field(default=5, ge=0)
    rho: float = Field(default=0.0, ge=0, lt=1)
    snr: float = Field(default=4.0, gt=0)
    strength: Literal["uniform", "increasing"] = "uniform"
    Q: int = Field(default=10, ge=1)
    B: int = Field(default=200, ge=1)
    alpha: float = Field(default=0.05, gt=0, lt=1)
    selector: Literal["oracle", "lasso"] = "oracle"
    replications: int = Field(default=500, ge=1)
    seed: int = Field(default=0, ge=0)
    method: Literal["exact", "approximate", "multisplit"] = "approximate"
    combiner: Literal["max", "sum"] = "max"
    correction: Literal["maxt", "stepdown", "none"] = "maxt"
    gamma_min: float = Field(default=0.05, gt=0, lt=1)
    design_path: str | None = None
    randomize_active: bool = False
    n_selected: int | None = Field(default=None, ge=1)
    n_jobs: int | None = Field(default=None, ge=1)

    @model_validator(mode="after")
    def check_scenario(self) -> Self:
        """Cross-field invariants of a scenario."""
        if self.m1 > self.m:
            raise ValueError(f"m1={self.m1} exceeds m={self.m}")
        if 2 * self.m1 > self.n / 2:
            raise ValueError(f"2*m1={2 * self.m1} exceeds n/2={self.n / 2}")
        if self.selector == "oracle":
            capacity = split_capacity(self.n // 2)
            if self.selection_size > capacity:
                raise ValueError(
                    f"Oracle selects {self.selection_size} variables, split capacity is {capacity}"
                )
            if self.selection_size < self.m1:
                raise ValueError("Oracle selection must contain every active variable")
            if self.selection_size > self.m:
                raise ValueError(f"Cannot select {self.selection_size} of {self.m} variables")
        if self.combiner == "sum" and self.method == "multisplit":
            raise ValueError("The sum combiner needs a statistics matrix (exact or approximate)")
        return self

    @property
    def selection_size(self) -> int:
        """Number of variables selected on each split."""
        return self.n_selected or selection_size(self.m1)

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> ExperimentConfig:
        """Validate a mapping, raising InvalidConfig on failure."""
        try:
            return cls.model_validate(dict(values))
        except ValidationError as e:
            raise InvalidConfig(str(e)) from e

    @classmethod
    def from_json(cls, content: str | bytes) -> ExperimentConfig:
        """Parse a JSON object of config fields."""
        try:
            values = orjson.loads(content)
        except orjson.JSONDecodeError as e:
            raise InvalidConfig(f"Config is not valid JSON: {e}") from e
        if not isinstance(values, dict):
            raise InvalidConfig("Config must be a JSON object")
        return cls.from_mapping(values)

    @classmethod
    def from_file(cls, path: str) -> ExperimentConfig:
        """Read a JSON config file."""
        try:
            with open(path, "rb") as f:
                return cls.from_json(f.read())
        except OSError as e:
            raise InvalidConfig(f"Cannot read config {path}: {e}") from e


@attr.s(frozen=True, auto_attribs=True)
class ReplicationRecord:
    """Outcome of one replication."""

    replication: int
    rejections: int = 0
    false_rejections: int = 0
    family_error: bool = False
    sigma: float = math.nan
    failed: bool = False


@attr.s(frozen=True, auto_attribs=True, eq=False)
class ExperimentReport:
    """FWER, mean number of rejections and wall time over the replications."""

    config: ExperimentConfig
    fwer: float
    mean_rejections: float
    wall_time_seconds: float
    records: tuple[ReplicationRecord, ...] = attr.ib(repr=False)
    failures: int = 0

    @property
    def completed(self) -> int:
        """Replications that did not fail."""
        return len(self.records) - self.failures

    @property
    def fwer_stderr(self) -> float:
        """Monte-Carlo standard error of the FWER estimate."""
        if not self.completed:
            return math.nan
        return math.sqrt(self.fwer * (1 - self.fwer) / self.completed)

    def summary(self) -> dict[str, Any]:
        """Report as a JSON-ready mapping (records excluded)."""
        return {
            "fwer": self.fwer,
            "fwer_stderr": self.fwer_stderr,
            "mean_rejections": self.mean_rejections,
            "wall_time_seconds": self.wall_time_seconds,
            "replications": len(self.records),
            "failures": self.failures,
            "config": self.config.model_dump(),
        }

    def records_frame(self) -> pd.DataFrame:
        """One row per replication."""
        return pd.DataFrame(
            [attr.asdict(record) for record in self.records],
            columns=[a.name for a in attr.fields(ReplicationRecord)],
        )


def _tdp_subset_size(config: ExperimentConfig) -> int:
    """The sum combiner bounds discoveries among the first variables only."""
    return min(selection_size(config.m1), MAX_TDP_VARIABLES, config.m)


def _selector(config: ExperimentConfig, active: np.ndarray) -> Selector:
    k = config.selection_size
    if config.selector == "oracle":
        return OracleSelector(tuple(int(j) for j in active), extra=k - config.m1)
    return LassoSelector(k)


def _rejected(config: ExperimentConfig, data: DesignData, active: np.ndarray, seed: Seed) -> int | np.ndarray:
    """Rejected variables, or the closed-testing bound for the sum combiner."""
    selector = _selector(config, active)
    if config.method == "multisplit":
        result = multisplit_run(
            data, config.Q, selector, config.alpha, gamma_min=config.gamma_min, seed=seed
        )
        return result.rejected

    stats = build_stats(data, config.method, config.Q, config.B, selector, seed=seed)
    if config.combiner == "sum":
        subset = list(range(_tdp_subset_size(config)))
        return closed_testing_tdp(stats, subset, Combiner("sum"), config.alpha)

    if config.correction == "none":
        counts = np.rint(raw_pvalues(stats) * stats.B)
        return np.flatnonzero(counts <= rejection_count(stats.B, config.alpha))

    return maxt_adjusted(stats, config.alpha, stepdown=config.correction == "stepdown").rejected


def run_replication(
    config: ExperimentConfig, replication: int, design: Matrix | None = None
) -> ReplicationRecord:
    """Simulate one data set and test it.

    Every random quantity is drawn from streams of (seed, replication),
    so the outcome does not depend on scheduling.
    """
    seed = seed_sequence(config.seed, replication)
    data_stream = Streams.from_seed(seed).data

    if design is None:
        x = gen_toeplitz_design(
            config.n, config.m, config.rho, seed=seed_sequence(data_stream, _DESIGN_SLOT)
        )
    else:
        x = design

    if config.randomize_active:
        placement = generator(data_stream, _PLACEMENT_SLOT)
        active = np.sort(placement.choice(config.m, size=config.m1, replace=False))
    else:
        active = np.arange(config.m1)

    beta = make_beta(config.m, config.m1, config.strength, active=active)
    # no signal to calibrate against under the global null
    sigma = calibrate_sigma(x, beta, config.snr) if config.m1 else 1.0
    y = gen_response(x, beta, sigma, seed=seed_sequence(data_stream, _NOISE_SLOT))
    data = DesignData(y, x)

    try:
        outcome = _rejected(config, data, active, seed)
    except (SingularGram, NonPositiveDf, NoConvergence) as e:
        logger.warning(f"Replication {replication} failed: {e}")
        return ReplicationRecord(replication=replication, sigma=sigma, failed=True)

    if config.combiner == "sum" and config.method != "multisplit":
        bound = int(outcome)
        subset_size = _tdp_subset_size(config)
        truly_active = int(np.count_nonzero(active < subset_size))
        return ReplicationRecord(
            replication=replication,
            rejections=bound,
            false_rejections=max(bound - truly_active, 0),
            family_error=bound > truly_active,
            sigma=sigma,
        )

    rejected = np.asarray(outcome)
    false_rejections = int(np.count_nonzero(~np.isin(rejected, active)))
    return ReplicationRecord(
        replication=replication,
        rejections=int(rejected.size),
        false_rejections=false_rejections,
        family_error=false_rejections > 0,
        sigma=sigma,
    )


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Repeat the scenario `config.replications` times.

    The design is regenerated per replication, or held fixed when
    `design_path` is given. Failing replications (collinear designs) are
    excluded and counted.

    Raises:
        TooManyFailures: if more than the tolerated fraction of replications fails.
    """
    settings = inference_settings()
    n_jobs = config.n_jobs or settings.n_jobs

    design = None
    if config.design_path:
        design, _ = load_design(config.design_path)
        if design.shape != (config.n, config.m):
            raise InvalidConfig(
                f"Design {config.design_path} is {design.shape[0]}x{design.shape[1]}, "
                f"config says {config.n}x{config.m}"
            )

    logger.info(
        f"Running {config.replications} replications: method={config.method}, "
        f"n={config.n}, m={config.m}, m1={config.m1}, rho={config.rho}, Q={config.Q}, B={config.B}"
    )
    start = time.perf_counter()
    records = ordered_map(
        lambda rep: run_replication(config, rep, design), range(config.replications), n_jobs
    )
    wall_time = time.perf_counter() - start

    failures = sum(record.failed for record in records)
    if failures:
        logger.warning(f"{failures} of {config.replications} replications failed and were excluded")
    if failures > settings.max_failure_rate * config.replications or failures == len(records):
        raise TooManyFailures(
            f"{failures} of {config.replications} replications failed "
            f"(tolerated fraction {settings.max_failure_rate})"
        )

    completed = [record for record in records if not record.failed]
    report = ExperimentReport(
        config=config,
        fwer=float(np.mean([record.family_error for record in completed])),
        mean_rejections=float(np.mean([record.rejections for record in completed])),
        wall_time_seconds=wall_time,
        records=tuple(records),
        failures=failures,
    )
    logger.info(
        f"FWER={report.fwer:.4f} (±{report.fwer_stderr:.4f}), "
        f"mean rejections={report.mean_rejections:.3f}, time={wall_time:.1f}s"
    )
    return report


@attr.s(frozen=True, auto_attribs=True, eq=False)
class SweepPoint:
    """One grid point of a sweep and its report."""

    overrides: dict[str, Any]
    report: ExperimentReport


def run_sweep(
    base: ExperimentConfig, grid: Mapping[str, Sequence[Any]]
) -> list[SweepPoint]:
    """Run the Cartesian product of `grid` overrides on top of `base`."""
    keys = list(grid)
    points = []
    for values in itertools.product(*(grid[key] for key in keys)):
        overrides = dict(zip(keys, values))
        config = ExperimentConfig.from_mapping({**base.model_dump(), **overrides})
        logger.info(f"Sweep point {overrides}")
        points.append(SweepPoint(overrides=overrides, report=run_experiment(config)))
    return points


def sweep_frame(points: Sequence[SweepPoint]) -> pd.DataFrame:
    """Plot-ready table: one row per grid point."""
    rows = []
    for point in points:
        summary = point.report.summary()
        rows.append(
            {
                **point.overrides,
                "fwer": summary["fwer"],
                "fwer_stderr": summary["fwer_stderr"],
                "mean_rejections": summary["mean_rejections"],
                "wall_time_seconds": summary["wall_time_seconds"],
                "failures": summary["failures"],
            }
        )
    return pd.DataFrame(rows)
