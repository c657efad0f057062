"""hdperm.inference.selection

Variable selection on the first half of a split: the oracle used in
simulations and a Lasso calibrated to return a target number of variables.
"""

from __future__ import annotations

import logging
from collections.abc import Iterator, Sequence
from typing import Any, Protocol, runtime_checkable

import attr
import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import CapacityExceeded, NoConvergence
from .linalg import Matrix, Vector, as_matrix

logger = logging.getLogger(__name__)

LASSO_TOLERANCE = 1e-7
LASSO_MAX_ITER = 100_000
LASSO_GRID_SIZE = 100
LASSO_GRID_RATIO = 1e-4

# slack on the KKT check, absorbs rounding in Xᵀr/n
_KKT_SLACK = 1e-12


@attr.s(frozen=True, auto_attribs=True)
class SelectedSet:
    """Sorted, distinct variable indices (0-based)."""

    indices: tuple[int, ...] = attr.ib(
        converter=lambda v: tuple(sorted({int(i) for i in v}))
    )

    def __len__(self) -> int:
        """Number of selected variables."""
        return len(self.indices)

    def __contains__(self, j: object) -> bool:
        """Membership test."""
        return j in self.indices

    def as_array(self) -> NDArray[np.intp]:
        """Indices as an integer array."""
        return np.asarray(self.indices, dtype=np.intp)


@runtime_checkable
class Selector(Protocol):
    """Selection procedure run on the selection half of a split."""

    def select(
        self, x: Matrix, y: Vector, capacity: int, rng: np.random.Generator
    ) -> SelectedSet:
        """Select at most `capacity` variables from (x, y)."""
        ...

    def describe(self) -> dict[str, Any]:
        """Parameters identifying the selector (used in cache keys)."""
        ...


def selection_size(m1: int) -> int:
    """Number of variables to select for an expected m1 active ones."""
    return max(2 * m1, 1)


def oracle_select(
    truly_active: Sequence[int],
    m: int,
    extra: int,
    seed: Any = None,
    capacity: int | None = None,
) -> SelectedSet:
    """All truly active variables plus `extra` others drawn without replacement.

    Args:
        truly_active: indices of the active variables.
        m: total number of variables.
        extra: number of additional inactive variables.
        seed: seed, SeedSequence or Generator.
        capacity: maximal size of the selected set (half the fitting rows).

    Raises:
        CapacityExceeded: if the set would not fit `capacity` or there are
            fewer than `extra` inactive variables.
    """
    active = np.unique(np.asarray(truly_active, dtype=np.intp))
    size = active.size + extra
    if capacity is not None and size > capacity:
        raise CapacityExceeded(
            f"Oracle selection of {size} variables exceeds capacity {capacity}"
        )

    complement = np.setdiff1d(np.arange(m), active)
    if extra > complement.size:
        raise CapacityExceeded(
            f"Cannot add {extra} variables: only {complement.size} inactive ones"
        )

    rng = np.random.default_rng(seed)
    chosen = rng.choice(complement, size=extra, replace=False) if extra else []
    return SelectedSet(np.concatenate([active, np.asarray(chosen, dtype=np.intp)]))


@attr.s(frozen=True, auto_attribs=True, eq=False)
class LassoPath:
    """Lasso solutions along a decreasing λ grid.

    `coef` holds coefficients on the original scale of X; `coef_std` the
    coefficients of the internally standardized problem.
    """

    lambdas: Vector
    coef: Matrix
    coef_std: Matrix
    intercept: Vector
    n_iter: NDArray[np.int64]


@attr.s(frozen=True, auto_attribs=True, eq=False)
class _Standardized:
    xs: Matrix
    yc: Vector
    scale: Vector
    x_mean: Vector
    y_mean: float
    usable: NDArray[np.bool_]


def _standardize(x: Matrix, y: Vector) -> _Standardized:
    """Center columns and scale them to norm √n; center y."""
    n = x.shape[0]
    x_mean = x.mean(axis=0)
    xc = x - x_mean
    scale = np.linalg.norm(xc, axis=0) / np.sqrt(n)
    usable = scale > 0
    xs = np.where(usable, xc / np.where(usable, scale, 1.0), 0.0)
    y_mean = float(y.mean())
    return _Standardized(xs, y - y_mean, scale, x_mean, y_mean, usable)


def _lambda_max(std: _Standardized) -> float:
    if not std.xs.size:
        return 0.0
    return float(np.max(np.abs(std.xs.T @ std.yc)) / std.xs.shape[0])


def lambda_max(x: ArrayLike, y: ArrayLike) -> float:
    """Smallest λ at which every standardized Lasso coefficient is zero."""
    return _lambda_max(_standardize(as_matrix(x), np.asarray(y, dtype=np.float64)))


def lambda_grid(lam_max: float, size: int = LASSO_GRID_SIZE) -> Vector:
    """Log-spaced grid from λ_max down to LASSO_GRID_RATIO · λ_max."""
    return lam_max * np.logspace(0, np.log10(LASSO_GRID_RATIO), size)


def _coordinate_descent(
    std: _Standardized,
    lambdas: Sequence[float],
    tol: float = LASSO_TOLERANCE,
    max_iter: int = LASSO_MAX_ITER,
) -> Iterator[tuple[float, Vector, int]]:
    """Yield (λ, standardized coefficients, sweeps) along the grid, warm started.

    Sweeps cycle over the active set until the largest coefficient change
    drops below `tol`; the KKT conditions over all variables then decide
    whether new variables enter.
    """
    xs, resid = std.xs, std.yc.copy()
    n, m = xs.shape
    beta = np.zeros(m)

    for lam in lambdas:
        sweeps = 0
        while True:
            grad = xs.T @ resid / n
            violators = std.usable & (beta == 0) & (np.abs(grad) > lam + _KKT_SLACK)
            active = np.flatnonzero((beta != 0) | violators)
            if sweeps and not violators.any():
                break

            while True:
                max_change = 0.0
                for j in active:
                    old = beta[j]
                    rho = xs[:, j] @ resid / n + old
                    new = np.sign(rho) * max(abs(rho) - lam, 0.0)
                    if new != old:
                        resid -= xs[:, j] * (new - old)
                        beta[j] = new
                        max_change = max(max_change, abs(new - old))

                sweeps += 1
                if sweeps > max_iter:
                    raise NoConvergence(
                        f"Coordinate descent did not converge in {max_iter} sweeps at λ={lam:.4g}"
                    )
                if max_change < tol:
                    break

        yield float(lam), beta.copy(), sweeps


def lasso_path(x: ArrayLike, y: ArrayLike, lambdas: ArrayLike) -> LassoPath:
    """Coordinate-descent Lasso along a decreasing λ grid.

    Minimizes (1/(2n))‖Y − Xβ‖² + λ‖β‖₁ with the columns of X centered and
    scaled to norm √n and Y centered, warm starting each λ from the
    previous solution.

    Raises:
        NoConvergence: if some λ needs more than LASSO_MAX_ITER sweeps.
    """
    x = as_matrix(x)
    y = np.asarray(y, dtype=np.float64)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    std = _standardize(x, y)

    coef_std = np.zeros((lambdas.size, x.shape[1]))
    n_iter = np.zeros(lambdas.size, dtype=np.int64)
    for i, (_, beta, sweeps) in enumerate(_coordinate_descent(std, lambdas)):
        coef_std[i] = beta
        n_iter[i] = sweeps

    coef = np.where(std.usable, coef_std / np.where(std.usable, std.scale, 1.0), 0.0)
    intercept = std.y_mean - coef @ std.x_mean
    return LassoPath(lambdas, coef, coef_std, intercept, n_iter)


def lasso_select(x: ArrayLike, y: ArrayLike, k: int) -> SelectedSet:
    """Lasso support of (about) k variables.

    Walks the 100-point log grid from λ_max down to 1e-4 λ_max and stops at
    the first λ whose support has at least k variables; an overshoot keeps
    the k largest standardized coefficients. When no grid point reaches k
    the support of the smallest λ is returned.
    """
    if k < 1:
        raise CapacityExceeded(f"Target selection size must be >= 1, got {k}")

    x = as_matrix(x)
    y = np.asarray(y, dtype=np.float64)
    std = _standardize(x, y)
    lam_max = _lambda_max(std)
    if lam_max == 0:
        logger.warning("Response has no correlation with any variable: empty selection")
        return SelectedSet(())

    beta = np.zeros(x.shape[1])
    for lam, beta, _ in _coordinate_descent(std, lambda_grid(lam_max)):
        support = np.flatnonzero(beta)
        if support.size >= k:
            logger.debug(f"Lasso support of {support.size} at λ={lam:.4g}")
            break

    support = np.flatnonzero(beta)
    if support.size > k:
        order = np.argsort(-np.abs(beta[support]), kind="stable")
        support = support[order[:k]]

    return SelectedSet(support)


@attr.s(frozen=True, auto_attribs=True)
class OracleSelector:
    """Always selects the truly active variables plus `extra` random others."""

    truly_active: tuple[int, ...] = attr.ib(converter=tuple)
    extra: int = 0

    def select(
        self, x: Matrix, y: Vector, capacity: int, rng: np.random.Generator
    ) -> SelectedSet:
        """Select on the given rows."""
        return oracle_select(
            self.truly_active, x.shape[1], self.extra, seed=rng, capacity=capacity
        )

    def describe(self) -> dict[str, Any]:
        """Selector parameters."""
        return {
            "selector": "oracle",
            "active": ",".join(map(str, self.truly_active)),
            "extra": self.extra,
        }


@attr.s(frozen=True, auto_attribs=True)
class LassoSelector:
    """Lasso calibrated to k variables, capped at the split capacity."""

    k: int

    def select(
        self, x: Matrix, y: Vector, capacity: int, rng: np.random.Generator
    ) -> SelectedSet:
        """Select on the given rows."""
        k = min(self.k, capacity)
        if k < self.k:
            logger.debug(f"Lasso target {self.k} capped at split capacity {capacity}")

        return lasso_select(x, y, k)

    def describe(self) -> dict[str, Any]:
        """Selector parameters."""
        return {"selector": "lasso", "k": self.k}
