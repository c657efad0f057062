"""hdperm.inference.scoreflip

Low-dimensional sign-flipping score test: effective scores, their
standardization and the level-alpha decision rule shared by every test in
the package.
"""

from __future__ import annotations

import logging
import math

import attr
import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InvalidB
from .linalg import Matrix, Vector, as_matrix, orthonormal_basis
from .rng import Seed, generator

logger = logging.getLogger(__name__)

# ‖t‖ at or below this maps to the zero vector
ZERO_NORM_TOLERANCE = 1e-12

# absorbs rounding in (1 - alpha) * B and alpha * B
_COUNT_EPS = 1e-9


@attr.s(frozen=True, auto_attribs=True, eq=False)
class FlipSet:
    """B sign vectors of length n; the first is the identity transformation."""

    n: int
    B: int
    signs: NDArray[np.int8] = attr.ib(
        repr=False, converter=lambda v: np.array(v, dtype=np.int8)
    )
    seed: Seed = None

    def __attrs_post_init__(self):
        """Freeze the (copied) sign array."""
        if self.signs.shape != (self.B, self.n):
            raise ValueError(
                f"Expected {self.B} x {self.n} signs, got shape {self.signs.shape}"
            )
        self.signs.setflags(write=False)

    def apply(self, v: ArrayLike) -> Matrix:
        """Return the B x n matrix whose row b is F_b v."""
        return self.signs * np.asarray(v, dtype=np.float64)

    def restrict(self, rows: ArrayLike) -> NDArray[np.int8]:
        """Signs of a subset of observations (B x |rows|)."""
        return self.signs[:, np.asarray(rows, dtype=np.intp)]


@attr.s(frozen=True, auto_attribs=True)
class TestDecision:
    """Outcome of the sign-flip test."""

    __test__ = False

    statistic_observed: float
    critical_index: int
    critical_value: float
    pvalue: float
    reject: bool


def make_flips(n: int, B: int, seed: Seed = None) -> FlipSet:
    """Draw B sign-flipping transformations of n observations.

    signs[0] is all +1; all other entries are i.i.d. uniform on {-1, +1}.
    The same (n, B, seed) always regenerates the same signs.
    """
    if B < 1:
        raise InvalidB(f"Number of transformations must be >= 1, got {B}")

    rng = generator(seed)
    signs = np.ones((B, n), dtype=np.int8)
    if B > 1:
        signs[1:] = 2 * rng.integers(0, 2, size=(B - 1, n), dtype=np.int8) - 1

    return FlipSet(n=n, B=B, signs=signs, seed=seed)


def critical_index(B: int, alpha: float) -> int:
    """1-based rank ⌈(1 − α)B⌉ of the critical value among B sorted statistics."""
    return max(1, math.ceil((1 - alpha) * B - _COUNT_EPS))


def rejection_count(B: int, alpha: float) -> int:
    """⌊αB⌋: a p-value of the form k/B rejects iff k is at most this."""
    return math.floor(alpha * B + _COUNT_EPS)


def standardize(t: ArrayLike) -> Vector:
    """t/‖t‖, or the zero vector when ‖t‖ ≤ ZERO_NORM_TOLERANCE."""
    t = np.asarray(t, dtype=np.float64)
    norm = np.linalg.norm(t)
    if norm <= ZERO_NORM_TOLERANCE:
        return np.zeros_like(t)

    return t / norm


def standardize_rows(t: ArrayLike) -> Matrix:
    """Row-wise standardize; rows with norm ≤ ZERO_NORM_TOLERANCE become 0."""
    t = np.asarray(t, dtype=np.float64)
    norms = np.linalg.norm(t, axis=1, keepdims=True)
    safe = np.where(norms > ZERO_NORM_TOLERANCE, norms, 1.0)
    return np.where(norms > ZERO_NORM_TOLERANCE, t / safe, 0.0)


def _partial_out(x: Matrix, j: int) -> Matrix:
    """Orthonormal basis of the design with column j removed."""
    return orthonormal_basis(np.delete(x, j, axis=1), rows=x.shape[0])


def score_vectors(x: ArrayLike, j: int, flips: FlipSet) -> Matrix:
    """B x n matrix of t_b = (1/√n) R F_b R X_j, R the residual maker of X without column j."""
    x = as_matrix(x)
    n = x.shape[0]
    basis = _partial_out(x, j)

    xj = x[:, j]
    rx = xj - basis @ (basis.T @ xj)
    flipped = flips.apply(rx)
    return (flipped - (flipped @ basis) @ basis.T) / math.sqrt(n)


def effective_scores(x: ArrayLike, y: ArrayLike, j: int, flips: FlipSet) -> Vector:
    """Effective scores T^b = (1/√n) X_jᵀ R F_b R Y for b = 1..B.

    Raises:
        SingularGram: if the design without column j is collinear.
    """
    x = as_matrix(x)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    basis = _partial_out(x, j)

    xj = x[:, j]
    rx = xj - basis @ (basis.T @ xj)
    ry = y - basis @ (basis.T @ y)
    return flips.signs @ (rx * ry) / math.sqrt(n)


def standardized_scores(
    x: ArrayLike, y: ArrayLike, j: int, flips: FlipSet
) -> Vector:
    """Standardized scores t_bᵀY/‖t_b‖ (0 where t_b vanishes)."""
    vectors = score_vectors(x, j, flips)
    return standardize_rows(vectors) @ np.asarray(y, dtype=np.float64)


def flip_test(stats: ArrayLike, alpha: float) -> TestDecision:
    """Sign-flip decision for B statistics, stats[0] being the observed one.

    Rejects iff |stats[0]| is strictly larger than the ⌈(1 − α)B⌉-th smallest
    |stats|. The p-value #{b : |stats[b]| ≥ |stats[0]|}/B is never below 1/B.
    """
    stats = np.abs(np.asarray(stats, dtype=np.float64).ravel())
    B = stats.size
    if B < 1:
        raise InvalidB("At least one statistic is required")
    if not 0 <= alpha < 1:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")

    observed = float(stats[0])
    index = critical_index(B, alpha)
    critical = float(np.sort(stats)[index - 1])

    return TestDecision(
        statistic_observed=observed,
        critical_index=index,
        critical_value=critical,
        pvalue=float(np.count_nonzero(stats >= observed)) / B,
        reject=observed > critical,
    )
