"""hdperm.inference.combine

Tests of subsets of variables from a statistics matrix: combining
functions, maxT multiplicity correction and closed-testing lower bounds on
the number of true discoveries.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Sequence
from typing import Any, Literal

import attr
import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DimensionMismatch, EmptySubset, IndexOutOfRange, SubsetTooLarge
from .hdstats import StatMatrix
from .linalg import Matrix, Vector
from .scoreflip import critical_index, rejection_count

logger = logging.getLogger(__name__)

CombinerKind = Literal["max", "sum", "weighted"]

COMBINERS: tuple[str, ...] = ("max", "sum", "weighted")

# 2^20 subsets at most
MAX_TDP_SUBSET = 20


def _weights(value) -> tuple[float, ...] | None:
    if value is None:
        return None
    return tuple(float(w) for w in value)


@attr.s(frozen=True, auto_attribs=True)
class Combiner:
    """Coordinatewise increasing map from |statistics| of a subset to one value."""

    kind: str = attr.ib(default="max", validator=attr.validators.in_(COMBINERS))
    weights: tuple[float, ...] | None = attr.ib(default=None, converter=_weights)

    def __attrs_post_init__(self):
        """Check the weights against the kind."""
        if self.kind != "weighted":
            if self.weights is not None:
                raise ValueError(f"Weights are only used by the weighted combiner, not {self.kind!r}")
            return

        if self.weights is None:
            raise ValueError("Weighted combiner requires weights")
        w = np.asarray(self.weights)
        if not np.isfinite(w).all() or (w < 0).any():
            raise ValueError("Weights must be finite and nonnegative")
        if not (w > 0).any():
            raise ValueError("Weights must not all be zero")

    def __call__(self, block: Matrix) -> Vector:
        """Combine a B x |S| block of absolute statistics row by row."""
        if self.kind == "max":
            return block.max(axis=1)
        if self.kind == "sum":
            return block.sum(axis=1)

        if block.shape[1] != len(self.weights):
            raise DimensionMismatch(
                f"{len(self.weights)} weights for a subset of {block.shape[1]} variables"
            )
        return block @ np.asarray(self.weights)


@attr.s(frozen=True, auto_attribs=True, eq=False)
class SubsetResult:
    """Sign-flip test of the intersection hypothesis of a subset."""

    subset: tuple[int, ...]
    combined: Vector = attr.ib(repr=False)
    pvalue: float
    reject: bool

    def to_record(
        self, names: Sequence[str] | None = None, tdp_bound: int | None = None
    ) -> dict[str, Any]:
        """JSON-ready record: subset, pvalue, reject, tdp_bound."""
        subset = [names[j] for j in self.subset] if names is not None else list(self.subset)
        return {
            "subset": subset,
            "pvalue": self.pvalue,
            "reject": self.reject,
            "tdp_bound": tdp_bound,
        }


@attr.s(frozen=True, auto_attribs=True, eq=False)
class MaxTResult:
    """maxT-adjusted p-values and the rejected variables."""

    adjusted: Vector
    rejected: NDArray[np.intp]
    stepdown: bool = False


def _abs_values(G: StatMatrix | ArrayLike) -> Matrix:
    values = G.values if isinstance(G, StatMatrix) else G
    values = np.abs(np.asarray(values, dtype=np.float64))
    if values.ndim != 2 or values.shape[0] < 1:
        raise DimensionMismatch(f"Expected a B x m statistics matrix, got shape {values.shape}")
    return values


def _subset_indices(S: Sequence[int], m: int) -> tuple[int, ...]:
    """Distinct indices of S in the given order."""
    indices = tuple(dict.fromkeys(int(j) for j in S))
    if not indices:
        raise EmptySubset("Subset of variables is empty")

    for j in indices:
        if not 0 <= j < m:
            raise IndexOutOfRange(f"Variable index {j} outside [0, {m})")
    return indices


def _decide(combined: Vector, alpha: float) -> tuple[float, bool]:
    """Decision rule of flip_test on statistics already on the absolute scale."""
    if not 0 <= alpha < 1:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")

    B = combined.size
    observed = combined[0]
    critical = np.sort(combined)[critical_index(B, alpha) - 1]
    pvalue = float(np.count_nonzero(combined >= observed)) / B
    return pvalue, bool(observed > critical)


def combine(G: StatMatrix | ArrayLike, S: Sequence[int], g: Combiner) -> Vector:
    """Entry b is g applied to |G[b, S]|.

    Raises:
        EmptySubset: if S is empty.
        IndexOutOfRange: if some index of S is not a column of G.
    """
    values = _abs_values(G)
    indices = _subset_indices(S, values.shape[1])
    return g(values[:, list(indices)])


def subset_test(
    G: StatMatrix | ArrayLike, S: Sequence[int], g: Combiner, alpha: float
) -> SubsetResult:
    """Level-alpha test of H_S: no variable of S is active."""
    values = _abs_values(G)
    indices = _subset_indices(S, values.shape[1])
    combined = g(values[:, list(indices)])
    pvalue, reject = _decide(combined, alpha)
    return SubsetResult(subset=indices, combined=combined, pvalue=pvalue, reject=reject)


def raw_pvalues(G: StatMatrix | ArrayLike) -> Vector:
    """Unadjusted per-variable p-values #{b : |G_bj| ≥ |G_1j|}/B."""
    values = _abs_values(G)
    return np.count_nonzero(values >= values[0], axis=0) / values.shape[0]


def maxt_adjusted(
    G: StatMatrix | ArrayLike, alpha: float, stepdown: bool = False
) -> MaxTResult:
    """maxT multiplicity correction.

    Single step: adjusted p_j = #{b : max_k |G_bk| ≥ |G_1j|}/B. The step-down
    variant orders the variables by decreasing |G_1j|, compares each to the
    maximum over itself and the variables after it, and makes the adjusted
    p-values monotone along that order. H_j is rejected iff adjusted p_j is
    at most ⌊αB⌋/B.
    """
    values = _abs_values(G)
    B, m = values.shape
    observed = values[0]

    if not stepdown:
        maxima = values.max(axis=1)
        counts = np.count_nonzero(maxima[:, None] >= observed[None, :], axis=0)
    else:
        order = np.argsort(-observed, kind="stable")
        # column i: max over variables order[i:], per transformation
        tail_max = np.maximum.accumulate(values[:, order[::-1]], axis=1)[:, ::-1]
        ordered = np.count_nonzero(tail_max >= observed[order][None, :], axis=0)
        ordered = np.maximum.accumulate(ordered)
        counts = np.empty(m, dtype=ordered.dtype)
        counts[order] = ordered

    rejected = np.flatnonzero(counts <= rejection_count(B, alpha))
    logger.debug(f"maxT ({'step-down' if stepdown else 'single-step'}): {rejected.size} of {m} rejected")
    return MaxTResult(adjusted=counts / B, rejected=rejected, stepdown=stepdown)


def closed_testing_tdp(
    G: StatMatrix | ArrayLike, S: Sequence[int], g: Combiner, alpha: float
) -> int:
    """Lower (1 − alpha)-confidence bound on the number of active variables in S.

    Closed testing within S: the bound is |S| minus the size of the largest
    subset V ⊆ S whose intersection hypothesis subset_test does not reject
    (every U ⊆ V then survives, V itself being a superset of U). Subsets are
    enumerated from the largest down, stopping at the first accepted size.

    Raises:
        SubsetTooLarge: if |S| > MAX_TDP_SUBSET.
    """
    values = _abs_values(G)
    indices = _subset_indices(S, values.shape[1])
    size = len(indices)
    if size > MAX_TDP_SUBSET:
        raise SubsetTooLarge(
            f"Closed testing enumerates 2^{size} subsets; at most {MAX_TDP_SUBSET} variables"
        )
    if g.kind == "weighted" and len(g.weights) != size:
        raise DimensionMismatch(f"{len(g.weights)} weights for a subset of {size} variables")
    position = {j: p for p, j in enumerate(indices)}

    for k in range(size, 0, -1):
        for V in itertools.combinations(indices, k):
            block = values[:, list(V)]
            if g.kind == "weighted":
                combined = block @ np.asarray([g.weights[position[j]] for j in V])
            else:
                combined = g(block)
            _, reject = _decide(combined, alpha)
            if not reject:
                logger.debug(f"Largest accepted subset has {k} of {size} variables")
                return size - k

    return size
