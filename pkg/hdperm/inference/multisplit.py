"""hdperm.inference.multisplit

Multi-split baseline: OLS t-test p-values on the test half of each split,
adjusted for the size of the selected set and aggregated over splits with
the adaptive quantile rule.
"""

from __future__ import annotations

import io
import logging
import math

import attr
import numpy as np
import pandas as pd
import scipy.linalg
import scipy.special
from numpy.typing import ArrayLike, NDArray

from .errors import NonPositiveDf, ParseError
from .hdstats import SplitPlan, make_splits, ordered_map
from .linalg import Matrix, Vector, as_matrix, gram_cholesky
from .models import DesignData
from .rng import Seed
from .selection import SelectedSet, Selector

logger = logging.getLogger(__name__)

DEFAULT_GAMMA_MIN = 0.05

# absorbs rounding in gamma_min * Q
_GRID_EPS = 1e-9


@attr.s(frozen=True, auto_attribs=True, eq=False)
class PValueTable:
    """Per-split raw and adjusted p-values (Q x m) and their aggregation (m)."""

    raw: Matrix
    adjusted: Matrix
    aggregated: Vector
    gamma_min: float = DEFAULT_GAMMA_MIN
    selections: tuple[SelectedSet, ...] | None = None
    names: tuple[str, ...] = attr.ib(default=None)

    def __attrs_post_init__(self):
        """Default names to column indices."""
        if self.names is None:
            object.__setattr__(
                self, "names", tuple(str(j) for j in range(self.raw.shape[1]))
            )

    @property
    def Q(self) -> int:
        """Number of splits."""
        return self.raw.shape[0]

    def rejections(self, alpha: float) -> NDArray[np.intp]:
        """Variables with aggregated p-value at most alpha."""
        return np.flatnonzero(self.aggregated <= alpha)

    def to_frame(self) -> pd.DataFrame:
        """One row per variable: aggregated p-value, then raw_<q> and adjusted_<q> columns."""
        frame = pd.DataFrame({"variable": list(self.names), "aggregated": self.aggregated})
        raw = pd.DataFrame(self.raw.T, columns=[f"raw_{q}" for q in range(self.Q)])
        adjusted = pd.DataFrame(
            self.adjusted.T, columns=[f"adjusted_{q}" for q in range(self.Q)]
        )
        return pd.concat([frame, raw, adjusted], axis=1)

    def to_csv(self, path_or_buf=None, float_format: str = "%.10g") -> str | None:
        """Write as CSV preceded by a `# gamma_min=` line."""
        body = self.to_frame().to_csv(index=False, float_format=float_format)
        content = f"# gamma_min={self.gamma_min:g}\n{body}"
        if path_or_buf is None:
            return content

        if hasattr(path_or_buf, "write"):
            path_or_buf.write(content)
        else:
            with open(path_or_buf, "w") as f:
                f.write(content)
        return None

    @classmethod
    def from_csv(cls, path_or_buf) -> PValueTable:
        """Read a table written by `to_csv` (selections are not stored)."""
        if hasattr(path_or_buf, "read"):
            content = path_or_buf.read()
        else:
            with open(path_or_buf) as f:
                content = f.read()

        gamma_min = DEFAULT_GAMMA_MIN
        first, _, rest = content.partition("\n")
        if first.startswith("#"):
            key, _, value = first.lstrip("# ").partition("=")
            if key.strip() == "gamma_min":
                gamma_min = float(value)
            content = rest

        try:
            frame = pd.read_csv(io.StringIO(content), dtype={"variable": str})
            raw = frame.filter(regex=r"^raw_\d+$").to_numpy(dtype=np.float64).T
            adjusted = frame.filter(regex=r"^adjusted_\d+$").to_numpy(dtype=np.float64).T
            aggregated = frame["aggregated"].to_numpy(dtype=np.float64)
        except (KeyError, ValueError, pd.errors.ParserError) as e:
            raise ParseError(f"Invalid p-value table CSV: {e}") from e

        return cls(
            raw=raw,
            adjusted=adjusted,
            aggregated=aggregated,
            gamma_min=gamma_min,
            names=tuple(frame["variable"]),
        )


@attr.s(frozen=True, auto_attribs=True, eq=False)
class MultisplitResult:
    """P-value table, the splits behind it and the rejected variables."""

    table: PValueTable
    plan: SplitPlan
    alpha: float
    rejected: NDArray[np.intp]


def t_pvalue(t: ArrayLike, df: float) -> Vector:
    """Two-sided Student t p-value via the regularized incomplete beta function."""
    t = np.asarray(t, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = df / (df + t**2)
    return scipy.special.betainc(df / 2, 0.5, x)


def ols_pvalues(
    y_out: ArrayLike, x_out: ArrayLike, intercept: bool = True
) -> Vector:
    """Two-sided t-test p-value of each column of x_out in the OLS fit of y_out.

    With `intercept` a column of ones is added to the fit (not reported) and
    df = n − k − 1; otherwise df = n − k. A coefficient estimated as exactly
    0 gets p-value 1.

    Raises:
        NonPositiveDf: if the fit leaves no residual degrees of freedom.
        SingularGram: if the columns (with the intercept) are collinear.
    """
    y = np.asarray(y_out, dtype=np.float64)
    x = as_matrix(x_out, rows=y.size)
    n, k = x.shape
    if k == 0:
        return np.empty(0)

    design = np.column_stack([np.ones(n), x]) if intercept else x
    df = n - design.shape[1]
    if df <= 0:
        raise NonPositiveDf(f"OLS with {design.shape[1]} coefficients on {n} observations")

    factor = gram_cholesky(design)
    coef = scipy.linalg.cho_solve((factor, True), design.T @ y, check_finite=False)
    inverse = scipy.linalg.solve_triangular(
        factor, np.eye(design.shape[1]), lower=True, check_finite=False
    )
    variances = np.sum(inverse**2, axis=0)

    resid = y - design @ coef
    sigma2 = float(resid @ resid) / df
    with np.errstate(divide="ignore", invalid="ignore"):
        t = coef / np.sqrt(sigma2 * variances)

    pvalues = t_pvalue(t, df)
    pvalues = np.where(coef == 0, 1.0, pvalues)
    return pvalues[1:] if intercept else pvalues


def adjust(raw: ArrayLike, selections: tuple[SelectedSet, ...] | list[SelectedSet]) -> Matrix:
    """Entrywise min(|A^q| · raw, 1); rows of empty selections stay at 1."""
    raw = np.asarray(raw, dtype=np.float64)
    sizes = np.array([max(len(selected), 1) for selected in selections], dtype=np.float64)
    return np.minimum(sizes[:, None] * raw, 1.0)


def aggregate(adjusted: ArrayLike, gamma_min: float = DEFAULT_GAMMA_MIN) -> float | Vector:
    """Adaptive quantile aggregation over splits.

    p = min{1, (1 − log γ_min) · min_γ min(1, q_γ)} with q_γ the ⌈γQ⌉-th
    smallest of {p^q/γ}, γ running over {k/Q : ⌈γ_min Q⌉ ≤ k ≤ Q}. Accepts
    one column of Q values or a Q x m matrix (aggregated per column).
    """
    if not 0 < gamma_min < 1:
        raise ValueError(f"gamma_min must lie in (0, 1), got {gamma_min}")

    values = np.asarray(adjusted, dtype=np.float64)
    column = values.ndim == 1
    if column:
        values = values[:, None]

    Q = values.shape[0]
    if Q < 1:
        raise ValueError("At least one split is required")

    first = max(1, math.ceil(gamma_min * Q - _GRID_EPS))
    ranks = np.arange(first, Q + 1)
    ordered = np.sort(values, axis=0)[ranks - 1]
    quantiles = np.minimum(ordered * (Q / ranks)[:, None], 1.0)

    result = np.minimum((1 - math.log(gamma_min)) * quantiles.min(axis=0), 1.0)
    return float(result[0]) if column else result


def _split_pvalues(data: DesignData, plan: SplitPlan, q: int) -> Vector:
    row = np.ones(data.m)
    selected = plan.selections[q]
    if len(selected):
        columns = selected.as_array()
        d_out = plan.splits[q].d_out
        row[columns] = ols_pvalues(data.y[d_out], data.x[np.ix_(d_out, columns)])
    return row


def multisplit_run(
    data: DesignData,
    Q: int,
    selector: Selector,
    alpha: float,
    gamma_min: float = DEFAULT_GAMMA_MIN,
    seed: Seed = None,
    n_jobs: int = 1,
) -> MultisplitResult:
    """Multi-split p-values and rejections {j : p_j ≤ alpha}.

    Splits and selections come from make_splits with the same seed
    streams as build_stats, so both methods see identical splits when
    seeded identically.
    """
    plan = make_splits(data.n, Q, selector, data, seed=seed, n_jobs=n_jobs)
    raw = np.vstack(ordered_map(lambda q: _split_pvalues(data, plan, q), range(Q), n_jobs))
    adjusted = adjust(raw, plan.selections)
    aggregated = aggregate(adjusted, gamma_min)

    table = PValueTable(
        raw=raw,
        adjusted=adjusted,
        aggregated=np.atleast_1d(aggregated),
        gamma_min=gamma_min,
        selections=plan.selections,
        names=data.names,
    )
    rejected = table.rejections(alpha)
    logger.debug(f"Multisplit: {rejected.size} of {data.m} rejected at alpha={alpha}")
    return MultisplitResult(table=table, plan=plan, alpha=alpha, rejected=rejected)
