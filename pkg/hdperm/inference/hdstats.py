"""hdperm.inference.hdstats

B x m matrix of standardized sign-flip statistics built over Q random
splits, with the exact (sum of per-split scores) and the approximate (score
of the summed residual makers) methods.
"""

from __future__ import annotations

import io
import logging
import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from typing import Literal

import attr
import numpy as np
import pandas as pd
from numpy.typing import NDArray

from .errors import CapacityExceeded, DimensionMismatch, ParseError, SingularGram
from .linalg import Matrix, Vector, orthonormal_basis
from .models import DesignData
from .rng import Seed, Streams, generator
from .scoreflip import ZERO_NORM_TOLERANCE, FlipSet, make_flips, standardize_rows
from .selection import SelectedSet, Selector

logger = logging.getLogger(__name__)

Method = Literal["exact", "approximate"]

METHODS: tuple[str, ...] = ("exact", "approximate")


@attr.s(frozen=True, auto_attribs=True, eq=False)
class Split:
    """One partition of the observations; rows are sorted 0-based indices."""

    d_in: NDArray[np.intp]
    d_out: NDArray[np.intp]


@attr.s(frozen=True, auto_attribs=True, eq=False)
class SplitPlan:
    """Q splits and the variables selected on each selection half."""

    n: int
    splits: tuple[Split, ...]
    selections: tuple[SelectedSet, ...]
    seed: Seed = None

    @property
    def Q(self) -> int:
        """Number of splits."""
        return len(self.splits)

    def splits_selecting(self, j: int) -> list[int]:
        """Indices of the splits whose selected set contains j."""
        return [q for q, selected in enumerate(self.selections) if j in selected]

    def __eq__(self, other: object) -> bool:
        """Plans are equal when every split and selection coincides."""
        if not isinstance(other, SplitPlan):
            return NotImplemented
        return (
            self.n == other.n
            and self.selections == other.selections
            and len(self.splits) == len(other.splits)
            and all(
                np.array_equal(a.d_in, b.d_in) and np.array_equal(a.d_out, b.d_out)
                for a, b in zip(self.splits, other.splits)
            )
        )

    __hash__ = None  # type: ignore[assignment]


@attr.s(frozen=True, auto_attribs=True, eq=False)
class StatMatrix:
    """B x m standardized statistics; row 0 holds the observed statistics."""

    values: Matrix
    method: str
    names: tuple[str, ...] = attr.ib(default=None)

    def __attrs_post_init__(self):
        """Default names to column indices."""
        if self.names is None:
            object.__setattr__(
                self, "names", tuple(str(j) for j in range(self.values.shape[1]))
            )

    @property
    def B(self) -> int:
        """Number of transformations."""
        return self.values.shape[0]

    @property
    def m(self) -> int:
        """Number of variables."""
        return self.values.shape[1]

    def to_frame(self) -> pd.DataFrame:
        """DataFrame with one column per variable and one row per transformation."""
        return pd.DataFrame(self.values, columns=list(self.names))

    def to_csv(self, path_or_buf=None, float_format: str = "%.10g") -> str | None:
        """Write as CSV: a `# method=` line, a header of variable names, B rows."""
        body = self.to_frame().to_csv(index=False, float_format=float_format)
        content = f"# method={self.method}\n{body}"
        if path_or_buf is None:
            return content

        if hasattr(path_or_buf, "write"):
            path_or_buf.write(content)
        else:
            with open(path_or_buf, "w") as f:
                f.write(content)
        return None

    @classmethod
    def from_csv(cls, path_or_buf) -> StatMatrix:
        """Read a matrix written by `to_csv`."""
        if hasattr(path_or_buf, "read"):
            content = path_or_buf.read()
        else:
            with open(path_or_buf) as f:
                content = f.read()

        method = "approximate"
        first, _, rest = content.partition("\n")
        if first.startswith("#"):
            key, _, value = first.lstrip("# ").partition("=")
            if key.strip() == "method":
                method = value.strip()
            content = rest

        try:
            frame = pd.read_csv(io.StringIO(content), dtype=np.float64)
        except (ValueError, pd.errors.ParserError) as e:
            raise ParseError(f"Invalid statistics CSV: {e}") from e

        values = frame.to_numpy(dtype=np.float64)
        if not np.isfinite(values).all():
            raise ParseError("Statistics CSV contains non-finite values")

        return cls(values=values, method=method, names=tuple(frame.columns))


def split_capacity(n_out: int) -> int:
    """Largest selected set a split with n_out test rows accepts."""
    return n_out // 2


def _draw_split(n: int, rng: np.random.Generator) -> Split:
    """Uniform partition with ⌈n/2⌉ selection rows and ⌊n/2⌋ test rows."""
    perm = rng.permutation(n)
    n_in = (n + 1) // 2
    return Split(d_in=np.sort(perm[:n_in]), d_out=np.sort(perm[n_in:]))


def make_splits(
    n: int,
    Q: int,
    selector: Selector,
    data: DesignData,
    seed: Seed = None,
    n_jobs: int = 1,
) -> SplitPlan:
    """Draw Q random splits and run `selector` on each selection half.

    Split q and its selection use their own seed streams (derived from
    `seed` and q), so the plan is deterministic and its first splits do not
    depend on Q. Test rows never reach the selector.
    """
    if Q < 1:
        raise ValueError(f"Number of splits must be >= 1, got {Q}")
    if n < 4:
        raise ValueError(f"At least 4 observations are required, got {n}")
    if data.n != n:
        raise DimensionMismatch(f"Plan for {n} observations, data has {data.n}")

    streams = Streams.from_seed(seed)

    def _one(q: int) -> tuple[Split, SelectedSet]:
        split = _draw_split(n, generator(streams.splits, q))
        capacity = split_capacity(split.d_out.size)
        selected = selector.select(
            data.x[split.d_in],
            data.y[split.d_in],
            capacity,
            generator(streams.selection, q),
        )
        if len(selected) > capacity:
            raise CapacityExceeded(
                f"Split {q}: {len(selected)} selected variables exceed capacity {capacity}"
            )
        logger.debug(f"Split {q}: selected {len(selected)} variables")
        return split, selected

    results = ordered_map(_one, range(Q), n_jobs)
    return SplitPlan(
        n=n,
        splits=tuple(split for split, _ in results),
        selections=tuple(selected for _, selected in results),
        seed=seed,
    )


def ordered_map(func: Callable, items, n_jobs: int) -> list:
    """Ordered map, threaded when n_jobs > 1."""
    items = list(items)
    if n_jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    with ThreadPoolExecutor(max_workers=n_jobs) as executor:
        return list(executor.map(func, items))


@attr.s(frozen=True, auto_attribs=True, eq=False)
class _SplitDesign:
    """Test rows of one split, restricted to its selected variables."""

    d_out: NDArray[np.intp]
    selected: NDArray[np.intp]
    x_out: Matrix

    def basis_without(self, j: int, q: int) -> Matrix:
        """Orthonormal basis of the selected columns other than j, on test rows."""
        position = int(np.searchsorted(self.selected, j))
        z = np.delete(self.x_out, position, axis=1)
        try:
            return orthonormal_basis(z, rows=self.d_out.size)
        except SingularGram as e:
            raise SingularGram(f"Split {q}, variable {j}: {e}") from e

    def residual_block(self, j: int, q: int) -> Matrix:
        """|D_out| x |D_out| residual maker of the selected columns other than j."""
        basis = self.basis_without(j, q)
        block = np.eye(self.d_out.size) - basis @ basis.T
        return (block + block.T) / 2


def _split_designs(data: DesignData, plan: SplitPlan) -> list[_SplitDesign]:
    designs = []
    for split, selected in zip(plan.splits, plan.selections):
        columns = selected.as_array()
        designs.append(
            _SplitDesign(
                d_out=split.d_out,
                selected=columns,
                x_out=data.x[np.ix_(split.d_out, columns)],
            )
        )
    return designs


def _check_inputs(data: DesignData, plan: SplitPlan, flips: FlipSet) -> None:
    if flips.n != data.n:
        raise DimensionMismatch(f"Flips cover {flips.n} observations, data has {data.n}")
    if plan.n != data.n:
        raise DimensionMismatch(f"Plan covers {plan.n} observations, data has {data.n}")


def _exact_column(
    j: int,
    data: DesignData,
    plan: SplitPlan,
    designs: list[_SplitDesign],
    flips: FlipSet,
) -> Vector:
    """Standardized sums of per-split effective scores for variable j."""
    selecting = plan.splits_selecting(j)
    if not selecting:
        return np.zeros(flips.B)

    # per-(q, j) residual blocks, held for the whole column
    blocks = {q: designs[q].residual_block(j, q) for q in selecting}

    u = np.zeros((flips.B, data.n))
    for q, block in blocks.items():
        rows = designs[q].d_out
        r = block @ data.x[rows, j]
        u[:, rows] += (flips.restrict(rows) * r) @ block

    u /= math.sqrt(data.n)
    return standardize_rows(u) @ data.y


def _approx_column(
    j: int,
    data: DesignData,
    plan: SplitPlan,
    designs: list[_SplitDesign],
    flips: FlipSet,
) -> Vector:
    """Standardized scores of the summed residual maker for variable j.

    The sum R̄ is kept either dense (n x n) or, when the selected sets are
    small, as diag(counts) − UUᵀ with U the stacked per-split bases
    (n x K, K < n/2). Either way at most a constant number of n x n arrays
    is alive.
    """
    selecting = plan.splits_selecting(j)
    if not selecting:
        return np.zeros(flips.B)

    n = data.n
    bases = {q: designs[q].basis_without(j, q) for q in selecting}
    rank = sum(basis.shape[1] for basis in bases.values())

    if 2 * rank < n:
        counts = np.zeros(n)
        u = np.zeros((n, rank))
        offset = 0
        for q, basis in bases.items():
            rows = designs[q].d_out
            counts[rows] += 1
            u[rows, offset : offset + basis.shape[1]] = basis
            offset += basis.shape[1]

        def apply(v: Matrix) -> Matrix:
            return counts[:, None] * v - u @ (u.T @ v)

    else:
        r_sum = np.zeros((n, n))
        for q, basis in bases.items():
            rows = designs[q].d_out
            block = np.eye(rows.size) - basis @ basis.T
            r_sum[np.ix_(rows, rows)] += (block + block.T) / 2

        def apply(v: Matrix) -> Matrix:
            return r_sum @ v

    a = apply(data.x[:, j][:, None])[:, 0]
    c = apply(data.y[:, None])[:, 0]
    numerators = flips.signs @ (a * c)

    norms = np.empty(flips.B)
    for start in range(0, flips.B, n):
        chunk = flips.signs[start : start + n]
        norms[start : start + chunk.shape[0]] = np.linalg.norm(
            apply((chunk * a).T), axis=0
        )

    numerators /= math.sqrt(n)
    norms /= math.sqrt(n)
    safe = np.where(norms > ZERO_NORM_TOLERANCE, norms, 1.0)
    return np.where(norms > ZERO_NORM_TOLERANCE, numerators / safe, 0.0)


def _build(
    column: Callable,
    method: str,
    data: DesignData,
    plan: SplitPlan,
    flips: FlipSet,
    n_jobs: int,
) -> StatMatrix:
    _check_inputs(data, plan, flips)
    designs = _split_designs(data, plan)

    columns = ordered_map(
        lambda j: column(j, data, plan, designs, flips), range(data.m), n_jobs
    )
    values = np.zeros((flips.B, data.m))
    for j, values_j in enumerate(columns):
        values[:, j] = values_j

    logger.debug(f"Built {method} statistics: B={flips.B}, m={data.m}, Q={plan.Q}")
    return StatMatrix(values=values, method=method, names=data.names)


def exact_stats(
    data: DesignData, plan: SplitPlan, flips: FlipSet, n_jobs: int = 1
) -> StatMatrix:
    """Exact method: column j standardizes u_jb = (1/√n) Σ_q R_q F_b R_q X_j.

    R_q is the residual maker of split q (the selected variables other than
    j, on the test rows; zero elsewhere and when j is not selected). A
    variable never selected gets a zero column. The same flips act on every
    split.

    Raises:
        SingularGram: if selected variables are collinear on some test half.
    """
    return _build(_exact_column, "exact", data, plan, flips, n_jobs)


def approx_stats(
    data: DesignData, plan: SplitPlan, flips: FlipSet, n_jobs: int = 1
) -> StatMatrix:
    """Approximate method: column j standardizes v_jb = (1/√n) R̄ F_b R̄ X_j, R̄ = Σ_q R_q.

    Raises:
        SingularGram: if selected variables are collinear on some test half.
    """
    return _build(_approx_column, "approximate", data, plan, flips, n_jobs)


def build_stats(
    data: DesignData,
    method: str,
    Q: int,
    B: int,
    selector: Selector,
    seed: Seed = None,
    n_jobs: int = 1,
) -> StatMatrix:
    """Splits, flips and statistics from one master seed.

    Splits/selection and flips come from independent streams of `seed`, so
    changing B leaves the splits untouched.
    """
    if method not in METHODS:
        raise ValueError(f"Unknown method {method!r}, expected one of {METHODS}")

    plan = make_splits(data.n, Q, selector, data, seed=seed, n_jobs=n_jobs)
    flips = make_flips(data.n, B, seed=Streams.from_seed(seed).flips)
    build = exact_stats if method == "exact" else approx_stats
    return build(data, plan, flips, n_jobs=n_jobs)
