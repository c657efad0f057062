"""hdperm.inference.models"""

from __future__ import annotations

from collections.abc import Sequence

import attr
import numpy as np
from numpy.typing import ArrayLike

from .errors import DimensionMismatch, IndexOutOfRange, NonFiniteValue
from .linalg import Matrix, Vector


def _check_finite(values: np.ndarray, what: str) -> None:
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        location = ", ".join(str(int(i)) for i in bad[0])
        raise NonFiniteValue(f"{what} has a non-finite value at ({location})")


@attr.s(frozen=True, eq=False, repr=False)
class DesignData:
    """Response vector Y (n) and fixed design matrix X (n x m)."""

    y: Vector = attr.ib(converter=lambda v: np.array(v, dtype=np.float64))
    x: Matrix = attr.ib(converter=lambda v: np.array(v, dtype=np.float64))
    names: tuple[str, ...] = attr.ib(default=None)
    response_name: str = attr.ib(default="y")

    def __attrs_post_init__(self):
        """Validate dimensions and values."""
        if self.y.ndim != 1:
            raise DimensionMismatch(f"Response must be a vector, got shape {self.y.shape}")
        if self.x.ndim != 2:
            raise DimensionMismatch(f"Design must be a matrix, got shape {self.x.shape}")
        if self.x.shape[0] != self.y.shape[0]:
            raise DimensionMismatch(
                f"Design has {self.x.shape[0]} rows but response has {self.y.shape[0]}"
            )

        _check_finite(self.y, "Response")
        _check_finite(self.x, "Design")

        names = self.names
        if names is None:
            names = tuple(str(j) for j in range(self.x.shape[1]))
        names = tuple(str(name) for name in names)
        if len(names) != self.x.shape[1]:
            raise DimensionMismatch(
                f"{len(names)} variable names for {self.x.shape[1]} columns"
            )
        object.__setattr__(self, "names", names)

        self.y.setflags(write=False)
        self.x.setflags(write=False)

    @property
    def n(self) -> int:
        """Number of observations."""
        return self.x.shape[0]

    @property
    def m(self) -> int:
        """Number of variables."""
        return self.x.shape[1]

    def __repr__(self) -> str:
        """Short representation."""
        return f"DesignData(n={self.n}, m={self.m})"

    def subset_rows(self, rows: ArrayLike) -> DesignData:
        """Observations `rows` only, same variables."""
        rows = np.asarray(rows, dtype=np.intp)
        return DesignData(
            self.y[rows], self.x[rows], names=self.names, response_name=self.response_name
        )

    def resolve(self, variables: Sequence[str | int]) -> list[int]:
        """Map variable names or 0-based indices to column indices."""
        lookup = {name: j for j, name in enumerate(self.names)}
        return [resolve_variable(v, lookup, self.m) for v in variables]


def resolve_variable(variable: str | int, lookup: dict[str, int], m: int) -> int:
    """Column index of a variable given by name or 0-based index."""
    if isinstance(variable, str) and variable in lookup:
        return lookup[variable]

    try:
        j = int(variable)
    except (TypeError, ValueError):
        raise IndexOutOfRange(f"Unknown variable: {variable!r}") from None

    if not 0 <= j < m:
        raise IndexOutOfRange(f"Variable index {j} outside [0, {m})")
    return j
