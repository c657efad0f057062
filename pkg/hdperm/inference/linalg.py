"""hdperm.inference.linalg

Dense-matrix primitives shared by the score tests.

Matrices are C-ordered (row-major) float64 numpy arrays; vectors are 1-D
float64 arrays. All functions are pure and never modify their inputs.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from .errors import IndexOutOfRange, SingularGram

logger = logging.getLogger(__name__)

Matrix = NDArray[np.float64]
Vector = NDArray[np.float64]

# Cholesky pivot threshold, relative to the largest Gram diagonal entry
SINGULAR_TOLERANCE = 1e-12

# Projection identities are checked against these (double precision, n <= 500)
SYMMETRY_TOLERANCE = 1e-10
IDEMPOTENCE_TOLERANCE = 1e-8


def as_matrix(z: ArrayLike, rows: int | None = None) -> Matrix:
    """Coerce input to a 2-D float64 array.

    A 1-D input is read as a single column. `rows` gives the row count of an
    empty (n x 0) covariate matrix.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = z.reshape(-1, 1) if z.size or rows is None else np.empty((rows, 0))
    if z.ndim != 2:
        raise ValueError(f"Expected a 2-D matrix, got shape {z.shape}")

    return z


def gram_cholesky(z: Matrix) -> Matrix:
    """Lower Cholesky factor of ZᵀZ.

    Raises SingularGram when a pivot falls below SINGULAR_TOLERANCE times
    the largest diagonal entry of ZᵀZ.
    """
    n, k = z.shape
    if k > n:
        raise SingularGram(f"{k} covariates cannot be projected out of {n} observations")

    gram = z.T @ z
    scale = float(np.max(np.diag(gram)))
    if not scale > 0:
        raise SingularGram("Gram matrix has a zero diagonal")

    try:
        factor = scipy.linalg.cholesky(gram, lower=True, check_finite=False)
    except np.linalg.LinAlgError as e:
        raise SingularGram(f"Gram matrix is not positive definite: {e}") from e

    pivots = np.diag(factor) ** 2
    if pivots.min() < SINGULAR_TOLERANCE * scale:
        column = int(np.argmin(pivots))
        raise SingularGram(
            f"Collinear covariates: pivot {pivots[column]:.3e} at column {column} "
            f"(largest diagonal {scale:.3e})"
        )

    return factor


def orthonormal_basis(z: ArrayLike, rows: int | None = None) -> Matrix:
    """Orthonormal basis Q of the column space of Z, with QQᵀ = Z(ZᵀZ)⁻¹Zᵀ."""
    z = as_matrix(z, rows)
    if z.shape[1] == 0:
        return np.empty((z.shape[0], 0))

    factor = gram_cholesky(z)
    return scipy.linalg.solve_triangular(factor, z.T, lower=True).T


def hat_matrix(z: ArrayLike, rows: int | None = None) -> Matrix:
    """Projection H = Z(ZᵀZ)⁻¹Zᵀ onto the column space of Z."""
    basis = orthonormal_basis(z, rows)
    return basis @ basis.T


def residual_maker(z: ArrayLike, rows: int | None = None) -> Matrix:
    """Residual maker R = I − Z(ZᵀZ)⁻¹Zᵀ.

    Args:
        z: n x k covariate matrix; k may be 0, in which case R = I.
        rows: number of observations, only needed when `z` is empty and 1-D.

    Returns:
        n x n symmetric idempotent matrix with RZ = 0.

    Raises:
        SingularGram: if ZᵀZ is numerically singular.
    """
    basis = orthonormal_basis(z, rows)
    residual = np.eye(basis.shape[0]) - basis @ basis.T
    # symmetrize rounding noise
    return (residual + residual.T) / 2


def residualize(z: ArrayLike, v: ArrayLike) -> NDArray[np.float64]:
    """Apply R = I − Z(ZᵀZ)⁻¹Zᵀ to a vector or to each column of a matrix."""
    v = np.asarray(v, dtype=np.float64)
    basis = orthonormal_basis(z, rows=v.shape[0])
    return v - basis @ (basis.T @ v)


def embed_block(full_size: int, rows: ArrayLike, block: ArrayLike) -> Matrix:
    """Scatter a |D| x |D| block into a zero full_size x full_size matrix.

    Args:
        full_size: dimension of the output.
        rows: index set D (0-based, distinct).
        block: square matrix of size |D|.

    Raises:
        IndexOutOfRange: if D contains an index outside [0, full_size).
    """
    rows = np.asarray(rows, dtype=np.intp).ravel()
    block = np.asarray(block, dtype=np.float64)
    if block.shape != (rows.size, rows.size):
        raise ValueError(
            f"Block of shape {block.shape} does not match {rows.size} indices"
        )
    if rows.size and (rows.min() < 0 or rows.max() >= full_size):
        raise IndexOutOfRange(
            f"Index set spans [{rows.min()}, {rows.max()}], outside [0, {full_size})"
        )
    if np.unique(rows).size != rows.size:
        raise IndexOutOfRange("Index set contains duplicates")

    out = np.zeros((full_size, full_size))
    out[np.ix_(rows, rows)] = block
    return out
