"""Tests for dense linear algebra primitives."""

import numpy as np
import pytest

from hdperm.inference.errors import IndexOutOfRange, SingularGram
from hdperm.inference.linalg import (
    IDEMPOTENCE_TOLERANCE,
    SYMMETRY_TOLERANCE,
    embed_block,
    gram_cholesky,
    hat_matrix,
    orthonormal_basis,
    residual_maker,
    residualize,
)


class TestResidualMaker:
    """Residual maker matrices."""

    def test_projection_identities(self, rng):
        """R is symmetric, idempotent and annihilates Z."""
        z = rng.standard_normal((30, 4))
        r = residual_maker(z)

        assert r.shape == (30, 30)
        assert np.max(np.abs(r - r.T)) < SYMMETRY_TOLERANCE
        assert np.max(np.abs(r @ r - r)) < IDEMPOTENCE_TOLERANCE
        assert np.max(np.abs(r @ z)) < 1e-10
        assert np.trace(r) == pytest.approx(26)

    def test_positive_semidefinite(self, rng):
        """zᵀRz is never negative beyond rounding."""
        r = residual_maker(rng.standard_normal((25, 6)))
        for _ in range(200):
            v = rng.standard_normal(25) * rng.choice([1e-3, 1.0, 1e3])
            assert v @ r @ v >= -1e-10 * (v @ v)

    def test_leverages(self, rng):
        """The diagonal of H lies in [0, 1], also with a high leverage row."""
        z = rng.standard_normal((15, 3))
        z[0] *= 1e4
        h = hat_matrix(z)
        assert np.all(np.diag(h) >= -1e-12)
        assert np.all(np.diag(h) <= 1 + 1e-12)
        assert np.diag(h)[0] == pytest.approx(1.0, abs=1e-6)
        assert np.trace(h) == pytest.approx(3)

    def test_matches_normal_equations(self, rng):
        """R equals I - Z(ZᵀZ)⁻¹Zᵀ computed with an explicit inverse."""
        z = rng.standard_normal((12, 3))
        expected = np.eye(12) - z @ np.linalg.inv(z.T @ z) @ z.T
        np.testing.assert_allclose(residual_maker(z), expected, atol=1e-10)
        np.testing.assert_allclose(hat_matrix(z), np.eye(12) - expected, atol=1e-10)

    def test_empty_covariates(self):
        """No covariates gives the identity."""
        np.testing.assert_array_equal(residual_maker(np.empty((5, 0))), np.eye(5))
        np.testing.assert_array_equal(residual_maker([], rows=3), np.eye(3))

    def test_single_column_of_ones(self):
        """Projecting out the intercept centers vectors."""
        v = np.array([1.0, 2.0, 6.0])
        np.testing.assert_allclose(residualize(np.ones(3), v), v - v.mean())

    def test_collinear_columns(self, rng):
        """Duplicated columns raise SingularGram."""
        z = rng.standard_normal((10, 2))
        z = np.column_stack([z, z[:, 0]])
        with pytest.raises(SingularGram):
            residual_maker(z)

    def test_more_columns_than_rows(self, rng):
        """k > n is singular."""
        with pytest.raises(SingularGram):
            gram_cholesky(rng.standard_normal((3, 5)))

    def test_orthonormal_basis(self, rng):
        """Basis columns are orthonormal."""
        basis = orthonormal_basis(rng.standard_normal((20, 5)))
        np.testing.assert_allclose(basis.T @ basis, np.eye(5), atol=1e-10)


class TestEmbedBlock:
    """Scattering blocks into full matrices."""

    def test_embed(self):
        """Block entries land at the index pairs, zeros elsewhere."""
        block = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = embed_block(4, [1, 3], block)
        expected = np.zeros((4, 4))
        expected[1, 1], expected[1, 3], expected[3, 1], expected[3, 3] = 1, 2, 3, 4
        np.testing.assert_array_equal(out, expected)

    def test_empty_index_set(self):
        """An empty index set gives the zero matrix."""
        np.testing.assert_array_equal(embed_block(3, [], np.empty((0, 0))), np.zeros((3, 3)))

    def test_out_of_range(self):
        """Indices must lie inside the full dimension."""
        with pytest.raises(IndexOutOfRange):
            embed_block(3, [0, 3], np.eye(2))

        with pytest.raises(IndexOutOfRange):
            embed_block(3, [1, 1], np.eye(2))

    def test_shape_mismatch(self):
        """The block must be |D| x |D|."""
        with pytest.raises(ValueError):
            embed_block(4, [0, 1], np.eye(3))
