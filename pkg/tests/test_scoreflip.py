"""Tests for the low-dimensional sign-flip score test."""

import numpy as np
import pytest

from hdperm.inference.errors import InvalidB
from hdperm.inference.linalg import residual_maker
from hdperm.inference.scoreflip import (
    FlipSet,
    critical_index,
    effective_scores,
    flip_test,
    make_flips,
    rejection_count,
    score_vectors,
    standardize,
    standardized_scores,
)


def _dense_scores(x, y, j, signs):
    """(1/√n) X_jᵀ R F_b R Y with explicit matrices."""
    n = x.shape[0]
    r = residual_maker(np.delete(x, j, axis=1))
    return np.array([x[:, j] @ r @ np.diag(s) @ r @ y for s in signs]) / np.sqrt(n)


def _dense_standardized(x, y, j, signs):
    n = x.shape[0]
    r = residual_maker(np.delete(x, j, axis=1))
    out = []
    for s in signs:
        t = r @ np.diag(s) @ r @ x[:, j] / np.sqrt(n)
        out.append(t @ y / np.linalg.norm(t))
    return np.array(out)


class TestFlips:
    """Sign-flipping transformations."""

    def test_identity_first(self):
        """Row 0 is all ones and every entry is ±1."""
        flips = make_flips(15, 30, seed=1)
        assert flips.signs.shape == (30, 15)
        assert flips.signs.dtype == np.int8
        np.testing.assert_array_equal(flips.signs[0], 1)
        assert set(np.unique(flips.signs)) <= {-1, 1}

    def test_deterministic(self):
        """The same seed regenerates the same signs."""
        np.testing.assert_array_equal(
            make_flips(10, 20, seed=7).signs, make_flips(10, 20, seed=7).signs
        )
        assert not np.array_equal(
            make_flips(10, 20, seed=7).signs, make_flips(10, 20, seed=8).signs
        )

    def test_single_flip(self):
        """B=1 holds only the identity."""
        np.testing.assert_array_equal(make_flips(4, 1, seed=0).signs, np.ones((1, 4)))

    def test_invalid_b(self):
        """B must be positive."""
        with pytest.raises(InvalidB):
            make_flips(5, 0)

    def test_signs_read_only(self):
        """The sign array cannot be modified."""
        flips = make_flips(5, 3, seed=0)
        with pytest.raises(ValueError):
            flips.signs[0, 0] = -1

    def test_caller_signs_untouched(self):
        """FlipSet keeps its own frozen copy of the signs."""
        signs = np.ones((2, 3), dtype=np.int8)
        flips = FlipSet(n=3, B=2, signs=signs)
        signs[1, 0] = -1
        assert signs.flags.writeable
        assert flips.signs[1, 0] == 1
        assert not flips.signs.flags.writeable

    def test_signs_shape(self):
        """Signs must be B x n."""
        with pytest.raises(ValueError):
            FlipSet(n=3, B=2, signs=np.ones((3, 2), dtype=np.int8))


class TestDecisionRule:
    """Critical values and p-values."""

    def test_counts(self):
        """⌈(1 − α)B⌉ and ⌊αB⌋ for usual values."""
        assert critical_index(200, 0.05) == 190
        assert rejection_count(200, 0.05) == 10
        assert critical_index(20, 0.05) == 19
        assert rejection_count(20, 0.05) == 1
        assert critical_index(1, 0.05) == 1

    def test_reject(self):
        """Observed statistic above the critical value rejects."""
        decision = flip_test([5.0, 1.0, -2.0, 3.0], alpha=0.25)
        assert decision.critical_index == 3
        assert decision.critical_value == 3.0
        assert decision.pvalue == 0.25
        assert decision.reject

    def test_absolute_values(self):
        """A negative observed statistic is compared on the absolute scale."""
        decision = flip_test([-5.0, 1.0, 2.0, 3.0], alpha=0.25)
        assert decision.statistic_observed == 5.0
        assert decision.reject

    def test_ties_never_reject(self):
        """All-zero statistics give p-value 1 and no rejection."""
        decision = flip_test(np.zeros(50), alpha=0.05)
        assert decision.pvalue == 1.0
        assert not decision.reject

    def test_single_statistic(self):
        """B=1 can never reject; the p-value is 1."""
        decision = flip_test([10.0], alpha=0.05)
        assert decision.pvalue == 1.0
        assert not decision.reject

    def test_pvalue_lower_bound(self, rng):
        """The p-value is never below 1/B."""
        stats = rng.standard_normal(40)
        stats[0] = 100.0
        assert flip_test(stats, 0.05).pvalue == pytest.approx(1 / 40)

    def test_invalid_alpha(self):
        """alpha outside [0, 1) is rejected."""
        with pytest.raises(ValueError):
            flip_test([1.0, 2.0], alpha=1.0)


class TestScores:
    """Effective and standardized scores."""

    def test_effective_scores_match_dense(self, rng):
        """Effective scores equal the literal matrix product."""
        x = rng.standard_normal((12, 3))
        y = rng.standard_normal(12)
        flips = make_flips(12, 8, seed=3)
        for j in range(3):
            np.testing.assert_allclose(
                effective_scores(x, y, j, flips),
                _dense_scores(x, y, j, flips.signs),
                atol=1e-10,
            )

    def test_standardized_scores_match_dense(self, rng):
        """Standardized scores equal t_bᵀY/‖t_b‖ with explicit matrices."""
        x = rng.standard_normal((10, 2))
        y = rng.standard_normal(10)
        flips = make_flips(10, 6, seed=4)
        np.testing.assert_allclose(
            standardized_scores(x, y, 1, flips),
            _dense_standardized(x, y, 1, flips.signs),
            atol=1e-10,
        )

    def test_score_vectors_shape(self, rng):
        """One score vector of length n per transformation."""
        flips = make_flips(9, 5, seed=0)
        assert score_vectors(rng.standard_normal((9, 2)), 0, flips).shape == (5, 9)

    def test_single_variable(self, rng):
        """Without other covariates R is the identity."""
        x = rng.standard_normal((8, 1))
        y = rng.standard_normal(8)
        flips = make_flips(8, 4, seed=2)
        expected = flips.signs @ (x[:, 0] * y) / np.sqrt(8)
        np.testing.assert_allclose(effective_scores(x, y, 0, flips), expected)

    def test_zero_norm(self):
        """Vanishing vectors standardize to zero."""
        np.testing.assert_array_equal(standardize(np.zeros(3)), np.zeros(3))
        np.testing.assert_allclose(standardize([3.0, 4.0]), [0.6, 0.8])

    def test_scale_invariance(self, rng):
        """Rescaling the response leaves the decision unchanged."""
        x = rng.standard_normal((30, 3))
        y = x[:, 0] + rng.standard_normal(30)
        flips = make_flips(30, 50, seed=5)
        a = flip_test(standardized_scores(x, y, 0, flips), 0.1)
        b = flip_test(standardized_scores(x, 3.5 * y, 0, flips), 0.1)
        assert a.reject == b.reject
        assert a.pvalue == b.pvalue

    def test_sign_symmetry(self, rng):
        """Negating the response negates every score and keeps the decision."""
        x = rng.standard_normal((30, 3))
        y = x[:, 0] + rng.standard_normal(30)
        flips = make_flips(30, 50, seed=5)

        np.testing.assert_allclose(
            effective_scores(x, -y, 0, flips), -effective_scores(x, y, 0, flips)
        )
        t = standardized_scores(x, y, 0, flips)
        t_negated = standardized_scores(x, -y, 0, flips)
        np.testing.assert_allclose(t_negated, -t)

        for alpha in (0.05, 0.1, 0.5):
            a = flip_test(t, alpha)
            b = flip_test(t_negated, alpha)
            assert a.reject == b.reject
            assert a.pvalue == b.pvalue
