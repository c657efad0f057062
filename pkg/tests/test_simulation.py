"""Tests for the simulation harness."""

from unittest.mock import patch

import numpy as np
import pytest

from hdperm.inference import simulation
from hdperm.inference.errors import (
    InvalidConfig,
    InvalidRho,
    SingularGram,
    TooManyFailures,
    ZeroSignal,
)
from hdperm.inference.simulation import (
    ExperimentConfig,
    calibrate_sigma,
    gen_response,
    gen_toeplitz_design,
    make_beta,
    run_experiment,
    run_replication,
    run_sweep,
    sweep_frame,
)

SMALL = {
    "n": 40,
    "m": 10,
    "m1": 2,
    "snr": 8.0,
    "Q": 2,
    "B": 20,
    "replications": 4,
    "seed": 3,
}


class TestDesign:
    """Toeplitz designs."""

    def test_independent_columns(self):
        """rho=0: pairwise correlations close to 0."""
        n = 2000
        x = gen_toeplitz_design(n, 5, 0.0, seed=0)
        corr = np.corrcoef(x, rowvar=False)
        off_diagonal = corr[~np.eye(5, dtype=bool)]
        assert np.all(np.abs(off_diagonal) < 4 / np.sqrt(n))

    def test_correlation_structure(self):
        """Adjacent correlation rho, lag-2 correlation rho²."""
        n = 4000
        x = gen_toeplitz_design(n, 6, 0.9, seed=1)
        corr = np.corrcoef(x, rowvar=False)
        assert corr[2, 3] == pytest.approx(0.9, abs=4 / np.sqrt(n))
        assert corr[1, 3] == pytest.approx(0.81, abs=6 / np.sqrt(n))
        assert np.var(x[:, 5]) == pytest.approx(1.0, abs=0.1)

    def test_deterministic(self):
        """Same seed, same design."""
        np.testing.assert_array_equal(
            gen_toeplitz_design(10, 4, 0.5, seed=3), gen_toeplitz_design(10, 4, 0.5, seed=3)
        )

    def test_invalid_rho(self):
        """rho outside [0, 1) raises."""
        for rho in (1.0, -0.1):
            with pytest.raises(InvalidRho):
                gen_toeplitz_design(10, 3, rho)


class TestSignal:
    """Coefficients, noise level and response."""

    def test_make_beta(self):
        """Uniform and increasing strengths on the first m1 entries."""
        np.testing.assert_array_equal(make_beta(5, 0), np.zeros(5))
        np.testing.assert_array_equal(make_beta(6, 3, "uniform"), [1, 1, 1, 0, 0, 0])
        np.testing.assert_array_equal(make_beta(6, 3, "increasing"), [1, 2, 3, 0, 0, 0])
        np.testing.assert_array_equal(make_beta(4, 2, active=[1, 3]), [0, 1, 0, 1])

    def test_calibrate_sigma(self):
        """Signal variance 4 and SNR 4 give σ=1; σ scales with β."""
        x = np.array([[-2.0], [2.0]])
        assert calibrate_sigma(x, np.array([1.0]), 4.0) == pytest.approx(1.0)
        assert calibrate_sigma(x, np.array([2.0]), 4.0) == pytest.approx(2.0)
        assert calibrate_sigma(x, np.array([1.0]), 1e12) < 1e-5

    def test_zero_signal(self):
        """A zero signal cannot be calibrated."""
        with pytest.raises(ZeroSignal):
            calibrate_sigma(np.ones((5, 2)), np.zeros(2), 4.0)

    def test_gen_response(self, rng):
        """σ=0 gives the signal; the noise is seeded."""
        x = rng.standard_normal((20, 3))
        beta = np.array([1.0, 0.0, -1.0])
        np.testing.assert_array_equal(gen_response(x, beta, 0.0, seed=1), x @ beta)
        np.testing.assert_array_equal(
            gen_response(x, beta, 1.0, seed=1), gen_response(x, beta, 1.0, seed=1)
        )

    def test_noise_moments(self):
        """With β=0 the response is centered with variance σ²."""
        y = gen_response(np.zeros((20000, 2)), np.zeros(2), 2.0, seed=5)
        assert y.mean() == pytest.approx(0.0, abs=0.05)
        assert y.var() == pytest.approx(4.0, rel=0.05)


class TestConfig:
    """Experiment configs."""

    def test_defaults(self):
        """The basic scenario."""
        config = ExperimentConfig()
        assert (config.n, config.m, config.m1, config.Q, config.B) == (100, 100, 5, 10, 200)
        assert config.selection_size == 10

    def test_unknown_key(self):
        """Unknown keys are errors."""
        with pytest.raises(InvalidConfig):
            ExperimentConfig.from_mapping({"n": 50, "bogus": 1})

    def test_invariants(self):
        """m1 ≤ m, 2·m1 ≤ n/2 and the oracle must fit the split."""
        with pytest.raises(InvalidConfig):
            ExperimentConfig.from_mapping({"m": 3, "m1": 4})
        with pytest.raises(InvalidConfig):
            ExperimentConfig.from_mapping({"n": 20, "m1": 6})
        with pytest.raises(InvalidConfig):
            ExperimentConfig.from_mapping({"n": 40, "m1": 2, "n_selected": 20})
        with pytest.raises(InvalidConfig):
            ExperimentConfig.from_mapping({"method": "multisplit", "combiner": "sum"})
        with pytest.raises(InvalidConfig):
            ExperimentConfig.from_mapping({"rho": 1.0})

    def test_from_json(self):
        """JSON objects parse; other JSON is refused."""
        config = ExperimentConfig.from_json(b'{"n": 60, "m1": 3, "selector": "lasso"}')
        assert config.n == 60
        assert config.selector == "lasso"
        with pytest.raises(InvalidConfig):
            ExperimentConfig.from_json(b"[1, 2]")
        with pytest.raises(InvalidConfig):
            ExperimentConfig.from_json(b"{not json")

    def test_from_file(self, tmp_path):
        """Config files are read as JSON."""
        path = tmp_path / "config.json"
        path.write_text('{"n": 48, "m": 12, "m1": 1}')
        assert ExperimentConfig.from_file(str(path)).m == 12
        with pytest.raises(InvalidConfig):
            ExperimentConfig.from_file(str(tmp_path / "missing.json"))


class TestRunExperiment:
    """Experiment orchestration."""

    def test_report(self):
        """Report fields lie in their ranges."""
        report = run_experiment(ExperimentConfig(**SMALL))
        assert 0 <= report.fwer <= 1
        assert 0 <= report.mean_rejections <= 10
        assert report.wall_time_seconds > 0
        assert len(report.records) == 4
        assert report.failures == 0

        frame = report.records_frame()
        assert list(frame.columns) == [
            "replication", "rejections", "false_rejections", "family_error", "sigma", "failed"
        ]
        assert report.summary()["config"]["n"] == 40

    def test_deterministic(self):
        """Same config, same records, regardless of the thread count."""
        a = run_experiment(ExperimentConfig(**SMALL))
        b = run_experiment(ExperimentConfig(**SMALL, n_jobs=2))
        assert a.records == b.records
        assert a.fwer == b.fwer
        assert a.mean_rejections == b.mean_rejections

    def test_replication_independent_of_count(self):
        """A replication only depends on the seed and its index."""
        config = ExperimentConfig(**SMALL)
        assert run_replication(config, 2) == run_experiment(config).records[2]

    @pytest.mark.parametrize(
        "overrides",
        [
            {"method": "exact"},
            {"method": "multisplit"},
            {"correction": "stepdown"},
            {"correction": "none"},
            {"combiner": "sum"},
            {"selector": "lasso"},
            {"randomize_active": True},
            {"strength": "increasing", "rho": 0.5},
            {"m1": 0},
        ],
    )
    def test_variants(self, overrides):
        """Every method, correction and combiner runs."""
        report = run_experiment(ExperimentConfig(**{**SMALL, **overrides}))
        assert 0 <= report.fwer <= 1
        assert report.mean_rejections >= 0

    def test_sum_combiner_bound(self):
        """The closed-testing bound never exceeds the subset size."""
        report = run_experiment(ExperimentConfig(**SMALL, combiner="sum"))
        assert all(record.rejections <= 4 for record in report.records)

    def test_fixed_design(self, tmp_path):
        """A loaded design is used for every replication."""
        x = gen_toeplitz_design(40, 10, 0.2, seed=0)
        path = tmp_path / "design.csv"
        np.savetxt(path, x, delimiter=",")

        report = run_experiment(ExperimentConfig(**SMALL, design_path=str(path)))
        assert len(report.records) == 4
        sigmas = {record.sigma for record in report.records}
        assert len(sigmas) == 1

        with pytest.raises(InvalidConfig):
            run_experiment(ExperimentConfig(**{**SMALL, "m": 9}, design_path=str(path)))

    def test_all_failures(self):
        """Failing replications beyond the tolerance fail the run."""
        with patch.object(simulation, "build_stats", side_effect=SingularGram("collinear")):
            with pytest.raises(TooManyFailures):
                run_experiment(ExperimentConfig(**SMALL))

    def test_tolerated_failures(self, monkeypatch):
        """Failures within the tolerance are excluded and counted."""
        monkeypatch.setenv("HDPERM_MAX_FAILURE_RATE", "0.5")
        build_stats = simulation.build_stats
        calls = []

        def flaky(*args, **kwargs):
            calls.append(1)
            if len(calls) == 1:
                raise SingularGram("collinear")
            return build_stats(*args, **kwargs)

        with patch.object(simulation, "build_stats", side_effect=flaky):
            report = run_experiment(ExperimentConfig(**SMALL))

        assert report.failures == 1
        assert report.completed == 3
        assert report.records[0].failed


class TestSweep:
    """Scenario sweeps."""

    def test_grid(self):
        """One report per grid point, in product order."""
        points = run_sweep(
            ExperimentConfig(**{**SMALL, "replications": 2}), {"rho": [0.0, 0.5], "Q": [1, 2]}
        )
        assert [p.overrides for p in points] == [
            {"rho": 0.0, "Q": 1},
            {"rho": 0.0, "Q": 2},
            {"rho": 0.5, "Q": 1},
            {"rho": 0.5, "Q": 2},
        ]
        assert points[3].report.config.rho == 0.5

        frame = sweep_frame(points)
        assert list(frame.columns[:4]) == ["rho", "Q", "fwer", "fwer_stderr"]
        assert len(frame) == 4

    def test_invalid_point(self):
        """Invalid grid values are config errors."""
        with pytest.raises(InvalidConfig):
            run_sweep(ExperimentConfig(**SMALL), {"m1": [50]})
