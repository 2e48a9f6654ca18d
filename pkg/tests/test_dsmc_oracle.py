import math

import numpy as np
import pytest
from scipy import stats

from src.models.laws import UniformBallLaw
from src.models.params import ModelParams
from src.models.records import OracleThresholds, SampleRecord, records_to_arrays
from src.services import dsmc_oracle
from src.services.dsmc_oracle import (
    compare_estimates,
    default_dt,
    majorant,
    run_dsmc,
    sliced_wasserstein,
    weighted_vs_oracle_report,
)
from src.services.errors import ConfigError, InsufficientData, StabilityViolation
from src.services.maxwell_wild import batch_velocity_sample
from src.services.perfect_sampler import batch_sample

BALL = UniformBallLaw(radius=2.0)


def _records(v, m=None):
    m = np.ones(len(v)) if m is None else m
    return [SampleRecord(seed=0, replicate=i, t=0.0, m=float(m[i]), v=list(map(float, v[i])), n=0, tree="0") for i in range(len(v))]


class TestRunDsmc:
    def test_majorant(self):
        v = np.array([[1.0, 0, 0], [0, -3.0, 0]])
        assert majorant(v, 1.0) == pytest.approx(6.0)
        assert majorant(v, 0.0) == 1.0

    def test_default_dt(self, hard_spheres):
        v = np.array([[1.0, 0, 0], [0, -3.0, 0]])
        assert default_dt(v, hard_spheres) == pytest.approx(0.05 / 6.0)

    def test_momentum_and_energy_drift_is_small(self, rng, hard_spheres):
        run = run_dsmc(4000, 0.2, None, BALL, hard_spheres, rng)
        assert run.times[-1] == pytest.approx(0.2)
        assert run.collisions > 0
        assert abs(run.energy[-1] - run.energy[0]) < 0.1 * run.energy[0]
        assert np.all(np.abs(run.momentum[-1] - run.momentum[0]) < 0.1)

    def test_time_zero(self, rng, hard_spheres):
        run = run_dsmc(10, 0.0, None, BALL, hard_spheres, rng)
        assert run.collisions == 0
        assert run.velocities.shape == (10, 3)

    def test_rejects_odd_cloud(self, rng, hard_spheres):
        with pytest.raises(ConfigError):
            run_dsmc(11, 0.1, None, BALL, hard_spheres, rng)

    def test_stability(self, rng, hard_spheres):
        with pytest.raises(StabilityViolation):
            run_dsmc(100, 1.0, 1.0, BALL, hard_spheres, rng)

    def test_deterministic(self, hard_spheres):
        a = run_dsmc(200, 0.1, None, BALL, hard_spheres, np.random.default_rng(3))
        b = run_dsmc(200, 0.1, None, BALL, hard_spheres, np.random.default_rng(3))
        assert np.array_equal(a.velocities, b.velocities)

    def test_acceptance_uses_step_start_velocities(self, hard_spheres, monkeypatch):
        # later candidates of a particle must not see its earlier updates
        def run(scale):
            monkeypatch.setattr(dsmc_oracle, "post_collision", lambda v, w, sigma: (np.asarray(v) * scale, w))
            return run_dsmc(4000, 0.1, 0.1, BALL, hard_spheres, np.random.default_rng(11))

        inflated, frozen = run(10.0), run(1.0)
        assert inflated.collisions == frozen.collisions
        assert frozen.collisions > 0


class TestReport:
    def test_compare_estimates(self):
        passing = compare_estimates("x", (1.0, 0.1), (1.2, 0.1), 3.0)
        assert passing.z == pytest.approx(0.2 / math.hypot(0.1, 0.1))
        assert passing.passed
        assert not compare_estimates("x", (1.0, 0.0), (2.0, 0.0), 3.0).passed
        assert compare_estimates("x", (1.0, 0.0), (1.0, 0.0), 3.0).passed

    def test_sliced_wasserstein_of_shift(self, rng):
        v = rng.standard_normal((5000, 3))
        distance = sliced_wasserstein(v, np.ones(5000), v + np.array([1.0, 0, 0]), 256, rng)
        # E|<e1, d>| over the sphere is 1/2
        assert distance == pytest.approx(0.5, abs=0.1)

    def test_same_law_passes(self, rng):
        records = _records(BALL.sample(rng, 5000))
        report = weighted_vs_oracle_report(records, BALL.sample(rng, 5000), 16, rng)
        assert report.passed
        assert report.effective_size == pytest.approx(5000)

    def test_different_law_fails(self, rng):
        records = _records(BALL.sample(rng, 5000))
        report = weighted_vs_oracle_report(records, 1.5 * BALL.sample(rng, 5000), 16, rng)
        assert not report.passed

    def test_thresholds(self, rng):
        records = _records(BALL.sample(rng, 500))
        strict = OracleThresholds(sliced_w1_max=1e-9)
        assert not weighted_vs_oracle_report(records, BALL.sample(rng, 500), 8, rng, strict).passed

    def test_empty_inputs(self, rng):
        with pytest.raises(InsufficientData):
            weighted_vs_oracle_report([], BALL.sample(rng, 10), 4, rng)
        with pytest.raises(InsufficientData):
            weighted_vs_oracle_report(_records(BALL.sample(rng, 10)), np.zeros((0, 3)), 4, rng)

    def test_weighted_sampler_against_oracle(self, ball_f0, unit_kernel):
        params = ModelParams(gamma=1.0, e0=ball_f0.energy, kernel=unit_kernel)
        t = 0.25 / (params.kappa * (1 + params.e0) * (1 + params.e0 ** 0.5))
        records = batch_sample(t, 5000, ball_f0, params, base_seed=99).records
        oracle = run_dsmc(5000, t, None, ball_f0.velocity, params, np.random.default_rng(100))
        report = weighted_vs_oracle_report(records, oracle.velocities, 16, np.random.default_rng(101))
        assert report.ks_pvalue > 1e-3
        assert all(c.passed for c in report.moments)

    def test_maxwellian_oracle_matches_velocity_sampler(self, maxwell_params, unit_kernel):
        t = 0.5
        oracle = run_dsmc(4000, t, None, BALL, maxwell_params, np.random.default_rng(41))
        records = batch_velocity_sample(t, 4000, BALL, unit_kernel, base_seed=42).records
        exact = np.linalg.norm(records_to_arrays(records)[1], axis=1)
        assert stats.ks_2samp(np.linalg.norm(oracle.velocities, axis=1), exact).pvalue > 1e-3
