import math
import pickle

import numpy as np
import pytest
from scipy import stats

from src.models.laws import DiracLaw, InitialLaw, ShellLaw
from src.models.params import ModelParams
from src.models.records import SampleRecord, records_to_arrays
from src.services.errors import CapExceeded, UnrepresentableWeight
from src.services.perfect_sampler import (
    PerfectSampler,
    batch_sample,
    counter_bound,
    no_collision_probability,
    run_replicates,
    sample_state,
)
from src.services.tree_series import OrderedTree
from src.utils.rng import RngStream


def _rate_bound(params):
    return params.kappa * (1 + params.e0) * (1 + params.e0 ** (params.gamma / 2))


class TestSampleState:
    def test_time_zero_returns_initial_state(self, gaussian_f0, hard_spheres):
        record = sample_state(0.0, gaussian_f0, hard_spheres, RngStream.replicate(1, 0))
        assert record.n == 0
        assert record.tree == "0"
        assert record.m == 1.0
        expected = gaussian_f0.velocity.sample_one(RngStream.replicate(1, 0).generator)
        assert np.allclose(record.v, expected)

    def test_deterministic(self, gaussian_f0, hard_spheres):
        a = sample_state(0.2, gaussian_f0, hard_spheres, RngStream.replicate(5, 3))
        b = sample_state(0.2, gaussian_f0, hard_spheres, RngStream.replicate(5, 3))
        assert a == b
        assert a.seed == 5 and a.replicate == 3

    def test_counter_matches_tree(self, gaussian_f0, hard_spheres):
        for i in range(200):
            record = sample_state(0.2, gaussian_f0, hard_spheres, RngStream.replicate(9, i))
            tree = OrderedTree(record.tree)
            assert tree.internal_count == record.n
            assert record.m > 0

    def test_cap(self, gaussian_f0, hard_spheres):
        with pytest.raises(CapExceeded) as exc_info:
            for i in range(1000):
                sample_state(5.0, gaussian_f0, hard_spheres, RngStream.replicate(2, i), cap=1)
        assert exc_info.value.cap == 1

    def test_negative_time_rejected(self, gaussian_f0, hard_spheres):
        with pytest.raises(ValueError):
            PerfectSampler(gaussian_f0, hard_spheres).run(-1.0, RngStream.root(0))

    def test_shell_law_keeps_weights_positive(self, unit_kernel):
        f0 = InitialLaw(velocity=ShellLaw(radius=1.5))
        params = ModelParams(gamma=0.5, e0=f0.energy, kernel=unit_kernel)
        records = batch_sample(0.1, 200, f0, params, base_seed=4).records
        assert all(r.m > 0 and math.isfinite(r.m) for r in records)


class TestWeights:
    def test_light_weights_underflow_without_failing(self, unit_kernel):
        # v stays 0, so each collision multiplies m by exactly 1/1001
        f0 = InitialLaw(velocity=DiracLaw(v0=(0.0, 0.0, 0.0)))
        params = ModelParams(gamma=1.0, e0=1000.0, kernel=unit_kernel)
        result = batch_sample(0.006, 20, f0, params, base_seed=3, cap=100_000)
        assert result.failures == 0
        assert len(result.records) == 20
        for record in result.records:
            assert record.log_m == pytest.approx(-record.n * math.log(1001.0))
        assert any(record.m == 0.0 for record in result.records)

    def test_log_weight_matches_weight(self, gaussian_f0, hard_spheres):
        record = sample_state(0.3, gaussian_f0, hard_spheres, RngStream.replicate(4, 1))
        assert record.m == pytest.approx(math.exp(record.log_m))

    def test_overflowing_weight(self):
        with pytest.raises(UnrepresentableWeight):
            SampleRecord.from_log_weight(RngStream.replicate(1, 0), 1.0, 800.0, np.zeros(3), 0, "0")

    def test_overflowing_weight_counts_as_failure(self):
        def drawer(stream):
            if stream.path[-1] % 2:
                raise UnrepresentableWeight(800.0)
            return SampleRecord.from_log_weight(stream, 1.0, -2.0, np.zeros(3), 0, "0")

        result = run_replicates(drawer, 10, base_seed=1)
        assert result.failures == 5
        assert [r.replicate for r in result.records] == [0, 2, 4, 6, 8]


class TestBounds:
    def test_counter_bound(self, hard_spheres):
        assert counter_bound(0.0, hard_spheres, 3.0) == 0.0
        expected = math.exp(_rate_bound(hard_spheres) * 0.1) - 1
        assert counter_bound(0.1, hard_spheres, 3.0) == pytest.approx(expected)

    def test_mean_counter_below_bound(self, gaussian_f0, hard_spheres):
        t = 0.5 / _rate_bound(hard_spheres)
        records = batch_sample(t, 4000, gaussian_f0, hard_spheres, base_seed=11).records
        n = np.array([r.n for r in records], dtype=float)
        assert n.mean() <= counter_bound(t, hard_spheres, 3.0) + 4 * n.std(ddof=1) / math.sqrt(n.size)

    def test_no_collision_probability_dirac(self, dirac_f0, dirac_params, rng):
        # Lambda = 4 at |v| = 1
        assert no_collision_probability(0.1, dirac_f0, dirac_params, rng) == pytest.approx(math.exp(-0.4))

    def test_no_collision_frequency(self, dirac_f0, dirac_params):
        t = 0.125
        result = batch_sample(t, 4000, dirac_f0, dirac_params, base_seed=3)
        frequency = sum(r.n == 0 for r in result.records) / 4000
        p = math.exp(-0.5)
        assert abs(frequency - p) <= 4 * math.sqrt(p * (1 - p) / 4000)


class TestMoments:
    def test_mass_and_energy_conserved(self, gaussian_f0, hard_spheres):
        t = 0.5 / _rate_bound(hard_spheres)
        records = batch_sample(t, 20_000, gaussian_f0, hard_spheres, base_seed=20240101).records
        m, v = records_to_arrays(records)
        mass = m
        energy = m * np.sum(v * v, axis=1)
        for x, target in ((mass, 1.0), (energy, 3.0)):
            assert abs(x.mean() - target) <= 4.5 * x.std(ddof=1) / math.sqrt(x.size)

    def test_unweighted_energy_does_not_grow(self, gaussian_f0, hard_spheres):
        t = 1.0 / _rate_bound(hard_spheres)
        records = batch_sample(t, 10_000, gaussian_f0, hard_spheres, base_seed=31).records
        _, v = records_to_arrays(records)
        speed2 = np.sum(v * v, axis=1)
        assert speed2.mean() <= gaussian_f0.energy + 3 * speed2.std(ddof=1) / math.sqrt(speed2.size)


class TestReplicates:
    def test_workers_do_not_change_output(self, gaussian_f0, hard_spheres):
        one = batch_sample(0.05, 40, gaussian_f0, hard_spheres, base_seed=8, workers=1)
        two = batch_sample(0.05, 40, gaussian_f0, hard_spheres, base_seed=8, workers=2)
        assert one.records == two.records

    def test_first_index_addresses_replicates(self, gaussian_f0, hard_spheres):
        full = batch_sample(0.05, 30, gaussian_f0, hard_spheres, base_seed=8).records
        tail = batch_sample(0.05, 10, gaussian_f0, hard_spheres, base_seed=8, first_index=20).records
        assert tail == full[20:]
        assert [r.replicate for r in tail] == list(range(20, 30))

    def test_disjoint_replicate_ranges_share_a_law(self, gaussian_f0, hard_spheres):
        t = 1.0 / _rate_bound(hard_spheres)
        head = batch_sample(t, 4000, gaussian_f0, hard_spheres, base_seed=8).records
        tail = batch_sample(t, 4000, gaussian_f0, hard_spheres, base_seed=8, first_index=4000).records
        speeds = [np.linalg.norm(records_to_arrays(r)[1], axis=1) for r in (head, tail)]
        assert stats.ks_2samp(*speeds).pvalue > 1e-3

    def test_capped_replicates_are_counted(self, gaussian_f0, hard_spheres):
        result = batch_sample(2.0, 50, gaussian_f0, hard_spheres, base_seed=1, cap=2)
        assert result.failures > 0
        assert result.attempted == 50
        assert all(r.n < 2 for r in result.records)

    def test_rejects_empty_batch(self):
        with pytest.raises(ValueError):
            run_replicates(lambda rng: None, 0, 1)

    def test_stream_pickles_without_state(self):
        stream = RngStream.replicate(3, 7)
        stream.generator.random()
        clone = pickle.loads(pickle.dumps(stream))
        assert clone == stream
        assert clone.generator.random() == RngStream.replicate(3, 7).generator.random()
