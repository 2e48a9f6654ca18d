import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.models.kernels import ConstantKernel
from src.models.params import CollisionAux, ModelParams, WeightedState
from src.services.weighted_dynamics import (
    acceptance_q,
    collision_map,
    drift_integral,
    generator_B,
    lambda_rate,
    sample_aux,
    split_generator_mphi,
)

component = st.floats(min_value=-20.0, max_value=20.0, allow_nan=False, allow_infinity=False)
vector = st.tuples(component, component, component).map(np.array)
_KERNEL = ConstantKernel(0.1)


def test_lambda_rate(hard_spheres):
    assert lambda_rate(np.zeros(3), hard_spheres) == pytest.approx(4.0)
    assert lambda_rate(np.array([3.0, 4.0, 0.0]), hard_spheres) == pytest.approx(24.0)


def test_lambda_rate_at_gamma_zero(unit_kernel):
    params = ModelParams(gamma=0.0, e0=1.0, kernel=unit_kernel)
    assert lambda_rate(np.zeros(3), params) == pytest.approx(4.0)
    assert lambda_rate(np.array([5.0, 0.0, 0.0]), params) == pytest.approx(4.0)


@settings(max_examples=200, deadline=None)
@given(vector, vector, st.floats(min_value=0.0, max_value=1.0), st.floats(min_value=0.01, max_value=100.0))
def test_acceptance_is_a_probability(v, v_star, gamma, e0):
    params = ModelParams(gamma=gamma, e0=e0, kernel=_KERNEL)
    q = acceptance_q(v, v_star, params)
    assert 0.0 <= q <= 1.0 + 1e-12


def test_acceptance_at_gamma_zero(unit_kernel):
    params = ModelParams(gamma=0.0, e0=2.0, kernel=unit_kernel)
    v_star = np.array([1.0, 1.0, 0.0])
    assert acceptance_q(np.zeros(3), v_star, params) == pytest.approx(1.0 / (2.0 * 3.0))


def test_collision_map_weight_and_rejection(hard_spheres):
    y = WeightedState(2.0, np.array([1.0, 0.0, 0.0]))
    y_star = WeightedState(0.5, np.array([0.0, 2.0, 0.0]))
    sigma = np.array([0.0, 0.0, 1.0])
    rejected = collision_map(y, y_star, CollisionAux(sigma, 1.0), hard_spheres)
    assert rejected.m == pytest.approx(2.0 * 0.5 * 5.0 / 4.0)
    assert np.array_equal(rejected.v, y.v)
    accepted = collision_map(y, y_star, CollisionAux(sigma, 0.0), hard_spheres)
    assert accepted.m == pytest.approx(rejected.m)
    assert not np.allclose(accepted.v, y.v)
    assert np.linalg.norm(accepted.v - np.array([0.5, 1.0, 0.0])) == pytest.approx(np.sqrt(5.0) / 2.0)


def test_sample_aux_shapes(rng, hard_spheres):
    z = sample_aux(np.zeros((5, 3)), np.ones((5, 3)), hard_spheres, rng)
    assert z.sigma.shape == (5, 3)
    assert z.a.shape == (5,)
    single = sample_aux(np.zeros(3), np.ones(3), hard_spheres, rng)
    assert single.sigma.shape == (3,)
    assert 0.0 <= single.a < 1.0


def test_generator_kills_constants(rng, hard_spheres):
    y = WeightedState(1.0, np.array([0.3, 0.0, -1.0]))
    y_star = WeightedState(2.0, np.array([1.0, 1.0, 0.0]))
    estimate, stderr = generator_B(lambda s: np.ones_like(np.asarray(s.m, dtype=float)), y, y_star, hard_spheres, 100, rng)
    assert estimate == 0.0
    assert stderr == 0.0


def test_drift_of_rate_is_bounded(rng, hard_spheres):
    # int [Lambda(h) - Lambda(y)] nu(dz) <= kappa (1 + e0)
    y = WeightedState(1.0, np.array([0.0, 0.0, 0.0]))
    y_star = WeightedState(1.0, np.array([4.0, 0.0, 0.0]))
    estimate, stderr = drift_integral(lambda s: lambda_rate(s.v, hard_spheres), y, y_star, hard_spheres, 20_000, rng)
    assert estimate <= hard_spheres.kappa * (1.0 + hard_spheres.e0) + 4 * stderr


def test_split_generator_recombines(rng, hard_spheres):
    y = WeightedState(1.5, np.array([1.0, 0.0, 0.0]))
    y_star = WeightedState(0.8, np.array([0.0, -1.0, 0.5]))
    a_part, a_err, reweight = split_generator_mphi(
        lambda v: np.sum(v * v, axis=-1), y, y_star, hard_spheres, 200_000, np.random.default_rng(7)
    )
    full, full_err = generator_B(
        lambda s: s.m * np.sum(s.v * s.v, axis=-1), y, y_star, hard_spheres, 200_000, np.random.default_rng(8)
    )
    assert abs((a_part + reweight) - full) <= 5 * np.hypot(a_err, full_err)

