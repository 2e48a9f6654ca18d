"""
Coefficients of the weighted kinetic equation on E = (0, inf) x R^3: the jump
rate Lambda, the acceptance probability q of real (non-fictitious) jumps, the
post-collision map h and Monte Carlo evaluations of its weak-form generator.
"""

from typing import Callable, Tuple

import numpy as np

from src.models.params import CollisionAux, ModelParams, WeightedState
from src.services.collision_core import post_collision, sample_sigma, weak_collision_A

TestFunction = Callable[[WeightedState], np.ndarray]


def _speed_power(x: np.ndarray, gamma: float) -> np.ndarray:
    # 0 ** 0 == 1: at gamma = 0 the rate is constant, including at v = 0.
    return np.linalg.norm(x, axis=-1) ** gamma


def lambda_rate(v: np.ndarray, params: ModelParams):
    """
    Lambda(v) = (1 + e0)(1 + |v|^gamma) >= 1.
    """
    return (1.0 + params.e0) * (1.0 + _speed_power(np.asarray(v, dtype=float), params.gamma))


def acceptance_q(v: np.ndarray, v_star: np.ndarray, params: ModelParams):
    """
    q(v, v*) = (1 + e0)|v - v*|^gamma / ((1 + |v*|^2) Lambda(v)), a value in [0, 1].
    """
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    numerator = (1.0 + params.e0) * _speed_power(v - v_star, params.gamma)
    return numerator / ((1.0 + np.sum(v_star * v_star, axis=-1)) * lambda_rate(v, params))


def collision_map(y: WeightedState, y_star: WeightedState, z: CollisionAux, params: ModelParams) -> WeightedState:
    """
    h(y, y*, z) = (m m* (1 + |v*|^2)/(1 + e0), v''), v'' = v' if a <= q(v, v*) else v.

    The weight update happens for fictitious jumps too.
    """
    v_star = np.asarray(y_star.v, dtype=float)
    weight = y.m * y_star.m * (1.0 + np.sum(v_star * v_star, axis=-1)) / (1.0 + params.e0)
    return WeightedState(weight, collision_velocity(y.v, v_star, z, params))


def log_weight_increment(v_star: np.ndarray, params: ModelParams):
    """log((1 + |v*|^2)/(1 + e0)): the weight factor of h, partner weight excluded."""
    v_star = np.asarray(v_star, dtype=float)
    return np.log1p(np.sum(v_star * v_star, axis=-1)) - np.log1p(params.e0)


def collision_velocity(v: np.ndarray, v_star: np.ndarray, z: CollisionAux, params: ModelParams) -> np.ndarray:
    """v'' = v' if a <= q(v, v*) else v."""
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    real = np.asarray(z.a <= acceptance_q(v, v_star, params))
    v_prime, _ = post_collision(v, v_star, z.sigma)
    return np.where(real[..., None], v_prime, v)


def sample_aux(v: np.ndarray, v_star: np.ndarray, params: ModelParams, rng: np.random.Generator) -> CollisionAux:
    """Draws z with law nu_{y,y*}/kappa."""
    sigma = sample_sigma(v, v_star, params.kernel, rng)
    a = rng.random(sigma.shape[:-1]) if sigma.ndim > 1 else rng.random()
    return CollisionAux(sigma, a)


def drift_integral(
    phi: TestFunction,
    y: WeightedState,
    y_star: WeightedState,
    params: ModelParams,
    n_mc: int,
    rng: np.random.Generator,
) -> Tuple[float, float]:
    """
    Monte Carlo estimate of int_H [Phi(h(y, y*, z)) - Phi(y)] nu_{y,y*}(dz).

    Args:
        phi (TestFunction): Bounded test function on batched states.
        y (WeightedState): A single state (scalar m, v of shape (3,)).
        y_star (WeightedState): The partner state.
        params (ModelParams): Model parameters.
        n_mc (int): Number of z draws, at least 1.
        rng (np.random.Generator): Source of randomness.

    Returns:
        Tuple[float, float]: The estimate and its standard error.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be at least 1")
    v = np.tile(np.asarray(y.v, dtype=float), (n_mc, 1))
    v_star = np.tile(np.asarray(y_star.v, dtype=float), (n_mc, 1))
    states = WeightedState(np.full(n_mc, float(y.m)), v)
    partners = WeightedState(np.full(n_mc, float(y_star.m)), v_star)
    after = collision_map(states, partners, sample_aux(v, v_star, params, rng), params)
    jumps = np.asarray(phi(after), dtype=float) - np.asarray(phi(states), dtype=float)
    stderr = jumps.std(ddof=1) / np.sqrt(n_mc) if n_mc > 1 else 0.0
    return float(params.kappa * jumps.mean()), float(params.kappa * stderr)


def generator_B(
    phi: TestFunction,
    y: WeightedState,
    y_star: WeightedState,
    params: ModelParams,
    n_mc: int,
    rng: np.random.Generator,
) -> Tuple[float, float]:
    """
    Monte Carlo estimate of B Phi(y, y*) = Lambda(y) int_H [Phi(h) - Phi(y)] nu(dz).

    Returns:
        Tuple[float, float]: The estimate and its standard error; exactly 0 for constant Phi.
    """
    rate = float(lambda_rate(y.v, params))
    estimate, stderr = drift_integral(phi, y, y_star, params, n_mc, rng)
    return rate * estimate, rate * stderr


def split_generator_mphi(
    phi_v: Callable[[np.ndarray], np.ndarray],
    y: WeightedState,
    y_star: WeightedState,
    params: ModelParams,
    n_mc: int,
    rng: np.random.Generator,
) -> Tuple[float, float, float]:
    """
    Splits B Phi for Phi(m, v) = m phi(v) into m m* A phi(v, v*) and the
    reweighting term kappa m Lambda(v) phi(v) (m*(1 + |v*|^2)/(1 + e0) - 1).

    Returns:
        Tuple[float, float, float]: The A-part estimate, its standard error and
        the exact reweighting term.
    """
    a_part, a_err = weak_collision_A(phi_v, y.v, y_star.v, params.gamma, params.kernel, n_mc, rng)
    v_star = np.asarray(y_star.v, dtype=float)
    reweight = (
        params.kappa
        * y.m
        * float(lambda_rate(y.v, params))
        * float(phi_v(np.asarray(y.v, dtype=float)[None, :])[0])
        * (y_star.m * (1.0 + float(v_star @ v_star)) / (1.0 + params.e0) - 1.0)
    )
    scale = y.m * y_star.m
    return scale * a_part, scale * a_err, reweight
