"""
Collision kinematics: post-collision velocities, sampling of the scattering
direction sigma with density beta_{v,v*}(sigma)/kappa, and the kernel constants.

All functions broadcast over a leading batch axis: velocities may be of shape
(3,) or (n, 3).
"""

from typing import Callable, Tuple

import numpy as np

from src.models.kernels import AngularKernel
from src.models.laws import uniform_sphere

# |v - v*| below this (relative to 1 + |v| + |v*|) is treated as v == v*.
DEGENERATE_RELATIVE_SPEED = 1e-14


def post_collision(v: np.ndarray, v_star: np.ndarray, sigma: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Returns (v', v'*) = ((v+v*)/2 + |v-v*| sigma/2, (v+v*)/2 - |v-v*| sigma/2).
    """
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    center = 0.5 * (v + v_star)
    half_gap = 0.5 * np.linalg.norm(v - v_star, axis=-1, keepdims=True)
    return center + half_gap * sigma, center - half_gap * sigma


def orthonormal_frame(axis: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Two unit vectors completing each row of ``axis`` (shape (n, 3)) to an
    orthonormal basis, crossing against the coordinate axis on which the row
    has its smallest component.
    """
    pick = np.eye(3)[np.argmin(np.abs(axis), axis=1)]
    e1 = np.cross(axis, pick)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(axis, e1)
    return e1, e2


def sample_sigma(v: np.ndarray, v_star: np.ndarray, kernel: AngularKernel, rng: np.random.Generator) -> np.ndarray:
    """
    Draws sigma on S^2 with density beta_{v,v*}(sigma)/kappa.

    The cosine between (v-v*)/|v-v*| and sigma has density 2*pi*b(u)/kappa and
    the azimuth is uniform. When v == v* sigma is uniform on the sphere.

    Args:
        v (np.ndarray): Velocities, shape (3,) or (n, 3).
        v_star (np.ndarray): Partner velocities, same shape.
        kernel (AngularKernel): The angular kernel.
        rng (np.random.Generator): Source of randomness.

    Returns:
        np.ndarray: Unit vectors with the shape of ``v``.
    """
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    shape = np.broadcast_shapes(v.shape, v_star.shape)
    rel = np.broadcast_to(v - v_star, shape).reshape(-1, 3)
    n = rel.shape[0]

    gap = np.linalg.norm(rel, axis=1)
    scale = 1.0 + np.linalg.norm(np.broadcast_to(v, shape).reshape(-1, 3), axis=1)
    scale += np.linalg.norm(np.broadcast_to(v_star, shape).reshape(-1, 3), axis=1)
    degenerate = gap < DEGENERATE_RELATIVE_SPEED * scale

    cosine = kernel.sample_cosine(rng, n)
    azimuth = 2.0 * np.pi * rng.random(n)
    sine = np.sqrt(np.clip(1.0 - cosine * cosine, 0.0, 1.0))

    axis = rel / np.where(degenerate, 1.0, gap)[:, None]
    axis[degenerate] = (1.0, 0.0, 0.0)
    e1, e2 = orthonormal_frame(axis)
    sigma = (
        cosine[:, None] * axis
        + (sine * np.cos(azimuth))[:, None] * e1
        + (sine * np.sin(azimuth))[:, None] * e2
    )
    if degenerate.any():
        sigma[degenerate] = uniform_sphere(rng, int(degenerate.sum()))
    return sigma.reshape(shape)


def kappa(kernel: AngularKernel) -> float:
    """kappa = 2*pi * int_{-1}^{1} b(u) du."""
    return kernel.kappa


def mean_cosine(kernel: AngularKernel) -> float:
    """c = (2*pi/kappa) * int_{-1}^{1} u b(u) du."""
    return kernel.mean_cosine_c


def cross_section(v: np.ndarray, v_star: np.ndarray, sigma: np.ndarray, gamma: float, kernel: AngularKernel) -> np.ndarray:
    """
    B(v - v*, sigma) = |v - v*|^gamma b(<(v - v*)/|v - v*|, sigma>).
    """
    rel = np.asarray(v, dtype=float) - np.asarray(v_star, dtype=float)
    gap = np.linalg.norm(rel, axis=-1)
    cosine = np.einsum("...i,...i->...", rel, sigma) / np.where(gap > 0, gap, 1.0)
    return gap ** gamma * kernel.b(cosine)


def weak_collision_A(
    phi: Callable[[np.ndarray], np.ndarray],
    v: np.ndarray,
    v_star: np.ndarray,
    gamma: float,
    kernel: AngularKernel,
    n_mc: int,
    rng: np.random.Generator,
) -> Tuple[float, float]:
    """
    Monte Carlo estimate of A phi(v, v*) = |v-v*|^gamma int [phi(v') - phi(v)] beta dsigma.

    Args:
        phi: Test function taking velocities of shape (n, 3).
        v, v_star: Single velocities, shape (3,).
        gamma (float): Relative-speed exponent.
        kernel (AngularKernel): The angular kernel.
        n_mc (int): Number of sigma draws.
        rng (np.random.Generator): Source of randomness.

    Returns:
        Tuple[float, float]: The estimate and its standard error.
    """
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    vs = np.tile(v, (n_mc, 1))
    sigma = sample_sigma(vs, np.tile(v_star, (n_mc, 1)), kernel, rng)
    v_prime, _ = post_collision(vs, v_star, sigma)
    jumps = phi(v_prime) - phi(vs)
    factor = np.linalg.norm(v - v_star) ** gamma * kernel.kappa
    stderr = jumps.std(ddof=1) / np.sqrt(n_mc) if n_mc > 1 else float("inf")
    return float(factor * jumps.mean()), float(factor * stderr)
