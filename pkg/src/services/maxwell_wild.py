"""
Maxwellian molecules (gamma = 0): the recursive velocity(t) sampler, the Wild
iterates Q_n and the McKean tree weights.
"""

import logging
import math
import sys
from functools import partial
from typing import List, Optional, Tuple

import numpy as np

from src.models.kernels import AngularKernel
from src.models.records import SampleRecord
from src.services.collision_core import post_collision, sample_sigma
from src.services.errors import CapExceeded
from src.services.perfect_sampler import DEFAULT_CAP, BatchResult, RecursiveSampler, run_replicates
from src.services.tree_series import OrderedTree
from src.utils.rng import RngStream

logger = logging.getLogger(__name__)


def _collide(v: np.ndarray, v_star: np.ndarray, kernel: AngularKernel, rng: np.random.Generator) -> np.ndarray:
    sigma = sample_sigma(v, v_star, kernel, rng)
    v_prime, _ = post_collision(v, v_star, sigma)
    return v_prime


class MaxwellSampler(RecursiveSampler):
    """velocity(t): constant jump rate kappa, no weights, no fictitious jumps."""

    def __init__(self, f0_velocity, kernel: AngularKernel, cap: int = DEFAULT_CAP):
        super().__init__(cap)
        self.f0_velocity = f0_velocity
        self.kernel = kernel

    def initial_state(self, rng):
        return self.f0_velocity.sample_one(rng)

    def rate(self, state):
        return self.kernel.kappa

    def collide(self, state, partner, rng):
        return _collide(state, partner, self.kernel, rng)


def velocity_sample(t: float, f0_velocity, kernel: AngularKernel, rng: RngStream, cap: int = DEFAULT_CAP) -> SampleRecord:
    """
    Draws V_t for the Maxwellian equation, with its collision counter and tree.

    Raises:
        CapExceeded: If the cap is reached.
    """
    draw = MaxwellSampler(f0_velocity, kernel, cap).run(t, rng)
    return SampleRecord.from_draw(rng, t, 1.0, draw.state, draw.n, draw.tree)


def wild_weight(n: int, t: float, kappa: float) -> float:
    """e^{-kappa t}(1 - e^{-kappa t})^{n-1}; sums to 1 over n >= 1."""
    if n < 1:
        raise ValueError("n must be at least 1")
    survive = math.exp(-kappa * t)
    return survive * (-math.expm1(-kappa * t)) ** (n - 1)


def wild_truncation_error(n_terms: int, t: float, kappa: float) -> float:
    """(1 - e^{-kappa t})^N, the mass left out by the first N terms."""
    return (-math.expm1(-kappa * t)) ** n_terms


def _split_code(n: int, rng: np.random.Generator) -> str:
    """Preorder code of a random Q_n tree: each node with l leaves splits k | l-k, k uniform."""
    parts = []
    stack = [n]
    while stack:
        leaves = stack.pop()
        if leaves == 1:
            parts.append("0")
            continue
        k = int(rng.integers(1, leaves))
        parts.append("1")
        stack.append(leaves - k)
        stack.append(k)
    return "".join(parts)


def sample_from_Qn_tree(n: int, f0_velocity, kernel: AngularKernel, rng: np.random.Generator) -> Tuple[np.ndarray, OrderedTree]:
    """
    A draw from Q_n(f0) together with the tree it was built on.

    Q_1 = f0 and Q_n = (1/(n-1)) sum_{k=1}^{n-1} Q(Q_k, Q_{n-k}): the tree is
    drawn first, then evaluated bottom-up from its leaves.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    code = _split_code(n, rng)
    stack: List[np.ndarray] = []
    for symbol in reversed(code):
        if symbol == "0":
            stack.append(f0_velocity.sample_one(rng))
        else:
            v = stack.pop()
            v_star = stack.pop()
            stack.append(_collide(v, v_star, kernel, rng))
    return stack[0], OrderedTree(code)


def sample_from_Qn(n: int, f0_velocity, kernel: AngularKernel, rng: np.random.Generator) -> np.ndarray:
    return sample_from_Qn_tree(n, f0_velocity, kernel, rng)[0]


def sample_wild_count(t: float, kappa: float, rng: np.random.Generator, max_terms: Optional[int] = None) -> int:
    """
    N with P(N = n) = wild_weight(n, t, kappa), by inversion of 1 - (1 - e^{-kappa t})^N.

    Raises:
        CapExceeded: If N exceeds ``max_terms``, or if 1 - e^{-kappa t} rounds to 1,
            where N is beyond every finite cap.
    """
    fail = -math.expm1(-kappa * t)
    if fail == 0.0:
        return 1
    if fail == 1.0:
        raise CapExceeded(max_terms if max_terms is not None else sys.maxsize, t)
    u = 1.0 - rng.random()
    n = 1 + int(math.floor(math.log(u) / math.log(fail)))
    if max_terms is not None and n > max_terms:
        raise CapExceeded(max_terms, t)
    return n


def wild_mixture_sample(
    t: float,
    f0_velocity,
    kernel: AngularKernel,
    rng: np.random.Generator,
    max_terms: Optional[int] = None,
) -> Tuple[np.ndarray, int, OrderedTree]:
    """
    Draws N ~ wild_weight(., t, kappa), then V ~ Q_N(f0).

    Raises:
        CapExceeded: If N exceeds ``max_terms``.
    """
    n = sample_wild_count(t, kernel.kappa, rng, max_terms)
    v, tree = sample_from_Qn_tree(n, f0_velocity, kernel, rng)
    return v, n, tree


def wild_record(t: float, f0_velocity, kernel: AngularKernel, rng: RngStream, max_terms: Optional[int] = DEFAULT_CAP) -> SampleRecord:
    v, n, tree = wild_mixture_sample(t, f0_velocity, kernel, rng.generator, max_terms)
    return SampleRecord.from_draw(rng, t, 1.0, v, n - 1, tree.code)


def truncated_wild_with_gaussian(
    t: float,
    n_terms: int,
    f0_velocity,
    kernel: AngularKernel,
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    n draws from the Wild sum cut after ``n_terms`` terms, the remaining mass
    (1 - e^{-kappa t})^{n_terms} going to the isotropic Gaussian with the
    mean and energy of f0 (both conserved).
    """
    mean = f0_velocity.mean_vector
    variance = max((f0_velocity.energy - float(mean @ mean)) / 3.0, 0.0)
    out = np.empty((n, 3))
    for i in range(n):
        try:
            count = sample_wild_count(t, kernel.kappa, rng, n_terms)
        except CapExceeded:
            out[i] = mean + math.sqrt(variance) * rng.standard_normal(3)
            continue
        out[i] = sample_from_Qn(count, f0_velocity, kernel, rng)
    return out


def tree_weight(tree: OrderedTree, t: float, kappa: float) -> float:
    """e^{-kappa t}(1 - e^{-kappa t})^{l - 1}, l the leaf count of the tree."""
    return wild_weight(tree.leaf_count, t, kappa)


def split_probability(tree: OrderedTree) -> float:
    """
    Probability of the tree under uniform splitting: prod over internal nodes of 1/(l(node) - 1).
    """
    probability = 1.0
    stack = []
    for symbol in reversed(tree.code):
        if symbol == "0":
            stack.append(1)
        else:
            leaves = stack.pop() + stack.pop()
            probability /= leaves - 1
            stack.append(leaves)
    return probability


def mckean_tree_probability(tree: OrderedTree, t: float, kappa: float) -> float:
    """Probability that velocity(t) records ``tree``."""
    return tree_weight(tree, t, kappa) * split_probability(tree)


def batch_velocity_sample(
    t: float,
    n_rep: int,
    f0_velocity,
    kernel: AngularKernel,
    base_seed: int,
    cap: int = DEFAULT_CAP,
    workers: int = 1,
    first_index: int = 0,
    progress: bool = False,
) -> BatchResult:
    logger.info("maxwell: %d replicates at t=%g", n_rep, t)
    drawer = partial(velocity_sample, t, f0_velocity, kernel, cap=cap)
    return run_replicates(drawer, n_rep, base_seed, workers, first_index, progress)


def batch_wild_sample(
    t: float,
    n_rep: int,
    f0_velocity,
    kernel: AngularKernel,
    base_seed: int,
    max_terms: int = DEFAULT_CAP,
    workers: int = 1,
    first_index: int = 0,
    progress: bool = False,
) -> BatchResult:
    logger.info("wild mixture: %d replicates at t=%g", n_rep, t)
    drawer = partial(wild_record, t, f0_velocity, kernel, max_terms=max_terms)
    return run_replicates(drawer, n_rep, base_seed, workers, first_index, progress)
