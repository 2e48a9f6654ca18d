"""
The tree-indexed series expansion F_t = sum over trees of Gamma_t(J_tree(F0)).

Measures on E and on R+ x E are represented by weighted particle clouds. The
operator Q is applied by importance sampling with its total mass tracked
exactly, Gamma_t is a deterministic reweighting, and the time integral in J is
a midpoint rule on a grid shared by every node of a tree.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.models.laws import InitialLaw
from src.models.params import ModelParams, WeightedState
from src.models.records import SampleRecord, TreeCheckRow, TreeMassRow
from src.services.errors import EmptyCloud
from src.services.perfect_sampler import batch_sample
from src.services.weighted_dynamics import collision_map, lambda_rate, sample_aux
from src.utils.persistence import write_csv
from src.utils.rng import RngStream

logger = logging.getLogger(__name__)

MIN_PARTICLES = 64


def _subtree_end(code: str, start: int) -> int:
    """Index one past the subtree whose preorder code starts at ``start``."""
    need = 1
    i = start
    while need:
        if i >= len(code):
            raise ValueError(f"truncated tree code {code!r}")
        need += 1 if code[i] == "1" else -1
        i += 1
    return i


@dataclass(frozen=True)
class OrderedTree:
    """
    A full binary ordered tree stored as its preorder code (1 = internal
    node, 0 = leaf). The left child of a collision node is the particle's own
    history, the right child the partner's.
    """

    code: str

    def __post_init__(self):
        if not self.code or set(self.code) - {"0", "1"}:
            raise ValueError(f"tree code must be a nonempty bitstring, got {self.code!r}")
        if _subtree_end(self.code, 0) != len(self.code):
            raise ValueError(f"trailing symbols after a complete tree in {self.code!r}")

    @classmethod
    def leaf(cls) -> "OrderedTree":
        return cls("0")

    @classmethod
    def join(cls, left: "OrderedTree", right: "OrderedTree") -> "OrderedTree":
        return cls("1" + left.code + right.code)

    @classmethod
    def from_nested(cls, nested) -> "OrderedTree":
        """Builds a tree from nested pairs, None being a leaf."""
        parts = []
        stack = [nested]
        while stack:
            node = stack.pop()
            if node is None:
                parts.append("0")
            else:
                left, right = node
                parts.append("1")
                stack.append(right)
                stack.append(left)
        return cls("".join(parts))

    def to_nested(self):
        stack = []
        for symbol in reversed(self.code):
            if symbol == "0":
                stack.append(None)
            else:
                left = stack.pop()
                right = stack.pop()
                stack.append((left, right))
        return stack[0]

    @property
    def is_leaf(self) -> bool:
        return self.code == "0"

    @property
    def leaf_count(self) -> int:
        return self.code.count("0")

    @property
    def internal_count(self) -> int:
        return self.code.count("1")

    @property
    def node_count(self) -> int:
        return len(self.code)

    @property
    def left(self) -> "OrderedTree":
        if self.is_leaf:
            raise ValueError("a leaf has no children")
        return OrderedTree(self.code[1:_subtree_end(self.code, 1)])

    @property
    def right(self) -> "OrderedTree":
        if self.is_leaf:
            raise ValueError("a leaf has no children")
        return OrderedTree(self.code[_subtree_end(self.code, 1):])

    @property
    def height(self) -> int:
        stack = []
        for symbol in reversed(self.code):
            if symbol == "0":
                stack.append(0)
            else:
                stack.append(1 + max(stack.pop(), stack.pop()))
        return stack[0]

    def __str__(self) -> str:
        return self.code


@lru_cache(maxsize=None)
def _codes_with_leaves(leaves: int) -> Tuple[str, ...]:
    if leaves == 1:
        return ("0",)
    return tuple(
        "1" + left + right
        for k in range(1, leaves)
        for left in _codes_with_leaves(k)
        for right in _codes_with_leaves(leaves - k)
    )


def trees_with_leaves(leaves: int) -> List[OrderedTree]:
    if leaves < 1:
        raise ValueError("a tree has at least one leaf")
    return [OrderedTree(code) for code in sorted(_codes_with_leaves(leaves))]


def enumerate_trees(max_nodes: int) -> List[OrderedTree]:
    """
    All ordered full binary trees with at most ``max_nodes`` nodes, in code-lexicographic order.

    Args:
        max_nodes (int): Node budget, at least 1.

    Returns:
        List[OrderedTree]: Each tree exactly once.
    """
    if max_nodes < 1:
        raise ValueError("max_nodes must be at least 1")
    codes = [code for leaves in range(1, (max_nodes + 1) // 2 + 1) for code in _codes_with_leaves(leaves)]
    return [OrderedTree(code) for code in sorted(codes)]


@dataclass
class ParticleCloud:
    """
    Weighted particles (w_i, s_i, y_i); ``s`` is None for a measure on E alone.
    """

    w: np.ndarray
    m: np.ndarray
    v: np.ndarray
    s: Optional[np.ndarray] = None

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float).reshape(-1)
        self.m = np.asarray(self.m, dtype=float).reshape(-1)
        self.v = np.asarray(self.v, dtype=float).reshape(-1, 3)
        if self.s is not None:
            self.s = np.asarray(self.s, dtype=float).reshape(-1)
        sizes = {self.w.size, self.m.size, self.v.shape[0]} | ({self.s.size} if self.s is not None else set())
        if len(sizes) != 1:
            raise ValueError("cloud arrays have inconsistent lengths")
        if not np.all(np.isfinite(self.w)) or np.any(self.w < 0):
            raise ValueError("cloud weights must be finite and nonnegative")

    @classmethod
    def empty(cls, timed: bool = False) -> "ParticleCloud":
        return cls(np.zeros(0), np.zeros(0), np.zeros((0, 3)), np.zeros(0) if timed else None)

    @classmethod
    def concat(cls, clouds: List["ParticleCloud"]) -> "ParticleCloud":
        if not clouds:
            return cls.empty()
        timed = all(c.s is not None for c in clouds)
        return cls(
            np.concatenate([c.w for c in clouds]),
            np.concatenate([c.m for c in clouds]),
            np.concatenate([c.v for c in clouds]),
            np.concatenate([c.s for c in clouds]) if timed else None,
        )

    @property
    def total_mass(self) -> float:
        return float(self.w.sum())

    def scaled(self, factor: float) -> "ParticleCloud":
        return ParticleCloud(self.w * factor, self.m, self.v, self.s)

    def __len__(self) -> int:
        return self.w.size


def q_operator(F: ParticleCloud, G: ParticleCloud, params: ModelParams, n_out: int, rng: np.random.Generator) -> ParticleCloud:
    """
    Samples Q(F, G), whose total mass kappa G(E) int Lambda dF is carried exactly.

    y is drawn proportionally to w_i Lambda(v_i), y* proportionally to w*_j
    and z from nu/kappa; each of the n_out outputs gets weight total/n_out.

    Raises:
        EmptyCloud: If F or G has no particles.
    """
    if len(F) == 0 or len(G) == 0:
        raise EmptyCloud("Q needs two nonempty clouds")
    if n_out < 1:
        raise ValueError("n_out must be at least 1")
    rated = F.w * lambda_rate(F.v, params)
    f_mass = rated.sum()
    g_mass = G.w.sum()
    total = params.kappa * g_mass * f_mass
    if total == 0.0:
        return ParticleCloud.empty()

    i = rng.choice(len(F), size=n_out, p=rated / f_mass)
    j = rng.choice(len(G), size=n_out, p=G.w / g_mass)
    z = sample_aux(F.v[i], G.v[j], params, rng)
    m, v = collision_map(WeightedState(F.m[i], F.v[i]), WeightedState(G.m[j], G.v[j]), z, params)
    return ParticleCloud(np.full(n_out, total / n_out), m, v)


def gamma_damp(J: ParticleCloud, t: float, params: ModelParams) -> ParticleCloud:
    """
    Gamma_t(J): keeps s_i <= t, multiplies w_i by exp(-kappa Lambda(v_i)(t - s_i)) and drops s.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if J.s is None:
        raise ValueError("gamma_damp needs a cloud on R+ x E")
    keep = J.s <= t
    decay = np.exp(-params.kappa * lambda_rate(J.v[keep], params) * (t - J.s[keep]))
    return ParticleCloud(J.w[keep] * decay, J.m[keep], J.v[keep])


def _damp_on_grid(J: ParticleCloud, s: float, step: float, params: ModelParams) -> ParticleCloud:
    # Particles born in the stratum whose midpoint is s count for half of it.
    full = J.s < s - 0.25 * step
    half = np.abs(J.s - s) <= 0.25 * step
    keep = full | half
    factor = np.where(half[keep], 0.5, 1.0)
    decay = np.exp(-params.kappa * lambda_rate(J.v[keep], params) * (s - J.s[keep]))
    return ParticleCloud(J.w[keep] * decay * factor, J.m[keep], J.v[keep])


def _node_stream(rng: RngStream, path: str) -> RngStream:
    return rng.spawn(int("1" + path, 2))


def _node_budget(n_particles: int, depth: int) -> int:
    return max(MIN_PARTICLES, n_particles >> depth) if n_particles >= MIN_PARTICLES else n_particles


def _j_on_grid(
    tree: OrderedTree,
    path: str,
    t: float,
    f0: InitialLaw,
    params: ModelParams,
    n_particles: int,
    n_time: int,
    rng: RngStream,
) -> ParticleCloud:
    generator = _node_stream(rng, path).generator
    budget = _node_budget(n_particles, len(path))
    if tree.is_leaf:
        states = f0.sample_states(generator, budget)
        return ParticleCloud(np.full(budget, 1.0 / budget), states.m, states.v, np.zeros(budget))

    left = _j_on_grid(tree.left, path + "0", t, f0, params, n_particles, n_time, rng)
    right = _j_on_grid(tree.right, path + "1", t, f0, params, n_particles, n_time, rng)
    step = t / n_time
    n_out = max(1, math.ceil(budget / n_time))
    strata = []
    for r in range(n_time):
        s = (r + 0.5) * step
        damped_left = _damp_on_grid(left, s, step, params)
        damped_right = _damp_on_grid(right, s, step, params)
        if len(damped_left) == 0 or len(damped_right) == 0:
            continue
        stratum = q_operator(damped_left, damped_right, params, n_out, generator)
        strata.append(ParticleCloud(stratum.w * step, stratum.m, stratum.v, np.full(len(stratum), s)))
    return ParticleCloud.concat(strata) if strata else ParticleCloud.empty(timed=True)


def j_measure(
    tree: OrderedTree,
    t: float,
    f0: InitialLaw,
    params: ModelParams,
    n_particles: int,
    n_time: int,
    rng: RngStream,
) -> ParticleCloud:
    """
    Particle representation of J_tree(F0) on [0, t] x E.

    The leaf is delta_0 x F0 (n_particles draws of weight 1/n_particles). An
    internal node puts on each of n_time midpoints s_r the Q-image of the
    damped children, weighted by the stratum length t/n_time. Every node is
    driven by its own stream, keyed by its position in the tree, and the
    particle budget halves with depth down to a floor of 64.

    Args:
        tree (OrderedTree): The tree.
        t (float): Time horizon, nonnegative.
        f0 (InitialLaw): The initial law.
        params (ModelParams): Model parameters.
        n_particles (int): Particle budget at the root.
        n_time (int): Number of time strata.
        rng (RngStream): Stream of this tree.

    Returns:
        ParticleCloud: A cloud carrying birth times.
    """
    if n_particles < 1 or n_time < 1:
        raise ValueError("n_particles and n_time must be at least 1")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0 and not tree.is_leaf:
        return ParticleCloud.empty(timed=True)
    return _j_on_grid(tree, "", t, f0, params, n_particles, n_time, rng)


def systematic_resample(cloud: ParticleCloud, n: int, rng: np.random.Generator) -> ParticleCloud:
    """n equally weighted particles with the same total mass."""
    if len(cloud) == 0 or cloud.total_mass == 0.0:
        return cloud
    total = cloud.total_mass
    positions = (rng.random() + np.arange(n)) / n
    idx = np.minimum(np.searchsorted(np.cumsum(cloud.w) / total, positions, side="right"), len(cloud) - 1)
    s = cloud.s[idx] if cloud.s is not None else None
    return ParticleCloud(np.full(n, total / n), cloud.m[idx], cloud.v[idx], s)


def series_f_moment(cloud: ParticleCloud, p: float) -> float:
    """sum_i w_i m_i |v_i|^p, the f_t-side moment of a cloud on E."""
    return float(np.sum(cloud.w * cloud.m * np.linalg.norm(cloud.v, axis=1) ** p))


@dataclass(frozen=True)
class SeriesBudget:
    n_particles: int = 4096
    n_time: int = 64
    n_batches: int = 8
    resample: bool = False

    def __post_init__(self):
        if min(self.n_particles, self.n_time, self.n_batches) < 1:
            raise ValueError("series budget counts must be at least 1")


@dataclass
class SeriesResult:
    cloud: ParticleCloud
    rows: List[TreeMassRow]

    @property
    def total_mass(self) -> float:
        return float(sum(row.mass for row in self.rows))


def tree_stream(rng: RngStream, tree: OrderedTree) -> RngStream:
    return rng.spawn(int("1" + tree.code, 2))


def _tree_contribution(
    tree: OrderedTree,
    t: float,
    f0: InitialLaw,
    params: ModelParams,
    budget: SeriesBudget,
    rng: RngStream,
) -> Tuple[ParticleCloud, TreeMassRow]:
    stream = tree_stream(rng, tree)
    clouds, masses = [], []
    for b in range(budget.n_batches):
        damped = gamma_damp(j_measure(tree, t, f0, params, budget.n_particles, budget.n_time, stream.spawn(b)), t, params)
        masses.append(damped.total_mass)
        clouds.append(damped.scaled(1.0 / budget.n_batches))
    cloud = ParticleCloud.concat(clouds)
    if budget.resample:
        cloud = systematic_resample(cloud, budget.n_particles, stream.spawn(budget.n_batches).generator)
    masses = np.asarray(masses)
    stderr = masses.std(ddof=1) / math.sqrt(masses.size) if masses.size > 1 else 0.0
    return cloud, TreeMassRow(tree_code=tree.code, leaves=tree.leaf_count, mass=float(masses.mean()), stderr=float(stderr))


def truncated_series(
    t: float,
    k: int,
    f0: InitialLaw,
    params: ModelParams,
    budget: SeriesBudget,
    rng: RngStream,
    workers: int = 1,
) -> SeriesResult:
    """
    F_t^k, the sum of Gamma_t(J_tree(F0)) over all trees with at most k nodes.

    Each tree's mass is the mean over budget.n_batches independent clouds,
    with the standard error of that mean. The result does not depend on
    ``workers``.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    trees = enumerate_trees(k)
    logger.info("series: %d trees, t=%g, budget=%s", len(trees), t, budget)
    args = [(tree, t, f0, params, budget, rng) for tree in trees]
    if workers <= 1:
        parts = [_tree_contribution(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_tree_contribution, *zip(*args)))
    return SeriesResult(ParticleCloud.concat([c for c, _ in parts]), [row for _, row in parts])


def tree_frequencies(records: List[SampleRecord]) -> Dict[str, int]:
    counts: Dict[str, int] = {}
    for record in records:
        counts[record.tree] = counts.get(record.tree, 0) + 1
    return counts


def tree_probability_check(
    t: float,
    k: int,
    f0: InitialLaw,
    params: ModelParams,
    n_rep: int,
    budget: SeriesBudget,
    rng: RngStream,
    records: Optional[List[SampleRecord]] = None,
    sigmas: float = 4.0,
    workers: int = 1,
) -> List[TreeCheckRow]:
    """
    Compares each tree's series mass with the frequency of its code among perfect-sampler records.

    Args:
        records (Optional[List[SampleRecord]]): Records at time t; sampled
            from replicates 0 .. n_rep - 1 of ``rng.spawn(0).derived_seed()`` when omitted.
        sigmas (float): Flag threshold in combined standard deviations.

    Returns:
        List[TreeCheckRow]: One row per tree with at most k nodes.
    """
    if records is None:
        result = batch_sample(t, n_rep, f0, params, rng.spawn(0).derived_seed(), workers=workers)
        records, attempted = result.records, result.attempted
    else:
        attempted = len(records)
    series = truncated_series(t, k, f0, params, budget, rng.spawn(1), workers)
    counts = tree_frequencies(records)
    rows = []
    for row in series.rows:
        freq = counts.get(row.tree_code, 0) / attempted
        mass = min(max(row.mass, 0.0), 1.0)
        binomial = math.sqrt(mass * (1.0 - mass) / attempted)
        sigma = math.hypot(binomial, row.stderr)
        rows.append(
            TreeCheckRow(
                tree_code=row.tree_code,
                leaves=row.leaves,
                series_mass=row.mass,
                series_stderr=row.stderr,
                frequency=freq,
                frequency_stderr=math.sqrt(freq * (1.0 - freq) / attempted),
                sigma=sigma,
                flagged=abs(freq - row.mass) > sigmas * sigma + 1e-12,
            )
        )
    flagged = sum(r.flagged for r in rows)
    if flagged:
        logger.warning("%d of %d trees disagree with the sampler", flagged, len(rows))
    return rows


def write_tree_table(rows: List[TreeMassRow], path: Path) -> None:
    write_csv(path, ["tree_code", "leaves", "mass", "stderr"], [[r.tree_code, r.leaves, r.mass, r.stderr] for r in rows])
