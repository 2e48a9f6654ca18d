"""
Exact recursive sampler of F_t for the weighted equation.

A particle starts from F0 and jumps at rate kappa*Lambda(y); at each jump time
s < t an independent partner is sampled at time s by the same procedure and
the state is replaced by h(y, y*, z). The recursion runs on an explicit work
stack, so its random depth never touches the interpreter call stack.
"""

import logging
import math
from abc import ABC, abstractmethod
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable, List, Tuple

import numpy as np
from tqdm import tqdm

from src.models.laws import InitialLaw
from src.models.params import LogWeightedState, ModelParams
from src.models.records import SampleRecord
from src.services.errors import CapExceeded, UnrepresentableWeight
from src.services.weighted_dynamics import collision_velocity, lambda_rate, log_weight_increment, sample_aux
from src.utils.rng import RngStream

logger = logging.getLogger(__name__)

DEFAULT_CAP = 1_000_000
LEAF_CODE = "0"


@dataclass
class _Frame:
    horizon: float
    stream: RngStream
    state: Any
    s: float = 0.0
    n: int = 0
    tree: str = LEAF_CODE
    jumps: int = 0


@dataclass
class Draw:
    state: Any
    n: int
    tree: str = field(default=LEAF_CODE)


class RecursiveSampler(ABC):
    """
    Work-stack engine shared by the weighted and the Maxwellian samplers.

    Subclasses say how to draw an initial state, the jump rate of a state and
    how a state collides with a partner. The partner requested at the j-th
    jump of a frame is driven by ``frame.stream.spawn(j)``; it is sampled at
    the absolute jump time, which becomes its own horizon. The collision tree
    is kept as its preorder code: a jump turns the code T into "1" + T + T*.
    """

    def __init__(self, cap: int = DEFAULT_CAP):
        if cap < 1:
            raise ValueError("cap must be at least 1")
        self.cap = cap

    @abstractmethod
    def initial_state(self, rng: np.random.Generator) -> Any:
        """Draws a state from the initial law."""

    @abstractmethod
    def rate(self, state: Any) -> float:
        """Total jump rate of a state."""

    @abstractmethod
    def collide(self, state: Any, partner: Any, rng: np.random.Generator) -> Any:
        """Post-jump state."""

    def run(self, t: float, stream: RngStream) -> Draw:
        """
        Samples the state at time t.

        Raises:
            CapExceeded: If the number of recursive calls reaches the cap.
        """
        if not math.isfinite(t) or t < 0:
            raise ValueError(f"t must be finite and nonnegative, got {t}")
        stack = [_Frame(t, stream, self.initial_state(stream.generator))]
        calls = 0
        while True:
            frame = stack[-1]
            frame.s += frame.stream.generator.exponential(1.0 / self.rate(frame.state))
            if frame.s < frame.horizon:
                calls += 1
                if calls >= self.cap:
                    raise CapExceeded(self.cap, t)
                child_stream = frame.stream.spawn(frame.jumps)
                frame.jumps += 1
                stack.append(_Frame(frame.s, child_stream, self.initial_state(child_stream.generator)))
                continue

            stack.pop()
            if not stack:
                return Draw(frame.state, frame.n, frame.tree)
            parent = stack[-1]
            parent.state = self.collide(parent.state, frame.state, parent.stream.generator)
            parent.n += frame.n + 1
            parent.tree = "1" + parent.tree + frame.tree


class PerfectSampler(RecursiveSampler):
    """
    value(t), counter(t) for the weighted equation: rate kappa*Lambda(y), jump y -> h(y, y*, z).

    States carry log m, so weights shrink or grow without underflow on the way.
    """

    def __init__(self, f0: InitialLaw, params: ModelParams, cap: int = DEFAULT_CAP):
        super().__init__(cap)
        self.f0 = f0
        self.params = params
        self._kappa = params.kappa
        self._log_m0 = math.log(f0.m0)

    def initial_state(self, rng):
        return LogWeightedState(self._log_m0, self.f0.velocity.sample_one(rng))

    def rate(self, state):
        return self._kappa * float(lambda_rate(state.v, self.params))

    def collide(self, state, partner, rng):
        z = sample_aux(state.v, partner.v, self.params, rng)
        log_m = state.log_m + partner.log_m + float(log_weight_increment(partner.v, self.params))
        return LogWeightedState(log_m, collision_velocity(state.v, partner.v, z, self.params))


def sample_state(t: float, f0: InitialLaw, params: ModelParams, rng: RngStream, cap: int = DEFAULT_CAP) -> SampleRecord:
    """
    Draws one (Y_t, N_t) with its interaction tree.

    Args:
        t (float): Time horizon, finite and nonnegative.
        f0 (InitialLaw): The initial law F0.
        params (ModelParams): Model parameters.
        rng (RngStream): The stream driving this replicate.
        cap (int): Hard cap on internal nodes.

    Returns:
        SampleRecord: The sample, with n equal to the number of internal nodes of its tree.

    Raises:
        CapExceeded: If the cap is reached; the partial sample is discarded.
        UnrepresentableWeight: If the weight overflows a float.
    """
    draw = PerfectSampler(f0, params, cap).run(t, rng)
    return SampleRecord.from_log_weight(rng, t, draw.state.log_m, draw.state.v, draw.n, draw.tree)


def counter_bound(t: float, params: ModelParams, e0_energy: float) -> float:
    """
    exp(kappa (1 + e0)(1 + E0^{gamma/2}) t) - 1, with E0 the energy of F0.
    """
    exponent = params.kappa * (1.0 + params.e0) * (1.0 + e0_energy ** (params.gamma / 2.0)) * t
    return math.expm1(exponent)


def no_collision_probability(t: float, f0: InitialLaw, params: ModelParams, rng: np.random.Generator, n_mc: int = 100_000) -> float:
    """
    P(N_t = 0) = E[exp(-kappa Lambda(V_0) t)]; exact for a Dirac velocity law.
    """
    return f0.expected_damping(lambda v: params.kappa * lambda_rate(v, params), t, rng, n_mc)


@dataclass
class BatchResult:
    records: List[SampleRecord]
    failures: int

    @property
    def attempted(self) -> int:
        return len(self.records) + self.failures


Drawer = Callable[[RngStream], SampleRecord]


def _draw_range(drawer: Drawer, base_seed: int, start: int, stop: int) -> Tuple[List[SampleRecord], int]:
    records, failures = [], 0
    for index in range(start, stop):
        try:
            records.append(drawer(RngStream.replicate(base_seed, index)))
        except (CapExceeded, UnrepresentableWeight) as e:
            failures += 1
            logger.warning("replicate %d discarded: %s", index, e)
    return records, failures


def run_replicates(
    drawer: Drawer,
    n_rep: int,
    base_seed: int,
    workers: int = 1,
    first_index: int = 0,
    progress: bool = False,
    chunk: int = 1000,
) -> BatchResult:
    """
    Runs replicates first_index .. first_index + n_rep - 1 of ``drawer``.

    Replicate i is driven by RngStream.replicate(base_seed, i), so the output
    does not depend on the number of workers or the order of execution.
    ``drawer`` must be picklable when workers > 1.
    """
    if n_rep < 1:
        raise ValueError("n_rep must be at least 1")
    bounds = [(lo, min(lo + chunk, first_index + n_rep)) for lo in range(first_index, first_index + n_rep, chunk)]
    records: List[SampleRecord] = []
    failures = 0
    bar = tqdm(total=n_rep, disable=not progress, unit="rep")
    if workers <= 1:
        results = (_draw_range(drawer, base_seed, lo, hi) for lo, hi in bounds)
        for (lo, hi), (chunk_records, chunk_failures) in zip(bounds, results):
            records.extend(chunk_records)
            failures += chunk_failures
            bar.update(hi - lo)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_draw_range, drawer, base_seed, lo, hi) for lo, hi in bounds]
            for (lo, hi), future in zip(bounds, futures):
                chunk_records, chunk_failures = future.result()
                records.extend(chunk_records)
                failures += chunk_failures
                bar.update(hi - lo)
    bar.close()
    return BatchResult(records, failures)


def batch_sample(
    t: float,
    n_rep: int,
    f0: InitialLaw,
    params: ModelParams,
    base_seed: int,
    cap: int = DEFAULT_CAP,
    workers: int = 1,
    first_index: int = 0,
    progress: bool = False,
) -> BatchResult:
    """
    n_rep independent replicates of sample_state; capped replicates are counted, not returned.
    """
    logger.info("sampling %d replicates at t=%g (gamma=%g, e0=%g)", n_rep, t, params.gamma, params.e0)
    drawer = partial(sample_state, t, f0, params, cap=cap)
    result = run_replicates(drawer, n_rep, base_seed, workers, first_index, progress)
    if result.failures:
        logger.warning("%d of %d replicates hit the cap %d", result.failures, n_rep, cap)
    return result
