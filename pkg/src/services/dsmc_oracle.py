"""
Nanbu-style stochastic particle system for the homogeneous Boltzmann equation,
used as an independent oracle for the weighted sampler, and the report
comparing the two.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy import stats
from tqdm import tqdm

from src.models.params import ModelParams
from src.models.laws import uniform_sphere
from src.models.records import MomentComparison, OracleReport, OracleThresholds, SampleRecord, records_to_arrays
from src.services.collision_core import post_collision, sample_sigma
from src.services.errors import ConfigError, InsufficientData, StabilityViolation
from src.utils.statistics import effective_sample_size, mean_and_stderr, weighted_ks, weighted_mean_and_stderr

logger = logging.getLogger(__name__)

STABILITY_LIMIT = 0.5
DEFAULT_STEP_FRACTION = 0.05


def majorant(v: np.ndarray, gamma: float) -> float:
    """G = (2 max|v_i|)^gamma bounds |v_i - v_j|^gamma over the cloud."""
    return float((2.0 * np.max(np.linalg.norm(v, axis=1))) ** gamma)


def default_dt(v0: np.ndarray, params: ModelParams) -> float:
    """0.05 / (kappa G_0), G_0 the majorant of the initial cloud."""
    rate = params.kappa * majorant(v0, params.gamma)
    return DEFAULT_STEP_FRACTION / rate if rate > 0 else math.inf


@dataclass
class DsmcRun:
    velocities: np.ndarray
    times: np.ndarray
    energy: np.ndarray
    momentum: np.ndarray
    collisions: int


def run_dsmc(
    n_particles: int,
    t: float,
    dt: Optional[float],
    f0_velocity,
    params: ModelParams,
    rng: np.random.Generator,
    progress: bool = False,
) -> DsmcRun:
    """
    Simulates the Nanbu particle system up to time t.

    Each step, particle i draws Poisson(kappa G dt) candidate partners j != i
    from the pre-step snapshot, accepts each with probability
    min(1, |v_i - v_j|^gamma / G) on snapshot velocities and replaces v_i by v'(v_i, v_j, sigma).
    Only particle i is updated.

    Args:
        n_particles (int): Cloud size, even.
        t (float): Final time, nonnegative.
        dt (Optional[float]): Step size; None picks 0.05/(kappa G_0). The last
            step is shortened so the run ends exactly at t.
        f0_velocity: The initial velocity law.
        params (ModelParams): gamma and the kernel (e0 is not used).
        rng (np.random.Generator): Source of randomness.
        progress (bool): Show a progress bar over steps.

    Returns:
        DsmcRun: Final velocities with energy and momentum traces.

    Raises:
        ConfigError: If n_particles is odd or below 2.
        StabilityViolation: If kappa G dt exceeds 0.5 at some step.
    """
    if n_particles < 2 or n_particles % 2:
        raise ConfigError(f"n_particles must be even and at least 2, got {n_particles}")
    if t < 0:
        raise ConfigError("t must be nonnegative")
    v = f0_velocity.sample(rng, n_particles)
    if dt is None:
        dt = default_dt(v, params)
    if dt <= 0:
        raise ConfigError(f"dt must be positive, got {dt}")

    times, energy, momentum = [0.0], [float(np.mean(np.sum(v * v, axis=1)))], [v.mean(axis=0)]
    clock = 0.0
    collisions = 0
    steps = math.ceil(t / dt - 1e-9) if t > 0 else 0
    for _ in tqdm(range(steps), disable=not progress, unit="step"):
        h = min(dt, t - clock)
        bound = majorant(v, params.gamma)
        rate = params.kappa * bound * h
        if params.kappa * bound * dt > STABILITY_LIMIT:
            raise StabilityViolation(f"kappa * G * dt = {params.kappa * bound * dt:.3g} exceeds {STABILITY_LIMIT}")
        snapshot = v.copy()
        counts = rng.poisson(rate, n_particles) if rate > 0 else np.zeros(n_particles, dtype=int)
        for round_ in range(int(counts.max(initial=0))):
            idx = np.flatnonzero(counts > round_)
            partners = rng.integers(0, n_particles - 1, idx.size)
            partners += partners >= idx
            rel = np.linalg.norm(snapshot[idx] - snapshot[partners], axis=1)
            accept = rng.random(idx.size) * bound < rel ** params.gamma
            idx, partners = idx[accept], partners[accept]
            if idx.size == 0:
                continue
            sigma = sample_sigma(v[idx], snapshot[partners], params.kernel, rng)
            v[idx], _ = post_collision(v[idx], snapshot[partners], sigma)
            collisions += idx.size
        clock += h
        times.append(clock)
        energy.append(float(np.mean(np.sum(v * v, axis=1))))
        momentum.append(v.mean(axis=0))
    logger.info("dsmc: %d particles, %d steps, %d collisions", n_particles, steps, collisions)
    return DsmcRun(v, np.asarray(times), np.asarray(energy), np.asarray(momentum), collisions)


def compare_estimates(name: str, weighted, oracle, sigmas: float) -> MomentComparison:
    """Compares two (estimate, stderr) pairs; passes when the z-score is at most ``sigmas``."""
    (w_mean, w_err), (o_mean, o_err) = weighted, oracle
    scale = math.hypot(w_err, o_err)
    z = abs(w_mean - o_mean) / scale if scale > 0 else (0.0 if w_mean == o_mean else math.inf)
    return MomentComparison(
        name=name,
        weighted=w_mean,
        weighted_stderr=w_err,
        oracle=o_mean,
        oracle_stderr=o_err,
        z=min(z, 1e300),
        passed=z <= sigmas,
    )


def sliced_wasserstein(
    v: np.ndarray,
    w: np.ndarray,
    oracle: np.ndarray,
    n_proj: int,
    rng: np.random.Generator,
) -> float:
    """Mean over n_proj random directions of the 1-D Wasserstein-1 distance of the projections."""
    directions = uniform_sphere(rng, n_proj)
    return float(
        np.mean([stats.wasserstein_distance(v @ d, oracle @ d, u_weights=w) for d in directions])
    )


def weighted_vs_oracle_report(
    records: List[SampleRecord],
    oracle: np.ndarray,
    n_proj: int,
    rng: np.random.Generator,
    thresholds: Optional[OracleThresholds] = None,
) -> OracleReport:
    """
    Compares sum_i m_i delta_{v_i} / sum_i m_i with the oracle's empirical measure.

    Reports the radial KS statistic and p-value, the first and second radial
    moments with standard errors, and the sliced Wasserstein-1 distance, also
    relative to the oracle's per-axis RMS speed.

    Raises:
        InsufficientData: If either side is empty.
    """
    thresholds = thresholds or OracleThresholds()
    oracle = np.asarray(oracle, dtype=float).reshape(-1, 3)
    if not records or oracle.shape[0] == 0:
        raise InsufficientData("both the records and the oracle cloud must be nonempty")
    m, v = records_to_arrays(records)
    speed, oracle_speed = np.linalg.norm(v, axis=1), np.linalg.norm(oracle, axis=1)

    ks_statistic, ks_pvalue = weighted_ks(speed, m, oracle_speed)
    moments = [
        compare_estimates(f"|v|^{p}", weighted_mean_and_stderr(speed ** p, m), mean_and_stderr(oracle_speed ** p), thresholds.moment_sigma)
        for p in (1, 2)
    ]
    w1 = sliced_wasserstein(v, m, oracle, n_proj, rng)
    scale = math.sqrt(float(np.mean(oracle_speed ** 2)) / 3.0)
    relative = w1 / scale if scale > 0 else w1
    passed = (
        ks_pvalue > thresholds.ks_pvalue_min
        and all(c.passed for c in moments)
        and relative <= thresholds.sliced_w1_max
    )
    return OracleReport(
        records=len(records),
        oracle=oracle.shape[0],
        effective_size=effective_sample_size(m),
        ks_statistic=ks_statistic,
        ks_pvalue=ks_pvalue,
        moments=moments,
        sliced_w1=w1,
        sliced_w1_relative=relative,
        thresholds=thresholds,
        passed=passed,
    )
