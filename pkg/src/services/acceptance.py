"""
Acceptance suite: property and oracle checks of the whole toolkit on fixed
scenarios. Sample sizes come from the run configuration (see the presets).
"""

import logging
import math
import tempfile
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from src.models.config import RunConfig
from src.models.kernels import ConstantKernel, TabulatedKernel, TruncatedPowerKernel
from src.models.laws import DiracLaw, GaussianLaw, InitialLaw, UniformBallLaw, uniform_sphere
from src.models.params import ModelParams
from src.models.records import CheckResult, records_to_arrays
from src.services.collision_core import post_collision, sample_sigma
from src.services.dsmc_oracle import compare_estimates, run_dsmc, weighted_vs_oracle_report
from src.services.maxwell_wild import batch_velocity_sample, batch_wild_sample, wild_truncation_error, wild_weight
from src.services.perfect_sampler import batch_sample, counter_bound, no_collision_probability
from src.services.tree_series import (
    OrderedTree,
    SeriesBudget,
    enumerate_trees,
    j_measure,
    tree_probability_check,
    trees_with_leaves,
    truncated_series,
)
from src.utils.rng import RngStream
from src.utils.statistics import mean_and_stderr, median_of_means, weighted_ks, weighted_mean_and_stderr

logger = logging.getLogger(__name__)

UNIT_KERNEL = ConstantKernel(1.0 / (4.0 * math.pi))


def _stream(config: RunConfig, check: int) -> RngStream:
    return RngStream.checks(config.base_seed).spawn(check)


def _params(gamma: float, e0: float) -> ModelParams:
    return ModelParams(gamma=gamma, e0=e0, kernel=UNIT_KERNEL)


def _rate_bound(params: ModelParams) -> float:
    return params.kappa * (1.0 + params.e0) * (1.0 + params.e0 ** (params.gamma / 2.0))


def check_kinematics(config: RunConfig, progress: bool = False) -> CheckResult:
    rng = _stream(config, 1).generator
    n = config.check_draws
    v = 3.0 * rng.standard_normal((n, 3))
    v_star = 3.0 * rng.standard_normal((n, 3))
    v_prime, v_star_prime = post_collision(v, v_star, uniform_sphere(rng, n))
    scale = 1.0 + np.linalg.norm(v, axis=1) + np.linalg.norm(v_star, axis=1)
    momentum = np.max(np.linalg.norm(v_prime + v_star_prime - v - v_star, axis=1) / scale)
    energy_before = np.sum(v * v, axis=1) + np.sum(v_star * v_star, axis=1)
    energy_after = np.sum(v_prime * v_prime, axis=1) + np.sum(v_star_prime * v_star_prime, axis=1)
    energy = np.max(np.abs(energy_after - energy_before) / (1.0 + energy_before))
    return CheckResult(
        name="kinematics",
        passed=bool(momentum <= 1e-10 and energy <= 1e-10),
        metrics={"momentum_error": float(momentum), "energy_error": float(energy)},
    )


MOMENT_PAIRS = [
    ((1.0, 0.0, 0.0), (-1.0, 0.0, 0.0)),
    ((0.5, 0.2, -1.0), (2.0, 0.0, 1.0)),
    ((3.0, 0.0, 0.0), (0.0, 0.0, 0.0)),
    ((0.0, 0.0, 0.0), (0.0, 1.0, 1.0)),
    ((-1.0, 2.0, 0.5), (0.3, -0.4, 2.0)),
    ((1.0, 1.0, 1.0), (1.0, 1.0, 1.0)),
]


def check_collision_moment(config: RunConfig, progress: bool = False) -> CheckResult:
    kernels = {
        "constant": UNIT_KERNEL,
        "power": TruncatedPowerKernel(0.75, 0.05),
        "linear_table": TabulatedKernel(np.array([-1.0, 1.0]), np.array([0.0, 2.0])),
    }
    stream = _stream(config, 2)
    n = config.check_draws
    worst = 0.0
    for k, (name, kernel) in enumerate(kernels.items()):
        c = kernel.mean_cosine_c
        for j, (v, v_star) in enumerate(MOMENT_PAIRS):
            rng = stream.spawn(len(MOMENT_PAIRS) * k + j).generator
            v, v_star = np.asarray(v), np.asarray(v_star)
            sigma = sample_sigma(np.tile(v, (n, 1)), np.tile(v_star, (n, 1)), kernel, rng)
            v_prime, _ = post_collision(v, v_star, sigma)
            mean, stderr = mean_and_stderr(np.sum(v_prime * v_prime, axis=1))
            expected = 0.5 * (1 + c) * (v @ v) + 0.5 * (1 - c) * (v_star @ v_star)
            if stderr > 0:
                z = abs(mean - expected) / stderr
            else:
                z = 0.0 if abs(mean - expected) <= 1e-12 * (1.0 + expected) else math.inf
            worst = max(worst, z)
            logger.debug("%s %s: mean %g expected %g (z=%.2f)", name, j, mean, expected, z)
    return CheckResult(name="collision_moment", passed=worst <= 4.0, metrics={"max_z": worst})


def check_mass_energy(config: RunConfig, progress: bool = False) -> CheckResult:
    law = InitialLaw(velocity=GaussianLaw(variance=1.0))
    metrics: Dict[str, float] = {}
    passed = True
    for gamma in (0.0, 0.5, 1.0):
        params = _params(gamma, law.energy)
        t = 0.5 / _rate_bound(params)
        seed = _stream(config, 3).spawn(int(gamma * 10)).derived_seed()
        records = batch_sample(t, config.n_rep, law, params, seed, config.cap, config.workers, progress=progress).records
        m, v = records_to_arrays(records)
        for label, x, target in (("mass", m, 1.0), ("energy", m * np.sum(v * v, axis=1), law.energy)):
            mom, half_width = median_of_means(x, config.blocks)
            metrics[f"{label}_gamma{gamma:g}"] = mom
            metrics[f"{label}_gamma{gamma:g}_ci"] = half_width
            passed &= abs(mom - target) <= 3.0 * half_width
    return CheckResult(name="mass_energy", passed=bool(passed), metrics=metrics)


def check_counter_bound(config: RunConfig, progress: bool = False) -> CheckResult:
    stream = _stream(config, 4)
    law = InitialLaw(velocity=GaussianLaw(variance=1.0))
    params = _params(1.0, law.energy)
    metrics: Dict[str, float] = {}
    passed = True
    for j, fraction in enumerate((0.25, 0.5, 1.0)):
        t = fraction / _rate_bound(params)
        records = batch_sample(t, config.n_rep, law, params, stream.spawn(j).derived_seed(), config.cap, config.workers, progress=progress).records
        mean, stderr = mean_and_stderr(np.array([r.n for r in records], dtype=float))
        bound = counter_bound(t, params, law.energy)
        metrics[f"mean_n_{fraction:g}"] = mean
        metrics[f"bound_{fraction:g}"] = bound
        passed &= mean <= bound + 4.0 * stderr

    for j, law in enumerate((InitialLaw(velocity=DiracLaw(v0=(1.0, 0.0, 0.0))), InitialLaw(velocity=GaussianLaw(variance=1.0)))):
        params = _params(1.0, law.energy)
        t = 0.5 / _rate_bound(params)
        records = batch_sample(t, config.n_rep, law, params, stream.spawn(10 + j).derived_seed(), config.cap, config.workers, progress=progress).records
        frequency = sum(r.n == 0 for r in records) / len(records)
        expected = no_collision_probability(t, law, params, stream.spawn(20 + j).generator, config.check_draws)
        sigma = math.sqrt(expected * (1.0 - expected) / len(records))
        metrics[f"p0_{law.velocity.kind}"] = frequency
        metrics[f"p0_{law.velocity.kind}_expected"] = expected
        passed &= abs(frequency - expected) <= 4.0 * sigma
    return CheckResult(name="counter_bound", passed=bool(passed), metrics=metrics)


def check_maxwell_triangle(config: RunConfig, progress: bool = False) -> CheckResult:
    stream = _stream(config, 5)
    law = InitialLaw(velocity=UniformBallLaw(radius=2.0))
    params = _params(0.0, law.energy)
    t = 0.5
    direct = batch_velocity_sample(t, config.n_rep, law.velocity, UNIT_KERNEL, stream.spawn(0).derived_seed(), config.cap, config.workers, progress=progress)
    wild = batch_wild_sample(t, config.n_rep, law.velocity, UNIT_KERNEL, stream.spawn(1).derived_seed(), config.cap, config.workers, progress=progress)
    weighted = batch_sample(t, config.n_rep, law, params, stream.spawn(2).derived_seed(), config.cap, config.workers, progress=progress)

    samples = {}
    for name, result in (("velocity", direct), ("wild", wild), ("weighted", weighted)):
        m, v = records_to_arrays(result.records)
        samples[name] = (np.linalg.norm(v, axis=1), m)

    metrics: Dict[str, float] = {}
    passed = True
    for a, b in (("velocity", "wild"), ("velocity", "weighted"), ("wild", "weighted")):
        (speed_a, m_a), (speed_b, m_b) = samples[a], samples[b]
        _, pvalue = weighted_ks(speed_b, m_b, speed_a)
        metrics[f"ks_p_{a}_{b}"] = pvalue
        passed &= pvalue > config.ks_pvalue_min
        for p in (1, 2):
            comparison = compare_estimates(
                f"|v|^{p}",
                weighted_mean_and_stderr(speed_b ** p, m_b),
                weighted_mean_and_stderr(speed_a ** p, m_a),
                config.moment_sigma,
            )
            metrics[f"z_{a}_{b}_{p}"] = comparison.z
            passed &= comparison.passed
    return CheckResult(name="maxwell_triangle", passed=bool(passed), metrics=metrics)


def check_wild_truncation(config: RunConfig, progress: bool = False) -> CheckResult:
    worst = 0.0
    for t in (0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0):
        weights = [wild_weight(n, t, 1.0) for n in range(1, 201)]
        for n in range(1, 201):
            worst = max(worst, abs(math.fsum(weights[:n]) - (1.0 - wild_truncation_error(n, t, 1.0))))
    return CheckResult(name="wild_truncation", passed=worst <= 1e-14, metrics={"max_error": worst})


def check_series(config: RunConfig, progress: bool = False) -> CheckResult:
    stream = _stream(config, 7)
    budget = SeriesBudget(config.series_particles, config.series_time, config.series_batches, config.series_resample)
    metrics: Dict[str, float] = {}
    passed = True
    laws = {
        "dirac": InitialLaw(velocity=DiracLaw(v0=(1.0, 0.0, 0.0))),
        "gaussian": InitialLaw(velocity=GaussianLaw(variance=1.0 / 3.0)),
    }
    for j, (name, law) in enumerate(laws.items()):
        params = _params(1.0, law.energy)
        t = 0.5 / _rate_bound(params)
        series = truncated_series(t, config.series_k, law, params, budget, stream.spawn(j), config.workers)
        sizes = sorted({len(row.tree_code) for row in series.rows})
        cumulative = [sum(r.mass for r in series.rows if len(r.tree_code) <= k) for k in sizes]
        sigma = math.sqrt(sum(r.stderr ** 2 for r in series.rows))
        passed &= all(r.mass >= 0 for r in series.rows)
        passed &= all(b >= a for a, b in zip(cumulative, cumulative[1:]))
        passed &= cumulative[-1] <= 1.0 + 4.0 * sigma
        metrics[f"{name}_mass"] = cumulative[-1]

        rows = tree_probability_check(
            t, config.series_k, law, params, config.n_rep, budget, stream.spawn(10 + j), workers=config.workers
        )
        flags = sum(r.flagged for r in rows)
        metrics[f"{name}_flags"] = flags
        passed &= flags == 0

        if name == "dirac":
            rate = _rate_bound(params)
            two_leaf = next(r for r in series.rows if r.tree_code == "100")
            closed = math.exp(-rate * t) * -math.expm1(-rate * t)
            j_mass = j_measure(OrderedTree("100"), t, law, params, budget.n_particles, budget.n_time, stream.spawn(20)).total_mass
            metrics["two_leaf_relative_error"] = abs(two_leaf.mass - closed) / closed
            metrics["two_leaf_j_relative_error"] = abs(j_mass - 0.5 * -math.expm1(-2 * rate * t)) / (0.5 * -math.expm1(-2 * rate * t))
            passed &= metrics["two_leaf_relative_error"] <= 0.01 and metrics["two_leaf_j_relative_error"] <= 0.01
    return CheckResult(name="series", passed=bool(passed), metrics=metrics)


def check_oracle(config: RunConfig, progress: bool = False) -> CheckResult:
    stream = _stream(config, 8)
    law = InitialLaw(velocity=UniformBallLaw(radius=2.0))
    params = _params(1.0, law.energy)
    metrics: Dict[str, float] = {}
    passed = True
    dsmc_n = config.dsmc_n + config.dsmc_n % 2
    for j, fraction in enumerate((0.25, 0.75)):
        t = fraction / _rate_bound(params)
        records = batch_sample(t, config.n_rep, law, params, stream.spawn(j).derived_seed(), config.cap, config.workers, progress=progress).records
        oracle = run_dsmc(dsmc_n, t, config.dsmc_dt, law.velocity, params, stream.spawn(10 + j).generator, progress)
        report = weighted_vs_oracle_report(records, oracle.velocities, config.n_proj, stream.spawn(20 + j).generator, config.thresholds())
        metrics[f"ks_p_{fraction:g}"] = report.ks_pvalue
        metrics[f"sliced_w1_{fraction:g}"] = report.sliced_w1_relative
        passed &= report.passed
    return CheckResult(name="oracle", passed=bool(passed), metrics=metrics)


def _catalan(n: int) -> int:
    return math.comb(2 * n, n) // (n + 1)


def check_combinatorics(config: RunConfig, progress: bool = False) -> CheckResult:
    passed = all(len(trees_with_leaves(leaves)) == _catalan(leaves - 1) for leaves in range(1, 7))
    trees = enumerate_trees(9)
    passed &= len(trees) == sum(_catalan(leaves - 1) for leaves in range(1, 6))
    passed &= all(OrderedTree.from_nested(tree.to_nested()) == tree for tree in trees)
    passed &= all(OrderedTree.join(tree.left, tree.right) == tree for tree in trees if not tree.is_leaf)
    return CheckResult(name="combinatorics", passed=bool(passed), metrics={"trees_up_to_9_nodes": len(trees)})


def check_determinism(config: RunConfig, progress: bool = False) -> CheckResult:
    hashes = []
    with tempfile.TemporaryDirectory() as tmp:
        for workers in (1, 2):
            tiny = RunConfig(
                commands=["sample", "wild", "series", "dsmc"],
                t_grid=[0.0, 0.05],
                n_rep=64,
                base_seed=config.base_seed,
                series_k=3,
                series_particles=64,
                series_time=4,
                series_batches=2,
                dsmc_n=64,
                output_dir=str(Path(tmp) / f"run{workers}"),
                workers=workers,
            )
            # Imported here: harness imports this module.
            from src.services.harness import run_experiment

            hashes.append(run_experiment(tiny).manifest.files)
    return CheckResult(
        name="determinism",
        passed=hashes[0] == hashes[1],
        metrics={"files": len(hashes[0])},
        detail="" if hashes[0] == hashes[1] else "outputs differ between reruns",
    )


CHECKS: List[Callable[[RunConfig, bool], CheckResult]] = [
    check_kinematics,
    check_collision_moment,
    check_mass_energy,
    check_counter_bound,
    check_maxwell_triangle,
    check_wild_truncation,
    check_series,
    check_oracle,
    check_combinatorics,
    check_determinism,
]


def run_acceptance(config: RunConfig, progress: bool = False, timings: Optional[Dict[str, float]] = None) -> List[CheckResult]:
    """
    Runs every check. Wall times go to the log and to ``timings``, never into the results.
    """
    results = []
    for check in CHECKS:
        started = time.perf_counter()
        result = check(config, progress)
        elapsed = time.perf_counter() - started
        logger.info("%-18s %s (%.1fs)", result.name, "PASS" if result.passed else "FAIL", elapsed)
        if timings is not None:
            timings[result.name] = elapsed
        results.append(result)
    return results
