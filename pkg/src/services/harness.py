"""
Experiment driver: runs the configured commands over the time grid and writes
records, tables, reports and a manifest into the output directory.
"""

import logging
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

import src
from src.models.config import RunConfig
from src.models.records import CheckResult, Manifest, MomentReport, SampleRecord
from src.services.dsmc_oracle import run_dsmc, weighted_vs_oracle_report
from src.services.errors import InsufficientData
from src.services.maxwell_wild import batch_velocity_sample, batch_wild_sample, wild_truncation_error, wild_weight
from src.services.perfect_sampler import batch_sample, counter_bound
from src.services.tree_series import SeriesBudget, series_f_moment, truncated_series, write_tree_table
from src.utils.persistence import sha256_file, write_csv, write_json, write_jsonl
from src.utils.rng import MAXWELL, WILD, RngStream
from src.utils.statistics import hill_tail_index, mean_and_stderr, median_of_means

logger = logging.getLogger(__name__)

WILD_TABLE_TERMS = 200
UNHASHED = ("manifest.json", "summary.json")
MIN_RECORDS_PER_BLOCK = 8


def estimate_weighted_moment(records: List[SampleRecord], p: float, blocks: int = 32) -> MomentReport:
    """
    Estimates E[M_t |V_t|^p] by the plain mean and by median-of-means.

    Args:
        records (List[SampleRecord]): Samples, in replicate order.
        p (float): Moment order, nonnegative.
        blocks (int): Number of median-of-means blocks, at least 8.

    Returns:
        MomentReport: Both estimates, the CI half-width and the Hill tail index of the weights.

    Raises:
        InsufficientData: If there are fewer than MIN_RECORDS_PER_BLOCK records per block.
    """
    if p < 0:
        raise ValueError("p must be nonnegative")
    if len(records) < MIN_RECORDS_PER_BLOCK * blocks:
        raise InsufficientData(f"{len(records)} records for {blocks} blocks, need {MIN_RECORDS_PER_BLOCK * blocks}")
    m = np.fromiter((r.m for r in records), dtype=float, count=len(records))
    speed = np.linalg.norm(np.array([r.v for r in records], dtype=float), axis=1)
    x = m * speed ** p
    mean, stderr = mean_and_stderr(x)
    mom, half_width = median_of_means(x, blocks)
    return MomentReport(
        estimator=f"E[M |V|^{p:g}]",
        p=p,
        records=len(records),
        point_estimate=mean,
        stderr=stderr,
        blocks=blocks,
        median_of_means=mom,
        ci_half_width=half_width,
        tail_index=hill_tail_index(m),
    )


@dataclass
class Experiment:
    directory: Path
    manifest: Manifest
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


class _Runner:
    def __init__(self, config: RunConfig, progress: bool):
        self.config = config
        self.progress = progress
        self.out = Path(config.output_dir)
        self.f0 = config.initial_law()
        self.params = config.model_params()
        self.samples: Dict[int, List[SampleRecord]] = {}
        self.oracles: Dict[int, np.ndarray] = {}
        self.summary: Dict[str, Dict] = {}
        self.checks: List[CheckResult] = []

    def _records(self, i: int, t: float) -> List[SampleRecord]:
        if i not in self.samples:
            c = self.config
            result = batch_sample(t, c.n_rep, self.f0, self.params, c.base_seed, c.cap, c.workers, progress=self.progress)
            self.samples[i] = result.records
            self.summary.setdefault("sample", {})[f"t{i}"] = {"failures": result.failures}
        return self.samples[i]

    def _oracle(self, i: int, t: float) -> np.ndarray:
        if i not in self.oracles:
            c = self.config
            run = run_dsmc(c.dsmc_n, t, c.dsmc_dt, self.f0.velocity, self.params, RngStream.dsmc(c.base_seed).spawn(i).generator, self.progress)
            self.oracles[i] = run.velocities
            write_csv(
                self.out / f"dsmc_t{i}_trace.csv",
                ["time", "energy", "px", "py", "pz"],
                [[float(s), float(e), *map(float, p)] for s, e, p in zip(run.times, run.energy, run.momentum)],
            )
        return self.oracles[i]

    def sample(self, i: int, t: float) -> None:
        records = self._records(i, t)
        write_jsonl(self.out / f"sample_t{i}.jsonl", records)
        moments = []
        for p in (0.0, 2.0):
            try:
                moments.append(estimate_weighted_moment(records, p, self.config.blocks))
            except InsufficientData as e:
                logger.warning("t=%g: no moment report: %s", t, e)
        counters = np.array([r.n for r in records], dtype=float)
        write_json(
            self.out / f"sample_t{i}_moments.json",
            {
                "t": t,
                "e0": self.params.e0,
                "counter_bound": counter_bound(t, self.params, self.params.e0),
                "counter_mean": float(counters.mean()) if counters.size else None,
                "moments": moments,
            },
        )

    def maxwell(self, i: int, t: float) -> None:
        c = self.config
        if c.gamma != 0:
            logger.info("maxwell ignores gamma=%g and simulates Maxwellian molecules", c.gamma)
        seed = RngStream(c.base_seed, (MAXWELL, i)).derived_seed()
        result = batch_velocity_sample(t, c.n_rep, self.f0.velocity, self.params.kernel, seed, c.cap, c.workers, progress=self.progress)
        write_jsonl(self.out / f"maxwell_t{i}.jsonl", result.records)
        self.summary.setdefault("maxwell", {})[f"t{i}"] = {"failures": result.failures}

    def wild(self, i: int, t: float) -> None:
        c = self.config
        kappa = self.params.kappa
        seed = RngStream(c.base_seed, (WILD, i)).derived_seed()
        result = batch_wild_sample(t, c.n_rep, self.f0.velocity, self.params.kernel, seed, c.cap, c.workers, progress=self.progress)
        write_jsonl(self.out / f"wild_t{i}.jsonl", result.records)
        rows, cumulative = [], 0.0
        for n in range(1, WILD_TABLE_TERMS + 1):
            weight = wild_weight(n, t, kappa)
            cumulative += weight
            rows.append([n, weight, cumulative, wild_truncation_error(n, t, kappa)])
        write_csv(self.out / f"wild_t{i}_weights.csv", ["n", "weight", "cumulative", "truncation_error"], rows)
        self.summary.setdefault("wild", {})[f"t{i}"] = {"failures": result.failures}

    def series(self, i: int, t: float) -> None:
        c = self.config
        budget = SeriesBudget(c.series_particles, c.series_time, c.series_batches, c.series_resample)
        result = truncated_series(t, c.series_k, self.f0, self.params, budget, RngStream.series(c.base_seed).spawn(i), c.workers)
        write_tree_table(result.rows, self.out / f"series_t{i}.csv")
        write_json(
            self.out / f"series_t{i}.json",
            {
                "t": t,
                "k": c.series_k,
                "total_mass": result.total_mass,
                "f_mass": series_f_moment(result.cloud, 0.0),
                "f_energy": series_f_moment(result.cloud, 2.0),
            },
        )

    def dsmc(self, i: int, t: float) -> None:
        oracle = self._oracle(i, t)
        write_csv(self.out / f"dsmc_t{i}.csv", ["vx", "vy", "vz"], oracle.tolist())

    def compare(self, i: int, t: float) -> None:
        c = self.config
        report = weighted_vs_oracle_report(
            self._records(i, t), self._oracle(i, t), c.n_proj, RngStream.compare(c.base_seed).spawn(i).generator, c.thresholds()
        )
        write_json(self.out / f"compare_t{i}.json", report)

    def check(self) -> None:
        # acceptance imports run_experiment from this module
        from src.services.acceptance import run_acceptance

        self.checks = run_acceptance(self.config, self.progress, self.summary.setdefault("check_seconds", {}))
        write_json(self.out / "acceptance.json", self.checks)


def _versions() -> Dict[str, str]:
    versions = {"kinetics": src.__version__}
    for package in ("numpy", "scipy", "pydantic"):
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = "unknown"
    return versions


def run_experiment(config: RunConfig, progress: bool = False) -> Experiment:
    """
    Executes ``config.commands`` and writes everything into ``config.output_dir``.

    Outputs other than summary.json (which holds wall times) are a function of
    the config alone: rerunning it reproduces them bitwise, for any number of
    workers.

    Returns:
        Experiment: Output directory, manifest and acceptance results.
    """
    started = time.perf_counter()
    runner = _Runner(config, progress)
    runner.out.mkdir(parents=True, exist_ok=True)
    logger.info("experiment %s -> %s (commands: %s)", config.config_hash[:12], runner.out, ", ".join(config.commands))
    timings: Dict[str, float] = {}
    for command in config.commands:
        tick = time.perf_counter()
        if command == "check":
            runner.check()
        else:
            for i, t in enumerate(config.t_grid):
                getattr(runner, command)(i, t)
        timings[command] = time.perf_counter() - tick

    write_json(runner.out / "config.json", config.model_dump(mode="json"))
    files = {
        path.relative_to(runner.out).as_posix(): sha256_file(path)
        for path in sorted(runner.out.rglob("*"))
        if path.is_file() and path.name not in UNHASHED
    }
    manifest = Manifest(
        config_hash=config.config_hash,
        base_seed=config.base_seed,
        commands=list(config.commands),
        versions=_versions(),
        files=files,
    )
    write_json(runner.out / "manifest.json", manifest)
    write_json(
        runner.out / "summary.json",
        {"wall_time": time.perf_counter() - started, "timings": timings, "runs": runner.summary},
    )
    logger.info("experiment done in %.1fs", time.perf_counter() - started)
    return Experiment(runner.out, manifest, runner.checks)


def load_manifest(directory: Path) -> Optional[Manifest]:
    path = Path(directory) / "manifest.json"
    return Manifest.model_validate_json(path.read_text(encoding="utf-8")) if path.is_file() else None
