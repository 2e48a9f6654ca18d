import json
from pathlib import Path

import pytest

from src.models.config import RunConfig
from src.models.records import SampleRecord
from src.services import acceptance
from src.services.errors import InsufficientData
from src.services.harness import estimate_weighted_moment, load_manifest, run_experiment
from src.services.perfect_sampler import batch_sample
from src.utils.persistence import read_jsonl, sha256_file


class TestMomentEstimate:
    def test_mass_and_energy(self, gaussian_f0, hard_spheres):
        records = batch_sample(0.02, 2000, gaussian_f0, hard_spheres, base_seed=5).records
        mass = estimate_weighted_moment(records, 0.0)
        energy = estimate_weighted_moment(records, 2.0, blocks=16)
        assert abs(mass.median_of_means - 1.0) <= 3 * mass.ci_half_width
        assert abs(energy.median_of_means - 3.0) <= 3 * energy.ci_half_width
        assert mass.records == 2000
        assert energy.blocks == 16

    def test_too_few_records(self, gaussian_f0, hard_spheres):
        records = batch_sample(0.02, 10, gaussian_f0, hard_spheres, base_seed=5).records
        with pytest.raises(InsufficientData):
            estimate_weighted_moment(records, 2.0, blocks=32)

    def test_negative_order(self):
        record = SampleRecord(seed=0, t=0.0, m=1.0, v=[0.0, 0.0, 1.0], n=0, tree="0")
        with pytest.raises(ValueError):
            estimate_weighted_moment([record] * 64, -1.0)

    def test_needs_eight_records_per_block(self):
        record = SampleRecord(seed=0, t=0.0, m=1.0, v=[0.0, 0.0, 1.0], n=0, tree="0")
        with pytest.raises(InsufficientData):
            estimate_weighted_moment([record] * 127, 2.0, blocks=16)
        report = estimate_weighted_moment([record] * 128, 2.0, blocks=16)
        assert report.median_of_means == pytest.approx(1.0)


class TestRunExperiment:
    def test_outputs(self, tiny_config):
        experiment = run_experiment(tiny_config)
        out = experiment.directory
        for name in (
            "config.json",
            "manifest.json",
            "summary.json",
            "sample_t0.jsonl",
            "sample_t1_moments.json",
            "wild_t1.jsonl",
            "wild_t1_weights.csv",
            "series_t1.csv",
            "series_t1.json",
            "dsmc_t1.csv",
            "dsmc_t1_trace.csv",
            "compare_t1.json",
        ):
            assert (out / name).is_file(), name
        records = read_jsonl(out / "sample_t1.jsonl", SampleRecord)
        assert len(records) == 64
        assert all(r.t == 0.05 for r in records)
        assert [r.n for r in read_jsonl(out / "sample_t0.jsonl", SampleRecord)] == [0] * 64

        manifest = load_manifest(out)
        assert manifest == experiment.manifest
        assert manifest.config_hash == tiny_config.config_hash
        assert "summary.json" not in manifest.files
        assert manifest.files["sample_t0.jsonl"] == sha256_file(out / "sample_t0.jsonl")
        assert "numpy" in manifest.versions
        assert "wall_time" in json.loads((out / "summary.json").read_text())

    def test_reruns_are_bitwise_identical(self, tiny_config, tmp_path):
        first = run_experiment(tiny_config).manifest
        again = tiny_config.model_copy(update={"output_dir": str(tmp_path / "again"), "workers": 2})
        second = run_experiment(again).manifest
        assert first.files == second.files
        assert first.config_hash == second.config_hash

    def test_maxwell_command(self, tmp_path):
        config = RunConfig(commands=["maxwell"], gamma=0.0, f0="ball(2)", t_grid=[0.3], n_rep=20, output_dir=str(tmp_path))
        run_experiment(config)
        records = read_jsonl(tmp_path / "maxwell_t0.jsonl", SampleRecord)
        assert len(records) == 20
        assert all(r.m == 1.0 for r in records)

    def test_load_manifest_missing(self, tmp_path):
        assert load_manifest(tmp_path) is None


class TestAcceptance:
    def test_exact_checks(self):
        config = RunConfig(check_draws=2000)
        for check in (acceptance.check_kinematics, acceptance.check_wild_truncation, acceptance.check_combinatorics):
            result = check(config)
            assert result.passed, result
        assert acceptance.check_combinatorics(config).metrics["trees_up_to_9_nodes"] == 23

    def test_collision_moment(self):
        assert acceptance.check_collision_moment(RunConfig(check_draws=20_000)).passed

    def test_check_command_writes_results(self, tmp_path, monkeypatch):
        def fake_suite(config, progress=False, timings=None):
            return [acceptance.check_kinematics(config), acceptance.check_wild_truncation(config)]

        monkeypatch.setattr(acceptance, "run_acceptance", fake_suite)
        config = RunConfig(commands=["check"], check_draws=100, output_dir=str(tmp_path))
        experiment = run_experiment(config)
        assert experiment.passed
        assert [c["name"] for c in json.loads((tmp_path / "acceptance.json").read_text())] == [
            "kinematics",
            "wild_truncation",
        ]

    def test_check_rerun_is_bitwise(self, tmp_path, monkeypatch):
        monkeypatch.setattr(acceptance, "CHECKS", [acceptance.check_kinematics, acceptance.check_wild_truncation])
        manifests = []
        for name in ("a", "b"):
            config = RunConfig(commands=["check"], check_draws=1000, output_dir=str(tmp_path / name))
            manifests.append(run_experiment(config).manifest)
        assert manifests[0].files == manifests[1].files
        assert "acceptance.json" in manifests[0].files
        summary = json.loads((tmp_path / "a" / "summary.json").read_text())
        assert set(summary["runs"]["check_seconds"]) == {"kinematics", "wild_truncation"}


GOLDEN = Path(__file__).parent / "golden" / "tiny_run_schema.json"


def _schema(out: Path) -> dict:
    golden = json.loads(GOLDEN.read_text())
    schema = {"schema_version": load_manifest(out).schema_version, "jsonl": {}, "csv": {}, "json": {}}
    for name in golden["jsonl"]:
        first = (out / name).read_text().splitlines()[0]
        schema["jsonl"][name] = sorted(json.loads(first))
    for name in golden["csv"]:
        schema["csv"][name] = (out / name).read_text().splitlines()[0].split(",")
    for key in golden["json"]:
        name, _, field = key.partition(":")
        payload = json.loads((out / name).read_text())
        if field:
            payload = payload[field][0] if isinstance(payload[field], list) else payload[field]
        schema["json"][key] = sorted(payload)
    return schema


class TestSchema:
    def test_tiny_run_matches_golden_schema(self, tiny_config):
        out = run_experiment(tiny_config).directory
        assert _schema(out) == json.loads(GOLDEN.read_text())
