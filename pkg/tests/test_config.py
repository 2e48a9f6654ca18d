import logging
import math

import numpy as np
import pytest

from src.models.config import PRESETS, RunConfig
from src.models.laws import DiracLaw, GaussianLaw, InitialLaw, ShellLaw, TwoPointLaw, UniformBallLaw, law_from_spec
from src.services.errors import ConfigError


class TestLaws:
    @pytest.mark.parametrize(
        "spec",
        ["dirac(1.0,0.0,0.0)", "gaussian(0.0,1.0,0.0,0.5)", "two_point(1.0,0.0,0.0,-1.0,0.0,0.0,0.25)", "ball(2.0)", "shell(1.5)"],
    )
    def test_spec_round_trip(self, spec):
        assert law_from_spec(spec).spec() == spec

    def test_closed_form_energies(self):
        assert DiracLaw(v0=(1.0, 2.0, 2.0)).energy == pytest.approx(9.0)
        assert GaussianLaw(mean=(1.0, 0.0, 0.0), variance=2.0).energy == pytest.approx(7.0)
        assert TwoPointLaw(v1=(1.0, 0, 0), v2=(0, 3.0, 0), p=0.5).energy == pytest.approx(5.0)
        assert UniformBallLaw(radius=2.0).energy == pytest.approx(2.4)
        assert ShellLaw(radius=1.5).energy == pytest.approx(2.25)

    def test_gaussian_moments(self, rng):
        law = GaussianLaw(mean=(0.5, 0.0, 0.0), variance=1.0)
        speed = np.linalg.norm(law.sample(rng, 200_000), axis=1)
        assert law.abs_moment(1.0) == pytest.approx(speed.mean(), rel=0.01)
        centered = GaussianLaw(variance=1.0)
        assert centered.abs_moment(1.0) == pytest.approx(2.0 * math.sqrt(2.0 / math.pi))

    def test_initial_law(self, rng):
        f0 = InitialLaw(m0=2.0, velocity=ShellLaw(radius=1.0))
        states = f0.sample_states(rng, 10)
        assert np.all(states.m == 2.0)
        assert np.allclose(np.linalg.norm(states.v, axis=1), 1.0)
        assert f0.weighted_energy == pytest.approx(2.0)
        assert f0.expected_damping(lambda v: np.full(len(v), 3.0), 0.5, rng) == pytest.approx(math.exp(-1.5))

    @pytest.mark.parametrize("spec", ["maxwellian(1)", "ball(-1)", "gaussian(0,0,0)", "shell"])
    def test_invalid(self, spec):
        with pytest.raises(ValueError):
            law_from_spec(spec)


class TestRunConfig:
    def test_defaults(self):
        config = RunConfig()
        assert config.commands == ["sample"]
        assert config.e0 is None
        assert config.resolved_e0 == pytest.approx(3.0)
        params = config.model_params()
        assert params.kappa == pytest.approx(1.0)
        assert params.gamma == 1.0

    def test_from_file(self, tmp_path):
        path = tmp_path / "run.env"
        path.write_text(
            "COMMANDS=sample,series\n"
            "GAMMA=0.5\n"
            "E0=auto\n"
            "KERNEL=power(0.5,0.01)\n"
            "F0=ball(2)\n"
            "T_GRID=0.1, 0.2\n"
            "N_REP=500\n"
        )
        config = RunConfig.from_file(path, {"base_seed": 9, "n_rep": None})
        assert config.commands == ["sample", "series"]
        assert config.t_grid == [0.1, 0.2]
        assert config.n_rep == 500
        assert config.base_seed == 9
        assert config.resolved_e0 == pytest.approx(2.4)
        assert config.config_dir == str(tmp_path)

    def test_table_kernel_relative_to_file(self, tmp_path):
        (tmp_path / "b.txt").write_text("-1 0\n1 2\n")
        path = tmp_path / "run.env"
        path.write_text("KERNEL=table(b.txt)\n")
        kernel = RunConfig.from_file(path).angular_kernel()
        assert kernel.kappa == pytest.approx(4.0 * math.pi)

    @pytest.mark.parametrize(
        "values",
        [
            {"commands": "sample,plot"},
            {"gamma": "1.5"},
            {"t_grid": "0.1,-1"},
            {"f0": "cube(1)"},
            {"blocks": "4"},
            {"unknown_key": "1"},
        ],
    )
    def test_invalid_values(self, values):
        with pytest.raises(ConfigError):
            RunConfig.from_mapping(values)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            RunConfig.from_file(tmp_path / "missing.env")

    def test_presets_are_defaults(self):
        config = RunConfig.from_mapping({"preset": "smoke", "n_rep": "64"})
        assert config.n_rep == 64
        assert config.check_draws == PRESETS["smoke"]["check_draws"]
        assert config.commands == ["check"]

    def test_full_checks_is_an_alias(self):
        paper = RunConfig.from_mapping({"preset": "paper-checks"})
        alias = RunConfig.from_mapping({"preset": "full-checks"})
        assert paper.check_draws == alias.check_draws == 1_000_000
        assert paper.series_k == alias.series_k

    def test_hash_ignores_output_and_workers(self):
        a = RunConfig(output_dir="a", workers=1)
        b = RunConfig(output_dir="b", workers=4)
        assert a.config_hash == b.config_hash
        assert a.config_hash != RunConfig(base_seed=1).config_hash
        assert "output_dir" not in a.canonical_json()

    def test_manual_e0_warns(self, caplog):
        config = RunConfig(e0=5.0)
        with caplog.at_level(logging.WARNING):
            params = config.model_params()
        assert params.e0 == 5.0
        assert "differs from the energy" in caplog.text

    def test_zero_energy_needs_e0(self):
        with pytest.raises(ConfigError):
            RunConfig(f0="dirac(0,0,0)").model_params()
        assert RunConfig(f0="dirac(0,0,0)", e0=1.0).model_params().e0 == 1.0

    def test_thresholds(self):
        thresholds = RunConfig(ks_pvalue_min=0.01).thresholds()
        assert thresholds.ks_pvalue_min == 0.01
        assert thresholds.moment_sigma == 3.0
