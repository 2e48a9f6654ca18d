"""
Run configuration: a flat key/value file (dotenv syntax) validated by pydantic.
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.models.kernels import AngularKernel, kernel_from_spec
from src.models.laws import InitialLaw, law_from_spec
from src.models.params import ModelParams
from src.models.records import OracleThresholds
from src.services.errors import ConfigError
from src.utils.parsing import split_list
from src.utils.persistence import sha256_bytes

logger = logging.getLogger(__name__)

COMMANDS = ("sample", "maxwell", "wild", "series", "dsmc", "compare", "check")

# Desk-scale sizes of the acceptance suite, and a tiny variant for CI.
PRESETS: Dict[str, Dict[str, Any]] = {
    "paper-checks": {
        "commands": ["check"],
        "n_rep": 100_000,
        "check_draws": 1_000_000,
        "series_k": 7,
        "series_particles": 4096,
        "series_time": 64,
        "series_batches": 8,
        "dsmc_n": 100_000,
        "n_proj": 64,
    },
    "smoke": {
        "commands": ["check"],
        "n_rep": 2_000,
        "check_draws": 10_000,
        "series_k": 3,
        "series_particles": 256,
        "series_time": 16,
        "series_batches": 8,
        "dsmc_n": 2_000,
        "n_proj": 16,
    },
}
PRESETS["full-checks"] = PRESETS["paper-checks"]


class RunConfig(BaseModel):
    """
    Every knob of a run. ``e0`` None means auto: the energy of f0.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    commands: List[str] = ["sample"]
    gamma: float = Field(default=1.0, ge=0.0, le=1.0)
    e0: Optional[float] = Field(default=None, gt=0.0)
    kernel: str = "constant(0.07957747154594767)"
    f0: str = "gaussian(0,0,0,1)"
    f0_mass: float = Field(default=1.0, gt=0.0)
    t_grid: List[float] = [0.1]
    n_rep: int = Field(default=10_000, ge=1)
    base_seed: int = Field(default=20240101, ge=0)
    cap: int = Field(default=1_000_000, ge=1)
    series_k: int = Field(default=7, ge=1)
    series_particles: int = Field(default=4096, ge=1)
    series_time: int = Field(default=64, ge=1)
    series_batches: int = Field(default=8, ge=1)
    series_resample: bool = False
    dsmc_n: int = Field(default=10_000, ge=2)
    dsmc_dt: Optional[float] = Field(default=None, gt=0.0)
    check_draws: int = Field(default=1_000_000, ge=1)
    blocks: int = Field(default=32, ge=8)
    n_proj: int = Field(default=32, ge=1)
    ks_pvalue_min: float = Field(default=1e-3, gt=0.0, lt=1.0)
    moment_sigma: float = Field(default=3.0, gt=0.0)
    sliced_w1_max: float = Field(default=0.05, gt=0.0)
    preset: Optional[Literal["paper-checks", "full-checks", "smoke"]] = None
    output_dir: str = Field(default="runs", exclude=True)
    workers: int = Field(default=1, ge=1, exclude=True)
    config_dir: Optional[str] = Field(default=None, exclude=True)

    @field_validator("commands", "t_grid", mode="before")
    @classmethod
    def _split(cls, value):
        return split_list(value) if isinstance(value, str) else value

    @field_validator("e0", "dsmc_dt", mode="before")
    @classmethod
    def _auto(cls, value):
        if isinstance(value, str) and value.strip().lower() in ("auto", "", "none"):
            return None
        return value

    @field_validator("commands")
    @classmethod
    def _known_commands(cls, value):
        unknown = [c for c in value if c not in COMMANDS]
        if unknown or not value:
            raise ValueError(f"unknown commands {unknown}; choose from {', '.join(COMMANDS)}")
        return value

    @field_validator("t_grid")
    @classmethod
    def _times(cls, value):
        if not value or any(not math.isfinite(t) or t < 0 for t in value):
            raise ValueError("t_grid needs finite nonnegative times")
        return value

    @field_validator("f0")
    @classmethod
    def _law(cls, value):
        law_from_spec(value)
        return value

    @model_validator(mode="before")
    @classmethod
    def _apply_preset(cls, data):
        # Preset values are defaults; explicit keys win.
        if isinstance(data, dict) and data.get("preset") in PRESETS:
            data = {**PRESETS[data["preset"]], **data}
        return data

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any], base_dir: Optional[Path] = None) -> "RunConfig":
        """
        Validates raw key/value pairs; keys are case-insensitive.

        Raises:
            ConfigError: If a key is unknown or a value invalid.
        """
        data = {key.lower(): value for key, value in values.items() if value is not None}
        if base_dir is not None:
            data.setdefault("config_dir", str(base_dir))
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"invalid run configuration: {e}") from e

    @classmethod
    def from_file(cls, path: Path, overrides: Optional[Mapping[str, Any]] = None) -> "RunConfig":
        """
        Reads a dotenv-format run file; ``overrides`` (e.g. CLI flags) win over file values.
        """
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        values: Dict[str, Any] = dict(dotenv_values(path))
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_mapping(values, base_dir=path.parent)

    def velocity_law(self):
        return law_from_spec(self.f0)

    def initial_law(self) -> InitialLaw:
        return InitialLaw(m0=self.f0_mass, velocity=self.velocity_law())

    def angular_kernel(self) -> AngularKernel:
        return kernel_from_spec(self.kernel, Path(self.config_dir) if self.config_dir else None)

    @property
    def resolved_e0(self) -> float:
        return self.e0 if self.e0 is not None else self.velocity_law().energy

    def model_params(self, kernel: Optional[AngularKernel] = None) -> ModelParams:
        """
        ModelParams with e0 resolved; warns when a manual e0 differs from the energy of f0.
        """
        energy = self.velocity_law().energy
        if self.e0 is not None and not math.isclose(self.e0, energy, rel_tol=1e-9):
            logger.warning(
                "e0=%g differs from the energy %g of f0: samples solve the weighted equation "
                "but m-weighted moments no longer describe the Boltzmann solution",
                self.e0,
                energy,
            )
        if self.e0 is None and energy <= 0:
            raise ConfigError("f0 has zero energy; set e0 explicitly")
        return ModelParams(gamma=self.gamma, e0=self.resolved_e0, kernel=kernel or self.angular_kernel())

    def thresholds(self) -> OracleThresholds:
        return OracleThresholds(
            ks_pvalue_min=self.ks_pvalue_min, moment_sigma=self.moment_sigma, sliced_w1_max=self.sliced_w1_max
        )

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        """sha256 of the canonical config; output_dir and workers do not enter it."""
        return sha256_bytes(self.canonical_json().encode("utf-8"))
