"""
Records and reports produced by the samplers, the series and the acceptance suite.
"""

import math
import sys
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from src.services.errors import UnrepresentableWeight
from src.utils.rng import RngStream

SCHEMA_VERSION = 1
MAX_LOG_WEIGHT = math.log(sys.float_info.max)


class SampleRecord(BaseModel):
    """
    One perfect-simulation output; the Maxwellian samplers fix m to 1.

    ``log_m`` is exact; ``m = exp(log_m)`` may underflow to 0.0 for very light replicates.
    """

    seed: int
    replicate: int = 0
    t: float = Field(ge=0.0)
    m: float = Field(ge=0.0)
    log_m: float = 0.0
    v: List[float] = Field(min_length=3, max_length=3)
    n: int = Field(ge=0)
    tree: str

    @classmethod
    def from_draw(cls, rng: RngStream, t: float, m: float, v: np.ndarray, n: int, tree: str) -> "SampleRecord":
        return cls(
            seed=rng.seed,
            replicate=rng.path[-1] if rng.path else 0,
            t=float(t),
            m=float(m),
            log_m=math.log(m),
            v=[float(x) for x in v],
            n=n,
            tree=tree,
        )

    @classmethod
    def from_log_weight(cls, rng: RngStream, t: float, log_m: float, v: np.ndarray, n: int, tree: str) -> "SampleRecord":
        """
        Raises:
            UnrepresentableWeight: If exp(log_m) overflows a float.
        """
        if not log_m < MAX_LOG_WEIGHT:
            raise UnrepresentableWeight(log_m)
        record = cls.from_draw(rng, t, 1.0, v, n, tree)
        return record.model_copy(update={"m": math.exp(log_m), "log_m": float(log_m)})


def records_to_arrays(records: List[SampleRecord]):
    """(m, v) as arrays of shape (n,) and (n, 3)."""
    m = np.fromiter((r.m for r in records), dtype=float, count=len(records))
    v = np.array([r.v for r in records], dtype=float).reshape(-1, 3)
    return m, v


class MomentReport(BaseModel):
    estimator: str
    p: float
    records: int
    point_estimate: float
    stderr: float
    blocks: int
    median_of_means: float
    ci_half_width: float
    tail_index: Optional[float] = None


class TreeMassRow(BaseModel):
    tree_code: str
    leaves: int
    mass: float
    stderr: float


class TreeCheckRow(BaseModel):
    tree_code: str
    leaves: int
    series_mass: float
    series_stderr: float
    frequency: float
    frequency_stderr: float
    sigma: float
    flagged: bool


class MomentComparison(BaseModel):
    name: str
    weighted: float
    weighted_stderr: float
    oracle: float
    oracle_stderr: float
    z: float
    passed: bool


class OracleThresholds(BaseModel):
    ks_pvalue_min: float = Field(default=1e-3, gt=0.0, lt=1.0)
    moment_sigma: float = Field(default=3.0, gt=0.0)
    sliced_w1_max: float = Field(default=0.05, gt=0.0)


class OracleReport(BaseModel):
    records: int
    oracle: int
    effective_size: float
    ks_statistic: float
    ks_pvalue: float
    moments: List[MomentComparison]
    sliced_w1: float
    sliced_w1_relative: float
    thresholds: OracleThresholds
    passed: bool


class CheckResult(BaseModel):
    name: str
    passed: bool
    metrics: Dict[str, float] = {}
    detail: str = ""


class Manifest(BaseModel):
    schema_version: int = SCHEMA_VERSION
    config_hash: str
    base_seed: int
    commands: List[str]
    versions: Dict[str, str]
    files: Dict[str, str]
