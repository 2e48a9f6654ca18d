"""
This module provides the service behind the HTTP API: it validates requests,
calls the samplers and turns domain errors into HTTP errors.
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from fastapi import HTTPException

from src.models.config import RunConfig
from src.models.kernels import kernel_from_spec
from src.models.laws import InitialLaw, law_from_spec
from src.models.params import ModelParams
from src.models.records import Manifest, SampleRecord
from src.services.errors import (
    CapExceeded,
    ConfigError,
    EmptyCloud,
    InsufficientData,
    InvalidKernel,
    StabilityViolation,
    UnrepresentableWeight,
)
from src.services.harness import run_experiment
from src.services.maxwell_wild import wild_truncation_error, wild_weight
from src.services.perfect_sampler import batch_sample, counter_bound
from src.services.tree_series import SeriesBudget, truncated_series
from src.utils.pagination import paginate_response, replicate_window
from src.utils.rng import RngStream

load_dotenv()

logger = logging.getLogger(__name__)

CLIENT_ERRORS = (ConfigError, InvalidKernel, ValueError)
UNPROCESSABLE = (CapExceeded, StabilityViolation, InsufficientData, EmptyCloud, UnrepresentableWeight)
MAX_WILD_TERMS = 1000
MAX_SERIES_K = 9
# Sizes an HTTP experiment may not push past KINETICS_MAX_REPS, with the commands that use them.
SIZED_FIELDS = {
    "n_rep": ("sample", "maxwell", "wild", "compare", "check"),
    "dsmc_n": ("dsmc", "compare", "check"),
    "check_draws": ("check",),
}


class SimulationService:
    """
    Runs samplers on behalf of the API, with process defaults from the environment.
    """

    def __init__(self):
        """
        Reads the output directory, worker count, replicate ceiling and default cap.
        """
        self.output_dir = os.getenv("KINETICS_OUTPUT_DIR", "runs")
        self.workers = int(os.getenv("KINETICS_WORKERS", "1"))
        self.max_reps = int(os.getenv("KINETICS_MAX_REPS", "200000"))
        self.default_cap = int(os.getenv("KINETICS_DEFAULT_CAP", "1000000"))

    def _call(self, operation, *args, **kwargs):
        """
        Runs ``operation`` and maps errors to HTTP status codes.

        Raises:
            HTTPException: 400 for invalid input, 422 when the computation
                cannot complete, 500 otherwise.
        """
        try:
            return operation(*args, **kwargs)
        except HTTPException as e:
            raise e from e
        except CLIENT_ERRORS as e:
            raise HTTPException(status_code=400, detail=str(e)) from e
        except UNPROCESSABLE as e:
            raise HTTPException(status_code=422, detail=str(e)) from e
        except Exception as e:
            logger.exception("request failed")
            raise HTTPException(status_code=500, detail=f"Internal server error: {str(e)}") from e

    def _params(self, gamma: float, e0: Optional[float], kernel: str, f0: str) -> ModelParams:
        law = law_from_spec(f0)
        energy = e0 if e0 is not None else law.energy
        if energy <= 0:
            raise ConfigError("f0 has zero energy; pass e0 explicitly")
        return ModelParams(gamma=gamma, e0=energy, kernel=kernel_from_spec(kernel))

    def kernel_info(self, spec: str) -> Dict[str, Any]:
        """
        Gets kappa, the mean cosine c and sup b of an angular kernel.

        Args:
            spec (str): Kernel expression, e.g. ``power(0.5,0.01)``. Tables are not accepted here.

        Returns:
            Dict: The kernel constants.
        """

        def describe():
            if spec.strip().startswith("table"):
                raise ConfigError("tabulated kernels are only available in run files")
            kernel = kernel_from_spec(spec)
            return {"spec": kernel.spec(), "kappa": kernel.kappa, "mean_cosine": kernel.mean_cosine_c, "sup_b": kernel.sup_b}

        return self._call(describe)

    def get_counter_bound(self, t: float, gamma: float, e0: Optional[float], kernel: str, f0: str) -> Dict[str, Any]:
        """
        Gets the bound on the expected number of collisions of the perfect sampler.
        """

        def bound():
            params = self._params(gamma, e0, kernel, f0)
            return {
                "t": t,
                "gamma": gamma,
                "e0": params.e0,
                "kappa": params.kappa,
                "bound": counter_bound(t, params, law_from_spec(f0).energy),
            }

        return self._call(bound)

    def sample_records(
        self,
        t: float,
        gamma: float,
        e0: Optional[float],
        kernel: str,
        f0: str,
        seed: int,
        reps: int,
        page: int = 1,
        per_page: int = 10,
    ) -> Dict[str, Any]:
        """
        Draws one page of perfect-sampler records.

        Only the replicates on the requested page are simulated; page p of a
        request is identical whatever page size was used to reach it.

        Args:
            reps (int): Total replicates addressable by pagination, at most KINETICS_MAX_REPS.

        Returns:
            Dict: page, per_page, total, items and failures (replicates that hit the cap).
        """

        def draw():
            if reps > self.max_reps:
                raise ConfigError(f"reps={reps} exceeds the server limit {self.max_reps}")
            params = self._params(gamma, e0, kernel, f0)
            first, count = replicate_window(page, per_page, reps)
            items: List[SampleRecord] = []
            failures = 0
            if count:
                f0_law = InitialLaw(velocity=law_from_spec(f0))
                result = batch_sample(t, count, f0_law, params, seed, self.default_cap, self.workers, first_index=first)
                items, failures = result.records, result.failures
            return {**paginate_response(items, page, per_page, reps), "failures": failures}

        return self._call(draw)

    def wild_weights(self, t: float, kappa: float, n_terms: int) -> Dict[str, Any]:
        """
        Gets the first ``n_terms`` Wild weights and the mass they leave out.
        """

        def weights():
            if not 1 <= n_terms <= MAX_WILD_TERMS:
                raise ConfigError(f"n_terms must lie in [1, {MAX_WILD_TERMS}]")
            return {
                "t": t,
                "kappa": kappa,
                "weights": [wild_weight(n, t, kappa) for n in range(1, n_terms + 1)],
                "truncation_error": wild_truncation_error(n_terms, t, kappa),
            }

        return self._call(weights)

    def series_table(
        self,
        t: float,
        k: int,
        gamma: float,
        e0: Optional[float],
        kernel: str,
        f0: str,
        seed: int,
        particles: int,
        n_time: int,
        batches: int,
    ) -> Dict[str, Any]:
        """
        Gets the per-tree mass table of the truncated series.
        """

        def table():
            if not 1 <= k <= MAX_SERIES_K:
                raise ConfigError(f"k must lie in [1, {MAX_SERIES_K}]")
            params = self._params(gamma, e0, kernel, f0)
            budget = SeriesBudget(particles, n_time, batches)
            f0_law = InitialLaw(velocity=law_from_spec(f0))
            result = truncated_series(t, k, f0_law, params, budget, RngStream.series(seed), self.workers)
            return {"t": t, "k": k, "total_mass": result.total_mass, "rows": result.rows}

        return self._call(table)

    def run_experiment(self, values: Dict[str, Any]) -> Manifest:
        """
        Runs a full experiment from RunConfig fields; the output goes under KINETICS_OUTPUT_DIR.

        Tabulated kernels and ``config_dir`` are refused, and every size the
        commands use must stay within KINETICS_MAX_REPS.

        Returns:
            Manifest: The manifest of the run.
        """

        def run():
            keys = {str(key).lower(): value for key, value in values.items()}
            if "config_dir" in keys:
                raise ConfigError("config_dir is only available in run files")
            if str(keys.get("kernel", "")).strip().startswith("table"):
                raise ConfigError("tabulated kernels are only available in run files")
            config = RunConfig.from_mapping({**values, "workers": self.workers})
            for field, commands in SIZED_FIELDS.items():
                size = getattr(config, field)
                if size > self.max_reps and set(commands) & set(config.commands):
                    raise ConfigError(f"{field}={size} exceeds the server limit {self.max_reps}")
            out = Path(self.output_dir) / config.config_hash[:16]
            config = config.model_copy(update={"output_dir": str(out)})
            return run_experiment(config).manifest

        return self._call(run)


simulation_service = SimulationService()
