"""
Model parameters and the lightweight state tuples used on the sampling hot path.
"""

from typing import NamedTuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.models.kernels import AngularKernel

# A velocity is a float array of shape (3,), or (n, 3) for a batch.
Velocity = np.ndarray


class ModelParams(BaseModel):
    """
    gamma, e0 and the angular kernel; kappa and c come from the kernel.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    gamma: float = Field(ge=0.0, le=1.0, allow_inf_nan=False)
    e0: float = Field(gt=0.0, allow_inf_nan=False)
    kernel: AngularKernel

    @property
    def kappa(self) -> float:
        return self.kernel.kappa

    @property
    def c(self) -> float:
        return self.kernel.mean_cosine_c


class WeightedState(NamedTuple):
    """y = (m, v) in E = (0, inf) x R^3; m may be an (n,) array with v of shape (n, 3)."""

    m: Union[float, np.ndarray]
    v: Velocity


class LogWeightedState(NamedTuple):
    """(log m, v): the perfect sampler keeps weights in log space, where products cannot underflow."""

    log_m: float
    v: Velocity


class CollisionAux(NamedTuple):
    """z = (sigma, a) in H = S^2 x [0, 1]."""

    sigma: np.ndarray
    a: Union[float, np.ndarray]
