import math

import numpy as np
import pytest
from fastapi.testclient import TestClient

from src.main import app
from src.models.config import RunConfig
from src.models.kernels import ConstantKernel, TabulatedKernel, TruncatedPowerKernel
from src.models.laws import DiracLaw, GaussianLaw, InitialLaw, UniformBallLaw
from src.models.params import ModelParams
from src.services.simulation_service import SimulationService


@pytest.fixture
def client():
    return TestClient(app)


@pytest.fixture
def service():
    return SimulationService()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_kernel():
    """b = 1/(4 pi), so kappa = 1."""
    return ConstantKernel(1.0 / (4.0 * math.pi))


@pytest.fixture
def power_kernel():
    return TruncatedPowerKernel(0.5, 0.01)


@pytest.fixture
def linear_kernel():
    return TabulatedKernel(np.array([-1.0, 1.0]), np.array([0.0, 2.0]))


@pytest.fixture
def gaussian_f0():
    return InitialLaw(velocity=GaussianLaw(variance=1.0))


@pytest.fixture
def dirac_f0():
    return InitialLaw(velocity=DiracLaw(v0=(1.0, 0.0, 0.0)))


@pytest.fixture
def ball_f0():
    return InitialLaw(velocity=UniformBallLaw(radius=2.0))


@pytest.fixture
def hard_spheres(unit_kernel, gaussian_f0):
    return ModelParams(gamma=1.0, e0=gaussian_f0.energy, kernel=unit_kernel)


@pytest.fixture
def dirac_params(unit_kernel):
    """gamma = 1, e0 = 1: Lambda = 4 at |v| = 1."""
    return ModelParams(gamma=1.0, e0=1.0, kernel=unit_kernel)


@pytest.fixture
def maxwell_params(unit_kernel, ball_f0):
    return ModelParams(gamma=0.0, e0=ball_f0.energy, kernel=unit_kernel)


@pytest.fixture
def tiny_config(tmp_path):
    return RunConfig(
        commands=["sample", "wild", "series", "dsmc", "compare"],
        t_grid=[0.0, 0.05],
        n_rep=64,
        series_k=3,
        series_particles=64,
        series_time=4,
        series_batches=2,
        dsmc_n=64,
        n_proj=4,
        blocks=8,
        output_dir=str(tmp_path / "run"),
    )


@pytest.fixture
def mock_record():
    return {
        "seed": 20240101,
        "replicate": 0,
        "t": 0.1,
        "m": 1.25,
        "v": [0.5, -0.25, 1.0],
        "n": 1,
        "tree": "100",
    }


@pytest.fixture
def mock_paginated_samples(mock_record):
    return {"page": 1, "per_page": 10, "total": 100, "items": [mock_record] * 10, "failures": 0}
