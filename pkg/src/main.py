"""
This module defines the main FastAPI application for the Boltzmann Monte Carlo API.
"""

from typing import Any, Dict, Optional

import uvicorn
from fastapi import Body, FastAPI, Query
from fastapi.middleware.cors import CORSMiddleware

from src import __version__
from src.models.records import Manifest
from src.models.responses import CounterBound, KernelInfo, SampleList, SeriesTable, WildWeights
from src.services.simulation_service import simulation_service
from src.utils.pagination import validate_pagination_params

app = FastAPI(
    title="Boltzmann Monte Carlo API",
    description="Perfect sampling, Wild sums and tree series for the homogeneous Boltzmann equation",
    version=__version__,
    docs_url="/api/v1/docs",
    redoc_url="/api/v1/redoc",
)


app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


DEFAULT_PAGE = 1
DEFAULT_PER_PAGE = 10
MAX_PER_PAGE = 100
DEFAULT_KERNEL = "constant(0.07957747154594767)"
DEFAULT_F0 = "gaussian(0,0,0,1)"
DEFAULT_SEED = 20240101


@app.get("/")
async def root():
    """
    Root endpoint for the API.
    """
    return {
        "message": "Welcome to the Boltzmann Monte Carlo API",
        "version": __version__,
        "documentation": "/api/v1/docs",
    }


@app.get("/api/v1/health")
async def health_check():
    """
    Health check endpoint for the API.
    """
    return {"status": "healthy"}


@app.get("/api/v1/kernel", response_model=KernelInfo)
def get_kernel(spec: str = Query(DEFAULT_KERNEL, description="Kernel expression")):
    """
    Gets kappa, the mean cosine and sup b of an angular kernel.

    - **spec**: `constant(v)` or `power(exponent,floor)`
    """
    return simulation_service.kernel_info(spec)


@app.get("/api/v1/counter-bound", response_model=CounterBound)
def get_counter_bound(
    t: float = Query(..., ge=0, description="Time"),
    gamma: float = Query(1.0, ge=0, le=1, description="Hard-potential exponent"),
    e0: Optional[float] = Query(None, gt=0, description="Energy parameter, default the energy of f0"),
    kernel: str = Query(DEFAULT_KERNEL, description="Kernel expression"),
    f0: str = Query(DEFAULT_F0, description="Initial velocity law"),
):
    """
    Gets the bound exp(kappa (1+e0)(1+E0^{gamma/2}) t) - 1 on the mean collision count.
    """
    return simulation_service.get_counter_bound(t, gamma, e0, kernel, f0)


@app.get("/api/v1/samples", response_model=SampleList)
def list_samples(
    t: float = Query(..., ge=0, description="Time"),
    gamma: float = Query(1.0, ge=0, le=1, description="Hard-potential exponent"),
    e0: Optional[float] = Query(None, gt=0, description="Energy parameter, default the energy of f0"),
    kernel: str = Query(DEFAULT_KERNEL, description="Kernel expression"),
    f0: str = Query(DEFAULT_F0, description="Initial velocity law"),
    seed: int = Query(DEFAULT_SEED, ge=0, description="Base seed"),
    reps: int = Query(1000, ge=1, description="Replicates addressable by pagination"),
    page: int = Query(DEFAULT_PAGE, ge=1, description="Page number"),
    per_page: int = Query(DEFAULT_PER_PAGE, ge=1, le=MAX_PER_PAGE, description="Items per page"),
):
    """
    Lists perfect-sampler records (m, v, collision counter, tree) with pagination.

    - **page**: Page number (starts from 1)
    - **per_page**: Number of items per page (max 100)
    """
    page, per_page = validate_pagination_params(page, per_page, MAX_PER_PAGE)
    return simulation_service.sample_records(t, gamma, e0, kernel, f0, seed, reps, page, per_page)


@app.get("/api/v1/wild/weights", response_model=WildWeights)
def get_wild_weights(
    t: float = Query(..., ge=0, description="Time"),
    kappa: float = Query(1.0, gt=0, description="Collision rate"),
    n_terms: int = Query(20, ge=1, description="Number of terms"),
):
    """
    Gets the Wild weights e^{-kappa t}(1 - e^{-kappa t})^{n-1} and the truncation error.
    """
    return simulation_service.wild_weights(t, kappa, n_terms)


@app.get("/api/v1/series", response_model=SeriesTable)
def get_series(
    t: float = Query(..., ge=0, description="Time"),
    k: int = Query(5, ge=1, description="Maximum number of tree nodes"),
    gamma: float = Query(1.0, ge=0, le=1, description="Hard-potential exponent"),
    e0: Optional[float] = Query(None, gt=0, description="Energy parameter, default the energy of f0"),
    kernel: str = Query(DEFAULT_KERNEL, description="Kernel expression"),
    f0: str = Query(DEFAULT_F0, description="Initial velocity law"),
    seed: int = Query(DEFAULT_SEED, ge=0, description="Base seed"),
    particles: int = Query(1024, ge=1, le=65536, description="Particles per tree"),
    n_time: int = Query(32, ge=1, le=1024, description="Time strata"),
    batches: int = Query(4, ge=1, le=64, description="Independent batches per tree"),
):
    """
    Gets the mass of each tree in the truncated series.
    """
    return simulation_service.series_table(t, k, gamma, e0, kernel, f0, seed, particles, n_time, batches)


@app.post("/api/v1/experiments", response_model=Manifest)
def create_experiment(config: Dict[str, Any] = Body(..., description="RunConfig fields")):
    """
    Runs an experiment and returns its manifest.
    """
    return simulation_service.run_experiment(config)


if __name__ == "__main__":
    uvicorn.run("src.main:app", host="127.0.0.1", port=8000, reload=True)
