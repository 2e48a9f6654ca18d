from typing import List

from pydantic import BaseModel

from src.models.records import SampleRecord, TreeMassRow


class KernelInfo(BaseModel):
    spec: str
    kappa: float
    mean_cosine: float
    sup_b: float


class CounterBound(BaseModel):
    t: float
    gamma: float
    e0: float
    kappa: float
    bound: float


class PaginatedResponse(BaseModel):
    page: int
    per_page: int
    total: int
    items: List


class SampleList(PaginatedResponse):
    items: List[SampleRecord]
    failures: int = 0


class WildWeights(BaseModel):
    t: float
    kappa: float
    weights: List[float]
    truncation_error: float


class SeriesTable(BaseModel):
    t: float
    k: int
    total_mass: float
    rows: List[TreeMassRow]
