from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, validator

from models.fits import FitResult

# Density layers kept per grid; "total" is the sum of the other four.
CATEGORIES = ("resident", "domestic", "foreign", "unknown_home", "total")
ANALYSIS_CATEGORIES = ("resident", "domestic", "foreign", "total")


class GridSpec(BaseModel):
    city_id: str
    anchor: Tuple[float, float]  # south-west corner (lat0, lon0)
    cell_size: float = 500.0
    n_rows: int
    n_cols: int

    class Config:
        allow_mutation = False

    @validator("cell_size")
    def _positive_cell(cls, v):
        if v <= 0:
            raise ValueError("cell_size must be positive")
        return v

    @validator("n_rows", "n_cols")
    def _positive_dims(cls, v):
        if v < 1:
            raise ValueError("grid needs at least one row and column")
        return v


class DensityField(BaseModel):
    grid: GridSpec
    counts: Dict[str, np.ndarray]
    outside: int = 0

    class Config:
        arbitrary_types_allowed = True

    def layer(self, category: str) -> np.ndarray:
        if category not in self.counts:
            raise KeyError(f"unknown category {category!r}")
        return self.counts[category]


class Hotspot(BaseModel):
    rank: int
    cells: List[Tuple[int, int]]
    activity: int
    threshold_a: int


class QuintileCurve(BaseModel):
    category: str
    points: List[Tuple[float, float]]
    cells: List[int]


class CoveragePoint(BaseModel):
    n: int
    hotspots: int
    coverage: float


class CoverageSummary(BaseModel):
    n: int
    mean: float
    std: float
    cities: int


class CategoryRankProfile(BaseModel):
    category: str
    activities: List[int]
    normalized: List[float]
    fit: Optional[FitResult] = None
    error: Optional[str] = None
