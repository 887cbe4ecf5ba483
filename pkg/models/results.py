from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel

from models.cities import Region
from models.fits import FitResult
from models.flows import (
    CityActivityBreakdown,
    DecayPoint,
    DirectionalComparison,
    FlowMarginals,
    GroupStrength,
    NullModelResult,
    ODMatrix,
    PerCapitaRate,
    RankedCity,
    RelativeAttractiveness,
    ResidentDestinationBreakdown,
    UsersPhotosPoint,
)
from models.homes import HomeAssignment, HomeCoverage, LabelConsistency
from models.photos import IngestStats, YearlyActivity
from models.spatial import (
    CategoryRankProfile,
    CoveragePoint,
    CoverageSummary,
    DensityField,
    Hotspot,
    QuintileCurve,
)


class FlowResults(BaseModel):
    regions: List[Region]
    region_map: Dict[str, str]
    ranking: List[RankedCity]
    od: ODMatrix
    marginals: FlowMarginals
    null_model: Optional[NullModelResult] = None
    per_capita: List[PerCapitaRate]
    attractiveness: List[RelativeAttractiveness]
    city_breakdowns: List[CityActivityBreakdown]
    resident_breakdowns: List[ResidentDestinationBreakdown]
    decay_points: List[DecayPoint] = []
    decay_fit: Optional[FitResult] = None
    groups: List[GroupStrength] = []
    directional: Optional[DirectionalComparison] = None
    users_photos: List[UsersPhotosPoint] = []
    users_photos_fit: Optional[FitResult] = None
    notes: List[str] = []


class CitySpatialResult(BaseModel):
    city_id: str
    field: DensityField
    fits: Dict[str, FitResult] = {}
    fit_errors: Dict[str, str] = {}
    curves: Dict[str, QuintileCurve] = {}
    area_ratio: Tuple[Optional[float], Optional[float]] = (None, None)
    hotspots: List[Hotspot] = []
    category_hotspots: Dict[str, List[Hotspot]] = {}
    coverage: List[CoveragePoint] = []
    rank_profiles: List[CategoryRankProfile] = []
    notes: List[str] = []

    class Config:
        arbitrary_types_allowed = True


class SpatialResults(BaseModel):
    cities: List[CitySpatialResult]
    coverage_summary: List[CoverageSummary] = []


class StageCounts(BaseModel):
    records_kept: int
    located: int
    unassigned: int
    homed_photos: int
    unknown_home_photos: int
    od_photos: int
    outside_region_set: int


class PipelineResults(BaseModel):
    ingest: IngestStats
    yearly: List[YearlyActivity]
    coverage: Optional[HomeCoverage] = None
    consistency: Optional[LabelConsistency] = None
    homes: Dict[str, HomeAssignment] = {}
    counts: Optional[StageCounts] = None
    flows: Optional[FlowResults] = None
    spatial: Optional[SpatialResults] = None

    class Config:
        arbitrary_types_allowed = True
