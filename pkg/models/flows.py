from typing import Dict, List, Optional

from pydantic import BaseModel, validator


class ODMatrix(BaseModel):
    """Photo flows between regions.

    ``a[i][j]`` counts photos taken in destination ``j`` by residents of origin
    ``i``; ``domestic[i][j]`` is the part of it taken by users whose home country
    matches the country of the destination city.
    """

    regions: List[str]
    a: List[List[int]]
    domestic: List[List[int]]

    @validator("a", "domestic")
    def _square_non_negative(cls, m, values):
        n = len(values.get("regions", []))
        if len(m) != n or any(len(row) != n for row in m):
            raise ValueError(f"matrix must be {n}x{n}")
        if any(v < 0 for row in m for v in row):
            raise ValueError("flow counts must be non-negative")
        return m

    def index(self, region_id: str) -> int:
        return self.regions.index(region_id)

    def scaled(self, k: int) -> "ODMatrix":
        return ODMatrix(
            regions=list(self.regions),
            a=[[v * k for v in row] for row in self.a],
            domestic=[[v * k for v in row] for row in self.domestic],
        )


class FlowMarginals(BaseModel):
    regions: List[str]
    w_in: List[int]
    w_out: List[int]
    w_in_star: List[int]
    w_out_star: List[int]


class NullModelResult(BaseModel):
    regions: List[str]
    model: List[List[Optional[float]]]
    ratio: List[List[Optional[float]]]
    undefined_rows: List[str] = []

    def ratio_of(self, origin: str, destination: str) -> Optional[float]:
        return self.ratio[self.regions.index(origin)][self.regions.index(destination)]


class CityActivityBreakdown(BaseModel):
    """Who took the photos inside one city. Shares are over classified photos."""

    city_id: str
    resident: Optional[float] = None
    domestic_tourist: Optional[float] = None
    foreign_tourist: Optional[float] = None
    classified_photos: int = 0
    unknown_home_photos: int = 0


class ResidentDestinationBreakdown(BaseModel):
    """Where the residents of one origin took their photos."""

    region_id: str
    home: Optional[float] = None
    domestic: Optional[float] = None
    foreign: Optional[float] = None
    photos: int = 0


class RelativeAttractiveness(BaseModel):
    city_id: str
    domestic_per_capita: float
    foreign_per_capita: float
    domestic_photos: int
    foreign_photos: int


class DecayPoint(BaseModel):
    origin: str
    destination: str
    distance_km: float
    ratio: float
    residual: Optional[float] = None


class GroupStrength(BaseModel):
    origin_group: str
    destination_group: str
    mean_ratio: float
    n_links: int


class DirectionalComparison(BaseModel):
    group_a: str
    group_b: str
    a_to_b: Optional[float] = None
    b_to_a: Optional[float] = None
    stronger: Optional[str] = None
    groups: List[GroupStrength] = []


class PerCapitaRate(BaseModel):
    region_id: str
    population: Optional[float] = None
    photos: int
    per_1000: Optional[float] = None


class UsersPhotosPoint(BaseModel):
    region_id: str
    users: int
    photos: int


class RankedCity(BaseModel):
    city_id: str
    tourist_photos: int
    domestic_photos: int
    foreign_photos: int


RegionMap = Dict[str, str]
