import re
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, root_validator, validator

_ISO2 = re.compile(r"^[A-Z]{2}$")

# Largest extent per axis, in degrees, accepted for a city bounding box.
MAX_BBOX_SPAN_DEG = 5.0


class Continent(str, Enum):
    africa = "Africa"
    asia = "Asia"
    europe = "Europe"
    north_america = "North America"
    oceania = "Oceania"
    south_america = "South America"


class City(BaseModel):
    city_id: str
    name: str
    country_code: str
    continent: Continent
    population: float
    centroid: Tuple[float, float]
    bbox: Tuple[float, float, float, float]

    class Config:
        allow_mutation = False

    @validator("country_code")
    def _iso2(cls, v: str):
        if not _ISO2.match(v):
            raise ValueError(f"invalid country code {v!r}")
        return v

    @validator("population")
    def _positive_population(cls, v):
        if v <= 0:
            raise ValueError("population must be positive")
        return v

    @root_validator(skip_on_failure=True)
    def _bbox_contains_centroid(cls, values):
        min_lat, min_lon, max_lat, max_lon = values["bbox"]
        lat, lon = values["centroid"]
        if not (min_lat < max_lat and min_lon < max_lon):
            raise ValueError("malformed bbox: min must be below max on both axes")
        if max_lat - min_lat >= MAX_BBOX_SPAN_DEG or max_lon - min_lon >= MAX_BBOX_SPAN_DEG:
            raise ValueError(f"bbox spans {MAX_BBOX_SPAN_DEG} degrees or more")
        if not (min_lat <= lat <= max_lat and min_lon <= lon <= max_lon):
            raise ValueError("bbox does not contain centroid")
        return values

    @property
    def bbox_area(self) -> float:
        min_lat, min_lon, max_lat, max_lon = self.bbox
        return (max_lat - min_lat) * (max_lon - min_lon)

    def contains(self, lat: float, lon: float) -> bool:
        min_lat, min_lon, max_lat, max_lon = self.bbox
        return min_lat <= lat <= max_lat and min_lon <= lon <= max_lon


class Region(BaseModel):
    """A flow-network node: a single city or one of the rest buckets."""

    region_id: str
    kind: str  # "city" or "rest"
    country_code: Optional[str] = None
    continent: Optional[Continent] = None
    centroid: Optional[Tuple[float, float]] = None

    class Config:
        allow_mutation = False


class CityRegistry:
    """Immutable city table plus the location alias table."""

    def __init__(self, cities: List[City], aliases: Optional[Dict[str, str]] = None):
        self._cities: Dict[str, City] = {c.city_id: c for c in cities}
        self._aliases: Dict[str, str] = dict(aliases or {})
        # smallest box first, then id, so nested boxes resolve to the most specific city
        self._by_area: List[City] = sorted(cities, key=lambda c: (c.bbox_area, c.city_id))

    def __len__(self) -> int:
        return len(self._cities)

    def __contains__(self, city_id: str) -> bool:
        return city_id in self._cities

    def __getitem__(self, city_id: str) -> City:
        return self._cities[city_id]

    @property
    def city_ids(self) -> List[str]:
        return sorted(self._cities)

    @property
    def cities(self) -> List[City]:
        return [self._cities[c] for c in self.city_ids]

    @property
    def aliases(self) -> Dict[str, str]:
        return dict(self._aliases)

    @property
    def cities_by_area(self) -> List[City]:
        return list(self._by_area)

    def alias(self, location_id: str) -> Optional[str]:
        return self._aliases.get(location_id)
