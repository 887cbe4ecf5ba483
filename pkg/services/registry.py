"""City registry loading, photo-to-city resolution and great-circle distances."""
import math
from pathlib import Path
from typing import Optional, Tuple

import pandas as pd
from loguru import logger
from pydantic import ValidationError

from errors import DataError
from models.cities import City, CityRegistry
from models.photos import PhotoRecord

EARTH_RADIUS_KM = 6371.0

REGISTRY_COLUMNS = [
    "city_id", "name", "country_code", "continent", "population",
    "lat", "lon", "min_lat", "min_lon", "max_lat", "max_lon",
]
# population is given either in persons or, under this header, in millions
MILLIONS_COLUMN = "population_millions"
ALIAS_COLUMNS = ["location_id", "city_id"]


def _population_column(path: Path, frame: pd.DataFrame) -> Tuple[str, float]:
    present = [c for c in ("population", MILLIONS_COLUMN) if c in frame.columns]
    if len(present) != 1:
        raise DataError(f"{path} needs exactly one of the columns population, {MILLIONS_COLUMN}")
    return present[0], 1_000_000.0 if present[0] == MILLIONS_COLUMN else 1.0


def _read_table(path: Path, columns: list) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise DataError(f"{path} does not exist")
    except pd.errors.EmptyDataError:
        raise DataError(f"{path} has no header")
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise DataError(f"{path} is missing columns {missing}")
    return frame


def load_registry(path: Path, aliases_path: Optional[Path] = None) -> CityRegistry:
    """Load the registry CSV (and optional alias CSV) into an immutable registry.

    Duplicate ids, bad country codes and malformed boxes abort the load with the
    offending CSV row number (header is row 1).
    """
    frame = _read_table(Path(path), [c for c in REGISTRY_COLUMNS if c != "population"])
    population_column, scale = _population_column(path, frame)
    cities = []
    seen = {}
    for idx, row in enumerate(frame.to_dict("records")):
        row_no = idx + 2
        city_id = row["city_id"].strip()
        if city_id in seen:
            raise DataError(f"{path} row {row_no}: duplicate city_id {city_id!r} (first at row {seen[city_id]})")
        try:
            city = City(
                city_id=city_id,
                name=row["name"],
                country_code=row["country_code"].strip(),
                continent=row["continent"].strip(),
                population=float(row[population_column]) * scale,
                centroid=(float(row["lat"]), float(row["lon"])),
                bbox=(
                    float(row["min_lat"]), float(row["min_lon"]),
                    float(row["max_lat"]), float(row["max_lon"]),
                ),
            )
        except (ValueError, ValidationError) as exc:
            raise DataError(f"{path} row {row_no}: {exc}")
        seen[city_id] = row_no
        cities.append(city)

    aliases = {}
    if aliases_path is not None:
        alias_frame = _read_table(Path(aliases_path), ALIAS_COLUMNS)
        for idx, row in enumerate(alias_frame.to_dict("records")):
            if row["city_id"] not in seen:
                raise DataError(f"{aliases_path} row {idx + 2}: alias to unknown city {row['city_id']!r}")
            aliases[row["location_id"].strip()] = row["city_id"].strip()

    if not cities:
        logger.warning("registry {} is empty", path)
    logger.info("loaded {} cities and {} aliases from {}", len(cities), len(aliases), path)
    return CityRegistry(cities, aliases)


def locate_point(lat: float, lon: float, registry: CityRegistry) -> Optional[str]:
    for city in registry.cities_by_area:
        if city.contains(lat, lon):
            return city.city_id
    return None


def locate_city(record: PhotoRecord, registry: CityRegistry) -> Optional[str]:
    """Alias hit first, then the smallest containing bbox; None when unassigned."""
    city_id = registry.alias(record.location_id)
    if city_id is not None:
        return city_id
    return locate_point(record.lat, record.lon, registry)


def locate_frame(frame: pd.DataFrame, registry: CityRegistry) -> pd.Series:
    """Vectorised locate_city over a records frame; unassigned rows get None."""
    city = frame["location_id"].map(registry.aliases)
    pending = city.isna().to_numpy()
    lat = frame["lat"].to_numpy()
    lon = frame["lon"].to_numpy()
    values = city.to_numpy(dtype=object)
    for c in registry.cities_by_area:
        min_lat, min_lon, max_lat, max_lon = c.bbox
        hit = pending & (lat >= min_lat) & (lat <= max_lat) & (lon >= min_lon) & (lon <= max_lon)
        values[hit] = c.city_id
        pending &= ~hit
    values[pending] = None
    return pd.Series(values, index=frame.index, dtype=object)


def great_circle_distance(a: Tuple[float, float], b: Tuple[float, float]) -> float:
    """Haversine distance in km on a sphere of radius 6371 km."""
    lat1, lon1 = map(math.radians, a)
    lat2, lon2 = map(math.radians, b)
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    # clamp rounding noise so antipodes stay defined
    h = min(1.0, max(0.0, h))
    return 2 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))


def records_frame(records, registry: CityRegistry) -> pd.DataFrame:
    """Tabulate cleaned records and attach the resolved ``city_id`` column."""
    frame = pd.DataFrame.from_records(
        [
            (r.photo_id, r.user_id, r.taken_at, r.lat, r.lon, r.location_id, r.source_label.value)
            for r in records
        ],
        columns=["photo_id", "user_id", "taken_at", "lat", "lon", "location_id", "source_label"],
    )
    frame["taken_at"] = pd.to_datetime(frame["taken_at"], utc=True)
    frame["lat"] = frame["lat"].astype(float)
    frame["lon"] = frame["lon"].astype(float)
    frame["city_id"] = locate_frame(frame, registry)
    unassigned = int(frame["city_id"].isna().sum())
    if unassigned:
        logger.info("{} of {} records fall in no registry city", unassigned, len(frame))
    return frame
