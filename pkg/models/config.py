"""Run configuration and synthetic-corpus specification models.

PipelineConfig reads, in increasing priority: model defaults, GEOPHOTO_*
environment variables (a local .env is honoured), the flat JSON config file,
and finally CLI flags.
"""
import json
import re
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, BaseSettings, ValidationError, root_validator, validator

from errors import ConfigError

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
DEFAULT_REGISTRY = DATA_DIR / "registry_top10.csv"
DEFAULT_ALIASES = DATA_DIR / "aliases_top10.csv"

DEFAULT_WINDOW_START = datetime(2007, 1, 1, tzinfo=timezone.utc)
DEFAULT_WINDOW_END = datetime(2010, 1, 1, tzinfo=timezone.utc)
DECILES = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]

_REGION_SET = re.compile(r"^(all|top(\d+)(\+rest)?)$")


def _as_utc(v: datetime) -> datetime:
    if v.tzinfo is None:
        return v.replace(tzinfo=timezone.utc)
    return v.astimezone(timezone.utc)


class RestBucketRules(BaseModel):
    """How cities outside the top set are pooled into rest regions."""

    by_country: Dict[str, str] = {"US": "rest_of_US"}
    by_continent: Dict[str, str] = {"Europe": "rest_of_EU"}
    fallback: str = "rest_of_world"
    # bucket populations in persons; unset buckets sum their member cities
    populations: Dict[str, float] = {}


class PipelineConfig(BaseSettings):
    inputs: List[Path] = []
    registry: Path = DEFAULT_REGISTRY
    aliases: Optional[Path] = DEFAULT_ALIASES
    window_start: datetime = DEFAULT_WINDOW_START
    window_end: datetime = DEFAULT_WINDOW_END
    min_photos: int = 10
    min_span_days: float = 180.0
    cell_size: float = 500.0
    hotspots: int = 12
    coverage_max_n: int = 30
    min_density_cells: int = 30
    regions: str = "top10+rest"
    rest_rules: RestBucketRules = RestBucketRules()
    quantiles: List[float] = DECILES
    categories: str = "all"
    city: Optional[str] = None
    continent_groups: Tuple[str, str] = ("North America", "Europe")
    out: Path = Path("out")
    formats: List[str] = ["csv", "json", "geojson"]
    workers: int = 1
    publish: bool = False
    # False records a non-converged density fit in the report instead of aborting
    fail_on_nonconvergence: bool = True

    class Config:
        env_prefix = "GEOPHOTO_"
        env_file = ".env"

    @validator("window_start", "window_end")
    def _utc_window(cls, v):
        return _as_utc(v)

    @validator("min_photos", "hotspots", "coverage_max_n", "workers", "min_density_cells")
    def _positive_int(cls, v, field):
        if v < 1:
            raise ValueError(f"{field.name} must be positive")
        return v

    @validator("min_span_days", "cell_size")
    def _positive_float(cls, v, field):
        if v <= 0:
            raise ValueError(f"{field.name} must be positive")
        return v

    @validator("regions")
    def _region_set(cls, v):
        if not _REGION_SET.match(v):
            raise ValueError(f"region set {v!r} is not one of all, top<N>, top<N>+rest")
        return v

    @validator("quantiles")
    def _quantiles(cls, v):
        if not v or any(not 0.0 < q < 1.0 for q in v):
            raise ValueError("quantiles must lie strictly between 0 and 1")
        if 0.5 not in v:
            raise ValueError("quantiles must include 0.5, the normalization point")
        return sorted(set(v))

    @validator("formats", each_item=True)
    def _format(cls, v):
        if v not in ("csv", "json", "geojson"):
            raise ValueError(f"unknown export format {v!r}")
        return v

    @validator("categories")
    def _categories(cls, v):
        allowed = {"resident", "domestic", "foreign", "total"}
        if v != "all" and not set(v.split(",")) <= allowed:
            raise ValueError(f"categories must be 'all' or a comma list of {sorted(allowed)}")
        return v

    @validator("registry")
    def _registry_exists(cls, v: Path):
        if not v.is_file():
            raise ValueError(f"registry file {v} does not exist")
        return v

    @validator("aliases")
    def _aliases_exist(cls, v: Optional[Path]):
        if v is not None and not v.is_file():
            raise ValueError(f"alias file {v} does not exist")
        return v

    @validator("inputs", each_item=True)
    def _input_exists(cls, v: Path):
        if not v.exists():
            raise ValueError(f"input path {v} does not exist")
        return v

    @root_validator(skip_on_failure=True)
    def _window_order(cls, values):
        if values["window_start"] >= values["window_end"]:
            raise ValueError("window start must be before window end")
        return values

    @property
    def window(self) -> Tuple[datetime, datetime]:
        return self.window_start, self.window_end

    @property
    def category_list(self) -> List[str]:
        if self.categories == "all":
            return ["resident", "domestic", "foreign", "total"]
        return self.categories.split(",")

    def top_n(self) -> Optional[int]:
        m = _REGION_SET.match(self.regions)
        return int(m.group(2)) if m.group(2) else None

    def with_rest(self) -> bool:
        return self.regions == "all" or self.regions.endswith("+rest")


class SynthHotspot(BaseModel):
    lat: float
    lon: float
    weight: float
    spread_m: float = 250.0

    @validator("weight", "spread_m")
    def _positive(cls, v):
        if v <= 0:
            raise ValueError("hotspot weight and spread must be positive")
        return v


class SynthCity(BaseModel):
    city_id: str
    name: str
    country_code: str
    continent: str
    population: float
    lat: float
    lon: float
    half_extent_km: float = 15.0
    # built-up disc around the centre where photo intensity lives
    core_km: float = 5.0
    # log-scale spread of per-cell intensities
    intensity_sigma: float = 1.5
    residents: int = 100
    hotspots: List[SynthHotspot] = []

    @validator("residents")
    def _non_negative(cls, v):
        if v < 0:
            raise ValueError("residents must be non-negative")
        return v

    @validator("core_km", "intensity_sigma")
    def _positive(cls, v, field):
        if v <= 0:
            raise ValueError(f"{field.name} must be positive")
        return v


class SynthSpec(BaseModel):
    seed: int = 42
    window_start: datetime = DEFAULT_WINDOW_START
    window_end: datetime = DEFAULT_WINDOW_END
    cities: List[SynthCity]
    home_photos: Tuple[int, int] = (12, 60)
    home_span_days: Tuple[int, int] = (200, 900)
    trip_photos: Tuple[int, int] = (1, 9)
    trip_table: Dict[str, Dict[str, float]] = {}
    default_trip_rate: float = 0.1
    background_share: float = 0.02
    tourist_focus: float = 2.0
    # hotspot intensity relative to the mean built-up cell
    hotspot_gain: float = 10.0
    near_threshold_users: int = 0
    casual_users: int = 0
    duplicate_rate: float = 0.0933
    bad_timestamp_rate: float = 0.0001
    out_of_window_rate: float = 0.05
    label_contradiction_rate: float = 0.01
    stray_photos: int = 0
    cell_size: float = 500.0
    min_photos: int = 10
    min_span_days: float = 180.0

    @validator("window_start", "window_end")
    def _utc(cls, v):
        return _as_utc(v)

    @validator(
        "default_trip_rate",
        "background_share",
        "duplicate_rate",
        "bad_timestamp_rate",
        "out_of_window_rate",
        "label_contradiction_rate",
    )
    def _rate(cls, v, field):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{field.name} must lie in [0, 1]")
        return v

    @validator("trip_table")
    def _trip_rates(cls, v):
        for origin, row in v.items():
            for dest, rate in row.items():
                if not 0.0 <= rate <= 1.0:
                    raise ValueError(f"trip rate {origin}->{dest} must lie in [0, 1]")
        return v

    @root_validator(skip_on_failure=True)
    def _satisfiable(cls, values):
        lo, hi = values["home_photos"]
        if lo > hi or values["home_span_days"][0] > values["home_span_days"][1]:
            raise ValueError("ranges must be (low, high)")
        if lo < max(2, values["min_photos"]):
            raise ValueError(
                f"home photo budget {lo} is below min_photos {values['min_photos']}; planted homes cannot be recovered"
            )
        if values["home_span_days"][0] <= values["min_span_days"]:
            raise ValueError("planted home spans must exceed min_span_days")
        if values["trip_photos"][1] >= values["min_photos"]:
            raise ValueError("trip photo budget must stay below min_photos so trips never look like homes")
        window_days = (values["window_end"] - values["window_start"]).days
        if values["home_span_days"][1] >= window_days:
            raise ValueError("home spans must fit inside the generation window")
        ids = [c.city_id for c in values["cities"]]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate synthetic city ids")
        unknown = {k for k in values["trip_table"]} | {d for row in values["trip_table"].values() for d in row}
        if unknown - set(ids):
            raise ValueError(f"trip table names unknown cities {sorted(unknown - set(ids))}")
        return values


_DATE_ONLY = re.compile(r"^\d{4}-\d{2}-\d{2}$")


def parse_window(raw: str) -> Tuple[str, str]:
    """Split a ``start..end`` window flag; bare dates mean midnight UTC."""
    start, sep, end = raw.partition("..")
    if not sep or not start or not end:
        raise ValueError(f"window {raw!r} must look like <start>..<end>")
    return tuple(f"{v}T00:00:00+00:00" if _DATE_ONLY.match(v) else v for v in (start.strip(), end.strip()))


def load_config(path: Optional[Path] = None, overrides: Optional[Dict] = None) -> PipelineConfig:
    """Flat JSON config file, then CLI overrides, on top of env and defaults."""
    values: Dict = {}
    if path is not None:
        try:
            values = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(values, dict):
            raise ConfigError(f"config {path} must be a flat JSON object")
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    window = values.pop("window", None)
    try:
        if window is not None:
            values["window_start"], values["window_end"] = parse_window(window)
        return PipelineConfig(**values)
    except (ValidationError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_synth_spec(path: Path, overrides: Optional[Dict] = None) -> SynthSpec:
    try:
        values = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read synth spec {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"synth spec {path} is not valid JSON: {exc}") from exc
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return SynthSpec(**values)
    except ValidationError as exc:
        raise ConfigError(f"invalid synth spec: {exc}") from exc
