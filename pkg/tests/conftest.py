from datetime import datetime, timezone
from pathlib import Path

import pytest

from models.cities import City, CityRegistry
from models.config import PipelineConfig, SynthCity, SynthHotspot, SynthSpec
from models.photos import PhotoRecord, SourceLabel
from services.synth import synth_generate

UTC = timezone.utc


def utc(*args) -> datetime:
    return datetime(*args, tzinfo=UTC)


def make_record(photo_id, user_id, when, lat=40.75, lon=-73.98, location_id="nyc", label=SourceLabel.tourist):
    return PhotoRecord(
        photo_id=photo_id,
        user_id=user_id,
        taken_at=when,
        lat=lat,
        lon=lon,
        location_id=location_id,
        source_label=label,
    )


def write_dump(directory: Path, name: str, rows, header="photo_id,user_id,taken_at,lat,lon") -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / name
    path.write_text("\n".join([header] + list(rows)) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def registry() -> CityRegistry:
    """Two US cities and one British city with non-overlapping boxes."""
    cities = [
        City(city_id="NYC", name="New York", country_code="US", continent="North America", population=8_000_000,
             centroid=(40.7128, -74.0060), bbox=(40.49, -74.27, 40.92, -73.68)),
        City(city_id="SFO", name="San Francisco", country_code="US", continent="North America", population=800_000,
             centroid=(37.7749, -122.4194), bbox=(37.70, -122.52, 37.83, -122.35)),
        City(city_id="LON", name="London", country_code="GB", continent="Europe", population=7_800_000,
             centroid=(51.5074, -0.1278), bbox=(51.28, -0.51, 51.70, 0.34)),
    ]
    return CityRegistry(cities, {"nyc": "NYC", "sfo": "SFO", "london": "LON"})


def small_synth_spec(**overrides) -> SynthSpec:
    cities = [
        SynthCity(city_id="AAA", name="Alpha", country_code="US", continent="North America",
                  population=2_000_000, lat=40.0, lon=-75.0, half_extent_km=8.0, residents=40,
                  hotspots=[SynthHotspot(lat=40.01, lon=-75.01, weight=4),
                            SynthHotspot(lat=39.98, lon=-74.97, weight=2)]),
        SynthCity(city_id="BBB", name="Beta", country_code="US", continent="North America",
                  population=1_000_000, lat=35.0, lon=-90.0, half_extent_km=8.0, residents=30,
                  hotspots=[SynthHotspot(lat=35.02, lon=-90.02, weight=3)]),
        SynthCity(city_id="CCC", name="Gamma", country_code="FR", continent="Europe",
                  population=1_500_000, lat=48.0, lon=2.0, half_extent_km=8.0, residents=30,
                  hotspots=[SynthHotspot(lat=48.01, lon=2.01, weight=5),
                            SynthHotspot(lat=47.97, lon=1.98, weight=2)]),
        SynthCity(city_id="DDD", name="Delta", country_code="DE", continent="Europe",
                  population=1_200_000, lat=52.0, lon=13.0, half_extent_km=8.0, residents=30,
                  hotspots=[SynthHotspot(lat=52.01, lon=13.01, weight=3)]),
    ]
    values = dict(
        seed=7,
        cities=cities,
        # North Americans favour Europe; Europeans mostly travel within Europe
        trip_table={
            "AAA": {"BBB": 0.05, "CCC": 0.6, "DDD": 0.5},
            "BBB": {"AAA": 0.05, "CCC": 0.5, "DDD": 0.4},
            "CCC": {"AAA": 0.02, "BBB": 0.0, "DDD": 0.6},
            "DDD": {"AAA": 0.02, "BBB": 0.0, "CCC": 0.6},
        },
        default_trip_rate=0.05,
        near_threshold_users=4,
        casual_users=5,
        stray_photos=3,
    )
    values.update(overrides)
    return SynthSpec(**values)


@pytest.fixture(scope="session")
def synth_corpus(tmp_path_factory):
    """A small corpus written once per session with its manifest."""
    out = tmp_path_factory.mktemp("corpus")
    corpus = synth_generate(small_synth_spec(), out)
    return {
        "dir": out,
        "photos": out / "photos",
        "registry": out / "registry.csv",
        "aliases": out / "aliases.csv",
        "manifest": corpus.manifest,
    }


def corpus_config(corpus, out: Path, **overrides) -> PipelineConfig:
    values = dict(
        inputs=[corpus["photos"]],
        registry=corpus["registry"],
        aliases=corpus["aliases"],
        out=out,
        regions="all",
        hotspots=3,
        coverage_max_n=5,
        min_density_cells=30,
        fail_on_nonconvergence=False,
    )
    values.update(overrides)
    return PipelineConfig(**values)
