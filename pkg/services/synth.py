"""Deterministic synthetic photo dumps with a ground-truth manifest.

The generator plants homes, trips, hotspots and dirty rows (duplicates, bad
timestamps, out-of-window photos, strays outside every city) and records each
of them, so the manifest serves as the oracle for every pipeline stage.
"""
import json
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel

from errors import ConfigError
from models.cities import City
from models.config import SynthCity, SynthSpec
from models.spatial import GridSpec
from services.registry import REGISTRY_COLUMNS
from services.spatial import EARTH_RADIUS_M, grid_for_city, grid_index, project, unproject

KM_PER_DEG_LAT = EARTH_RADIUS_M / 1000.0 * np.pi / 180.0
BAD_TIMESTAMP = "0000-00-00T00:00:00Z"
STRAY_LOCATION = "stray"
STRAY_POINT = (0.0, -30.0)
DAY = 86400


class SynthCorpus(BaseModel):
    files: Dict[str, List[str]]
    registry_rows: List[str]
    alias_rows: List[str]
    manifest: dict


def location_id(city_id: str) -> str:
    return city_id.lower()


def synth_city_bbox(city: SynthCity) -> Tuple[float, float, float, float]:
    dlat = city.half_extent_km / KM_PER_DEG_LAT
    dlon = dlat / np.cos(np.radians(city.lat))
    return (round(city.lat - dlat, 6), round(city.lon - dlon, 6), round(city.lat + dlat, 6), round(city.lon + dlon, 6))


def synth_registry_city(city: SynthCity) -> City:
    return City(
        city_id=city.city_id,
        name=city.name,
        country_code=city.country_code,
        continent=city.continent,
        population=city.population,
        centroid=(city.lat, city.lon),
        bbox=synth_city_bbox(city),
    )


class _Writer:
    """Accumulates rows per output file and keeps the ground-truth books."""

    def __init__(self):
        self.files: Dict[str, List[str]] = defaultdict(list)
        self.valid_rows: List[Tuple[str, str]] = []
        self.next_id = 0
        self.flows: Dict[str, Dict[str, int]] = defaultdict(lambda: defaultdict(int))
        self.categories: Dict[str, Dict[str, int]] = defaultdict(lambda: defaultdict(int))
        self.yearly: Dict[int, int] = defaultdict(int)

    def photo_id(self) -> str:
        self.next_id += 1
        return f"p{self.next_id:08d}"

    def add(self, user_id: str, times: np.ndarray, points: np.ndarray, location: str, label: str) -> None:
        stamps = np.datetime_as_string(times.astype("datetime64[s]"), unit="s")
        fname = f"{location}_{label}.csv"
        for stamp, (lat, lon) in zip(stamps, points):
            row = f"{self.photo_id()},{user_id},{stamp}Z,{lat:.6f},{lon:.6f}"
            self.files[fname].append(row)
            self.valid_rows.append((fname, row))
            self.yearly[int(stamp[:4])] += 1


class _CitySampler:
    """Photo locations drawn from a heavy-tailed intensity field on the city grid.

    Built-up cells within ``core_km`` of the centre get log-normal weights and
    hotspots add Gaussian bumps on top; tourists sample the field raised to a
    focus power, which piles them onto the same few cells.
    """

    def __init__(self, rng, city: SynthCity, grid: GridSpec, hotspot_gain: float):
        self.grid = grid
        _, _, max_lat, max_lon = synth_city_bbox(city)
        width, height = project(max_lat, max_lon, grid.anchor)
        self.extent = (float(width), float(height))
        self.rows, self.cols = np.divmod(np.arange(grid.n_rows * grid.n_cols), grid.n_cols)
        cs = grid.cell_size
        cx, cy = (self.cols + 0.5) * cs, (self.rows + 0.5) * cs
        # cells wholly inside the box, so every draw resolves to this city
        whole = ((self.cols + 1) * cs <= width) & ((self.rows + 1) * cs <= height)
        x0, y0 = project(city.lat, city.lon, grid.anchor)
        built = whole & (np.hypot(cx - x0, cy - y0) <= city.core_km * 1000.0)
        if not built.any():
            raise ConfigError(f"{city.city_id}: no whole grid cell lies within core_km of the centre")
        weights = np.where(built, np.exp(city.intensity_sigma * rng.standard_normal(self.rows.size)), 0.0)
        level = hotspot_gain * weights[built].mean()
        for h in city.hotspots:
            hx, hy = project(h.lat, h.lon, grid.anchor)
            bump = h.weight * np.exp(-((cx - hx) ** 2 + (cy - hy) ** 2) / (2.0 * h.spread_m ** 2))
            weights = weights + np.where(whole, level * bump, 0.0)
        self.weights = weights
        self._probabilities: Dict[float, np.ndarray] = {}

    def probabilities(self, focus: float) -> np.ndarray:
        if focus not in self._probabilities:
            w = self.weights ** focus
            self._probabilities[focus] = w / w.sum()
        return self._probabilities[focus]

    def sample(self, rng, k: int, focus: float, background: float) -> np.ndarray:
        if k == 0:
            return np.empty((0, 2))
        cs = self.grid.cell_size
        uniform = rng.random(k) < background
        n_u = int(uniform.sum())
        x, y = np.empty(k), np.empty(k)
        # one metre inside the box keeps six-decimal rounding on the right side
        x[uniform] = rng.uniform(1.0, self.extent[0] - 1.0, n_u)
        y[uniform] = rng.uniform(1.0, self.extent[1] - 1.0, n_u)
        cells = rng.choice(self.weights.size, size=k - n_u, p=self.probabilities(focus))
        x[~uniform] = (self.cols[cells] + rng.uniform(0.05, 0.95, k - n_u)) * cs
        y[~uniform] = (self.rows[cells] + rng.uniform(0.05, 0.95, k - n_u)) * cs
        lat, lon = unproject(x, y, self.grid.anchor)
        return np.column_stack([lat, lon])


def _times(start: np.datetime64, offsets_s: np.ndarray) -> np.ndarray:
    return start + np.sort(offsets_s).astype("timedelta64[s]")


def generate_corpus(spec: SynthSpec) -> SynthCorpus:
    """Build the corpus in memory; the same spec always yields the same rows."""
    rng = np.random.default_rng(spec.seed)
    cities = {c.city_id: c for c in spec.cities}
    registry_cities = {c.city_id: synth_registry_city(c) for c in spec.cities}
    grids = {c: grid_for_city(registry_cities[c], spec.cell_size) for c in cities}
    samplers = {c: _CitySampler(rng, city, grids[c], spec.hotspot_gain) for c, city in cities.items()}
    country = {c.city_id: c.country_code for c in spec.cities}
    window_start = np.datetime64(spec.window_start.replace(tzinfo=None), "s")
    window_s = int((spec.window_end - spec.window_start).total_seconds())
    writer = _Writer()
    homes: Dict[str, str] = {}
    no_home: List[str] = []
    contradictions: List[str] = []
    home_rows: List[Tuple[str, str]] = []

    def category(home: str, dest: str) -> str:
        if home == dest:
            return "resident"
        return "domestic_tourist" if country[home] == country[dest] else "foreign_tourist"

    for city_id, city in cities.items():
        loc = location_id(city_id)
        for k in range(city.residents):
            user = f"{loc}-r{k:05d}"
            homes[user] = city_id
            n_home = int(rng.integers(spec.home_photos[0], spec.home_photos[1] + 1))
            span = int(rng.integers(spec.home_span_days[0], spec.home_span_days[1] + 1)) * DAY
            first = int(rng.integers(0, window_s - span - DAY))
            offsets = np.concatenate([[first, first + span], first + rng.integers(0, span, n_home - 2)])
            times = _times(window_start, offsets)
            pts = samplers[city_id].sample(rng, n_home, 1.0, spec.background_share)

            trips = []
            row = spec.trip_table.get(city_id, {})
            for dest in cities:
                if dest == city_id:
                    continue
                if rng.random() < row.get(dest, spec.default_trip_rate):
                    trips.append((dest, int(rng.integers(spec.trip_photos[0], spec.trip_photos[1] + 1))))
            contradicts = bool(trips) and rng.random() < spec.label_contradiction_rate
            if contradicts:
                contradictions.append(user)

            writer.add(user, times, pts, loc, "unknown" if contradicts else "resident")
            home_rows.append((user, city_id))
            writer.flows[city_id][city_id] += n_home
            writer.categories[city_id]["resident"] += n_home

            for t, (dest, n_trip) in enumerate(trips):
                day = int(rng.integers(0, window_s - 3 * DAY))
                times = _times(window_start, day + rng.integers(0, 3 * DAY, n_trip))
                pts = samplers[dest].sample(rng, n_trip, spec.tourist_focus, spec.background_share)
                label = "resident" if contradicts and t == 0 else "tourist"
                writer.add(user, times, pts, location_id(dest), label)
                writer.flows[city_id][dest] += n_trip
                writer.categories[dest][category(city_id, dest)] += n_trip

        for k in range(spec.near_threshold_users):
            user = f"{loc}-n{k:05d}"
            no_home.append(user)
            if k % 2 == 0:
                # nine photos: one short of the count threshold
                first = int(rng.integers(0, window_s - 400 * DAY))
                offsets = np.concatenate([[first, first + 400 * DAY], first + rng.integers(0, 400 * DAY, 7)])
            else:
                # twelve photos spanning exactly the day threshold
                span = int(spec.min_span_days * DAY)
                first = int(rng.integers(0, window_s - span - DAY))
                offsets = np.concatenate([[first, first + span], first + rng.integers(0, span, 10)])
            pts = samplers[city_id].sample(rng, offsets.size, 1.0, spec.background_share)
            writer.add(user, _times(window_start, offsets), pts, loc, "unknown")
            writer.categories[city_id]["unknown_home"] += int(offsets.size)

        for k in range(spec.casual_users):
            user = f"{loc}-c{k:05d}"
            no_home.append(user)
            n = int(rng.integers(1, 6))
            offsets = int(rng.integers(0, window_s - 7 * DAY)) + rng.integers(0, 7 * DAY, n)
            pts = samplers[city_id].sample(rng, n, spec.tourist_focus, spec.background_share)
            writer.add(user, _times(window_start, offsets), pts, loc, "unknown")
            writer.categories[city_id]["unknown_home"] += n

    for k in range(spec.stray_photos):
        user = f"stray-u{k:05d}"
        no_home.append(user)
        pts = np.array([STRAY_POINT])
        writer.add(user, _times(window_start, rng.integers(0, window_s, 1)), pts, STRAY_LOCATION, "unknown")

    in_window = len(writer.valid_rows)

    # residents' photos from the year before the window
    n_out = int(round(spec.out_of_window_rate * in_window))
    if n_out and not home_rows:
        raise ConfigError("out-of-window photos need at least one resident user")
    for idx in rng.integers(0, len(home_rows), n_out) if n_out else []:
        user, city_id = home_rows[int(idx)]
        back = int(rng.integers(1, 365 * DAY))
        pts = samplers[city_id].sample(rng, 1, 1.0, spec.background_share)
        writer.add(user, np.array([window_start - np.timedelta64(back, "s")]), pts, location_id(city_id), "resident")

    valid = list(writer.valid_rows)
    n_bad = int(round(spec.bad_timestamp_rate * len(valid)))
    for idx in rng.integers(0, len(valid), n_bad) if n_bad else []:
        fname, row = valid[int(idx)]
        _, user, _, lat, lon = row.split(",")
        writer.files[fname].append(f"{writer.photo_id()},{user},{BAD_TIMESTAMP},{lat},{lon}")

    base_rows = len(valid) + n_bad
    n_dup = int(round(spec.duplicate_rate * base_rows))
    duplicated = []
    for idx in np.sort(rng.integers(0, len(valid), n_dup)) if n_dup else []:
        fname, row = valid[int(idx)]
        writer.files[fname].append(row)
        duplicated.append(row.split(",", 1)[0])

    hotspot_cells = {}
    for city_id, city in cities.items():
        cells = [grid_index((h.lat, h.lon), grids[city_id]) for h in city.hotspots]
        hotspot_cells[city_id] = [list(c) for c in cells if c is not None]

    manifest = {
        "seed": spec.seed,
        "rows_written": base_rows + n_dup,
        "records_base": base_rows,
        "in_window_records": in_window,
        "duplicates": {"count": n_dup, "photo_ids": duplicated},
        "bad_timestamps": n_bad,
        "out_of_window": n_out,
        "unassigned": spec.stray_photos,
        "homes": dict(sorted(homes.items())),
        "no_home_users": sorted(no_home),
        "label_contradictions": sorted(contradictions),
        "trip_table": {o: dict(sorted(d.items())) for o, d in sorted(writer.flows.items())},
        "city_categories": {c: dict(sorted(d.items())) for c, d in sorted(writer.categories.items())},
        "hotspot_cells": hotspot_cells,
        "yearly_photos": {str(y): n for y, n in sorted(writer.yearly.items())},
        "cell_size": spec.cell_size,
    }

    registry_rows = [",".join(REGISTRY_COLUMNS)]
    for city_id in sorted(registry_cities):
        c = registry_cities[city_id]
        registry_rows.append(",".join(str(v) for v in (
            c.city_id, c.name, c.country_code, c.continent.value, int(c.population),
            c.centroid[0], c.centroid[1], *c.bbox,
        )))
    alias_rows = ["location_id,city_id"] + [f"{location_id(c)},{c}" for c in sorted(cities)]

    logger.info(
        "synth: {} users, {} rows ({} duplicates, {} bad timestamps, {} out of window)",
        len(homes) + len(no_home), manifest["rows_written"], n_dup, n_bad, n_out,
    )
    return SynthCorpus(files=dict(writer.files), registry_rows=registry_rows, alias_rows=alias_rows, manifest=manifest)


def write_corpus(corpus: SynthCorpus, out_dir: Path) -> Dict[str, Path]:
    """Write photos/, registry.csv, aliases.csv and manifest.json under ``out_dir``."""
    out_dir = Path(out_dir)
    photos = out_dir / "photos"
    photos.mkdir(parents=True, exist_ok=True)
    header = "photo_id,user_id,taken_at,lat,lon"
    for fname in sorted(corpus.files):
        (photos / fname).write_text("\n".join([header] + corpus.files[fname]) + "\n", encoding="utf-8")
    paths = {
        "photos": photos,
        "registry": out_dir / "registry.csv",
        "aliases": out_dir / "aliases.csv",
        "manifest": out_dir / "manifest.json",
    }
    paths["registry"].write_text("\n".join(corpus.registry_rows) + "\n", encoding="utf-8")
    paths["aliases"].write_text("\n".join(corpus.alias_rows) + "\n", encoding="utf-8")
    paths["manifest"].write_text(json.dumps(corpus.manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths


def synth_generate(spec: SynthSpec, out_dir: Optional[Path] = None):
    corpus = generate_corpus(spec)
    if out_dir is not None:
        write_corpus(corpus, out_dir)
    return corpus