"""Write the computed results as CSV / JSON / GeoJSON files.

Every writer sorts its rows and uses fixed key order so identical results give
identical bytes. Undefined metrics are written as empty CSV cells and JSON null.
"""
import json
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from shapely.geometry import MultiPolygon, Polygon, box, mapping
from shapely.geometry.polygon import orient
from shapely.ops import unary_union

from errors import DataError
from models.fits import FitResult
from models.results import CitySpatialResult, FlowResults, PipelineResults
from models.spatial import DensityField, GridSpec, Hotspot
from services.homes import homes_frame
from services.spatial import density_cdf_points, unproject

# enough digits for float64 to parse back to the same value
RATIO_FLOAT_FORMAT = "%.17g"
SPATIAL_DIR = "spatial"


def _write_csv(frame: pd.DataFrame, path: Path, float_format: Optional[str] = None) -> Path:
    frame.to_csv(path, index=False, float_format=float_format)
    return path


def _write_json(payload, path: Path) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "isoformat"):
        return value.isoformat()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def _fit_dict(fit: Optional[FitResult]) -> Optional[dict]:
    return None if fit is None else json.loads(fit.json())


# --- flows -------------------------------------------------------------------


def matrix_frame(regions: List[str], matrix) -> pd.DataFrame:
    frame = pd.DataFrame(matrix, index=regions, columns=regions)
    frame.index.name = "origin"
    return frame.reset_index()


def write_ratio_matrix(regions: List[str], ratio: List[List[Optional[float]]], path: Path) -> Path:
    values = [[np.nan if v is None else float(v) for v in row] for row in ratio]
    return _write_csv(matrix_frame(regions, values), path, float_format=RATIO_FLOAT_FORMAT)


def read_ratio_matrix(path: Path) -> Tuple[List[str], List[List[Optional[float]]]]:
    """Parse a relative-strength matrix written by ``write_ratio_matrix``."""
    frame = pd.read_csv(path, index_col="origin", dtype={"origin": str}, keep_default_na=False, na_values=[""],
                        float_precision="round_trip")
    regions = [str(r) for r in frame.index]
    if list(frame.columns) != regions:
        raise DataError(f"{path}: row and column regions differ")
    ratio = [[None if pd.isna(v) else float(v) for v in row] for row in frame.to_numpy()]
    return regions, ratio


def flow_edges_frame(flows: FlowResults) -> pd.DataFrame:
    """Every ordered non-loop region pair with its photos, model value and ratio."""
    regions = flows.od.regions
    rows = []
    for i, origin in enumerate(regions):
        for j, dest in enumerate(regions):
            if i == j:
                continue
            model = ratio = None
            if flows.null_model is not None:
                model = flows.null_model.model[i][j]
                ratio = flows.null_model.ratio[i][j]
            rows.append({
                "origin": origin,
                "destination": dest,
                "photos": flows.od.a[i][j],
                "domestic_photos": flows.od.domestic[i][j],
                "model": model,
                "ratio": ratio,
            })
    return pd.DataFrame(rows, columns=["origin", "destination", "photos", "domestic_photos", "model", "ratio"])


def export_flows(flows: FlowResults, out_dir: Path, formats: Iterable[str]) -> List[Path]:
    written = []
    if "csv" in formats:
        regions = flows.od.regions
        written.append(_write_csv(pd.DataFrame([r.dict() for r in flows.ranking],
                                               columns=["city_id", "tourist_photos", "domestic_photos",
                                                        "foreign_photos"]), out_dir / "ranking.csv"))
        written.append(_write_csv(matrix_frame(regions, flows.od.a), out_dir / "od_matrix.csv"))
        written.append(_write_csv(matrix_frame(regions, flows.od.domestic), out_dir / "od_domestic.csv"))
        written.append(_write_csv(pd.DataFrame(flows.marginals.dict()), out_dir / "marginals.csv"))
        written.append(_write_csv(pd.DataFrame([p.dict() for p in flows.per_capita],
                                               columns=["region_id", "population", "photos", "per_1000"]),
                                  out_dir / "per_capita.csv"))
        written.append(_write_csv(flow_edges_frame(flows), out_dir / "flow_edges.csv"))
        if flows.null_model is not None:
            written.append(write_ratio_matrix(regions, flows.null_model.ratio, out_dir / "null_model_ratios.csv"))
        written.append(_write_csv(pd.DataFrame([a.dict() for a in flows.attractiveness],
                                               columns=["city_id", "domestic_per_capita", "foreign_per_capita",
                                                        "domestic_photos", "foreign_photos"]),
                                  out_dir / "attractiveness.csv"))
        written.append(_write_csv(pd.DataFrame([b.dict() for b in flows.city_breakdowns],
                                               columns=["city_id", "resident", "domestic_tourist", "foreign_tourist",
                                                        "classified_photos", "unknown_home_photos"]),
                                  out_dir / "city_breakdown.csv"))
        written.append(_write_csv(pd.DataFrame([b.dict() for b in flows.resident_breakdowns],
                                               columns=["region_id", "home", "domestic", "foreign", "photos"]),
                                  out_dir / "resident_breakdown.csv"))
        written.append(_write_csv(pd.DataFrame([p.dict() for p in flows.decay_points],
                                               columns=["origin", "destination", "distance_km", "ratio",
                                                        "residual"]),
                                  out_dir / "distance_decay.csv"))
        written.append(_write_csv(pd.DataFrame([p.dict() for p in flows.users_photos],
                                               columns=["region_id", "users", "photos"]),
                                  out_dir / "users_vs_photos.csv"))
    if "json" in formats:
        groups = {
            "groups": [g.dict() for g in flows.groups],
            "directional": flows.directional.dict(exclude={"groups"}) if flows.directional else None,
            "region_map": flows.region_map,
        }
        written.append(_write_json(groups, out_dir / "continent_groups.json"))
    return written


# --- spatial -----------------------------------------------------------------


def cell_polygon(spec: GridSpec, row: int, col: int) -> Polygon:
    """Lon/lat rectangle of one grid cell."""
    s = spec.cell_size
    lat0, lon0 = unproject(col * s, row * s, spec.anchor)
    lat1, lon1 = unproject((col + 1) * s, (row + 1) * s, spec.anchor)
    return box(float(lon0), float(lat0), float(lon1), float(lat1))


def hotspot_geometry(spec: GridSpec, hotspot: Hotspot):
    """Union of a hotspot's cells, exterior rings counter-clockwise."""
    merged = unary_union([cell_polygon(spec, r, c) for r, c in hotspot.cells])
    if isinstance(merged, Polygon):
        return orient(merged, sign=1.0)
    return MultiPolygon([orient(p, sign=1.0) for p in merged.geoms])


def hotspots_geojson(spec: GridSpec, hotspots: List[Hotspot], category: str = "total") -> dict:
    features = []
    for h in hotspots:
        features.append({
            "type": "Feature",
            "geometry": mapping(hotspot_geometry(spec, h)),
            "properties": {
                "city_id": spec.city_id,
                "category": category,
                "rank": h.rank,
                "activity": h.activity,
                "cells": len(h.cells),
                "threshold": h.threshold_a,
            },
        })
    return {"type": "FeatureCollection", "features": features}


def density_geojson(field: DensityField) -> dict:
    total = field.layer("total")
    features = []
    for r, c in zip(*np.nonzero(total)):
        features.append({
            "type": "Feature",
            "geometry": mapping(orient(cell_polygon(field.grid, int(r), int(c)), sign=1.0)),
            "properties": {
                "row": int(r),
                "col": int(c),
                **{layer: int(field.layer(layer)[r, c]) for layer in ("resident", "domestic", "foreign", "total")},
            },
        })
    return {"type": "FeatureCollection", "features": features}


def density_frame(field: DensityField) -> pd.DataFrame:
    rows, cols = np.nonzero(field.layer("total"))
    frame = pd.DataFrame({"row": rows, "col": cols})
    for layer in ("resident", "domestic", "foreign", "unknown_home", "total"):
        frame[layer] = field.layer(layer)[rows, cols]
    return frame


def export_city(city: CitySpatialResult, out_dir: Path, formats: Iterable[str]) -> List[Path]:
    city_dir = out_dir / SPATIAL_DIR / city.city_id
    city_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        written.append(_write_csv(density_frame(city.field), city_dir / "density.csv"))
        for category in sorted(set(city.fits) | set(city.fit_errors)):
            cdf = density_cdf_points(city.field, category, city.fits.get(category))
            written.append(_write_csv(cdf, city_dir / f"density_cdf_{category}.csv"))
    if "geojson" in formats:
        written.append(_write_json(density_geojson(city.field), city_dir / "density.geojson"))
        written.append(_write_json(hotspots_geojson(city.field.grid, city.hotspots), city_dir / "hotspots.geojson"))
        for category, spots in sorted(city.category_hotspots.items()):
            written.append(_write_json(hotspots_geojson(city.field.grid, spots, category),
                                       city_dir / f"hotspots_{category}.geojson"))
    return written


def spatial_tables(cities: List[CitySpatialResult]) -> Dict[str, pd.DataFrame]:
    variances, curves, ratios, listing, coverage, ranks, exponents = [], [], [], [], [], [], []
    for city in cities:
        for category in sorted(set(city.fits) | set(city.fit_errors)):
            fit = city.fits.get(category)
            variances.append({
                "city_id": city.city_id,
                "category": category,
                "mu": fit["mu"] if fit else None,
                "sigma2": fit["sigma2"] if fit else None,
                "loglik": fit.goodness if fit else None,
                "n_cells": fit.n_points if fit else None,
                "converged": fit.converged if fit else None,
                "flag": fit.flag if fit else None,
                "error": city.fit_errors.get(category),
            })
        for category, curve in sorted(city.curves.items()):
            for (q, normalized), cells in zip(curve.points, curve.cells):
                curves.append({"city_id": city.city_id, "category": category, "q": q,
                               "cells": cells, "normalized_area": normalized})
        ratios.append({"city_id": city.city_id, "domestic": city.area_ratio[0], "foreign": city.area_ratio[1]})
        for h in city.hotspots:
            lat, lon = unproject(
                (np.mean([c for _, c in h.cells]) + 0.5) * city.field.grid.cell_size,
                (np.mean([r for r, _ in h.cells]) + 0.5) * city.field.grid.cell_size,
                city.field.grid.anchor,
            )
            listing.append({"city_id": city.city_id, "rank": h.rank, "activity": h.activity,
                            "cells": len(h.cells), "lat": float(lat), "lon": float(lon), "threshold": h.threshold_a})
        for p in city.coverage:
            coverage.append({"city_id": city.city_id, **p.dict()})
        for profile in city.rank_profiles:
            normalized = profile.normalized or [None] * len(profile.activities)
            for rank, (act, norm) in enumerate(zip(profile.activities, normalized), 1):
                ranks.append({"city_id": city.city_id, "category": profile.category, "rank": rank,
                              "activity": act, "normalized": norm})
            exponents.append({
                "city_id": city.city_id,
                "category": profile.category,
                "q": profile.fit["q"] if profile.fit else None,
                "c": profile.fit["c"] if profile.fit else None,
                "r2": profile.fit.goodness if profile.fit else None,
                "error": profile.error,
            })
    return {
        "lognormal_variances.csv": pd.DataFrame(variances, columns=["city_id", "category", "mu", "sigma2", "loglik",
                                                                    "n_cells", "converged", "flag", "error"]),
        "quintile_curves.csv": pd.DataFrame(curves, columns=["city_id", "category", "q", "cells", "normalized_area"]),
        "area_ratios.csv": pd.DataFrame(ratios, columns=["city_id", "domestic", "foreign"]),
        "hotspots.csv": pd.DataFrame(listing, columns=["city_id", "rank", "activity", "cells", "lat", "lon",
                                                       "threshold"]),
        "hotspot_coverage.csv": pd.DataFrame(coverage, columns=["city_id", "n", "hotspots", "coverage"]),
        "rank_profiles.csv": pd.DataFrame(ranks, columns=["city_id", "category", "rank", "activity", "normalized"]),
        "q_exponents.csv": pd.DataFrame(exponents, columns=["city_id", "category", "q", "c", "r2", "error"]),
    }


# --- run level ---------------------------------------------------------------


def all_fits(results: PipelineResults) -> dict:
    fits = {"flows": {}, "spatial": {}}
    if results.flows is not None:
        fits["flows"]["distance_decay"] = _fit_dict(results.flows.decay_fit)
        fits["flows"]["users_vs_photos"] = _fit_dict(results.flows.users_photos_fit)
    if results.spatial is not None:
        for city in results.spatial.cities:
            fits["spatial"][city.city_id] = {
                "density": {c: _fit_dict(f) for c, f in sorted(city.fits.items())},
                "rank": {p.category: _fit_dict(p.fit) for p in city.rank_profiles},
            }
    return fits


def run_report(results: PipelineResults) -> dict:
    """Machine-readable summary: record counts, flow matrix, every fit and note."""
    coverage, consistency = results.coverage, results.consistency
    report = {
        "ingest": results.ingest.dict(),
        "yearly_activity": [y.dict() for y in results.yearly],
        "home_coverage": None if coverage is None else {
            **coverage.dict(), "user_share": coverage.user_share, "photo_share": coverage.photo_share,
        },
        "label_consistency": None if consistency is None else {
            **consistency.dict(), "contradiction_rate": consistency.contradiction_rate,
        },
        "counts": results.counts.dict() if results.counts else None,
        "fits": all_fits(results),
        "notes": {},
    }
    if results.flows is not None:
        report["od_matrix"] = results.flows.od.dict()
        report["notes"]["flows"] = results.flows.notes
    if results.spatial is not None:
        report["coverage_summary"] = [s.dict() for s in results.spatial.coverage_summary]
        for city in results.spatial.cities:
            report["notes"][city.city_id] = city.notes + [f"{k}: {v}" for k, v in sorted(city.fit_errors.items())]
    return report


def export_outputs(
    results: PipelineResults, out_dir: Path, formats: Iterable[str] = ("csv", "json", "geojson")
) -> List[Path]:
    """Write every output file for ``results`` under ``out_dir``; returns the paths written."""
    formats = set(formats)
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        written = [_write_json(run_report(results), out_dir / "report.json")]
        if "json" in formats:
            written.append(_write_json(results.ingest.dict(), out_dir / "ingest_stats.json"))
            written.append(_write_json(all_fits(results), out_dir / "fits.json"))
        if "csv" in formats:
            written.append(_write_csv(pd.DataFrame([y.dict() for y in results.yearly],
                                                   columns=["year", "photos", "users"]),
                                      out_dir / "yearly_activity.csv"))
            if results.coverage is not None:
                written.append(_write_csv(homes_frame(results.homes), out_dir / "homes.csv"))
        if results.flows is not None:
            written += export_flows(results.flows, out_dir, formats)
        if results.spatial is not None:
            for city in results.spatial.cities:
                written += export_city(city, out_dir, formats)
            if "csv" in formats:
                for name, frame in spatial_tables(results.spatial.cities).items():
                    written.append(_write_csv(frame, out_dir / name))
                written.append(_write_csv(pd.DataFrame([s.dict() for s in results.spatial.coverage_summary],
                                                       columns=["n", "mean", "std", "cities"]),
                                          out_dir / "coverage_summary.csv"))
    except OSError as exc:
        raise DataError(f"cannot write outputs to {out_dir}: {exc}") from exc
    logger.info("export: wrote {} files under {}", len(written), out_dir)
    return written
