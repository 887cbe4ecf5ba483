"""Intra-city activity on a metric grid: densities, fits, coverage curves, hotspots."""
import math
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from scipy import ndimage

from errors import DataError
from models.cities import City
from models.fits import FitResult
from models.homes import ActivityCategory
from models.spatial import (
    CATEGORIES,
    CategoryRankProfile,
    CoveragePoint,
    CoverageSummary,
    DensityField,
    GridSpec,
    Hotspot,
    QuintileCurve,
)
from services import stats

EARTH_RADIUS_M = 6_371_000.0
# cells sharing at least one vertex belong to the same component
EIGHT_CONNECTED = np.ones((3, 3), dtype=int)

CATEGORY_LAYER = {
    ActivityCategory.resident.value: "resident",
    ActivityCategory.domestic_tourist.value: "domestic",
    ActivityCategory.foreign_tourist.value: "foreign",
    ActivityCategory.unknown_home.value: "unknown_home",
}


def project(lat, lon, anchor: Tuple[float, float]):
    """Local equirectangular metres (x east, y north) about the anchor."""
    lat0, lon0 = anchor
    x = EARTH_RADIUS_M * math.cos(math.radians(lat0)) * np.radians(np.asarray(lon, dtype=float) - lon0)
    y = EARTH_RADIUS_M * np.radians(np.asarray(lat, dtype=float) - lat0)
    return x, y


def unproject(x, y, anchor: Tuple[float, float]):
    lat0, lon0 = anchor
    lat = lat0 + np.degrees(np.asarray(y, dtype=float) / EARTH_RADIUS_M)
    lon = lon0 + np.degrees(np.asarray(x, dtype=float) / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    return lat, lon


def grid_for_city(city: City, cell_size: float = 500.0) -> GridSpec:
    min_lat, min_lon, max_lat, max_lon = city.bbox
    width, height = project(max_lat, max_lon, (min_lat, min_lon))
    return GridSpec(
        city_id=city.city_id,
        anchor=(min_lat, min_lon),
        cell_size=cell_size,
        n_rows=int(math.floor(float(height) / cell_size)) + 1,
        n_cols=int(math.floor(float(width) / cell_size)) + 1,
    )


def grid_indices(lat, lon, spec: GridSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, y = project(lat, lon, spec.anchor)
    rows = np.floor(np.atleast_1d(y) / spec.cell_size).astype(np.int64)
    cols = np.floor(np.atleast_1d(x) / spec.cell_size).astype(np.int64)
    inside = (rows >= 0) & (rows < spec.n_rows) & (cols >= 0) & (cols < spec.n_cols)
    return rows, cols, inside


def grid_index(point: Tuple[float, float], spec: GridSpec) -> Optional[Tuple[int, int]]:
    """Cell of a point, or None when it falls outside the grid."""
    rows, cols, inside = grid_indices(point[0], point[1], spec)
    if not inside[0]:
        return None
    return int(rows[0]), int(cols[0])


def accumulate_density(frame: pd.DataFrame, spec: GridSpec) -> DensityField:
    """Per-cell photo counts by category for the rows of ``frame`` (lat, lon, category)."""
    shape = (spec.n_rows, spec.n_cols)
    counts = {c: np.zeros(shape, dtype=np.int64) for c in CATEGORIES}
    if frame.empty:
        return DensityField(grid=spec, counts=counts)
    rows, cols, inside = grid_indices(frame["lat"].to_numpy(), frame["lon"].to_numpy(), spec)
    layers = frame["category"].map(CATEGORY_LAYER).to_numpy()
    for layer in ("resident", "domestic", "foreign", "unknown_home"):
        sel = inside & (layers == layer)
        np.add.at(counts[layer], (rows[sel], cols[sel]), 1)
    counts["total"] = counts["resident"] + counts["domestic"] + counts["foreign"] + counts["unknown_home"]
    outside = int((~inside).sum())
    if outside:
        logger.info("spatial: {} photos of {} fall outside its grid", outside, spec.city_id)
    return DensityField(grid=spec, counts=counts, outside=outside)


def density_distribution_fit(field: DensityField, category: str, min_cells: int = 30) -> FitResult:
    """Truncated-at-one log-normal over the non-empty cells of a layer, counts read as binned values."""
    values = field.layer(category)
    nonzero = values[values > 0]
    if nonzero.size < min_cells:
        raise DataError(
            f"{field.grid.city_id}/{category}: {nonzero.size} non-empty cells, at least {min_cells} needed for a fit"
        )
    if float(np.ptp(nonzero)) == 0.0:
        logger.warning("spatial: {}/{} has equal counts in every cell; fit is degenerate",
                       field.grid.city_id, category)
        return FitResult(
            kind="binned_lognormal",
            params={"mu": float(np.log(nonzero[0])), "sigma": 0.0, "sigma2": 0.0, "truncation_point": 1.0},
            goodness=0.0,
            goodness_kind="loglik",
            n_points=int(nonzero.size),
            converged=False,
            flag="degenerate",
        )
    return stats.fit_binned_lognormal(nonzero, truncation_point=1.0)


def density_cdf_points(field: DensityField, category: str, fit: Optional[FitResult]) -> pd.DataFrame:
    """Empirical CDF of non-empty cell counts next to the fitted CDF.

    Under the binned model a count of k or less means a value below k + 1.
    """
    values = np.sort(field.layer(category)[field.layer(category) > 0])
    uniq, per_value = np.unique(values, return_counts=True)
    empirical = np.cumsum(per_value) / values.size if values.size else np.array([])
    fitted = None
    if fit is not None and fit.converged and uniq.size:
        fitted = stats.truncated_lognormal_cdf(uniq + 1.0, fit["mu"], fit["sigma"], fit["truncation_point"])
    return pd.DataFrame({
        "count": uniq,
        "empirical_cdf": empirical,
        "fitted_cdf": fitted if fitted is not None else np.full(uniq.size, np.nan),
    })


def quantile_cells(values: np.ndarray, quantiles: Sequence[float]) -> List[int]:
    """Fewest top cells whose cumulative count reaches q * total, for each q."""
    flat = np.sort(values[values > 0].ravel())[::-1]
    total = float(flat.sum())
    if total <= 0:
        raise DataError("layer has no activity")
    cum = np.cumsum(flat)
    # relative slack absorbs q*total rounding such as 0.3*10 = 3.0000000000000004
    return [int(np.searchsorted(cum, q * total * (1.0 - 1e-12), side="left")) + 1 for q in quantiles]


def quintile_area_curve(field: DensityField, category: str, quantiles: Sequence[float]) -> QuintileCurve:
    quantiles = list(quantiles)
    cells = quantile_cells(field.layer(category), quantiles)
    unit = cells[quantiles.index(0.5)]
    return QuintileCurve(
        category=category,
        points=[(q, c / unit) for q, c in zip(quantiles, cells)],
        cells=cells,
    )


def tourist_resident_area_ratio(
    field: DensityField, quantiles: Sequence[float]
) -> Tuple[Optional[float], Optional[float]]:
    """Mean over quantiles of tourist-to-resident top-area size, (domestic, foreign)."""

    def cells(layer):
        if field.layer(layer).sum() <= 0:
            return None
        return np.asarray(quantile_cells(field.layer(layer), quantiles), dtype=float)

    resident = cells("resident")
    out = []
    for layer in ("domestic", "foreign"):
        tourist = cells(layer)
        if resident is None or tourist is None:
            logger.warning("spatial: {} has no {} or resident activity; area ratio undefined",
                           field.grid.city_id, layer)
            out.append(None)
        else:
            out.append(float(np.mean(tourist / resident)))
    return out[0], out[1]


def hotspots_from_counts(counts: np.ndarray, n: int = 12) -> List[Hotspot]:
    """Iterative thresholding of the top-n cells into 8-connected components.

    Start at the n-th highest count; while fewer than n components exist, lower
    the threshold to the (n - t)-th highest of the cells still below it.
    """
    if n < 1:
        raise DataError("hotspot count must be positive")
    rows, cols = np.nonzero(counts > 0)
    vals = counts[rows, cols]
    if vals.size < n:
        raise DataError(f"{vals.size} non-empty cells, fewer than the {n} hotspots requested")
    ordered = vals[np.lexsort((cols, rows, -vals))]

    a = ordered[n - 1]
    while True:
        labels, t = ndimage.label(counts >= a, structure=EIGHT_CONNECTED)
        if t >= n:
            break
        remaining = ordered[ordered < a]
        if remaining.size == 0:
            break
        a = remaining[min(n - t, remaining.size) - 1]

    cells = np.argwhere(labels > 0)
    owner = labels[cells[:, 0], cells[:, 1]]
    by_label = np.argsort(owner, kind="stable")
    bounds = np.searchsorted(owner[by_label], np.arange(1, t + 2))
    activity = ndimage.sum_labels(counts, labels, index=np.arange(1, t + 1))
    components = []
    for k in range(t):
        members = cells[by_label[bounds[k]:bounds[k + 1]]]
        # argwhere is row-major, so members[0] is the smallest (row, col)
        components.append((int(round(activity[k])), tuple(members[0]), [tuple(map(int, m)) for m in members]))
    components.sort(key=lambda c: (-c[0], c[1]))
    return [
        Hotspot(rank=i + 1, cells=members, activity=act, threshold_a=int(a))
        for i, (act, _, members) in enumerate(components)
    ]


def extract_hotspots(field: DensityField, category: str = "total", n: int = 12) -> List[Hotspot]:
    return hotspots_from_counts(field.layer(category), n)


def hotspot_coverage_fraction(field: DensityField, category: str, ns: Iterable[int]) -> List[CoveragePoint]:
    """Share of a layer's activity inside its hotspots, for each requested n."""
    values = field.layer(category)
    total = int(values.sum())
    available = int((values > 0).sum())
    points = []
    for n in ns:
        if n > available or total == 0:
            break
        spots = hotspots_from_counts(values, n)
        points.append(CoveragePoint(n=n, hotspots=len(spots), coverage=sum(h.activity for h in spots) / total))
    return points


def coverage_summary(per_city: Dict[str, List[CoveragePoint]]) -> List[CoverageSummary]:
    by_n: Dict[int, List[float]] = {}
    for points in per_city.values():
        for p in points:
            by_n.setdefault(p.n, []).append(p.coverage)
    return [
        CoverageSummary(n=n, mean=float(np.mean(v)), std=float(np.std(v)), cities=len(v))
        for n, v in sorted(by_n.items())
    ]


def hotspot_category_activity(hotspots: List[Hotspot], field: DensityField) -> Dict[str, List[int]]:
    """Activity of each category inside the given hotspots, sorted high to low."""
    out = {}
    for layer in ("resident", "domestic", "foreign", "total"):
        values = field.layer(layer)
        sums = [int(sum(values[r, c] for r, c in h.cells)) for h in hotspots]
        out[layer] = sorted(sums, reverse=True)
    return out


def hotspot_rank_profile(activities: Dict[str, Sequence[float]]) -> List[CategoryRankProfile]:
    """Power-law fit of activity against rank per category, top hotspot as unit."""
    profiles = []
    for category, values in activities.items():
        values = sorted((float(v) for v in values), reverse=True)
        profile = CategoryRankProfile(category=category, activities=[int(round(v)) for v in values], normalized=[])
        if not values or values[0] <= 0:
            profile.error = "top hotspot has no activity"
            profiles.append(profile)
            continue
        normalized = [v / values[0] for v in values]
        profile.normalized = normalized
        positive = [v for v in normalized if v > 0]
        try:
            profile.fit = stats.fit_power_law(range(1, len(positive) + 1), positive)
        except DataError as exc:
            profile.error = exc.detail
        profiles.append(profile)
    return profiles
