"""Origin-destination photo flows between regions and the measures built on them."""
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from errors import DataError
from models.cities import CityRegistry, Region
from models.config import RestBucketRules
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
    RegionMap,
    RelativeAttractiveness,
    ResidentDestinationBreakdown,
    UsersPhotosPoint,
)
from models.homes import ActivityCategory
from services import stats
from services.registry import great_circle_distance

HOMED_CATEGORIES = (
    ActivityCategory.resident.value,
    ActivityCategory.domestic_tourist.value,
    ActivityCategory.foreign_tourist.value,
)
REST_ORDER = ("rest_of_EU", "rest_of_US", "rest_of_world")


def global_attractiveness_ranking(frame: pd.DataFrame) -> List[RankedCity]:
    """Cities ordered by photos taken in them by non-residents."""
    dom, frn = ActivityCategory.domestic_tourist.value, ActivityCategory.foreign_tourist.value
    cities = sorted(frame["city_id"].dropna().unique())
    tourist = frame[frame["category"].isin([dom, frn])]
    if tourist.empty:
        counts = pd.DataFrame(0, index=cities, columns=[dom, frn])
    else:
        counts = (
            tourist.groupby(["city_id", "category"]).size().unstack(fill_value=0)
            .reindex(index=cities, columns=[dom, frn], fill_value=0)
        )
    ranked = [
        RankedCity(city_id=city_id, tourist_photos=int(row[dom] + row[frn]),
                   domestic_photos=int(row[dom]), foreign_photos=int(row[frn]))
        for city_id, row in counts.iterrows()
    ]
    ranked.sort(key=lambda r: (-r.tourist_photos, r.city_id))
    return ranked


def region_map(
    registry: CityRegistry,
    ranking: List[RankedCity],
    top_n: Optional[int],
    with_rest: bool,
    rules: RestBucketRules = RestBucketRules(),
) -> RegionMap:
    """city_id -> region_id. Top cities map to themselves; the rest pool into buckets or drop out."""
    ranked_ids = [r.city_id for r in ranking if r.city_id in registry]
    ranked_ids += [c for c in registry.city_ids if c not in ranked_ids]
    top = ranked_ids if top_n is None else ranked_ids[:top_n]
    mapping = {c: c for c in top}
    if with_rest:
        for city_id in ranked_ids[len(top):]:
            city = registry[city_id]
            mapping[city_id] = (
                rules.by_country.get(city.country_code)
                or rules.by_continent.get(city.continent.value)
                or rules.fallback
            )
    return mapping


def build_regions(registry: CityRegistry, mapping: RegionMap, ranking: List[RankedCity]) -> List[Region]:
    """Ordered regions: city regions by attractiveness rank, then rest buckets."""
    order = {r.city_id: i for i, r in enumerate(ranking)}
    city_regions = sorted((c for c, r in mapping.items() if c == r), key=lambda c: (order.get(c, len(order)), c))
    regions = []
    for city_id in city_regions:
        city = registry[city_id]
        regions.append(Region(region_id=city_id, kind="city", country_code=city.country_code,
                              continent=city.continent, centroid=city.centroid))
    buckets = sorted({r for c, r in mapping.items() if c != r},
                     key=lambda b: (REST_ORDER.index(b) if b in REST_ORDER else len(REST_ORDER), b))
    for bucket in buckets:
        members = [registry[c] for c, r in mapping.items() if r == bucket]
        countries = {m.country_code for m in members}
        continents = {m.continent for m in members}
        regions.append(Region(
            region_id=bucket,
            kind="rest",
            country_code=countries.pop() if len(countries) == 1 else None,
            continent=continents.pop() if len(continents) == 1 else None,
        ))
    return regions


def build_od_matrix(frame: pd.DataFrame, mapping: RegionMap, regions: List[str]) -> ODMatrix:
    """Count photos of homed users by (home region, photo region)."""
    index = {r: i for i, r in enumerate(regions)}
    n = len(regions)
    a = np.zeros((n, n), dtype=np.int64)
    dom = np.zeros((n, n), dtype=np.int64)
    homed = frame[frame["category"].isin(HOMED_CATEGORIES)]
    if not homed.empty:
        origin = homed["home_city_id"].map(mapping).map(index)
        dest = homed["city_id"].map(mapping).map(index)
        keep = origin.notna() & dest.notna()
        dropped = int((~keep).sum())
        if dropped:
            logger.info("flows: {} homed photos fall outside the region set", dropped)
        oi = origin[keep].astype(int).to_numpy()
        di = dest[keep].astype(int).to_numpy()
        same_country = (homed["home_country"] == homed["city_country"])[keep].to_numpy()
        np.add.at(a, (oi, di), 1)
        np.add.at(dom, (oi[same_country], di[same_country]), 1)
    return ODMatrix(regions=list(regions), a=a.tolist(), domestic=dom.tolist())


def flow_marginals(od: ODMatrix) -> FlowMarginals:
    a = np.asarray(od.a, dtype=np.int64).reshape(len(od.regions), len(od.regions))
    loops = np.diag(a)
    w_in = a.sum(axis=0)
    w_out = a.sum(axis=1)
    return FlowMarginals(
        regions=list(od.regions),
        w_in=w_in.tolist(),
        w_out=w_out.tolist(),
        w_in_star=(w_in - loops).tolist(),
        w_out_star=(w_out - loops).tolist(),
    )


def region_populations(
    regions: List[Region], mapping: RegionMap, registry: CityRegistry, rules: RestBucketRules = RestBucketRules()
) -> Dict[str, float]:
    pops = {}
    for region in regions:
        if region.kind == "city":
            pops[region.region_id] = registry[region.region_id].population
        elif region.region_id in rules.populations:
            pops[region.region_id] = rules.populations[region.region_id]
        else:
            pops[region.region_id] = sum(registry[c].population for c, r in mapping.items() if r == region.region_id)
    return pops


def per_capita_rates(marginals: FlowMarginals, populations: Dict[str, float]) -> List[PerCapitaRate]:
    """Photos taken worldwide by each origin's residents per 1000 residents."""
    rates = []
    for region_id, w_out in zip(marginals.regions, marginals.w_out):
        pop = populations.get(region_id)
        if pop is not None and pop <= 0:
            raise DataError(f"region {region_id} has non-positive population {pop}")
        rates.append(PerCapitaRate(
            region_id=region_id,
            population=pop,
            photos=w_out,
            per_1000=1000.0 * w_out / pop if pop else None,
        ))
    return rates


def relative_attractiveness(od: ODMatrix, registry: CityRegistry, city_id: str) -> RelativeAttractiveness:
    """Incoming tourist photos per resident of the destination, split domestic/foreign."""
    if city_id not in od.regions:
        raise DataError(f"{city_id} is not a region of the flow network")
    j = od.index(city_id)
    a = np.asarray(od.a)
    dom = np.asarray(od.domestic)
    others = [i for i in range(len(od.regions)) if i != j]
    domestic = int(dom[others, j].sum())
    foreign = int((a[others, j] - dom[others, j]).sum())
    population = registry[city_id].population
    return RelativeAttractiveness(
        city_id=city_id,
        domestic_per_capita=domestic / population,
        foreign_per_capita=foreign / population,
        domestic_photos=domestic,
        foreign_photos=foreign,
    )


def city_activity_breakdown(frame: pd.DataFrame, city_id: str) -> CityActivityBreakdown:
    """Resident / domestic / foreign shares of the photos taken in one city."""
    in_city = frame[frame["city_id"] == city_id]["category"]
    counts = in_city.value_counts()
    resident = int(counts.get(ActivityCategory.resident.value, 0))
    domestic = int(counts.get(ActivityCategory.domestic_tourist.value, 0))
    foreign = int(counts.get(ActivityCategory.foreign_tourist.value, 0))
    unknown = int(counts.get(ActivityCategory.unknown_home.value, 0))
    classified = resident + domestic + foreign
    if classified == 0:
        logger.warning("flows: {} has no classified photos; activity breakdown undefined", city_id)
        return CityActivityBreakdown(city_id=city_id, unknown_home_photos=unknown)
    return CityActivityBreakdown(
        city_id=city_id,
        resident=resident / classified,
        domestic_tourist=domestic / classified,
        foreign_tourist=foreign / classified,
        classified_photos=classified,
        unknown_home_photos=unknown,
    )


def resident_destination_breakdown(od: ODMatrix, region_id: str) -> ResidentDestinationBreakdown:
    """Home / domestic / foreign shares of where one origin's residents took photos."""
    i = od.index(region_id)
    a = np.asarray(od.a)
    dom = np.asarray(od.domestic)
    total = int(a[i].sum())
    if total == 0:
        logger.warning("flows: {} residents took no photos; destination breakdown undefined", region_id)
        return ResidentDestinationBreakdown(region_id=region_id)
    home = int(a[i, i])
    domestic = int(dom[i].sum() - dom[i, i])
    foreign = total - home - domestic
    return ResidentDestinationBreakdown(
        region_id=region_id,
        home=home / total,
        domestic=domestic / total,
        foreign=foreign / total,
        photos=total,
    )


def null_model_matrix(od: ODMatrix, marginals: Optional[FlowMarginals] = None) -> NullModelResult:
    """Expected non-loop flows from origin out-flow and destination in-flow.

    model[i][j] = w_out*[i] * w_in*[j] / sum_{k != i} w_in*[k]; ratio = a / model
    where the model is positive. Loops and undefined cells stay None.
    """
    if len(od.regions) < 2:
        raise DataError("the null model needs at least two regions")
    marginals = marginals or flow_marginals(od)
    n = len(od.regions)
    w_out_star = np.asarray(marginals.w_out_star, dtype=float)
    w_in_star = np.asarray(marginals.w_in_star, dtype=float)
    total_in = float(w_in_star.sum())
    model: List[List[Optional[float]]] = [[None] * n for _ in range(n)]
    ratio: List[List[Optional[float]]] = [[None] * n for _ in range(n)]
    undefined = []
    for i in range(n):
        denom = total_in - w_in_star[i]
        if denom <= 0:
            undefined.append(od.regions[i])
            continue
        for j in range(n):
            if i == j:
                continue
            m = w_out_star[i] * w_in_star[j] / denom
            model[i][j] = m
            if m > 0:
                ratio[i][j] = od.a[i][j] / m
    if undefined:
        logger.warning("flows: null-model rows undefined for isolated origins {}", undefined)
    return NullModelResult(regions=list(od.regions), model=model, ratio=ratio, undefined_rows=undefined)


def decay_points(null: NullModelResult, regions: List[Region]) -> List[DecayPoint]:
    """(distance, ratio) for every city-to-city pair with a positive defined ratio."""
    by_id = {r.region_id: r for r in regions}
    points = []
    for i, origin in enumerate(null.regions):
        for j, dest in enumerate(null.regions):
            r = null.ratio[i][j]
            o, d = by_id.get(origin), by_id.get(dest)
            if r is None or r <= 0 or o is None or d is None or o.kind != "city" or d.kind != "city":
                continue
            points.append(DecayPoint(origin=origin, destination=dest,
                                     distance_km=great_circle_distance(o.centroid, d.centroid), ratio=r))
    return points


def distance_decay_fit(points: List[DecayPoint]) -> Tuple[FitResult, List[DecayPoint]]:
    """Exponential decay of relative strength with distance, plus per-pair log residuals."""
    if len(points) < 3:
        raise DataError(f"distance decay needs at least 3 positive city pairs, got {len(points)}")
    fit = stats.fit_exponential([p.distance_km for p in points], [p.ratio for p in points])
    amp, beta = fit.params["A"], fit.params["beta"]
    with_residuals = [
        p.copy(update={"residual": float(np.log(p.ratio) - (np.log(amp) - beta * p.distance_km))})
        for p in points
    ]
    return fit, with_residuals


def continent_group_strengths(null: NullModelResult, regions: List[Region]) -> List[GroupStrength]:
    """Mean relative strength per (origin continent, destination continent) over city pairs."""
    by_id = {r.region_id: r for r in regions}
    groups: Dict[Tuple[str, str], List[float]] = {}
    for i, origin in enumerate(null.regions):
        for j, dest in enumerate(null.regions):
            r = null.ratio[i][j]
            o, d = by_id.get(origin), by_id.get(dest)
            if r is None or o is None or d is None or o.kind != "city" or d.kind != "city":
                continue
            groups.setdefault((o.continent.value, d.continent.value), []).append(r)
    return [
        GroupStrength(origin_group=og, destination_group=dg, mean_ratio=float(np.mean(v)), n_links=len(v))
        for (og, dg), v in sorted(groups.items())
    ]


def directional_comparison(groups: List[GroupStrength], group_a: str, group_b: str) -> DirectionalComparison:
    lookup = {(g.origin_group, g.destination_group): g.mean_ratio for g in groups}
    a_to_b = lookup.get((group_a, group_b))
    b_to_a = lookup.get((group_b, group_a))
    stronger = None
    if a_to_b is not None and b_to_a is not None and a_to_b != b_to_a:
        stronger = f"{group_a}->{group_b}" if a_to_b > b_to_a else f"{group_b}->{group_a}"
    return DirectionalComparison(group_a=group_a, group_b=group_b, a_to_b=a_to_b, b_to_a=b_to_a,
                                 stronger=stronger, groups=groups)


def users_vs_photos(frame: pd.DataFrame, mapping: RegionMap) -> Tuple[List[UsersPhotosPoint], Optional[FitResult]]:
    """Per-origin homed users against the photos they took, with the linear fit."""
    homed = frame[frame["category"].isin(HOMED_CATEGORIES)].copy()
    homed["origin"] = homed["home_city_id"].map(mapping)
    grouped = homed.dropna(subset=["origin"]).groupby("origin").agg(
        users=("user_id", "nunique"), photos=("photo_id", "size")
    )
    points = [UsersPhotosPoint(region_id=r, users=int(v.users), photos=int(v.photos))
              for r, v in grouped.sort_index().iterrows()]
    try:
        fit = stats.linear_regression_r2([p.users for p in points], [p.photos for p in points])
    except DataError as exc:
        logger.warning("flows: users-vs-photos regression skipped: {}", exc.detail)
        fit = None
    return points, fit
