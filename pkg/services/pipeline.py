"""Stage orchestration: ingest -> homes -> flows -> spatial.

Each stage is callable on its own (the CLI verbs use them directly);
``run_pipeline`` chains them, reconciles record counts between stages and
hands the results to the exporters.
"""
import json
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import pandas as pd
from loguru import logger

from errors import ConvergenceError, DataError, PipelineError
from models.cities import CityRegistry
from models.config import PipelineConfig
from models.homes import ActivityCategory
from models.results import CitySpatialResult, FlowResults, PipelineResults, SpatialResults, StageCounts
from services import flows as flow_svc
from services import homes as home_svc
from services import spatial as spatial_svc
from services.exports import export_outputs
from services.ingest import ingest
from services.registry import load_registry, records_frame


@contextmanager
def stage(name: str, timings: Dict[str, float]):
    started = time.perf_counter()
    logger.info("stage {} started", name)
    try:
        yield
    except PipelineError as exc:
        raise exc.with_stage(name) from exc
    finally:
        timings[name] = round(time.perf_counter() - started, 6)
    logger.info("stage {} finished in {:.3f}s", name, timings[name])


def load_config_registry(config: PipelineConfig) -> CityRegistry:
    return load_registry(config.registry, config.aliases)


def run_homes(config: PipelineConfig, records, registry: CityRegistry):
    frame = records_frame(records, registry)
    summaries = home_svc.summarize_user_city_activity(frame)
    homes = home_svc.infer_homes(summaries, registry, config.min_photos, config.min_span_days)
    categorized = home_svc.categorize_frame(frame, homes, registry)
    return categorized, homes


def run_flows(config: PipelineConfig, frame: pd.DataFrame, registry: CityRegistry) -> FlowResults:
    ranking = flow_svc.global_attractiveness_ranking(frame)
    mapping = flow_svc.region_map(registry, ranking, config.top_n(), config.with_rest(), config.rest_rules)
    regions = flow_svc.build_regions(registry, mapping, ranking)
    region_ids = [r.region_id for r in regions]
    od = flow_svc.build_od_matrix(frame, mapping, region_ids)
    marginals = flow_svc.flow_marginals(od)
    populations = flow_svc.region_populations(regions, mapping, registry, config.rest_rules)
    city_regions = [r.region_id for r in regions if r.kind == "city"]
    notes = []

    null_model = None
    decay_points, decay_fit, groups, directional = [], None, [], None
    if len(region_ids) >= 2:
        null_model = flow_svc.null_model_matrix(od, marginals)
        decay_points = flow_svc.decay_points(null_model, regions)
        try:
            decay_fit, decay_points = flow_svc.distance_decay_fit(decay_points)
        except DataError as exc:
            notes.append(f"distance decay: {exc.detail}")
            logger.warning("flows: distance decay skipped: {}", exc.detail)
        groups = flow_svc.continent_group_strengths(null_model, regions)
        directional = flow_svc.directional_comparison(groups, *config.continent_groups)
    else:
        notes.append("null model: fewer than two regions")

    users_photos, users_fit = flow_svc.users_vs_photos(frame, mapping)
    return FlowResults(
        regions=regions,
        region_map=dict(sorted(mapping.items())),
        ranking=ranking,
        od=od,
        marginals=marginals,
        null_model=null_model,
        per_capita=flow_svc.per_capita_rates(marginals, populations),
        attractiveness=[flow_svc.relative_attractiveness(od, registry, c) for c in city_regions],
        city_breakdowns=[flow_svc.city_activity_breakdown(frame, c) for c in city_regions],
        resident_breakdowns=[flow_svc.resident_destination_breakdown(od, r) for r in region_ids],
        decay_points=decay_points,
        decay_fit=decay_fit,
        groups=groups,
        directional=directional,
        users_photos=users_photos,
        users_photos_fit=users_fit,
        notes=notes,
    )


def analyze_city(job: Tuple) -> CitySpatialResult:
    """Full spatial analysis of one city; runs in a worker process."""
    city, city_frame, config = job
    spec = spatial_svc.grid_for_city(city, config.cell_size)
    field = spatial_svc.accumulate_density(city_frame, spec)
    result = CitySpatialResult(city_id=city.city_id, field=field)

    for category in config.category_list:
        try:
            result.fits[category] = spatial_svc.density_distribution_fit(field, category, config.min_density_cells)
        except DataError as exc:
            result.fit_errors[category] = exc.detail
        except ConvergenceError as exc:
            if config.fail_on_nonconvergence:
                raise ConvergenceError(f"{city.city_id}/{category}: {exc.detail}")
            logger.warning("spatial: {}/{} density fit did not converge: {}", city.city_id, category, exc.detail)
            result.fit_errors[category] = f"did not converge: {exc.detail}"
        if field.layer(category).sum() > 0:
            result.curves[category] = spatial_svc.quintile_area_curve(field, category, config.quantiles)
    result.area_ratio = spatial_svc.tourist_resident_area_ratio(field, config.quantiles)

    try:
        result.hotspots = spatial_svc.extract_hotspots(field, "total", config.hotspots)
        activities = spatial_svc.hotspot_category_activity(result.hotspots, field)
        result.rank_profiles = spatial_svc.hotspot_rank_profile(
            {c: activities[c] for c in config.category_list}
        )
    except DataError as exc:
        result.notes.append(f"hotspots: {exc.detail}")
    for category in config.category_list:
        if category == "total":
            continue
        try:
            result.category_hotspots[category] = spatial_svc.extract_hotspots(field, category, config.hotspots)
        except DataError as exc:
            result.notes.append(f"{category} hotspots: {exc.detail}")
    result.coverage = spatial_svc.hotspot_coverage_fraction(field, "total", range(1, config.coverage_max_n + 1))
    return result


def run_spatial(
    config: PipelineConfig, frame: pd.DataFrame, registry: CityRegistry, city_ids: Optional[List[str]] = None
) -> SpatialResults:
    if city_ids is None:
        city_ids = sorted(frame["city_id"].dropna().unique())
    missing = [c for c in city_ids if c not in registry]
    if missing:
        raise DataError(f"unknown cities {missing}")
    columns = ["lat", "lon", "category"]
    jobs = [(registry[c], frame.loc[frame["city_id"] == c, columns].reset_index(drop=True), config) for c in city_ids]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            cities = list(pool.map(analyze_city, jobs))
    else:
        cities = [analyze_city(job) for job in jobs]
    summary = spatial_svc.coverage_summary({c.city_id: c.coverage for c in cities})
    return SpatialResults(cities=cities, coverage_summary=summary)


def stage_counts(records_kept: int, frame: pd.DataFrame, flows: Optional[FlowResults]) -> StageCounts:
    located = int(frame["city_id"].notna().sum())
    unknown = int((frame["category"] == ActivityCategory.unknown_home.value).sum())
    homed = located - unknown
    od_photos = int(sum(sum(row) for row in flows.od.a)) if flows else 0
    counts = StageCounts(
        records_kept=records_kept,
        located=located,
        unassigned=len(frame) - located,
        homed_photos=homed,
        unknown_home_photos=unknown,
        od_photos=od_photos,
        outside_region_set=homed - od_photos if flows else 0,
    )
    if len(frame) != records_kept or counts.located + counts.unassigned != records_kept:
        raise DataError(f"stage bookkeeping does not reconcile: {counts.dict()}")
    return counts


STAGES = ("ingest", "homes", "flows", "spatial")


def run_pipeline(config: PipelineConfig, export: bool = True, through: str = "spatial") -> PipelineResults:
    """Run the stages up to and including ``through``, optionally export, return the results."""
    if through not in STAGES:
        raise ValueError(f"unknown stage {through!r}")
    last = STAGES.index(through)
    timings: Dict[str, float] = {}
    with stage("ingest", timings):
        records, ingest_stats, yearly = ingest(config.inputs, config.window, config.workers)
    results = PipelineResults(ingest=ingest_stats, yearly=yearly)

    if last >= STAGES.index("homes"):
        with stage("homes", timings):
            registry = load_config_registry(config)
            frame, homes = run_homes(config, records, registry)
            results.coverage = home_svc.home_coverage(frame, homes)
            results.consistency = home_svc.label_consistency(frame, homes)
            results.homes = homes
        if last >= STAGES.index("flows"):
            with stage("flows", timings):
                results.flows = run_flows(config, frame, registry)
        if last >= STAGES.index("spatial"):
            with stage("spatial", timings):
                results.spatial = run_spatial(config, frame, registry, [config.city] if config.city else None)
        results.counts = stage_counts(len(records), frame, results.flows)

    if export:
        with stage("export", timings):
            export_outputs(results, config.out, config.formats)
        write_run_meta(config, timings)
    return results


def write_run_meta(config: PipelineConfig, timings: Dict[str, float]) -> Path:
    """Timings and worker count live apart from the reproducible outputs."""
    meta_dir = Path(config.out) / "_meta"
    meta_dir.mkdir(parents=True, exist_ok=True)
    path = meta_dir / "run_meta.json"
    path.write_text(json.dumps({"workers": config.workers, "stage_seconds": timings}, indent=2, sort_keys=True) + "\n")
    return path
