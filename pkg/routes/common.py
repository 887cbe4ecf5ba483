"""Flags shared by every verb that reads a pipeline configuration."""
import argparse
import json
from pathlib import Path

from models.config import PipelineConfig, load_config

# each flag overrides the PipelineConfig field of the same name
CONFIG_FLAGS = (
    "window", "min_photos", "min_span_days", "cell_size", "hotspots", "out",
    "workers", "regions", "city", "categories", "registry", "aliases",
    "coverage_max_n", "min_density_cells", "fail_on_nonconvergence",
)


def add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("inputs", nargs="*", type=Path, help="photo CSV files or directories")
    parser.add_argument("--config", type=Path, help="flat JSON config file")
    parser.add_argument("--window", help="analysis window as <start>..<end> (ISO-8601)")
    parser.add_argument("--min-photos", type=int)
    parser.add_argument("--min-span-days", type=float)
    parser.add_argument("--cell-size", type=float)
    parser.add_argument("--hotspots", type=int)
    parser.add_argument("--out", type=Path)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--regions", help="all, top<N> or top<N>+rest")
    parser.add_argument("--city", help="restrict spatial analysis to one city id")
    parser.add_argument("--categories", help="'all' or a comma list of resident,domestic,foreign,total")
    parser.add_argument("--registry", type=Path)
    parser.add_argument("--aliases", type=Path)
    parser.add_argument("--coverage-max-n", type=int)
    parser.add_argument("--min-density-cells", type=int)
    parser.add_argument("--fail-on-nonconvergence", action=argparse.BooleanOptionalAction, default=None)


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    overrides = {name: getattr(args, name, None) for name in CONFIG_FLAGS}
    if args.inputs:
        overrides["inputs"] = args.inputs
    if getattr(args, "formats", None):
        overrides["formats"] = args.formats.split(",")
    overrides["publish"] = getattr(args, "publish", None)
    return load_config(args.config, overrides)


def emit(payload) -> None:
    """Summaries go to stdout as JSON; logs stay on stderr."""
    print(json.dumps(payload, indent=2, sort_keys=True, default=str))
