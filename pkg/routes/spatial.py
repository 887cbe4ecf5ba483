from routes.common import add_config_flags, config_from_args, emit
from services.exports import export_outputs
from services.pipeline import run_pipeline


def register(subparsers) -> None:
    parser = subparsers.add_parser("spatial", help="grid densities, fits and hotspots per city")
    add_config_flags(parser)
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    config = config_from_args(args)
    results = run_pipeline(config, export=False, through="spatial")
    export_outputs(results, config.out, config.formats)
    summary = {}
    for city in results.spatial.cities:
        summary[city.city_id] = {
            "sigma2": {c: f["sigma2"] for c, f in city.fits.items()},
            "hotspots": [h.activity for h in city.hotspots],
            "q": {p.category: p.fit["q"] if p.fit else None for p in city.rank_profiles},
        }
    emit(summary)
    return 0
