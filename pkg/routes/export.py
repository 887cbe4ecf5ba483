from routes.common import add_config_flags, config_from_args, emit
from services.exports import export_outputs
from services.pipeline import run_pipeline


def register(subparsers) -> None:
    parser = subparsers.add_parser("export", help="recompute results and write selected formats only")
    add_config_flags(parser)
    parser.add_argument("--formats", help="comma list of csv,json,geojson")
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    config = config_from_args(args)
    results = run_pipeline(config, export=False)
    written = export_outputs(results, config.out, config.formats)
    emit({"out": str(config.out), "files": len(written)})
    return 0
