from routes.common import add_config_flags, config_from_args, emit
from services.exports import export_outputs
from services.pipeline import run_pipeline


def register(subparsers) -> None:
    parser = subparsers.add_parser("ingest", help="parse, deduplicate and window the photo dumps")
    add_config_flags(parser)
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    config = config_from_args(args)
    results = run_pipeline(config, export=False, through="ingest")
    export_outputs(results, config.out, config.formats)
    emit({"ingest": results.ingest.dict(), "yearly_activity": [y.dict() for y in results.yearly]})
    return 0
