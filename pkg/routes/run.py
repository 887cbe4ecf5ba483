from routes.common import add_config_flags, config_from_args, emit
from services.pipeline import run_pipeline
from services.storage import publish_outputs


def register(subparsers) -> None:
    parser = subparsers.add_parser("run", help="run every stage and export all outputs")
    add_config_flags(parser)
    parser.add_argument("--publish", action="store_true", default=None,
                        help="mirror the output tree to S3 when AWS is configured")
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    config = config_from_args(args)
    results = run_pipeline(config)
    payload = {"out": str(config.out), "counts": results.counts.dict(), "ingest": results.ingest.dict()}
    if config.publish:
        payload["publish"] = publish_outputs(config.out)
    emit(payload)
    return 0
