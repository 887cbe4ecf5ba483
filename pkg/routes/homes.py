from routes.common import add_config_flags, config_from_args, emit
from services.exports import export_outputs
from services.pipeline import run_pipeline


def register(subparsers) -> None:
    parser = subparsers.add_parser("homes", help="infer home cities and classify photos")
    add_config_flags(parser)
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    config = config_from_args(args)
    results = run_pipeline(config, export=False, through="homes")
    export_outputs(results, config.out, config.formats)
    emit({
        "homed_users": results.coverage.homed_users,
        "users": results.coverage.users,
        "photo_share": results.coverage.photo_share,
        "contradiction_rate": results.consistency.contradiction_rate,
        "counts": results.counts.dict(),
    })
    return 0
