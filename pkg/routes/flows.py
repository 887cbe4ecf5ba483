from routes.common import add_config_flags, config_from_args, emit
from services.exports import export_outputs
from services.pipeline import run_pipeline


def register(subparsers) -> None:
    parser = subparsers.add_parser("flows", help="build the origin-destination network and its null model")
    add_config_flags(parser)
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    config = config_from_args(args)
    results = run_pipeline(config, export=False, through="flows")
    export_outputs(results, config.out, config.formats)
    flows = results.flows
    emit({
        "regions": flows.od.regions,
        "per_1000": {p.region_id: p.per_1000 for p in flows.per_capita},
        "decay_beta": flows.decay_fit["beta"] if flows.decay_fit else None,
        "stronger_direction": flows.directional.stronger if flows.directional else None,
        "notes": flows.notes,
    })
    return 0
