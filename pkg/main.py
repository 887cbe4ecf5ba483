import argparse
import sys
from typing import List, Optional

from loguru import logger

from errors import PipelineError
from routes import export, flows, homes, ingest, run, spatial, synth

VERBS = (ingest, homes, flows, spatial, synth, run, export)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geophoto",
        description="Home inference, tourist flows and hotspot analysis for geotagged photo dumps.",
    )
    parser.add_argument("--log-level", default="INFO", help="loguru level for stderr logs")
    subparsers = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        verb.register(subparsers)
    return parser


def configure_logging(level: str) -> None:
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format="{time:HH:mm:ss} | {level: <8} | {message}")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except PipelineError as exc:
        logger.debug("{} failed: {!r}", args.verb, exc)
        print(f"error: {exc.detail}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
