from pathlib import Path

from models.config import DATA_DIR, load_synth_spec
from routes.common import emit
from services.synth import synth_generate


def register(subparsers) -> None:
    parser = subparsers.add_parser("synth", help="generate a deterministic synthetic corpus with its manifest")
    parser.add_argument("--spec", type=Path, default=DATA_DIR / "synth_default.json")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", type=Path, default=Path("synth"))
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    spec = load_synth_spec(args.spec, {"seed": args.seed})
    corpus = synth_generate(spec, args.out)
    manifest = corpus.manifest
    emit({
        "out": str(args.out),
        "rows_written": manifest["rows_written"],
        "duplicates": manifest["duplicates"]["count"],
        "homes": len(manifest["homes"]),
    })
    return 0
