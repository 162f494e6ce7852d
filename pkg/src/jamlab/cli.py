"""Command-line entry point.

Exit codes: 0 success, 2 validation failure, 3 experiment assertion failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .errors import ExperimentError
from .scenario import (
    OUTPUT_DIR_ENV,
    ScenarioError,
    SecretLeakError,
    parse_scenario,
    run_scenario,
    validate_scenario,
    write_outputs,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_EXPERIMENT = 3

# per-kind flags: (flag, parameter name, type)
_DIRECT_FLAGS = {
    "purify": [("--eta", "eta", float), ("--rounds", "rounds", int)],
    "filter": [("--initial", "initial", str), ("--eta", "eta", float),
               ("--weight", "weight", float), ("--rounds", "rounds", int),
               ("--side", "side", str), ("--eps-deg", "eps_deg", float),
               ("--marginal-noise", "marginal_noise", float)],
    "tomography": [("--ensemble", "ensemble", str), ("--d", "d", int), ("--k", "k", int),
                   ("--samples", "samples", int), ("--moment-samples", "moment_samples", int)],
    "trapdoor": [("--pairs", "pairs", int), ("--threshold", "threshold", float),
                 ("--adversary", "adversary", str), ("--trials", "trials", int),
                 ("--mode", "mode", str)],
    "schur": [("--pair-dim", "pair_dim", int), ("--copies", "copies", int),
              ("--buffer", "buffer", str), ("--ensemble", "ensemble", str),
              ("--samples", "samples", int)],
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jamlab",
        description="Adversarial quantum-repeater experiments.",
        epilog=f"Default output directory: ${OUTPUT_DIR_ENV} (else ./results).",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario file (or a run manifest)")
    run.add_argument("--config", required=True, help="YAML/JSON scenario or manifest")
    run.add_argument("--seed", help="master seed (hex), overrides the file")
    run.add_argument("--out", help="output CSV path, overrides the file")

    for kind, flags in _DIRECT_FLAGS.items():
        p = sub.add_parser(kind, help=f"run a {kind} experiment directly")
        for flag, dest, typ in flags:
            p.add_argument(flag, dest=dest, type=typ)
        p.add_argument("--seed", default="0", help="master seed (hex)")
        p.add_argument("--out", help="output CSV path")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            try:
                text = Path(args.config).read_text()
            except OSError as exc:
                raise ScenarioError([f"config: cannot read {args.config}: {exc}"]) from None
            config = parse_scenario(text, seed=args.seed, out=args.out)
        else:
            params = {dest: getattr(args, dest) for _, dest, _ in _DIRECT_FLAGS[args.command]
                      if getattr(args, dest) is not None}
            doc = {"kind": args.command, "master_seed": args.seed, "parameters": params}
            config = validate_scenario(doc, out=args.out)
    except ScenarioError as exc:
        for err in exc.errors:
            print(f"invalid scenario: {err}", file=sys.stderr)
        return EXIT_INVALID

    try:
        result = run_scenario(config)
        csv_path, manifest = write_outputs(result, config)
    except (ExperimentError, SecretLeakError) as exc:
        print(f"error,{type(exc).__name__},{exc}", file=sys.stderr)
        return EXIT_EXPERIMENT
    except OSError as exc:
        print(f"error,output,{exc}", file=sys.stderr)
        return EXIT_EXPERIMENT
    print(f"wrote {result.manifest['row_count']} rows to {csv_path} (manifest {manifest})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
