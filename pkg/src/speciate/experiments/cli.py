"""Command-line entry point: ``speciate <experiment> [--config PATH] [--seed U64] [--out DIR] [--threads N]``."""

from __future__ import annotations

import argparse
import sys

from speciate.core import IntegrationError
from speciate.experiments.config import ConfigError
from speciate.experiments.runner import EXPERIMENTS, run_experiment
from speciate.gaussian import DegenerateModelError
from speciate.replica import PopulationError
from speciate.speciation import BracketError, DegeneratePairError, NoTransitionError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_BRACKET = 4

HELP = {
    "predict": "solve the speciation criterion for every component pair",
    "uturn": "attribution matrix of U-turn trajectories at one time",
    "misattribution": "misattribution fraction per origin over a time grid",
    "bands": "free-entropy gap with its fluctuation band over a time grid",
    "replica": "replica free entropies against transfer-matrix Monte Carlo",
    "gaussian": "radial potential and curvature time of the variance mixture",
    "collapse": "misattribution curves for several N against t / log N",
}


def _u64(s: str) -> int:
    v = int(s)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="config file or a previous manifest.json")
    common.add_argument("--seed", type=_u64, metavar="U64", help="master seed (overrides rng.seed)")
    common.add_argument("--out", metavar="DIR", help="parent directory for run output (overrides output.dir)")
    common.add_argument("--threads", type=int, default=1, metavar="INT", help="worker threads, 0 = all cores")
    parser = argparse.ArgumentParser(prog="speciate", description="Speciation-time experiments for mixture diffusion models.")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, parents=[common], help=HELP[name])
        if name == "uturn":
            p.add_argument("--t", type=float, help="U-turn time (overrides experiment.t)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    if args.threads < 0:
        print("error: --threads must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = run_experiment(
            args.config,
            kind=args.experiment,
            threads=args.threads,
            seed=args.seed,
            out_dir=args.out,
            t=getattr(args, "t", None),
        )
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (BracketError, NoTransitionError, DegeneratePairError, DegenerateModelError, PopulationError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_BRACKET
    except (IntegrationError, FloatingPointError, ArithmeticError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(manifest.run_dir)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
