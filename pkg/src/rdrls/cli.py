"""Command-line entry point: ``rdrls-sim``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import kernels
from .config import PRESETS, ConfigError, load_config, resolve_config
from .harness import run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rdrls-sim",
        description="Monte-Carlo learning curves of diffusion RLS variants under impulsive noise.")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="YAML config file or a run manifest.json to reproduce")
    src.add_argument("--preset", choices=sorted(PRESETS), help="built-in figure preset")
    p.add_argument("--trials", type=int, help="override the number of Monte-Carlo trials")
    p.add_argument("--iterations", type=int, help="override the iteration count")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--out", help="output directory (default: the config's output_dir)")
    p.add_argument("--workers", type=int, default=1, help="parallel trial processes")
    p.add_argument("--backend", choices=kernels.available_backends(),
                   help=f"simulation kernel (default: {kernels.BACKEND})")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {"trials": args.trials, "iterations": args.iterations, "seed": args.seed}
    try:
        if args.config:
            config = load_config(args.config, overrides)
        else:
            config = resolve_config({"preset": args.preset}, overrides)
    except ConfigError as exc:
        print(f"rdrls-sim: {exc}", file=sys.stderr)
        return 2
    outputs = run(config, args.out, workers=args.workers, backend=args.backend)
    print(f"wrote {outputs.learning_curve.parent}/ "
          f"({outputs.learning_curve.name}, {outputs.nodewise.name}, {outputs.manifest.name})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
