"""
Command-line entry point. Subcommands: identify, solve, analyze, benchmark, export-lp.

Exit codes: 0 success, 2 config error, 3 numeric or argument failure, 4 IO error.
"""
import argparse
import logging
import os
import sys
from typing import List, Optional

from multitax.src.config import settings
from multitax.src.config_loader import ConfigLoader
from multitax.src.exceptions import MultitaxError
from multitax.src.utils.run_setup import apply_overrides

logger = logging.getLogger("multitax")

COMMANDS = ("identify", "solve", "analyze", "benchmark", "export-lp")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multitax", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", default="baseline", help="Config name or YAML path")
        cmd.add_argument("--out", default=None, help="Output directory (default $MULTITAX_OUTPUT_DIR/<name>)")
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--no-ic", action="store_true", help="Drop incentive rows (benchmark mode)")
        cmd.add_argument("--eta", type=float, default=None)
        cmd.add_argument("--grid", default=None, help="Lattice size NxM")
        if name == "identify":
            cmd.add_argument("--records", default=None, help="Worker record CSV")
        if name == "solve":
            cmd.add_argument("--resume", action="store_true", help="Continue from the latest checkpoint")
        if name == "analyze":
            cmd.add_argument("--bundle", default=None, help="Solution bundle directory")
    return parser


def configure_logging(level: Optional[str] = None) -> None:
    logging.basicConfig(
        level=getattr(logging, (level or settings.multitax_log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def dispatch(args: argparse.Namespace) -> dict:
    from multitax.src.commands import analyze, benchmark, export_lp, identify, solve

    config = apply_overrides(ConfigLoader.load_config(args.config), seed=args.seed, no_ic=args.no_ic,
                             eta=args.eta, grid=args.grid)
    out_dir = args.out or os.path.join(settings.multitax_output_dir, config.name)
    if args.command == "identify":
        return identify.run(config, out_dir, records=args.records)
    if args.command == "solve":
        return solve.run(config, out_dir, resume=args.resume)
    if args.command == "analyze":
        return analyze.run(config, out_dir, bundle=args.bundle)
    if args.command == "benchmark":
        return benchmark.run(config, out_dir)
    return export_lp.run(config, out_dir)


def exit_code(error: BaseException) -> int:
    if isinstance(error, MultitaxError):
        return error.exit_code
    if isinstance(error, OSError):
        return 4
    if isinstance(error, (ValueError, ArithmeticError)):
        return 3
    return 1


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    try:
        outcome = dispatch(args)
    except Exception as e:
        code = exit_code(e)
        if code == 1:
            raise
        logger.error(f"❌ {args.command} failed: {e}")
        return code
    print(f"✅ {outcome['message']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
