"""sdpo-lab - command-line entrypoint.

Exit status: 0 on success, 2 for usage or config errors, 1 for runtime
failures. Failures print exactly one line to stderr:
``error: <kind>: <message>``.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import NoReturn, Optional, Sequence

from src.flow.sde import DRIFT_FORMS
from src.orchestrator.router import COMMANDS, CommandRouter
from src.orchestrator.workflow import DIAGNOSTICS
from src.preference.losses import METHODS
from src.utils.errors import ConfigError, UsageError
from src.utils.logger import get_logger

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class LabArgumentParser(argparse.ArgumentParser):
    """argparse that raises instead of printing usage and exiting."""

    def error(self, message: str) -> NoReturn:
        raise UsageError(message)


def build_parser() -> LabArgumentParser:
    p = LabArgumentParser(
        prog="sdpo-lab",
        description="Toy-scale lab for diffusion preference optimization (Diffusion-DPO, DPO-C&M, SDPO)",
    )
    p.add_argument("command", choices=COMMANDS, help="what to run")
    p.add_argument("--config", type=str, default=None, help="TOML experiment config (defaults if omitted)")
    p.add_argument("--seed", type=int, default=None, help="master seed; required except for report")
    p.add_argument("--out", type=str, default=None, help="run directory (default $SDPO_LAB_OUTPUT_DIR/<command>-<method>-s<seed>)")
    p.add_argument("--method", choices=METHODS, default=None, help="preference loss; overrides the config")
    p.add_argument("--checkpoint", type=str, default=None, help="pretrained checkpoint.txt; pretrains in-run if omitted")
    p.add_argument("--pairs", type=str, default=None, help="pairs.csv to align on instead of generating pairs")
    p.add_argument("--n", type=int, default=None, help="number of pairs or samples")
    p.add_argument("--unlike", action="store_true", default=None, help="winners from the target's designated mode")
    p.add_argument("--rounds", type=int, default=None, help="iterate: number of rounds")
    p.add_argument("--epochs", type=int, default=None, help="iterate: passes over each round's pairs")
    p.add_argument("--pairs-per-round", type=int, default=None, help="iterate: fresh pairs per round")
    p.add_argument("--what", choices=DIAGNOSTICS, default=None, help="diagnose: which diagnostic")
    p.add_argument("--n-steps", type=int, default=None, help="sde-sample: Euler-Maruyama steps")
    p.add_argument("--epsilon", type=float, default=None, help="sde-sample: diffusion coefficient")
    p.add_argument("--drift-form", choices=DRIFT_FORMS, default=None, help="sde-sample: drift variant")
    p.add_argument("--closed-form", action="store_true", default=None, help="sde-sample: exact denoiser for N(0, I) data")
    p.add_argument("--run", type=str, default=None, help="report: run directory to summarize")
    return p


def _check(args: argparse.Namespace) -> None:
    for name in ("n", "rounds", "epochs", "pairs_per_round", "n_steps"):
        value = getattr(args, name)
        if value is not None and value < 1:
            raise UsageError(f"--{name.replace('_', '-')} must be >= 1, got {value}")
    if args.epsilon is not None and args.epsilon < 0:
        raise UsageError(f"--epsilon must be non-negative, got {args.epsilon}")
    if args.command == "diagnose" and args.what is None:
        raise UsageError("diagnose needs --what")


def _one_line(message: object) -> str:
    return " ".join(str(message).split())


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run the command, and return the exit status."""
    logger = get_logger("main")
    router: Optional[CommandRouter] = None
    try:
        args = build_parser().parse_args(list(argv) if argv is not None else None)
        _check(args)
        router = CommandRouter()
        run_dir = router.route(args)
    except UsageError as e:
        print(f"error: usage: {_one_line(e)}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(f"error: config: {_one_line(e)}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        logger.debug("command failed", exc_info=True)
        pointer = ""
        if router is not None and router.run_dir is not None and (Path(router.run_dir) / "run.log").exists():
            pointer = f" (see {Path(router.run_dir) / 'run.log'})"
        print(f"error: {type(e).__name__}: {_one_line(e)}{pointer}", file=sys.stderr)
        return EXIT_RUNTIME
    logger.info(f"outputs in {run_dir}")
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
