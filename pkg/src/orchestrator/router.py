"""Command router: resolves config, seed and run directory, then dispatches to LabWorkflow."""
from __future__ import annotations

import argparse
from pathlib import Path
from typing import Dict, Optional

from src.experiments.config import ExperimentConfig, load_config, require_seed
from src.utils.config import Settings, load_settings
from src.utils.errors import UsageError
from src.utils.logger import attach_run_log, detach_run_log, get_logger
from .workflow import LabWorkflow, report_run

COMMANDS = ("pretrain", "gen-pairs", "align", "iterate", "diagnose", "sde-sample", "report")

# workflow keyword -> argparse attribute, per command
_OPTIONS: Dict[str, Dict[str, str]] = {
    "pretrain": {},
    "gen-pairs": {"checkpoint": "checkpoint", "n": "n", "unlike": "unlike"},
    "align": {"checkpoint": "checkpoint", "pairs_path": "pairs", "n": "n", "unlike": "unlike"},
    "iterate": {"checkpoint": "checkpoint", "rounds": "rounds", "epochs": "epochs", "pairs_per_round": "pairs_per_round"},
    "diagnose": {"what": "what", "checkpoint": "checkpoint", "n": "n"},
    "sde-sample": {
        "n_steps": "n_steps",
        "epsilon": "epsilon",
        "drift_form": "drift_form",
        "closed_form": "closed_form",
        "n": "n",
    },
}


class CommandRouter:
    """Routes a parsed command line to the workflow method for its command."""

    def __init__(self, settings: Optional[Settings] = None):
        self.logger = get_logger("router")
        self.settings = settings or load_settings()
        get_logger().setLevel(self.settings.log_level)
        self.run_dir: Optional[Path] = None

    def default_run_dir(self, command: str, method: str, seed: int) -> Path:
        return Path(self.settings.output_dir) / f"{command}-{method}-s{seed}"

    def route(self, args: argparse.Namespace) -> Path:
        """Run ``args.command``; returns the run directory it wrote to."""
        if args.command not in COMMANDS:
            raise UsageError(f"unknown command {args.command!r}")
        if args.command == "report":
            if args.run is None:
                raise UsageError("report needs --run <dir>")
            self.run_dir = Path(args.run)
            report_run(self.run_dir, self.settings)
            return self.run_dir

        config: ExperimentConfig = load_config(Path(args.config) if args.config else None)
        seed = require_seed(args.seed)
        method = args.method or config.method
        self.run_dir = Path(args.out) if args.out else self.default_run_dir(args.command, method, seed)
        self.run_dir.mkdir(parents=True, exist_ok=True)

        handler = attach_run_log(self.run_dir)
        try:
            if config.seed is not None and config.seed != seed:
                self.logger.warning(f"config seed {config.seed} ignored, --seed {seed} wins")
            workflow = LabWorkflow(self.settings, config, seed, self.run_dir, method)
            options = {key: getattr(args, attr) for key, attr in _OPTIONS[args.command].items()}
            options = {k: (Path(v) if k in ("checkpoint", "pairs_path") and v is not None else v) for k, v in options.items()}
            workflow.snapshot(args.command, options)
            self.logger.info(f"{args.command} ({method}, seed {seed}) -> {self.run_dir}")
            getattr(workflow, args.command.replace("-", "_"))(**options)
            self.logger.info(f"{args.command} finished")
        except Exception as e:
            details = getattr(e, "details", None)
            self.logger.error(f"{type(e).__name__}: {e}" + (f" details={details}" if details else ""))
            raise
        finally:
            detach_run_log(handler)
        return self.run_dir
