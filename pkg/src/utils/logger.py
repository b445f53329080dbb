import logging
import os
from pathlib import Path

from rich.console import Console
from rich.logging import RichHandler

ROOT_LOGGER = "sdpo_lab"


def get_logger(name: str = ROOT_LOGGER) -> logging.Logger:
    """Create a configured logger with Rich output on stderr."""
    if name != ROOT_LOGGER and not name.startswith(ROOT_LOGGER + "."):
        name = f"{ROOT_LOGGER}.{name}"
    root = logging.getLogger(ROOT_LOGGER)
    if not root.handlers:
        root.setLevel(logging.getLevelName(os.environ.get("LOG_LEVEL", "INFO").upper()))
        handler = RichHandler(
            console=Console(stderr=True),
            rich_tracebacks=True,
            show_time=True,
            show_level=True,
            show_path=False,
        )
        handler.setFormatter(logging.Formatter("%(message)s"))
        root.addHandler(handler)
        root.propagate = False
    return logging.getLogger(name)


def attach_run_log(run_dir: Path) -> logging.FileHandler:
    """Mirror package logs into <run_dir>/run.log. No timestamps: reruns stay byte-identical."""
    get_logger()
    run_dir.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(run_dir / "run.log", mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s %(message)s"))
    logging.getLogger(ROOT_LOGGER).addHandler(handler)
    return handler


def detach_run_log(handler: logging.FileHandler) -> None:
    logging.getLogger(ROOT_LOGGER).removeHandler(handler)
    handler.close()
