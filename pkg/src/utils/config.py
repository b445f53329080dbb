from __future__ import annotations

import os
from dataclasses import dataclass
from dotenv import load_dotenv

from src.utils.logger import get_logger


@dataclass
class Settings:
    output_dir: str
    log_level: str
    plot_width: int
    plot_height: int


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    try:
        value = int(raw)
    except ValueError:
        get_logger("settings").warning(f"{name}={raw!r} is not an integer, using {default}")
        return default
    if value <= 0:
        get_logger("settings").warning(f"{name}={value} must be positive, using {default}")
        return default
    return value


def load_settings() -> Settings:
    """Load process settings from the environment (and a .env file if present).
    Experiment parameters live in the TOML config, not here.
    """
    load_dotenv()

    level = os.getenv("LOG_LEVEL", "INFO").upper()
    if level not in {"DEBUG", "INFO", "WARNING", "ERROR"}:
        level = "INFO"

    return Settings(
        output_dir=os.getenv("SDPO_LAB_OUTPUT_DIR", "runs"),
        log_level=level,
        plot_width=_int_env("SDPO_LAB_PLOT_WIDTH", 640),
        plot_height=_int_env("SDPO_LAB_PLOT_HEIGHT", 400),
    )
