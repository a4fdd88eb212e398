from __future__ import annotations

import logging
import os

from dotenv import load_dotenv
from rich.console import Console
from rich.logging import RichHandler

from errors import SettingsError

load_dotenv()

VERSION = "0.3.0"

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

# bad values fall back to the default here and are reported by check_environment()
ENV_PROBLEMS: list[str] = []


def _env_int(name: str, default: int, minimum: int) -> int:
    raw = os.environ.get(name, str(default))
    try:
        value = int(raw)
    except ValueError:
        ENV_PROBLEMS.append(f"{name}={raw!r} is not an integer")
        return default
    return max(minimum, value)


def _env_float(name: str, default: float, low: float, high: float) -> float:
    raw = os.environ.get(name, str(default))
    try:
        value = float(raw)
    except ValueError:
        ENV_PROBLEMS.append(f"{name}={raw!r} is not a number")
        return default
    if not low < value < high:
        ENV_PROBLEMS.append(f"{name}={raw!r} must lie in ({low}, {high})")
        return default
    return value


# Worker cap for sweeps and multistarts
THREADS = _env_int("QKDLAB_THREADS", 1, 1)

LOG_LEVEL = os.environ.get("QKDLAB_LOG_LEVEL", "WARNING").upper()
if LOG_LEVEL not in LOG_LEVELS:
    ENV_PROBLEMS.append(f"QKDLAB_LOG_LEVEL={LOG_LEVEL!r} is not one of {', '.join(LOG_LEVELS)}")
    LOG_LEVEL = "WARNING"

# Solver knobs. Reported minima never use fewer than 20 starts.
N_STARTS = _env_int("QKDLAB_N_STARTS", 20, 20)
SCAN_STARTS = _env_int("QKDLAB_SCAN_STARTS", 1, 0)
Q_GRID_STEP = _env_float("QKDLAB_Q_GRID_STEP", 0.001, 0.0, 0.5)
SOLVER_SEED = _env_int("QKDLAB_SEED", 20080101, 0)


def check_environment() -> None:
    if ENV_PROBLEMS:
        raise SettingsError("bad environment: " + "; ".join(ENV_PROBLEMS))


# sets up rich logging on stderr, once
def configure_logging(level: str | None = None) -> None:
    level = (level or LOG_LEVEL).upper()
    if level not in LOG_LEVELS:
        raise SettingsError(f"log level {level!r} is not one of {', '.join(LOG_LEVELS)}")
    root = logging.getLogger()
    if any(isinstance(h, RichHandler) for h in root.handlers):
        root.setLevel(level)
        return

    handler = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=False)
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel(level)
