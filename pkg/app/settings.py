import logging
import os
from typing import Optional

from dotenv import load_dotenv

ENV_PREFIX = "SWABS_"

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

DEFAULT_LAMBDA_BAR = 1.1
DEFAULT_DELTA_F = 0.05
DEFAULT_KAPPA_CEILING = 0.99
DEFAULT_MEMORY_CAP_GB = 4.0

_loaded = False


def load_environment() -> None:
    """Load .env once; variables already set in the environment win"""
    global _loaded
    if not _loaded:
        load_dotenv()
        _loaded = True


def env(name: str, default: Optional[str] = None) -> Optional[str]:
    """Read a prefixed environment override, e.g. env("SEED") -> $SWABS_SEED"""
    load_environment()
    return os.getenv(f"{ENV_PREFIX}{name}", default)


def memory_cap_gb() -> float:
    return float(env("MEMORY_CAP_GB", str(DEFAULT_MEMORY_CAP_GB)))


def configure_logging(level: Optional[str] = None) -> None:
    level_name = (level or env("LOG_LEVEL", "INFO")).upper()
    root = logging.getLogger()
    if not any(getattr(h, "_switchabs", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._switchabs = True
        root.addHandler(handler)
    root.setLevel(getattr(logging, level_name, logging.INFO))


load_environment()
