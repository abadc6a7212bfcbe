"""
Runtime settings and logging setup for the six-state simulator.

Usage:
    from sixstate.config import Settings, setup_logging

    settings = Settings.from_env()
    setup_logging(settings.log_level, settings.log_file)

Every value can come from the environment (a local ``.env`` file is merged
first) and every explicit argument wins over the environment.
"""

import logging
import math
import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv

from .errors import ConfigurationError

load_dotenv()

# Algebraic identities on 2x2 complex products.
ATOL = 1e-12
# Classifying a wave-plate output as one of the six named states.
CLASSIFY_TOL = 1e-9
# Probability vectors handed to the chi-square test.
PROB_SUM_TOL = 1e-9

DEFAULT_SEED = 0
DEFAULT_PULSES = 2363
DEFAULT_WORKERS = 1
DEFAULT_Z_MAX = 4.0
DEFAULT_LOG_LEVEL = "WARNING"
# Seeds key a 64-bit Philox generator.
MAX_SEED = 2**64 - 1

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


def _env_int(name: str, default: int, minimum: int, maximum: Optional[int] = None) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{name}={raw!r} is not an integer") from exc
    if value < minimum:
        raise ConfigurationError(f"{name}={value} must be >= {minimum}")
    if maximum is not None and value > maximum:
        raise ConfigurationError(f"{name}={value} must be <= {maximum}")
    return value


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = float(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{name}={raw!r} is not a number") from exc
    if not math.isfinite(value) or value <= 0:
        raise ConfigurationError(f"{name}={raw!r} must be a positive finite number")
    return value


@dataclass(frozen=True)
class Settings:
    """Defaults shared by the CLI and the session runner."""

    seed: int = DEFAULT_SEED
    pulses: int = DEFAULT_PULSES
    workers: int = DEFAULT_WORKERS
    z_max: float = DEFAULT_Z_MAX
    log_level: str = DEFAULT_LOG_LEVEL
    log_file: Optional[str] = None

    @classmethod
    def from_env(
        cls,
        seed: Optional[int] = None,
        pulses: Optional[int] = None,
        workers: Optional[int] = None,
        z_max: Optional[float] = None,
        log_level: Optional[str] = None,
        log_file: Optional[str] = None,
    ) -> "Settings":
        """
        Build settings from the environment.

        Args:
            seed: Session seed (uses SIXSTATE_SEED if None)
            pulses: Pulses per session (uses SIXSTATE_PULSES if None)
            workers: Worker threads (uses SIXSTATE_WORKERS if None)
            z_max: Benchmark z threshold (uses SIXSTATE_Z_MAX if None)
            log_level: Logging level name (uses SIXSTATE_LOG_LEVEL if None)
            log_file: Optional log file (uses SIXSTATE_LOG_FILE if None)

        Raises:
            ConfigurationError: If an environment value cannot be used
        """
        if seed is None:
            seed = _env_int("SIXSTATE_SEED", DEFAULT_SEED, minimum=0, maximum=MAX_SEED)
        if pulses is None:
            pulses = _env_int("SIXSTATE_PULSES", DEFAULT_PULSES, minimum=1)
        if workers is None:
            workers = _env_int("SIXSTATE_WORKERS", DEFAULT_WORKERS, minimum=1)
        if z_max is None:
            z_max = _env_float("SIXSTATE_Z_MAX", DEFAULT_Z_MAX)
        if log_level is None:
            log_level = os.getenv("SIXSTATE_LOG_LEVEL", DEFAULT_LOG_LEVEL)
        if log_file is None:
            log_file = os.getenv("SIXSTATE_LOG_FILE") or None

        level_name = log_level.strip().upper()
        if not isinstance(logging.getLevelName(level_name), int):
            raise ConfigurationError(f"unknown log level {log_level!r}")

        return cls(
            seed=seed,
            pulses=pulses,
            workers=workers,
            z_max=z_max,
            log_level=level_name,
            log_file=log_file,
        )


def setup_logging(level: str = DEFAULT_LOG_LEVEL, log_file: Optional[str] = None) -> logging.Logger:
    """
    Configure the ``sixstate`` logger tree.

    Args:
        level: Logging level name
        log_file: Optional file that receives the same records as stderr

    Returns:
        The package root logger
    """
    logger = logging.getLogger("sixstate")
    logger.setLevel(level)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter(LOG_FORMAT)
    stream = logging.StreamHandler()
    stream.setFormatter(formatter)
    logger.addHandler(stream)

    if log_file:
        handler = logging.FileHandler(log_file)
        handler.setFormatter(formatter)
        logger.addHandler(handler)

    logger.propagate = False
    return logger
