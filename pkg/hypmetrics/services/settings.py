"""Runtime configuration.

Each key is looked up in the process environment first, then in the
project-root ``.env`` file, then falls back to a built-in default. The
``.env`` file is optional and only ever read, never written.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Mapping, Optional

from dotenv import dotenv_values

logger = logging.getLogger(__name__)

PROJECT_ROOT = Path(__file__).resolve().parents[2]
ENV_PATH = PROJECT_ROOT / ".env"
DEFAULT_DATABASE_URL = f"sqlite:///{PROJECT_ROOT / 'runs.db'}"


@dataclass(frozen=True)
class Settings:
    threads: int
    seed: int
    samples: int
    quad_budget: int
    log_level: str
    database_url: str

    def override(self, **changes) -> "Settings":
        """Return a copy with the non-None ``changes`` applied."""
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def _read_env_file(env_path: Optional[Path]) -> Dict[str, str]:
    if env_path is None or not env_path.exists():
        return {}
    try:
        return {k: v for k, v in dotenv_values(env_path).items() if v is not None}
    except Exception:
        logger.warning("Could not read %s, ignoring it", env_path)
        return {}


def _lookup(name: str, file_values: Mapping[str, str]) -> Optional[str]:
    # Priority: process env, then .env file
    value = os.getenv(name)
    if value is None:
        value = file_values.get(name)
    return value


def _int_setting(name: str, default: int, file_values: Mapping[str, str], minimum: int = 0) -> int:
    raw = _lookup(name, file_values)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        logger.warning("%s=%r is not an integer, using %d", name, raw, default)
        return default
    if value < minimum:
        logger.warning("%s=%d is below %d, using %d", name, value, minimum, default)
        return default
    return value


def load_settings(env_path: Optional[Path] = ENV_PATH) -> Settings:
    file_values = _read_env_file(env_path)
    return Settings(
        threads=_int_setting("HYPMETRICS_THREADS", os.cpu_count() or 1, file_values, minimum=1),
        seed=_int_setting("HYPMETRICS_SEED", 0, file_values),
        samples=_int_setting("HYPMETRICS_SAMPLES", 1_000_000, file_values, minimum=1),
        quad_budget=_int_setting("HYPMETRICS_QUAD_BUDGET", 500_000, file_values, minimum=1),
        log_level=(_lookup("HYPMETRICS_LOG_LEVEL", file_values) or "INFO").upper(),
        database_url=_lookup("HYPMETRICS_DATABASE_URL", file_values) or DEFAULT_DATABASE_URL,
    )


SETTINGS = load_settings()
