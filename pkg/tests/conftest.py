import os
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.append(str(ROOT))

# the ledger engine is created at import time, so point it at a scratch file first
_DB_DIR = tempfile.mkdtemp(prefix="hypmetrics-tests-")
os.environ["HYPMETRICS_DATABASE_URL"] = f"sqlite:///{Path(_DB_DIR) / 'runs.db'}"
os.environ.setdefault("HYPMETRICS_THREADS", "2")

from hypmetrics.services.metric_core import SampledSpace  # noqa: E402
from hypmetrics.services.spaces import build, load_space_spec  # noqa: E402

SPECS_DIR = ROOT / "specs"
SHIPPED = ["halfplane.json", "punctured.json", "unitdisk.json", "cloud_disc.json", "graph.json"]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def shipped_spaces():
    """The five shipped geometries, built with distance-to-obstacle weights."""
    return {name: build(load_space_spec(SPECS_DIR / name)) for name in SHIPPED}


@pytest.fixture
def line_space():
    return SampledSpace.from_points(np.arange(10, dtype=float).reshape(-1, 1))


@pytest.fixture
def four_cycle():
    return SampledSpace.from_matrix(
        [[0, 1, 2, 1], [1, 0, 1, 2], [2, 1, 0, 1], [1, 2, 1, 0]],
        labels=["a", "b", "c", "d"],
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long counterexample budgets; deselect with -m 'not slow'")
