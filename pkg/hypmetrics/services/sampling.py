"""Search modes, seeded index streams and the worker pool.

Sampled scans are cut into fixed-size blocks. Block ``b`` draws its tuples
from a generator seeded with ``(seed, b)``, so the tuple at global index k
is a function of (seed, k) only and the result of a scan never depends on
how many workers processed the blocks. Partial results are merged in block
order.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from .errors import DomainError
from .settings import SETTINGS

logger = logging.getLogger(__name__)

BLOCK_SIZE = 1 << 15
EXHAUSTIVE = "exhaustive"
SAMPLED = "sampled"
AUTO = "auto"

T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True)
class SearchMode:
    """How a scan walks its tuple space."""

    kind: str
    samples: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in (EXHAUSTIVE, SAMPLED, AUTO):
            raise DomainError(f"Unknown search mode: {self.kind}")
        if self.kind != EXHAUSTIVE:
            if self.samples is None or self.samples < 1:
                raise DomainError(f"{self.kind.capitalize()} mode needs a positive sample count")
            if self.seed is None or self.seed < 0:
                raise DomainError(f"{self.kind.capitalize()} mode needs a non-negative seed")

    @classmethod
    def exhaustive(cls) -> "SearchMode":
        return cls(EXHAUSTIVE)

    @classmethod
    def sampled(cls, samples: Optional[int] = None, seed: Optional[int] = None) -> "SearchMode":
        return cls(
            SAMPLED,
            samples=SETTINGS.samples if samples is None else samples,
            seed=SETTINGS.seed if seed is None else seed,
        )

    @classmethod
    def auto(cls, samples: Optional[int] = None, seed: Optional[int] = None) -> "SearchMode":
        """Exhaustive when the scan fits its budget, else sampled with these parameters."""
        return cls(
            AUTO,
            samples=SETTINGS.samples if samples is None else samples,
            seed=SETTINGS.seed if seed is None else seed,
        )

    @property
    def is_exhaustive(self) -> bool:
        return self.kind == EXHAUSTIVE

    def as_dict(self) -> Dict[str, Any]:
        if self.is_exhaustive:
            return {"kind": EXHAUSTIVE}
        return {"kind": self.kind, "samples": self.samples, "seed": self.seed}


def resolve_mode(mode: Optional[SearchMode], fits_exhaustive: bool, what: str) -> SearchMode:
    """Pick the concrete mode for a scan; ``None`` means ``SearchMode.auto()``."""
    if mode is None:
        mode = SearchMode.auto()
    if mode.kind == AUTO:
        if fits_exhaustive:
            return SearchMode.exhaustive()
        logger.info("%s exceeds the exhaustive budget, sampling %d tuples (seed %d)", what, mode.samples, mode.seed)
        return SearchMode.sampled(mode.samples, mode.seed)
    if mode.is_exhaustive and not fits_exhaustive:
        logger.warning("Exhaustive %s requested above its budget; this may be slow", what)
    return mode


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(block)]))


def sample_blocks(samples: int, block_size: int = BLOCK_SIZE) -> List[Tuple[int, int]]:
    """Split ``samples`` draws into ``(block_id, count)`` pairs."""
    out = []
    for block, start in enumerate(range(0, samples, block_size)):
        out.append((block, min(block_size, samples - start)))
    return out


def tuple_blocks(samples: int, n: int, k: int, block_size: int = BLOCK_SIZE) -> List[Tuple[int, int]]:
    """Sample blocks for distinct k-tuples; none when the space has fewer than k points."""
    if n < k:
        return []
    return sample_blocks(samples, block_size)


def draw_tuples(rng: np.random.Generator, count: int, n: int, k: int, distinct: bool) -> np.ndarray:
    """Draw ``count`` index tuples of length ``k`` from ``range(n)``."""
    if distinct and n < k:
        raise DomainError(f"Cannot draw {k} distinct indices from {n} points")
    idx = rng.integers(0, n, size=(count, k))
    if not distinct or k == 1:
        return idx
    while True:
        ordered = np.sort(idx, axis=1)
        bad = np.any(ordered[:, 1:] == ordered[:, :-1], axis=1)
        if not bad.any():
            return idx
        idx[bad] = rng.integers(0, n, size=(int(bad.sum()), k))


def combinations_array(n: int, k: int) -> np.ndarray:
    """All increasing k-tuples of ``range(n)`` as an (m, k) index array."""
    flat = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(n), k)),
        dtype=np.intp,
    )
    return flat.reshape(-1, k)


def row_chunks(total: int, chunk: int) -> List[Tuple[int, int]]:
    return [(start, min(start + chunk, total)) for start in range(0, total, chunk)]


def parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: Optional[int] = None) -> List[R]:
    """Map ``fn`` over ``items`` on a thread pool, keeping input order."""
    workers = SETTINGS.threads if threads is None else threads
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
