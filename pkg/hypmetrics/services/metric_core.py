"""Finite sampled metric spaces, obstacle sets, weights and generic audits.

Everything here is immutable after construction. Arrays held by the
records are flagged read-only so they can be shared between workers.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Mapping, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import DimensionError, EvaluationError, WeightError
from .sampling import (
    SearchMode,
    block_rng,
    draw_tuples,
    parallel_map,
    resolve_mode,
    row_chunks,
    tuple_blocks,
)

logger = logging.getLogger(__name__)

TOL_ABS = 1e-9
TOL_REL = 1e-12
MATERIALIZE_LIMIT = 4096
PAIR_THRESHOLD = 4096
TRIPLE_THRESHOLD = 512

DIST_TO_OBSTACLE = "dist_to_obstacle"
CUSTOM_TABLE = "custom_table"

PointLike = Union[float, Sequence[float], np.ndarray]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


def as_points(points: Any) -> np.ndarray:
    """Coerce scalars, vectors and point lists to an (m, dim) float array."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(1, -1)
    return arr


# ---------------------------------------------------------------------------
# Obstacle primitives


@dataclass(frozen=True, eq=False)
class FinitePointSet:
    points: np.ndarray
    kind: str = field(default="points", init=False)

    def __post_init__(self):
        pts = as_points(self.points)
        if pts.shape[0] == 0:
            raise DimensionError("A finite point set obstacle needs at least one point")
        object.__setattr__(self, "points", _frozen(pts))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def distance(self, points: np.ndarray) -> np.ndarray:
        return cdist(points, self.points).min(axis=1)

    def describe(self) -> Dict[str, Any]:
        return {"type": self.kind, "points": self.points.tolist()}


@dataclass(frozen=True, eq=False)
class SinglePoint:
    at: np.ndarray
    kind: str = field(default="point", init=False)

    def __post_init__(self):
        object.__setattr__(self, "at", _frozen(np.atleast_1d(np.asarray(self.at, dtype=float))))

    @property
    def dim(self) -> int:
        return self.at.shape[0]

    def distance(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(points - self.at, axis=1)

    def describe(self) -> Dict[str, Any]:
        return {"type": self.kind, "at": self.at.tolist()}


@dataclass(frozen=True, eq=False)
class ClosedDisc:
    """Closed ball ``{p : |p - center| <= radius}``."""

    center: np.ndarray
    radius: float
    kind: str = field(default="disc", init=False)

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen(np.atleast_1d(np.asarray(self.center, dtype=float))))
        if not self.radius >= 0:
            raise DimensionError("Disc radius must be non-negative")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def distance(self, points: np.ndarray) -> np.ndarray:
        return np.maximum(np.linalg.norm(points - self.center, axis=1) - self.radius, 0.0)

    def describe(self) -> Dict[str, Any]:
        return {"type": self.kind, "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class Sphere:
    """Boundary ``{p : |p - center| = radius}`` of a ball."""

    center: np.ndarray
    radius: float
    kind: str = field(default="sphere", init=False)

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen(np.atleast_1d(np.asarray(self.center, dtype=float))))
        if not self.radius > 0:
            raise DimensionError("Sphere radius must be positive")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def distance(self, points: np.ndarray) -> np.ndarray:
        return np.abs(np.linalg.norm(points - self.center, axis=1) - self.radius)

    def describe(self) -> Dict[str, Any]:
        return {"type": self.kind, "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class HalfSpace:
    """Closed half-space ``{p : normal . p <= offset}``."""

    normal: np.ndarray
    offset: float
    kind: str = field(default="halfspace", init=False)

    def __post_init__(self):
        normal = np.atleast_1d(np.asarray(self.normal, dtype=float))
        if not np.linalg.norm(normal) > 0:
            raise DimensionError("Half-space normal must be nonzero")
        object.__setattr__(self, "normal", _frozen(normal))

    @property
    def dim(self) -> int:
        return self.normal.shape[0]

    def distance(self, points: np.ndarray) -> np.ndarray:
        height = (points @ self.normal - self.offset) / np.linalg.norm(self.normal)
        return np.maximum(height, 0.0)

    def describe(self) -> Dict[str, Any]:
        return {"type": self.kind, "normal": self.normal.tolist(), "offset": self.offset}


@dataclass(frozen=True, eq=False)
class VertexSet:
    """Vertices of a graph space, with their graph distances to the set."""

    labels: Tuple[str, ...]
    distance_to_set: Mapping[str, float]
    kind: str = field(default="vertices", init=False)

    dim = None

    def distance_of(self, label: str) -> float:
        try:
            return float(self.distance_to_set[label])
        except KeyError:
            raise DimensionError(f"Unknown graph vertex: {label!r}") from None

    def describe(self) -> Dict[str, Any]:
        return {"type": self.kind, "labels": list(self.labels)}


Primitive = Union[FinitePointSet, SinglePoint, ClosedDisc, Sphere, HalfSpace, VertexSet]


@dataclass(frozen=True)
class ObstacleSet:
    """The excluded closed set M as a union of primitives."""

    primitives: Tuple[Primitive, ...]

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        if not self.primitives:
            raise DimensionError("An obstacle set needs at least one primitive")

    @property
    def is_graph(self) -> bool:
        return any(isinstance(p, VertexSet) for p in self.primitives)

    def distances(self, points: Any) -> np.ndarray:
        """Vectorised distance to M for an (m, dim) array of points."""
        pts = as_points(points)
        best = np.full(pts.shape[0], np.inf)
        for prim in self.primitives:
            if isinstance(prim, VertexSet):
                raise DimensionError("Graph-vertex obstacles take vertex labels, not coordinates")
            if prim.dim != pts.shape[1]:
                raise DimensionError(
                    f"Point dimension {pts.shape[1]} does not match {prim.kind} dimension {prim.dim}"
                )
            best = np.minimum(best, prim.distance(pts))
        return best

    def describe(self):
        return [p.describe() for p in self.primitives]


def dist_to_set(x: Union[PointLike, str], obstacle: ObstacleSet) -> float:
    """Distance from a point (or graph vertex label) to the obstacle set."""
    if isinstance(x, str):
        values = [p.distance_of(x) for p in obstacle.primitives if isinstance(p, VertexSet)]
        if not values:
            raise DimensionError("Vertex labels need a graph-vertex obstacle")
        return min(values)
    return float(obstacle.distances(np.atleast_1d(np.asarray(x, dtype=float)))[0])


# ---------------------------------------------------------------------------
# Spaces and oracles


class PairOracle(Protocol):
    """Anything that yields a symmetric distance-like value per index pair."""

    @property
    def n(self) -> int: ...

    def pairs(self, i: np.ndarray, j: np.ndarray) -> np.ndarray: ...

    def dense(self) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class SampledSpace:
    """A finite sample of a metric space with its base distance."""

    labels: Tuple[str, ...]
    points: Optional[np.ndarray] = None
    matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(str(label) for label in self.labels))
        if self.points is not None:
            object.__setattr__(self, "points", _frozen(as_points(self.points)))
        if self.matrix is not None:
            object.__setattr__(self, "matrix", _frozen(self.matrix))
        if self.points is None and self.matrix is None:
            raise DimensionError("A sampled space needs coordinates or a distance matrix")

    @classmethod
    def from_points(
        cls,
        points: Any,
        labels: Optional[Sequence[str]] = None,
        materialize: Optional[bool] = None,
    ) -> "SampledSpace":
        pts = as_points(points)
        n = pts.shape[0]
        if labels is None:
            labels = [f"p{i}" for i in range(n)]
        if materialize is None:
            materialize = n <= MATERIALIZE_LIMIT
        matrix = squareform(pdist(pts)) if materialize and n > 1 else None
        if materialize and n == 1:
            matrix = np.zeros((1, 1))
        return cls(labels=tuple(labels), points=pts, matrix=matrix)

    @classmethod
    def from_matrix(cls, matrix: Any, labels: Optional[Sequence[str]] = None) -> "SampledSpace":
        mat = np.asarray(matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DimensionError("Distance matrix must be square")
        if labels is None:
            labels = [f"p{i}" for i in range(mat.shape[0])]
        return cls(labels=tuple(labels), matrix=mat)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> Optional[int]:
        return None if self.points is None else self.points.shape[1]

    @property
    def is_materialized(self) -> bool:
        return self.matrix is not None

    def distance(self, i: int, j: int) -> float:
        return float(self.pairs(np.array([i]), np.array([j]))[0])

    def pairs(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        i = np.asarray(i, dtype=np.intp)
        j = np.asarray(j, dtype=np.intp)
        if self.matrix is not None:
            return self.matrix[i, j]
        return np.linalg.norm(self.points[i] - self.points[j], axis=-1)

    def rows(self, start: int, stop: int) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix[start:stop]
        return cdist(self.points[start:stop], self.points)

    def dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        return squareform(pdist(self.points)) if self.n > 1 else np.zeros((1, 1))


@dataclass(frozen=True, eq=False)
class WeightFunction:
    """Per-point positive weights F(p_i) with their provenance."""

    values: np.ndarray
    source: str = CUSTOM_TABLE
    lipschitz_certified: bool = False
    provenance: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        bad = np.flatnonzero(~(values > 0) | ~np.isfinite(values))
        if bad.size:
            i = int(bad[0])
            raise WeightError(f"Weight at index {i} must be positive and finite, got {values[i]!r}")
        if self.source not in (DIST_TO_OBSTACLE, CUSTOM_TABLE):
            raise WeightError(f"Unknown weight source: {self.source}")
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def from_obstacle(cls, space: SampledSpace, obstacle: ObstacleSet) -> "WeightFunction":
        if obstacle.is_graph:
            values = [dist_to_set(label, obstacle) for label in space.labels]
        else:
            values = obstacle.distances(space.points)
        return cls(np.asarray(values), source=DIST_TO_OBSTACLE, lipschitz_certified=True)

    @classmethod
    def custom(cls, values: Sequence[float], **provenance: Any) -> "WeightFunction":
        return cls(np.asarray(values, dtype=float), source=CUSTOM_TABLE, provenance=provenance)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def certified(self) -> "WeightFunction":
        return WeightFunction(self.values, self.source, True, dict(self.provenance))

    def describe(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"source": self.source, "lipschitz_certified": self.lipschitz_certified}
        if self.provenance:
            out["provenance"] = dict(self.provenance)
        return out


class DistanceField:
    """F(p) = dist(p, M) evaluated at arbitrary coordinates."""

    def __init__(self, obstacle: ObstacleSet):
        self.obstacle = obstacle

    def __call__(self, points: Any) -> np.ndarray:
        return self.obstacle.distances(points)


class ConstantField:
    """F(p) = value everywhere; trivially 1-Lipschitz."""

    def __init__(self, value: float):
        if not value > 0:
            raise WeightError("Constant weight must be positive")
        self.value = float(value)

    def __call__(self, points: Any) -> np.ndarray:
        return np.full(as_points(points).shape[0], self.value)


# ---------------------------------------------------------------------------
# Audits


@dataclass(frozen=True)
class AuditReport:
    checked: int
    violations: int
    worst_defect: float
    witness: Tuple[int, ...]
    mode: SearchMode
    tolerance: str = f"abs {TOL_ABS:g}"
    worst_ratio: Optional[float] = None

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def as_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "checked": self.checked,
            "violations": self.violations,
            "worst_defect": finite_or_none(self.worst_defect),
            "witness": list(self.witness),
            "mode": self.mode.as_dict(),
            "tolerance": self.tolerance,
            "passed": self.passed,
        }
        if self.worst_ratio is not None:
            out["worst_ratio"] = finite_or_none(self.worst_ratio)
        return out


def finite_or_none(value: Optional[float]) -> Optional[float]:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


@dataclass
class ScanPartial:
    checked: int = 0
    violations: int = 0
    worst: float = math.inf
    witness: Tuple[int, ...] = ()

    def absorb(self, other: "ScanPartial") -> None:
        self.checked += other.checked
        self.violations += other.violations
        # strict comparison keeps the first minimum in scan order
        if other.worst < self.worst:
            self.worst = other.worst
            self.witness = other.witness


def merge_partials(parts: Sequence[ScanPartial]) -> ScanPartial:
    total = ScanPartial()
    for part in parts:
        total.absorb(part)
    return total


def finish_report(total: ScanPartial, mode: SearchMode, tolerance: str, **extra) -> AuditReport:
    worst = 0.0 if total.checked == 0 else total.worst
    return AuditReport(
        checked=total.checked,
        violations=total.violations,
        worst_defect=float(worst),
        witness=tuple(int(i) for i in total.witness),
        mode=mode,
        tolerance=tolerance,
        **extra,
    )


def lipschitz_slack(space: SampledSpace, weights: WeightFunction, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    """d(i, j) - |F(i) - F(j)|; negative means a Lipschitz violation."""
    F = weights.values
    return space.pairs(i, j) - np.abs(F[i] - F[j])


def lipschitz_audit(
    space: SampledSpace,
    weights: WeightFunction,
    mode: Optional[SearchMode] = None,
    threads: Optional[int] = None,
    tol: float = TOL_ABS,
    pair_threshold: int = PAIR_THRESHOLD,
) -> AuditReport:
    """Check |F(i) - F(j)| <= d(i, j) over all (or sampled) pairs."""
    n = space.n
    if weights.n != n:
        raise DimensionError(f"Weights cover {weights.n} points, space has {n}")
    mode = resolve_mode(mode, n <= pair_threshold, "Lipschitz audit")
    F = weights.values

    if mode.is_exhaustive:
        def scan(bounds: Tuple[int, int]) -> ScanPartial:
            start, stop = bounds
            rows = space.rows(start, stop)
            slack = rows - np.abs(F[start:stop, None] - F[None, :])
            ii = np.arange(start, stop)[:, None]
            jj = np.arange(n)[None, :]
            slack = np.where(jj > ii, slack, np.inf)
            part = ScanPartial(checked=int(np.sum(jj > ii)), violations=int(np.sum(slack < -tol)))
            if part.checked:
                flat = int(np.argmin(slack))
                a, b = divmod(flat, n)
                part.worst = float(slack[a, b])
                part.witness = (start + a, b)
            return part

        parts = parallel_map(scan, row_chunks(n, 256), threads)
    else:
        def scan(block: Tuple[int, int]) -> ScanPartial:
            block_id, count = block
            idx = draw_tuples(block_rng(mode.seed, block_id), count, n, 2, distinct=True)
            slack = lipschitz_slack(space, weights, idx[:, 0], idx[:, 1])
            k = int(np.argmin(slack))
            return ScanPartial(count, int(np.sum(slack < -tol)), float(slack[k]), tuple(idx[k]))

        parts = parallel_map(scan, tuple_blocks(mode.samples, n, 2), threads)

    report = finish_report(merge_partials(parts), mode, f"abs {tol:g}")
    logger.debug("Lipschitz audit: %d pairs, %d violations", report.checked, report.violations)
    return report


def certify_weights(
    space: SampledSpace, weights: WeightFunction, **audit_kwargs: Any
) -> Tuple[WeightFunction, AuditReport]:
    """Audit ``weights`` and return a certified copy when the audit passes."""
    report = lipschitz_audit(space, weights, **audit_kwargs)
    if report.passed and not weights.lipschitz_certified:
        weights = weights.certified()
    return weights, report


def _check_values(values: np.ndarray, where: Callable[[int], Tuple[int, ...]]) -> None:
    bad = np.flatnonzero(np.isnan(values) | (values < 0))
    if bad.size:
        k = int(bad[0])
        raise EvaluationError(f"Distance oracle returned {values.flat[k]!r}", where(k))


def metric_axiom_audit(
    oracle: PairOracle,
    mode: Optional[SearchMode] = None,
    threads: Optional[int] = None,
    tol_rel: float = TOL_REL,
    triple_threshold: int = TRIPLE_THRESHOLD,
) -> AuditReport:
    """Check identity, symmetry, positivity and the triangle inequality.

    ``worst_defect`` is the smallest triangle slack rho(i,k) + rho(k,j) -
    rho(i,j) found; the witness is ``(i, k, j)``. A triangle counts as a
    violation when its slack is below ``-tol_rel * max(1, rho(i,j))``.
    """
    n = oracle.n
    mode = resolve_mode(mode, n <= triple_threshold, "metric audit")
    tolerance = f"rel {tol_rel:g} x max(1, rho)"

    if mode.is_exhaustive:
        M = np.asarray(oracle.dense(), dtype=float)
        _check_values(M, lambda k: divmod(k, n))
        head = ScanPartial()
        diag = np.flatnonzero(np.diag(M) != 0)
        asym = np.abs(M - M.T) > tol_rel * np.maximum(1.0, M)
        offdiag = ~np.eye(n, dtype=bool)
        nonpos = offdiag & (M <= 0)
        head.violations = int(diag.size + np.sum(np.triu(asym, 1)) + np.sum(nonpos))
        threshold = -tol_rel * np.maximum(1.0, M)
        idx = np.arange(n)

        def scan(bounds: Tuple[int, int]) -> ScanPartial:
            start, stop = bounds
            ks = idx[start:stop]
            # slack[b, i, j] = M[i, k] + M[k, j] - M[i, j] with k = ks[b]
            slack = M[:, ks].T[:, :, None] + M[ks][:, None, :] - M[None, :, :]
            degenerate = (
                (idx[None, :, None] == ks[:, None, None])
                | (idx[None, None, :] == ks[:, None, None])
                | (idx[None, :, None] == idx[None, None, :])
            )
            slack = np.where(degenerate, np.inf, slack)
            part = ScanPartial(
                checked=int(np.sum(~degenerate)),
                violations=int(np.sum(slack < threshold[None, :, :])),
            )
            if part.checked:
                b, i, j = np.unravel_index(int(np.argmin(slack)), slack.shape)
                part.worst = float(slack[b, i, j])
                part.witness = (int(i), int(ks[b]), int(j))
            return part

        chunk = max(1, (1 << 20) // max(1, n * n))
        parts = parallel_map(scan, row_chunks(n, chunk), threads)
    else:
        ii = np.arange(n)
        diag_vals = oracle.pairs(ii, ii)
        _check_values(diag_vals, lambda k: (k, k))
        head = ScanPartial(violations=int(np.sum(diag_vals != 0)))

        def scan(block: Tuple[int, int]) -> ScanPartial:
            block_id, count = block
            t = draw_tuples(block_rng(mode.seed, block_id), count, n, 3, distinct=True)
            i, k, j = t[:, 0], t[:, 1], t[:, 2]
            ik, kj, ij, ji = oracle.pairs(i, k), oracle.pairs(k, j), oracle.pairs(i, j), oracle.pairs(j, i)
            for vals, pair in ((ik, (i, k)), (kj, (k, j)), (ij, (i, j))):
                _check_values(vals, lambda q, pair=pair: (pair[0][q], pair[1][q]))
            slack = ik + kj - ij
            bad = (
                (slack < -tol_rel * np.maximum(1.0, ij))
                | (np.abs(ij - ji) > tol_rel * np.maximum(1.0, ij))
                | (ij <= 0)
            )
            q = int(np.argmin(slack))
            return ScanPartial(count, int(np.sum(bad)), float(slack[q]), (int(i[q]), int(k[q]), int(j[q])))

        parts = parallel_map(scan, tuple_blocks(mode.samples, n, 3), threads)

    total = merge_partials(parts)
    total.violations += head.violations
    report = finish_report(total, mode, tolerance)
    logger.debug("Metric audit: %d triples, %d violations, worst slack %g",
                 report.checked, report.violations, report.worst_defect)
    return report


def triangle_slack(oracle: PairOracle, witness: Sequence[int]) -> float:
    """Re-evaluate the triangle slack of an ``(i, k, j)`` witness."""
    i, k, j = (np.array([w]) for w in witness)
    return float((oracle.pairs(i, k) + oracle.pairs(k, j) - oracle.pairs(i, j))[0])
