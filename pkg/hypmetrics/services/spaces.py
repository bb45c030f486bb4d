"""Space specifications and the builders for the shipped geometries.

A space spec is a JSON document validated by pydantic. ``build`` turns it
into the immutable (space, obstacle, weights) triple every experiment
works on.
"""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, NamedTuple, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError, field_validator, model_validator

from .errors import ConnectivityError, ConstructionError, DomainError, SpecParseError, WeightError
from .metric_core import (
    ClosedDisc,
    FinitePointSet,
    HalfSpace,
    ObstacleSet,
    SampledSpace,
    SinglePoint,
    Sphere,
    VertexSet,
    WeightFunction,
    certify_weights,
)

logger = logging.getLogger(__name__)

DISK_EDGE_LIMIT = 1.0 - 1e-6
CLEARANCE_FRACTION = 1e-3
MAX_CLOUD_ROUNDS = 1000


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)


# -- obstacles ---------------------------------------------------------------


class PointsObstacle(_Spec):
    type: Literal["points"]
    points: List[List[float]] = Field(min_length=1)


class PointObstacle(_Spec):
    type: Literal["point"]
    at: List[float]


class DiscObstacle(_Spec):
    type: Literal["disc"]
    center: List[float]
    radius: float = Field(ge=0)


class SphereObstacle(_Spec):
    type: Literal["sphere"]
    center: List[float]
    radius: float = Field(gt=0)


class HalfSpaceObstacle(_Spec):
    """``{p : normal . p <= offset}``"""

    type: Literal["halfspace"]
    normal: List[float]
    offset: float = 0.0


ObstacleSpec = Annotated[
    Union[PointsObstacle, PointObstacle, DiscObstacle, SphereObstacle, HalfSpaceObstacle],
    Field(discriminator="type"),
]


def _primitive(spec: ObstacleSpec):
    if isinstance(spec, PointsObstacle):
        return FinitePointSet(np.asarray(spec.points))
    if isinstance(spec, PointObstacle):
        return SinglePoint(np.asarray(spec.at))
    if isinstance(spec, DiscObstacle):
        return ClosedDisc(np.asarray(spec.center), spec.radius)
    if isinstance(spec, SphereObstacle):
        return Sphere(np.asarray(spec.center), spec.radius)
    return HalfSpace(np.asarray(spec.normal), spec.offset)


# -- weights -----------------------------------------------------------------


class CustomWeights(_Spec):
    custom: List[float] = Field(min_length=1)


class RandomWeightParams(_Spec):
    seed: int = Field(default=0, ge=0)
    low: float = Field(default=0.1, gt=0)
    high: float = Field(default=10.0, gt=0)

    @model_validator(mode="after")
    def _ordered(self):
        if self.high <= self.low:
            raise ValueError("high must exceed low")
        return self


class RandomWeights(_Spec):
    random: RandomWeightParams = Field(default_factory=RandomWeightParams)


WeightSource = Union[Literal["dist_to_obstacle"], CustomWeights, RandomWeights]


# -- space kinds -------------------------------------------------------------


class _EuclideanSpec(_Spec):
    obstacle: Optional[List[ObstacleSpec]] = None
    weight_source: WeightSource = "dist_to_obstacle"


class EuclideanCloudSpec(_EuclideanSpec):
    kind: Literal["euclidean_cloud"]
    points: Optional[List[List[float]]] = None
    count: Optional[int] = Field(default=None, ge=1)
    box: Optional[List[Tuple[float, float]]] = None
    min_clearance: Optional[float] = Field(default=None, ge=0)
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _points_or_random(self):
        if not self.obstacle:
            raise ValueError("a point cloud needs an obstacle list")
        if self.points is None and (self.count is None or self.box is None):
            raise ValueError("give either points or count and box")
        if self.box is not None and any(hi <= lo for lo, hi in self.box):
            raise ValueError("box intervals must be non-empty")
        return self


class HalfplaneLatticeSpec(_EuclideanSpec):
    """Points (i*spacing, j*spacing) with 0 <= i < columns, 1 <= j <= rows; M = {y <= 0}."""

    kind: Literal["halfplane_lattice"]
    columns: int = Field(default=5, ge=1)
    rows: int = Field(default=5, ge=1)
    spacing: float = Field(default=0.1, gt=0)


class PuncturedPlaneSpec(_EuclideanSpec):
    """Rings of ``angles`` points around the origin; M = {0}."""

    kind: Literal["punctured_plane"]
    radii: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0], min_length=1)
    angles: int = Field(default=8, ge=1)
    phase: float = 0.0

    @field_validator("radii")
    @classmethod
    def _positive(cls, radii):
        if any(r <= 0 for r in radii):
            raise ValueError("ring radii must be positive")
        return radii


class UnitDiskSpec(_EuclideanSpec):
    """Rings inside the unit disk, optionally with its center; M = unit circle."""

    kind: Literal["unit_disk"]
    radii: List[float] = Field(default_factory=lambda: [0.3, 0.6, 0.9], min_length=1)
    angles: int = Field(default=8, ge=1)
    include_center: bool = True
    phase: float = 0.0

    @field_validator("radii")
    @classmethod
    def _inside(cls, radii):
        if any(not 0 < r <= DISK_EDGE_LIMIT for r in radii):
            raise ValueError(f"ring radii must lie in (0, {DISK_EDGE_LIMIT}]")
        return radii


class EdgeSpec(_Spec):
    u: str
    v: str
    weight: float = Field(default=1.0, gt=0)


class GraphSpec(_Spec):
    kind: Literal["graph"]
    vertices: List[str] = Field(min_length=2)
    edges: List[EdgeSpec] = Field(min_length=1)
    obstacle_vertices: List[str] = Field(min_length=1)
    weight_source: WeightSource = "dist_to_obstacle"


SpaceSpec = Annotated[
    Union[EuclideanCloudSpec, HalfplaneLatticeSpec, PuncturedPlaneSpec, UnitDiskSpec, GraphSpec],
    Field(discriminator="kind"),
]
SPACE_SPEC = TypeAdapter(SpaceSpec)


class BuiltSpace(NamedTuple):
    space: SampledSpace
    obstacle: ObstacleSet
    weights: WeightFunction


# -- parsing -----------------------------------------------------------------


def _finite_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise SpecParseError(f"Number {text} is not finite")
    return value


def _reject_constant(name: str):
    raise SpecParseError(f"{name} is not allowed in a spec")


def parse_json(text: str) -> Any:
    """json.loads that refuses NaN and infinities and reports the line of syntax errors."""
    try:
        return json.loads(text, parse_float=_finite_float, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise SpecParseError(f"Malformed JSON: {e.msg}", line=e.lineno) from e


def validation_to_parse_error(e: ValidationError, what: str) -> SpecParseError:
    first = e.errors()[0]
    field = ".".join(str(part) for part in first.get("loc", ()))
    return SpecParseError(f"Invalid {what}: {first.get('msg', 'bad value')}", field=field or None)


def parse_space_spec(data: Any) -> SpaceSpec:
    try:
        return SPACE_SPEC.validate_python(data)
    except ValidationError as e:
        raise validation_to_parse_error(e, "space spec") from e


def load_space_spec(path: Union[str, Path]) -> SpaceSpec:
    text = Path(path).read_text(encoding="utf-8")
    return parse_space_spec(parse_json(text))


# -- builders ----------------------------------------------------------------


def ring_points(radii: Sequence[float], angles: int, phase: float = 0.0) -> np.ndarray:
    theta = phase + 2.0 * np.pi * np.arange(angles) / angles
    rings = [np.column_stack([r * np.cos(theta), r * np.sin(theta)]) for r in radii]
    return np.vstack(rings)


def lattice_points(columns: int, rows: int, spacing: float) -> np.ndarray:
    i, j = np.meshgrid(np.arange(columns), np.arange(1, rows + 1), indexing="ij")
    return np.column_stack([i.ravel() * spacing, j.ravel() * spacing])


def random_cloud(
    obstacle: ObstacleSet,
    count: int,
    box: Sequence[Tuple[float, float]],
    seed: int,
    min_clearance: Optional[float] = None,
) -> np.ndarray:
    """Uniform points in ``box`` keeping dist(p, M) >= min_clearance."""
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    if min_clearance is None:
        min_clearance = CLEARANCE_FRACTION * float(np.linalg.norm(hi - lo))
    rng = np.random.default_rng(seed)
    kept: List[np.ndarray] = []
    total = 0
    for _ in range(MAX_CLOUD_ROUNDS):
        batch = lo + (hi - lo) * rng.random((2 * count, lo.shape[0]))
        batch = batch[obstacle.distances(batch) >= max(min_clearance, np.finfo(float).tiny)]
        kept.append(batch)
        total += batch.shape[0]
        if total >= count:
            return np.vstack(kept)[:count]
    raise ConstructionError(f"Could only place {total} of {count} points clear of the obstacle")


def random_weights(n: int, seed: int = 0, low: float = 0.1, high: float = 10.0) -> WeightFunction:
    """Seeded log-uniform positive weights, generally not 1-Lipschitz."""
    rng = np.random.default_rng(seed)
    values = np.exp(rng.uniform(math.log(low), math.log(high), size=n))
    return WeightFunction.custom(values, random={"seed": seed, "low": low, "high": high})


def _weights_for(source: WeightSource, space: SampledSpace, obstacle: ObstacleSet, certify: bool) -> WeightFunction:
    if source == "dist_to_obstacle":
        return WeightFunction.from_obstacle(space, obstacle)
    if isinstance(source, CustomWeights):
        if len(source.custom) != space.n:
            raise WeightError(f"Custom weight table has {len(source.custom)} values for {space.n} points")
        weights = WeightFunction.custom(source.custom)
    else:
        p = source.random
        weights = random_weights(space.n, p.seed, p.low, p.high)
    if certify:
        weights, report = certify_weights(space, weights)
        if not report.passed:
            logger.info("Custom weights are not 1-Lipschitz (%d violating pairs)", report.violations)
    return weights


def _check_clear(points: np.ndarray, labels: Sequence[str], obstacle: ObstacleSet) -> None:
    dists = obstacle.distances(points)
    inside = np.flatnonzero(~(dists > 0))
    if inside.size:
        k = int(inside[0])
        raise ConstructionError(f"Point {labels[k]} at {points[k].tolist()} lies in the obstacle set")
    _, first, counts = np.unique(points, axis=0, return_index=True, return_counts=True)
    if np.any(counts > 1):
        k = int(first[np.argmax(counts > 1)])
        raise ConstructionError(f"Point {labels[k]} at {points[k].tolist()} appears more than once")


def _euclidean(points: np.ndarray, obstacle: ObstacleSet, source: WeightSource, certify: bool) -> BuiltSpace:
    labels = [f"p{i}" for i in range(points.shape[0])]
    _check_clear(points, labels, obstacle)
    space = SampledSpace.from_points(points, labels)
    return BuiltSpace(space, obstacle, _weights_for(source, space, obstacle, certify))


def _obstacle(specs: Optional[List[ObstacleSpec]], default) -> ObstacleSet:
    if specs:
        return ObstacleSet(tuple(_primitive(s) for s in specs))
    return ObstacleSet((default,))


def _graph(spec: GraphSpec, certify: bool) -> BuiltSpace:
    g = nx.Graph()
    g.add_nodes_from(spec.vertices)
    for edge in spec.edges:
        for end in (edge.u, edge.v):
            if end not in g:
                raise ConstructionError(f"Edge endpoint {end!r} is not a declared vertex")
        g.add_edge(edge.u, edge.v, weight=edge.weight)
    removed = list(dict.fromkeys(spec.obstacle_vertices))
    for v in removed:
        if v not in g:
            raise ConstructionError(f"Obstacle vertex {v!r} is not a declared vertex")
    if not nx.is_connected(g):
        raise ConnectivityError("The graph is not connected")

    kept = [v for v in spec.vertices if v not in set(removed)]
    if not kept:
        raise ConstructionError("Every vertex lies in the obstacle set")
    lengths = dict(nx.all_pairs_dijkstra_path_length(g, weight="weight"))
    matrix = np.array([[lengths[a][b] for b in kept] for a in kept], dtype=float)
    to_set = nx.multi_source_dijkstra_path_length(g, set(removed), weight="weight")
    obstacle = ObstacleSet((VertexSet(tuple(removed), {v: float(to_set[v]) for v in g}),))
    space = SampledSpace.from_matrix(matrix, kept)
    logger.debug("Graph space: %d vertices, %d removed", len(kept), len(removed))
    return BuiltSpace(space, obstacle, _weights_for(spec.weight_source, space, obstacle, certify))


def build(spec: Union[SpaceSpec, Dict[str, Any]], certify: bool = True) -> BuiltSpace:
    """Resolve a space spec into its (space, obstacle, weights) triple.

    Custom and random weight tables are audited for the Lipschitz property
    when ``certify`` is set and marked certified if they pass.
    """
    if isinstance(spec, dict):
        spec = parse_space_spec(spec)
    if isinstance(spec, GraphSpec):
        return _graph(spec, certify)
    if isinstance(spec, EuclideanCloudSpec):
        obstacle = _obstacle(spec.obstacle, None)
        if spec.points is not None:
            points = np.asarray(spec.points, dtype=float)
        else:
            points = random_cloud(obstacle, spec.count, spec.box, spec.seed, spec.min_clearance)
    elif isinstance(spec, HalfplaneLatticeSpec):
        obstacle = _obstacle(spec.obstacle, HalfSpace(np.array([0.0, 1.0]), 0.0))
        points = lattice_points(spec.columns, spec.rows, spec.spacing)
    elif isinstance(spec, PuncturedPlaneSpec):
        obstacle = _obstacle(spec.obstacle, SinglePoint(np.zeros(2)))
        points = ring_points(spec.radii, spec.angles, spec.phase)
    else:
        obstacle = _obstacle(spec.obstacle, Sphere(np.zeros(2), 1.0))
        points = ring_points(spec.radii, spec.angles, spec.phase)
        if spec.include_center:
            points = np.vstack([np.zeros((1, 2)), points])
    built = _euclidean(points, obstacle, spec.weight_source, certify)
    logger.debug("Built %s space with %d points", spec.kind, built.space.n)
    return built


def collinear_halfspace_triple(heights: Sequence[float], shared_horizontal: Any = 0.0) -> np.ndarray:
    """Points (h, x_n), (h, y_n), (h, z_n) on one vertical line above {x_n = 0}."""
    heights = [float(t) for t in heights]
    if len(heights) != 3:
        raise DomainError("Exactly three heights are needed")
    if any(not t > 0 for t in heights):
        raise DomainError("Heights must be strictly positive")
    if len(set(heights)) != 3:
        raise DomainError("Heights must be pairwise distinct")
    h = np.atleast_1d(np.asarray(shared_horizontal, dtype=float))
    return np.array([np.append(h, t) for t in heights])


def diameter_triple(a: float) -> np.ndarray:
    """(-a, 0), (0, 0), (a, 0): a diameter of the unit disk through its center."""
    if not 0 < a < 1:
        raise DomainError("Endpoint radius must lie in (0, 1)")
    return np.array([[-a, 0.0], [0.0, 0.0], [a, 0.0]])
