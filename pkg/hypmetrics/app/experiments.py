"""Experiment runner shared by the command line and the HTTP API.

``run`` turns an ``ExperimentConfig`` into an ``ExperimentOutcome``: a
report dictionary plus an exit status (0 when every audited claim holds,
2 when there is a finding). Reports never contain timestamps or thread
counts, so identical configs give byte-identical output.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError

from hypmetrics import __version__
from hypmetrics.services.errors import DomainError, SpecParseError, UnsupportedFamilyError
from hypmetrics.services.families import (
    Family,
    MetricFamily,
    Variant,
    bound_table,
    certified_gromov_bound,
    comparison_functional,
    envelope_at,
    envelope_audit,
    functional_oracle,
    limit_constant,
    rho,
    rho_oracle,
)
from hypmetrics.services.gromov import (
    basepoint_transfer_check,
    delta_estimate,
    multiplicative_four_point_check,
)
from hypmetrics.services.metric_core import (
    DIST_TO_OBSTACLE,
    TOL_ABS,
    DistanceField,
    SearchMode,
    lipschitz_audit,
    metric_axiom_audit,
)
from hypmetrics.services.qc import DEFAULT_FRACTIONS, dilatation_profile
from hypmetrics.services.sampling import BLOCK_SIZE, block_rng, parallel_map, sample_blocks
from hypmetrics.services.settings import PROJECT_ROOT, SETTINGS
from hypmetrics.services.spaces import (
    DISK_EDGE_LIMIT,
    BuiltSpace,
    build,
    diameter_triple,
    load_space_spec,
    parse_json,
    parse_space_spec,
    validation_to_parse_error,
)

logger = logging.getLogger(__name__)

TOOL_NAME = "hypmetrics"
SPECS_DIR = PROJECT_ROOT / "specs"
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FINDING = 2
LIMIT_TOL = 1e-3
COLLINEAR_EXPONENTS = range(2, 7)
DEFAULT_BUDGET = 1_000_000

Command = Literal["eval", "audit", "delta", "dilatation", "counterexample"]


class ExperimentConfig(BaseModel):
    """Everything needed to reproduce one experiment."""

    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    command: Command
    family: str = "go"
    c: Optional[float] = Field(default=None, gt=0)
    space: Optional[Union[str, Dict[str, Any]]] = None
    mode: Optional[Literal["exhaustive", "sampled"]] = None
    samples: Optional[int] = Field(default=None, ge=1)
    seed: Optional[int] = Field(default=None, ge=0)
    quad_budget: Optional[int] = Field(default=None, ge=1)
    probes: Optional[int] = Field(default=None, ge=1)
    r_grid: Optional[List[float]] = None
    center: Optional[List[float]] = None
    variant: Variant = Variant.FINE
    transfer: bool = False
    geometry: Optional[Literal["unit_disk", "halfplane"]] = None
    budget: Optional[int] = Field(default=None, ge=0)
    d: Optional[float] = Field(default=None, ge=0)
    x: Optional[Union[float, List[float]]] = None
    y: Optional[Union[float, List[float]]] = None
    fx: Optional[float] = None
    fy: Optional[float] = None
    format: Literal["json", "csv"] = "json"
    threads: Optional[int] = Field(default=None, ge=1)
    _specs_only: bool = PrivateAttr(default=False)

    def confined_to_specs(self) -> "ExperimentConfig":
        """A copy whose space file names resolve only under ``specs/``."""
        confined = self.model_copy()
        confined._specs_only = True
        return confined

    def metric_family(self) -> MetricFamily:
        return MetricFamily.parse(self.family, self.c)

    def resolved_seed(self) -> int:
        return SETTINGS.seed if self.seed is None else self.seed

    def search_mode(self) -> SearchMode:
        seed = self.resolved_seed()
        if self.mode == "exhaustive":
            return SearchMode.exhaustive()
        if self.mode == "sampled":
            return SearchMode.sampled(self.samples, seed)
        return SearchMode.auto(self.samples, seed)

    def echo(self) -> Dict[str, Any]:
        """The config as recorded in reports: threads dropped, seed filled in."""
        out = self.model_dump(mode="json", exclude={"threads"}, exclude_none=True)
        out["seed"] = self.resolved_seed()
        return out


def parse_config(data: Any) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise validation_to_parse_error(e, "experiment config") from e


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    return parse_config(parse_json(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class ExperimentOutcome:
    command: str
    family: str
    seed: int
    config: Dict[str, Any]
    report: Dict[str, Any]
    exit_status: int

    @property
    def found(self) -> bool:
        return self.exit_status == EXIT_FINDING


def resolve_space_path(value: str) -> Path:
    path = Path(value)
    if not path.exists() and (SPECS_DIR / value).exists():
        return SPECS_DIR / value
    return path


def check_shipped_space(value: str) -> Path:
    """Resolve a space file name under ``specs/``; anything outside it is refused."""
    root = SPECS_DIR.resolve()
    path = (root / value).resolve()
    if root not in path.parents:
        raise DomainError(f"Space files must live under specs/: {value}")
    return path


def _space_spec(config: ExperimentConfig):
    if config.space is None:
        raise DomainError(f"The {config.command} command needs a space")
    if isinstance(config.space, str):
        path = check_shipped_space(config.space) if config._specs_only else resolve_space_path(config.space)
        return load_space_spec(path)
    return parse_space_spec(config.space)


def _build_space(config: ExperimentConfig) -> BuiltSpace:
    spec = _space_spec(config)
    built = build(spec)
    logger.info("Space: %s with %d points, weights %s", spec.kind, built.space.n, built.weights.source)
    return built


# -- eval --------------------------------------------------------------------


def _eval(config: ExperimentConfig, family: MetricFamily) -> Tuple[Dict[str, Any], bool]:
    if config.fx is None or config.fy is None:
        raise DomainError("eval needs --fx and --fy")
    d = config.d
    if d is None:
        if config.x is None or config.y is None:
            raise DomainError("eval needs --d or both --x and --y")
        d = float(np.linalg.norm(np.atleast_1d(config.x) - np.atleast_1d(config.y)))
    result: Dict[str, Any] = {
        "d": d,
        "fx": config.fx,
        "fy": config.fy,
        "value": rho(family, d, config.fx, config.fy),
        "certified_bound": certified_gromov_bound(family),
        "envelopes": envelope_at(family, d, config.fx, config.fy, config.variant),
    }
    if family.tag is not Family.GO:
        result["functional"] = comparison_functional(family, d, config.fx, config.fy)
    return result, False


# -- audit -------------------------------------------------------------------


def _audit(config: ExperimentConfig, family: MetricFamily) -> Tuple[Dict[str, Any], bool]:
    space, _, weights = _build_space(config)
    mode, threads = config.search_mode(), config.threads
    lipschitz = lipschitz_audit(space, weights, mode, threads)
    base = metric_axiom_audit(space, mode, threads)
    metric = metric_axiom_audit(rho_oracle(family, space, weights), mode, threads)
    applies = not family.needs_lipschitz or weights.lipschitz_certified
    result: Dict[str, Any] = {
        "lipschitz": lipschitz.as_dict(),
        "weights": weights.describe(),
        "base_metric": base.as_dict(),
        "metric": metric.as_dict(),
        "metricity_certified": family.metricity_certified,
        "claims_apply": applies,
    }
    findings = not base.passed
    findings |= weights.source == DIST_TO_OBSTACLE and not lipschitz.passed
    findings |= applies and family.metricity_certified and not metric.passed
    if family.tag is Family.IBR:
        mu = metric_axiom_audit(functional_oracle(family, space, weights), mode, threads)
        result["functional_metric"] = mu.as_dict()
        findings |= not mu.passed
    if applies:
        envelope = envelope_audit(family, space, weights, mode, threads)
        result["envelope"] = envelope.as_dict()
        findings |= not envelope.passed
    return result, findings


# -- delta -------------------------------------------------------------------


def _delta(config: ExperimentConfig, family: MetricFamily) -> Tuple[Dict[str, Any], bool]:
    space, _, weights = _build_space(config)
    mode, threads = config.search_mode(), config.threads
    estimate = delta_estimate(family, space, weights, mode, config.quad_budget, threads)
    result: Dict[str, Any] = {"estimate": estimate.as_dict()}
    findings = not estimate.lipschitz_warning and estimate.within_bound is False
    if family.tag is not Family.GO:
        check = multiplicative_four_point_check(family, space, weights, mode, config.quad_budget, threads)
        result["multiplicative"] = check.as_dict()
        findings |= not estimate.lipschitz_warning and not check.passed
    if config.transfer:
        report, deltas = basepoint_transfer_check(rho_oracle(family, space, weights), mode, threads)
        result["transfer"] = report.as_dict()
        result["basepoint_defects"] = [float(v) for v in deltas]
        findings |= not report.passed
    return result, findings


# -- dilatation --------------------------------------------------------------


def _dilatation(config: ExperimentConfig, family: MetricFamily) -> Tuple[Dict[str, Any], bool]:
    space, obstacle, weights = _build_space(config)
    if space.points is None or obstacle.is_graph:
        raise DomainError("Dilatation probes need a Euclidean space")
    if weights.source != DIST_TO_OBSTACLE:
        raise DomainError("Dilatation needs distance-to-obstacle weights")
    center = config.center if config.center is not None else space.points[0].tolist()
    fractions = tuple(config.r_grid) if config.r_grid else DEFAULT_FRACTIONS
    profile = dilatation_profile(
        family,
        obstacle,
        center,
        fractions,
        n_probes=config.probes,
        seed=config.resolved_seed(),
        variant=config.variant,
        weight=DistanceField(obstacle),
    )
    over = [
        i for i, (h, e) in enumerate(zip(profile.H_hat, profile.H_env))
        if h > e + TOL_ABS * max(1.0, e)
    ]
    limit_ok = abs(profile.extrapolated_limit - limit_constant(family, config.variant)) <= LIMIT_TOL
    result = {
        "profile": profile.as_dict(),
        "empirical_over_envelope": over,
        "limit_matches": limit_ok,
    }
    return result, bool(over) or not limit_ok


# -- counterexample ----------------------------------------------------------


@dataclass(frozen=True)
class CounterexampleResult:
    found: bool
    stage: Optional[str]
    points: Optional[List[List[float]]]
    weights: Optional[List[float]]
    defect: Optional[float]
    endpoint_radius: Optional[float]
    evaluated: int

    def as_dict(self) -> Dict[str, Any]:
        return {
            "found": self.found,
            "stage": self.stage,
            "points": self.points,
            "weights": self.weights,
            "defect": self.defect,
            "endpoint_radius": self.endpoint_radius,
            "evaluated": self.evaluated,
        }


def _weights_of(points: np.ndarray, geometry: str) -> np.ndarray:
    if geometry == "unit_disk":
        return 1.0 - np.linalg.norm(points, axis=-1)
    return points[..., 1]


def triangle_defects(c: float, triples: np.ndarray, geometry: str) -> np.ndarray:
    """Smallest triangle slack of h_c over the three orderings of each triple."""
    F = _weights_of(triples, geometry)
    family = MetricFamily(Family.DHV, c)

    def h(a: int, b: int) -> np.ndarray:
        d = np.linalg.norm(triples[:, a] - triples[:, b], axis=-1)
        return rho(family, d, F[:, a], F[:, b])

    ab, bc, ac = h(0, 1), h(1, 2), h(0, 2)
    return np.minimum.reduce([ab + bc - ac, ab + ac - bc, ac + bc - ab])


def sweep_triples(geometry: str) -> List[Tuple[float, np.ndarray]]:
    """Deterministic triples pushed toward the boundary, in scan order."""
    out = []
    for k in COLLINEAR_EXPONENTS:
        a = 1.0 - 10.0 ** -k
        if geometry == "unit_disk":
            out.append((a, diameter_triple(a)))
        else:
            t = 10.0 ** -k
            out.append((a, np.array([[0.0, t], [0.0, 1.0], [0.0, 1.0 / t]])))
    return out


def random_triples(rng: np.random.Generator, count: int, geometry: str) -> np.ndarray:
    depth = 10.0 ** -rng.uniform(0.0, 6.0, size=(count, 3))
    if geometry == "unit_disk":
        radius = 1.0 - depth
        angle = rng.uniform(0.0, 2.0 * np.pi, size=(count, 3))
        return np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=-1)
    horizontal = rng.uniform(-1.0, 1.0, size=(count, 3))
    return np.stack([horizontal, depth * 10.0 ** rng.uniform(0.0, 6.0, size=(count, 3))], axis=-1)


def counterexample_search(
    c: float,
    geometry: str = "unit_disk",
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    threads: Optional[int] = None,
    tol: float = TOL_ABS,
) -> CounterexampleResult:
    """First triple violating the triangle inequality for h_c, or none within budget.

    Diametral triples with endpoints at radius 1 - 10^-k are tried first,
    then ``budget`` seeded random triples in fixed-size blocks.
    """
    if not c > 0:
        raise DomainError("c must be positive")
    evaluated = 0
    for a, triple in sweep_triples(geometry):
        if geometry == "unit_disk" and a > DISK_EDGE_LIMIT:
            break
        evaluated += 1
        defect = float(triangle_defects(c, triple[None], geometry)[0])
        if defect < -tol:
            logger.info("Collinear violation for c=%g at endpoint radius %.8g: %.6g", c, a, defect)
            return CounterexampleResult(
                True, "collinear", triple.tolist(), _weights_of(triple, geometry).tolist(), defect, a, evaluated
            )

    def scan(block: Tuple[int, int]):
        block_id, count = block
        triples = random_triples(block_rng(seed, block_id), count, geometry)
        defects = triangle_defects(c, triples, geometry)
        hits = np.flatnonzero(defects < -tol)
        if not hits.size:
            return None
        k = int(hits[0])
        return k, triples[k], float(defects[k])

    blocks = sample_blocks(budget, BLOCK_SIZE) if budget > 0 else []
    for (block_id, count), hit in zip(blocks, parallel_map(scan, blocks, threads)):
        if hit is None:
            evaluated += count
            continue
        k, triple, defect = hit
        evaluated += k + 1
        logger.info("Random violation for c=%g after %d triples: %.6g", c, evaluated, defect)
        return CounterexampleResult(
            True, "random", triple.tolist(), _weights_of(triple, geometry).tolist(), defect, None, evaluated
        )
    logger.info("No violation for c=%g on %s within %d triples", c, geometry, evaluated)
    return CounterexampleResult(False, None, None, None, None, None, evaluated)


def _geometry(config: ExperimentConfig) -> str:
    """Explicit geometry, else the one named by the space spec, else the unit disk."""
    if config.geometry is not None:
        return config.geometry
    if config.space is not None:
        spec = _space_spec(config)
        if spec.kind == "halfplane_lattice":
            return "halfplane"
        if spec.kind != "unit_disk":
            raise DomainError("The counterexample search runs on the unit disk or the half-plane")
    return "unit_disk"


def _counterexample(config: ExperimentConfig, family: MetricFamily) -> Tuple[Dict[str, Any], bool]:
    if family.tag is not Family.DHV:
        raise UnsupportedFamilyError("The counterexample search is defined for the dhv family only")
    budget = DEFAULT_BUDGET if config.budget is None else config.budget
    geometry = _geometry(config)
    result = counterexample_search(family.c, geometry, budget, config.resolved_seed(), config.threads)
    predicted = geometry == "unit_disk" and family.c < 2
    out = result.as_dict()
    out["geometry"] = geometry
    out["predicted_violation"] = predicted
    out["matches_theory"] = result.found == predicted
    return out, result.found != predicted


RUNNERS = {
    "eval": _eval,
    "audit": _audit,
    "delta": _delta,
    "dilatation": _dilatation,
    "counterexample": _counterexample,
}


def run(config: ExperimentConfig) -> ExperimentOutcome:
    """Execute one experiment and build its report."""
    family = config.metric_family()
    seed = config.resolved_seed()
    logger.info("Running %s for %s (seed %d)", config.command, family.label, seed)
    result, findings = RUNNERS[config.command](config, family)
    status = EXIT_FINDING if findings else EXIT_OK
    report = {
        "tool": {"name": TOOL_NAME, "version": __version__},
        "command": config.command,
        "config": config.echo(),
        "seed": seed,
        "family": family.as_dict(),
        "bounds": bound_table(family.c if family.c is not None else 2.0),
        "result": result,
        "status": "finding" if findings else "ok",
    }
    return ExperimentOutcome(config.command, family.tag.value, seed, config.echo(), report, status)


def render_report(outcome: ExperimentOutcome, fmt: str = "json") -> str:
    if fmt == "csv":
        profile = outcome.report["result"].get("profile")
        if profile is None:
            raise SpecParseError("CSV output is only available for dilatation profiles", field="format")
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["r", "H_hat", "H_env"])
        for row in zip(profile["radii"], profile["H_hat"], profile["H_env"]):
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()
    return json.dumps(outcome.report, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(outcome: ExperimentOutcome, fmt: str = "json", out: Optional[Union[str, Path]] = None) -> str:
    text = render_report(outcome, fmt)
    if out is not None:
        Path(out).write_text(text, encoding="utf-8")
    return text
