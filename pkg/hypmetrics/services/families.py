"""The four weighted hyperbolic-type metric families.

Every formula takes the base distance ``d`` and the weights ``fx``, ``fy``
and accepts scalars or numpy arrays (broadcast together). Scalar inputs
give a plain ``float`` back.

    go   j(x,y)   = 1/2 log (1 + d/F(x)) (1 + d/F(y))
    dhv  h_c(x,y) = log (1 + c d / sqrt(F(x) F(y)))
    na   i(x,y)   = 2 log (F(x) + F(y) + d) / (2 sqrt(F(x) F(y)))
    ibr  v(x,y)   = 2 log (d + max(F(x), F(y))) / sqrt(F(x) F(y))

All of them are evaluated as ``log1p`` of a small quantity so that
``d << F`` keeps full relative precision, and every expression is written
symmetrically in (fx, fy) so swapping the weights is bitwise neutral.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, Optional, Tuple, Union

import numpy as np

from .errors import DimensionError, DomainError, UnsupportedFamilyError
from .metric_core import (
    PAIR_THRESHOLD,
    TOL_ABS,
    AuditReport,
    SampledSpace,
    ScanPartial,
    SearchMode,
    WeightFunction,
    finish_report,
    merge_partials,
)
from .sampling import block_rng, draw_tuples, parallel_map, resolve_mode, row_chunks, tuple_blocks

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

EQUALITY_TOL = 1e-9
ENVELOPE_TOL_REL = 1e-9
LOG2 = math.log(2.0)


class Family(str, Enum):
    GO = "go"
    DHV = "dhv"
    NA = "na"
    IBR = "ibr"


class Bound(str, Enum):
    UPPER_NEAR = "upper_near"
    LOWER_GLOBAL = "lower_global"
    INVERSION = "inversion"


class Variant(str, Enum):
    """Which lower envelope the Ibragimov-type family uses."""

    FINE = "fine"
    COARSE = "coarse"


@dataclass(frozen=True)
class MetricFamily:
    tag: Family
    c: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "tag", Family(self.tag))
        if self.tag is Family.DHV:
            if self.c is None or not (self.c > 0 and math.isfinite(self.c)):
                raise DomainError(f"DHV needs a positive finite c, got {self.c!r}")
            object.__setattr__(self, "c", float(self.c))
        else:
            object.__setattr__(self, "c", None)

    @classmethod
    def parse(cls, name: str, c: Optional[float] = None) -> "MetricFamily":
        try:
            tag = Family(name.lower())
        except ValueError:
            raise UnsupportedFamilyError(f"Unknown metric family: {name}") from None
        if tag is Family.DHV and c is None:
            c = 2.0
        return cls(tag, c)

    @property
    def metricity_certified(self) -> bool:
        # h_c satisfies the triangle inequality only from c = 2 on
        return self.tag is not Family.DHV or self.c >= 2

    @property
    def needs_lipschitz(self) -> bool:
        return self.tag is not Family.IBR

    @property
    def label(self) -> str:
        return f"dhv(c={self.c:g})" if self.tag is Family.DHV else self.tag.value

    def as_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"tag": self.tag.value}
        if self.c is not None:
            out["c"] = self.c
        return out


GO = MetricFamily(Family.GO)
NA = MetricFamily(Family.NA)
IBR = MetricFamily(Family.IBR)


def dhv(c: float) -> MetricFamily:
    return MetricFamily(Family.DHV, c)


def _inputs(*values: ArrayLike) -> Tuple[bool, Tuple[np.ndarray, ...]]:
    scalar = all(np.ndim(v) == 0 for v in values)
    return scalar, tuple(np.asarray(v, dtype=float) for v in values)


def _out(value: np.ndarray, scalar: bool) -> ArrayLike:
    return float(value) if scalar else value


def _check_weights(*weights: np.ndarray) -> None:
    for w in weights:
        if np.any(~(w > 0)) or np.any(~np.isfinite(w)):
            raise DomainError("Weights must be positive and finite")


def _check_distance(d: np.ndarray, name: str = "distance") -> None:
    if np.any(~(d >= 0)) or np.any(~np.isfinite(d)):
        raise DomainError(f"The {name} must be non-negative and finite")


def _rho(family: MetricFamily, d: np.ndarray, fx: np.ndarray, fy: np.ndarray) -> np.ndarray:
    tag = family.tag
    if tag is Family.GO:
        return 0.5 * (np.log1p(d / fx) + np.log1p(d / fy))
    root = np.sqrt(fx * fy)
    if tag is Family.DHV:
        return np.log1p(family.c * d / root)
    if tag is Family.NA:
        gap = np.sqrt(fx) - np.sqrt(fy)
        return 2.0 * np.log1p((gap * gap + d) / (2.0 * root))
    return 2.0 * np.log1p((d + np.maximum(fx, fy) - root) / root)


def rho(family: MetricFamily, d: ArrayLike, fx: ArrayLike, fy: ArrayLike) -> ArrayLike:
    """Evaluate the family's distance for base distance ``d`` and weights."""
    scalar, (d, fx, fy) = _inputs(d, fx, fy)
    _check_weights(fx, fy)
    _check_distance(d)
    return _out(_rho(family, d, fx, fy), scalar)


def comparison_functional(family: MetricFamily, d: ArrayLike, fx: ArrayLike, fy: ArrayLike) -> ArrayLike:
    """lambda = c d + sqrt(Fx Fy), nu = Fx + Fy + d, mu = d + max(Fx, Fy)."""
    if family.tag is Family.GO:
        raise UnsupportedFamilyError("The GO family has no multiplicative comparison functional")
    scalar, (d, fx, fy) = _inputs(d, fx, fy)
    _check_weights(fx, fy)
    _check_distance(d)
    if family.tag is Family.DHV:
        value = family.c * d + np.sqrt(fx * fy)
    elif family.tag is Family.NA:
        value = fx + fy + d
    else:
        value = d + np.maximum(fx, fy)
    return _out(value, scalar)


def _check_near(r: np.ndarray, fx: np.ndarray) -> None:
    _check_weights(fx)
    _check_distance(r, "radius")
    if np.any(r >= fx):
        raise DomainError("The near-field bound needs r < F(x)")


def bound_upper_near(family: MetricFamily, r: ArrayLike, fx: ArrayLike) -> ArrayLike:
    """Upper envelope of rho(x, y) over y with d(x, y) = r < F(x), F 1-Lipschitz."""
    scalar, (r, fx) = _inputs(r, fx)
    _check_near(r, fx)
    tag = family.tag
    if tag is Family.GO:
        value = 0.5 * (np.log1p(r / fx) + np.log1p(r / (fx - r)))
    elif tag is Family.DHV:
        value = np.log1p(family.c * r / np.sqrt(fx * (fx - r)))
    elif tag is Family.NA:
        s = np.sqrt(fx * (fx - r))
        value = 2.0 * np.log1p((3.0 * fx * r + r * r) / ((fx + r + s) * s))
    else:
        value = np.log1p((5.0 * fx * r + 4.0 * r * r) / (fx * (fx - r)))
    return _out(value, scalar)


def bound_lower_global(
    family: MetricFamily, r: ArrayLike, fx: ArrayLike, variant: Variant = Variant.FINE
) -> ArrayLike:
    """Lower envelope of rho(x, y) over all y with d(x, y) = r.

    The coarse Ibragimov-type bound ``log(1 + r/F(x))`` holds for any
    positive F; every other bound assumes F is 1-Lipschitz.
    """
    scalar, (r, fx) = _inputs(r, fx)
    _check_weights(fx)
    _check_distance(r, "radius")
    tag = family.tag
    if tag is Family.GO:
        value = np.log1p(r / (fx + r))
    elif tag is Family.DHV:
        value = np.log1p(family.c * r / np.sqrt(fx * (fx + r)))
    elif tag is Family.NA:
        value = 2.0 * np.log1p(r / (2.0 * np.sqrt(fx * (fx + r))))
    elif Variant(variant) is Variant.COARSE:
        value = np.log1p(r / fx)
    else:
        value = 2.0 * np.log1p(r / np.sqrt(fx * (fx + r)))
    return _out(value, scalar)


def invert_distance_bound(
    family: MetricFamily, value: ArrayLike, fx: ArrayLike, variant: Variant = Variant.FINE
) -> ArrayLike:
    """Largest base distance compatible with a metric value, from the lower envelope."""
    scalar, (value, fx) = _inputs(value, fx)
    _check_weights(fx)
    _check_distance(value, "metric value")
    tag = family.tag
    if tag is Family.GO:
        # needs e^j < 2; the bound diverges at j = log 2
        if np.any(value >= LOG2):
            raise DomainError("GO inversion needs j < log 2")
        e = np.expm1(value)
        out = fx * e / (1.0 - e)
    elif tag is Family.DHV:
        h = np.expm1(value)
        c2 = family.c * family.c
        out = fx / (2.0 * c2) * h * (h + np.sqrt(h * h + 4.0 * c2))
    elif tag is Family.NA:
        t = np.expm1(value / 2.0)
        out = 2.0 * fx * t * (t + np.sqrt(t * t + 1.0))
    elif Variant(variant) is Variant.COARSE:
        out = fx * np.expm1(value)
    else:
        t = np.expm1(value / 2.0)
        out = 0.5 * fx * t * (t + np.sqrt(t * t + 4.0))
    return _out(out, scalar)


def envelope_at(
    family: MetricFamily, d: float, fx: float, fy: float, variant: Variant = Variant.FINE
) -> Dict[str, Optional[float]]:
    """Every envelope of one pair, keyed by bound kind; None where a bound does not apply."""
    value = rho(family, d, fx, fy)
    out: Dict[str, Optional[float]] = {
        Bound.LOWER_GLOBAL.value: bound_lower_global(family, d, fx, variant),
        Bound.UPPER_NEAR.value: bound_upper_near(family, d, fx) if d < fx else None,
        Bound.INVERSION.value: None,
    }
    if value > 0 and (family.tag is not Family.GO or value < LOG2):
        out[Bound.INVERSION.value] = invert_distance_bound(family, value, fx, variant)
    return out


def weight_ratio_lower(fx: ArrayLike, fy: ArrayLike) -> ArrayLike:
    """|log(F(x)/F(y))|, a lower bound of v for any positive weights."""
    scalar, (fx, fy) = _inputs(fx, fy)
    _check_weights(fx, fy)
    return _out(np.abs(np.log(fx) - np.log(fy)), scalar)


def ibr_go_lower(d: ArrayLike, fx: ArrayLike, fy: ArrayLike) -> ArrayLike:
    """log (1 + d/F(x)) (1 + d/F(y)) = 2 j(x, y), a lower bound of v for any positive F."""
    scalar, (d, fx, fy) = _inputs(d, fx, fy)
    _check_weights(fx, fy)
    _check_distance(d)
    return _out(np.log1p(d / fx) + np.log1p(d / fy), scalar)


@dataclass(frozen=True)
class EqualityProbe:
    additivity_defect: float
    conditions_hold: Tuple[bool, bool, bool]

    @property
    def all_conditions(self) -> bool:
        return all(self.conditions_hold)


def go_equality_probe(
    d_xy: float,
    d_xz: float,
    d_zy: float,
    fx: float,
    fy: float,
    fz: float,
    tol: float = EQUALITY_TOL,
) -> EqualityProbe:
    """Triangle slack j(x,z) + j(z,y) - j(x,y) and the three equality conditions.

    The GO triangle inequality is an equality exactly when
    d(x,y) = d(x,z) + d(z,y), F(z) = F(x) + d(x,z) and F(z) = F(y) + d(z,y).
    """
    defect = rho(GO, d_xz, fx, fz) + rho(GO, d_zy, fz, fy) - rho(GO, d_xy, fx, fy)
    conditions = (
        abs(d_xy - (d_xz + d_zy)) <= tol,
        abs(fz - (fx + d_xz)) <= tol,
        abs(fz - (fy + d_zy)) <= tol,
    )
    return EqualityProbe(float(defect), conditions)


def certified_gromov_bound(family: MetricFamily) -> float:
    tag = family.tag
    if tag is Family.GO:
        return 0.25 * math.log(24.0)
    if tag is Family.DHV:
        return math.log(2.0 + 1.0 / family.c)
    if tag is Family.NA:
        return math.log(9.0)
    return math.log(4.0)


def prior_gromov_bound(family: MetricFamily) -> Optional[float]:
    """Gromov constant known before the certified one, for comparison."""
    tag = family.tag
    if tag is Family.GO:
        return math.log(3.0)
    if tag is Family.DHV:
        return math.log((2.0 * family.c + 1.0) / family.c)
    if tag is Family.NA:
        return math.log(15.0)
    return None


def multiplicative_factor(family: MetricFamily) -> float:
    """Distortion allowed between functional products of a quadruple."""
    tag = family.tag
    if tag is Family.GO:
        raise UnsupportedFamilyError("The GO family has no multiplicative four-point form")
    if tag is Family.DHV:
        return ((2.0 * family.c + 1.0) / family.c) ** 2
    if tag is Family.NA:
        return 9.0
    return 4.0


def limit_constant(family: MetricFamily, variant: Variant = Variant.FINE) -> float:
    """r -> 0 limit of the envelope ratio: the dilatation constant of the identity."""
    tag = family.tag
    if tag in (Family.GO, Family.DHV):
        return 1.0
    if tag is Family.NA:
        return 3.0
    return 5.0 if Variant(variant) is Variant.COARSE else 2.5


def bound_table(c: float = 2.0) -> Dict[str, Dict[str, Any]]:
    """Certified constants for every family, embedded in each report."""
    table: Dict[str, Dict[str, Any]] = {}
    for family in (GO, dhv(c), NA, IBR):
        entry: Dict[str, Any] = {
            "gromov": certified_gromov_bound(family),
            "prior_gromov": prior_gromov_bound(family),
            "dilatation": limit_constant(family),
            "metricity_certified": family.metricity_certified,
        }
        if family.tag is Family.DHV:
            entry["c"] = family.c
        if family.tag is Family.IBR:
            entry["dilatation_coarse"] = limit_constant(family, Variant.COARSE)
        table[family.tag.value] = entry
    return table


# ---------------------------------------------------------------------------
# Oracles over a weighted space


class WeightedOracle:
    """Pair values ``fn(d, F(i), F(j))`` over a sampled space, zero on the diagonal."""

    def __init__(
        self,
        space: SampledSpace,
        weights: WeightFunction,
        fn: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
    ):
        if weights.n != space.n:
            raise DimensionError(f"Weights cover {weights.n} points, space has {space.n}")
        self.space = space
        self.weights = weights
        self.fn = fn

    @property
    def n(self) -> int:
        return self.space.n

    def pairs(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        i = np.asarray(i, dtype=np.intp)
        j = np.asarray(j, dtype=np.intp)
        F = self.weights.values
        values = np.asarray(self.fn(self.space.pairs(i, j), F[i], F[j]), dtype=float)
        return np.where(i == j, 0.0, values)

    def dense(self) -> np.ndarray:
        F = self.weights.values
        table = np.array(self.fn(self.space.dense(), F[:, None], F[None, :]), dtype=float)
        np.fill_diagonal(table, 0.0)
        return table


def rho_oracle(family: MetricFamily, space: SampledSpace, weights: WeightFunction) -> WeightedOracle:
    return WeightedOracle(space, weights, lambda d, fx, fy: _rho(family, d, fx, fy))


def functional_oracle(family: MetricFamily, space: SampledSpace, weights: WeightFunction) -> WeightedOracle:
    """The comparison functional as a distance (mu is a metric for any positive F)."""
    if family.tag is Family.GO:
        raise UnsupportedFamilyError("The GO family has no multiplicative comparison functional")
    return WeightedOracle(space, weights, lambda d, fx, fy: comparison_functional(family, d, fx, fy))


def _envelope_slacks(
    family: MetricFamily, d: np.ndarray, fx: np.ndarray, fy: np.ndarray, lipschitz: bool = True
) -> np.ndarray:
    """Relative slacks of every envelope check for ordered pairs (x, y).

    Columns are NaN where a check does not apply. A negative entry is a
    bound that fails. Without ``lipschitz`` the Ibragimov-type family keeps
    only the bounds that hold for arbitrary positive weights.
    """
    value = _rho(family, d, fx, fy)
    scale = np.maximum(1.0, value)
    ok = value > 0
    if family.tag is Family.GO:
        ok &= value < LOG2
    checks = []

    if lipschitz or family.tag is not Family.IBR:
        checks.append((value - bound_lower_global(family, d, fx)) / scale)

        near = d < fx
        upper = np.full_like(value, np.nan)
        if near.any():
            upper[near] = (bound_upper_near(family, d[near], fx[near]) - value[near]) / scale[near]
        checks.append(upper)

        inv = np.full_like(value, np.nan)
        if ok.any():
            bound = invert_distance_bound(family, value[ok], fx[ok])
            inv[ok] = (bound - d[ok]) / np.maximum(1.0, d[ok])
        checks.append(inv)

    if family.tag is Family.IBR:
        checks.append((value - bound_lower_global(family, d, fx, Variant.COARSE)) / scale)
        if ok.any():
            coarse = np.full_like(value, np.nan)
            coarse[ok] = (invert_distance_bound(family, value[ok], fx[ok], Variant.COARSE) - d[ok]) / np.maximum(1.0, d[ok])
            checks.append(coarse)
        checks.append((value - weight_ratio_lower(fx, fy)) / scale)
        checks.append((value - ibr_go_lower(d, fx, fy)) / scale)
    return np.stack(checks, axis=-1)


def envelope_audit(
    family: MetricFamily,
    space: SampledSpace,
    weights: WeightFunction,
    mode: Optional[SearchMode] = None,
    threads: Optional[int] = None,
    tol: float = ENVELOPE_TOL_REL,
    pair_threshold: int = PAIR_THRESHOLD,
) -> AuditReport:
    """Check lower <= rho <= upper and d <= inversion over ordered pairs.

    The upper near-field bound is only checked when d(x, y) < F(x). For the
    Ibragimov-type family the weight-ratio and 2j lower bounds are checked
    as well, and with uncertified weights only the bounds that need no
    Lipschitz hypothesis. Slacks are relative: ``(bound side) / max(1, value)``.
    """
    n = space.n
    if weights.n != n:
        raise DimensionError(f"Weights cover {weights.n} points, space has {n}")
    if family.needs_lipschitz and not weights.lipschitz_certified:
        logger.warning("Envelope audit of %s with non-certified weights; bounds may not apply", family.label)
    mode = resolve_mode(mode, n <= pair_threshold, "envelope audit")
    F = weights.values
    lipschitz = weights.lipschitz_certified

    def absorb(slacks: np.ndarray, i: np.ndarray, j: np.ndarray) -> ScanPartial:
        per_pair = np.nanmin(slacks, axis=-1)
        part = ScanPartial(checked=int(per_pair.size), violations=int(np.sum(per_pair < -tol)))
        if per_pair.size:
            k = int(np.argmin(per_pair))
            part.worst = float(per_pair[k])
            part.witness = (int(i[k]), int(j[k]))
        return part

    if mode.is_exhaustive:
        def scan(bounds: Tuple[int, int]) -> ScanPartial:
            start, stop = bounds
            ii, jj = np.meshgrid(np.arange(start, stop), np.arange(n), indexing="ij")
            keep = ii != jj
            i, j = ii[keep], jj[keep]
            d = space.rows(start, stop)[keep]
            return absorb(_envelope_slacks(family, d, F[i], F[j], lipschitz), i, j)

        parts = parallel_map(scan, row_chunks(n, 128), threads)
    else:
        def scan(block: Tuple[int, int]) -> ScanPartial:
            block_id, count = block
            idx = draw_tuples(block_rng(mode.seed, block_id), count, n, 2, distinct=True)
            i, j = idx[:, 0], idx[:, 1]
            return absorb(_envelope_slacks(family, space.pairs(i, j), F[i], F[j], lipschitz), i, j)

        parts = parallel_map(scan, tuple_blocks(mode.samples, n, 2), threads)

    report = finish_report(merge_partials(parts), mode, f"rel {tol:g}")
    logger.debug("Envelope audit of %s: %d pairs, %d violations", family.label, report.checked, report.violations)
    return report
