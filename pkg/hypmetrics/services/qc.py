"""Dilatation of the identity map from the base metric to a weighted family.

At a center x and radius r < F(x) the empirical estimate places probes on
the sphere of radius r around x and takes max/min of rho(x, p). The
analytic envelope divides the near-field upper bound by the global lower
bound; its r -> 0 limit is the family's dilatation constant.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, ProbeError
from .families import (
    MetricFamily,
    Variant,
    bound_lower_global,
    bound_upper_near,
    limit_constant,
    rho,
)
from .metric_core import DistanceField, ObstacleSet, dist_to_set
from .settings import SETTINGS

logger = logging.getLogger(__name__)

DEFAULT_FRACTIONS = tuple(10.0 ** -k for k in range(1, 7))
PLANAR_PROBES = 512
SPATIAL_PROBES = 2048
NOISE_FLOOR = 1e-12

WeightField = Callable[[Any], np.ndarray]


def probe_directions(dim: int, n_probes: int, rng: np.random.Generator) -> np.ndarray:
    """Unit directions: in the plane, equally spaced angles each jittered within its own sector."""
    if dim == 1:
        return np.array([[-1.0], [1.0]])
    if dim == 2:
        angles = 2.0 * np.pi * (np.arange(n_probes) + rng.random(n_probes)) / n_probes
        return np.column_stack([np.cos(angles), np.sin(angles)])
    raw = rng.standard_normal((n_probes, dim))
    return raw / np.linalg.norm(raw, axis=1, keepdims=True)


def dilatation_empirical(
    family: MetricFamily,
    obstacle: ObstacleSet,
    x: Sequence[float],
    r: float,
    n_probes: Optional[int] = None,
    seed: Optional[int] = None,
    weight: Optional[WeightField] = None,
) -> float:
    """max/min of rho(x, p) over probes p with |p - x| = r."""
    center = np.atleast_1d(np.asarray(x, dtype=float))
    if not r > 0:
        raise DomainError("Probe radius must be positive")
    gap = dist_to_set(center, obstacle)
    if r >= gap:
        raise DomainError(f"Probe radius {r:g} must stay below dist(x, M) = {gap:g}")
    weight = DistanceField(obstacle) if weight is None else weight
    dim = center.shape[0]
    if n_probes is None:
        n_probes = PLANAR_PROBES if dim == 2 else SPATIAL_PROBES
    seed = SETTINGS.seed if seed is None else seed

    rng = np.random.default_rng(seed)
    probes = center + r * probe_directions(dim, n_probes, rng)
    outside = obstacle.distances(probes) > 0
    if not outside.any():
        raise ProbeError(f"All {probes.shape[0]} probes at radius {r:g} fall inside M")
    probes = probes[outside]

    fx = float(weight(center)[0])
    values = rho(family, np.full(probes.shape[0], r), fx, weight(probes))
    return float(values.max() / values.min())


def envelope_ratio(family: MetricFamily, fx: float, r: float, variant: Variant = Variant.FINE) -> float:
    """Upper near-field bound over global lower bound at radius r."""
    if not r > 0:
        raise DomainError("Envelope radius must be positive")
    return float(bound_upper_near(family, r, fx) / bound_lower_global(family, r, fx, variant))


def extrapolate_limit(values: Sequence[float], radii: Optional[Sequence[float]] = None) -> Tuple[float, bool]:
    """Estimate lim r->0 of a profile sampled on a decreasing geometric grid.

    Returns the value at the smallest radius and whether the tail looks
    converged: successive differences shrink by at least sqrt(q) for grid
    ratio q, or drop below a 1e-12 relative noise floor, and never flip
    direction.
    """
    vals = np.asarray(values, dtype=float)
    if vals.size < 3:
        raise DomainError("Extrapolation needs at least three radii")
    q = 10.0
    if radii is not None:
        rs = np.asarray(radii, dtype=float)
        if rs.size != vals.size or np.any(rs <= 0) or np.any(np.diff(rs) >= 0):
            raise DomainError("Radii must be positive and strictly decreasing")
        q = float(np.exp(np.mean(np.log(rs[:-1] / rs[1:]))))
    value = float(vals[-1])
    floor = NOISE_FLOOR * max(1.0, abs(value))
    diffs = np.diff(vals)
    significant = np.abs(diffs) > floor

    converged = True
    shrink = math.sqrt(q)
    for prev, cur, prev_big, cur_big in zip(diffs[:-1], diffs[1:], significant[:-1], significant[1:]):
        if not cur_big:
            continue
        if not prev_big or abs(cur) * shrink > abs(prev) * (1.0 + 1e-9):
            converged = False
            break
        if np.sign(cur) != np.sign(prev):
            converged = False
            break
    return value, converged


@dataclass(frozen=True)
class DilatationProfile:
    family: MetricFamily
    variant: Variant
    center: Tuple[float, ...]
    radii: Tuple[float, ...]
    H_hat: Tuple[float, ...]
    H_env: Tuple[float, ...]
    extrapolated_limit: float
    converged: bool
    empirical_limit: float
    empirical_converged: bool
    limit: float
    seed: int
    n_probes: Optional[int]

    def as_dict(self) -> Dict[str, Any]:
        return {
            "family": self.family.as_dict(),
            "variant": self.variant.value,
            "center": list(self.center),
            "radii": list(self.radii),
            "H_hat": list(self.H_hat),
            "H_env": list(self.H_env),
            "extrapolated_limit": self.extrapolated_limit,
            "converged": self.converged,
            "empirical_limit": self.empirical_limit,
            "empirical_converged": self.empirical_converged,
            "certified_limit": self.limit,
            "seed": self.seed,
            "n_probes": self.n_probes,
        }

    def csv_rows(self):
        yield ("r", "H_hat", "H_env")
        for r, h, e in zip(self.radii, self.H_hat, self.H_env):
            yield (repr(r), repr(h), repr(e))


def dilatation_profile(
    family: MetricFamily,
    obstacle: ObstacleSet,
    center: Sequence[float],
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    n_probes: Optional[int] = None,
    seed: Optional[int] = None,
    variant: Variant = Variant.FINE,
    weight: Optional[WeightField] = None,
) -> DilatationProfile:
    """Empirical and envelope dilatation at r = fraction * F(center)."""
    fractions = tuple(float(f) for f in fractions)
    if any(not 0 < f < 1 for f in fractions):
        raise DomainError("Radius fractions must lie in (0, 1)")
    seed = SETTINGS.seed if seed is None else seed
    x = np.atleast_1d(np.asarray(center, dtype=float))
    field = DistanceField(obstacle) if weight is None else weight
    fx = float(field(x)[0])
    if not fx > 0:
        raise DomainError("The profile center must lie outside M")

    h_hat, h_env = [], []
    for f in fractions:
        r = f * fx
        h_hat.append(dilatation_empirical(family, obstacle, x, r, n_probes, seed, field))
        h_env.append(envelope_ratio(family, fx, r, variant))
    env_limit, env_ok = extrapolate_limit(h_env, fractions)
    emp_limit, emp_ok = extrapolate_limit(h_hat, fractions)
    logger.info("%s dilatation at %s: envelope -> %.6g (%s), empirical -> %.6g",
                family.label, x.tolist(), env_limit, "converged" if env_ok else "not converged", emp_limit)
    return DilatationProfile(
        family=family,
        variant=Variant(variant),
        center=tuple(x.tolist()),
        radii=fractions,
        H_hat=tuple(h_hat),
        H_env=tuple(h_env),
        extrapolated_limit=env_limit,
        converged=env_ok,
        empirical_limit=emp_limit,
        empirical_converged=emp_ok,
        limit=limit_constant(family, variant),
        seed=seed,
        n_probes=n_probes,
    )
