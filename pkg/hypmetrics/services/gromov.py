"""Gromov products, four-point defects and delta estimation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .families import (
    MetricFamily,
    certified_gromov_bound,
    functional_oracle,
    multiplicative_factor,
    rho_oracle,
)
from .metric_core import (
    TOL_ABS,
    AuditReport,
    PairOracle,
    SampledSpace,
    ScanPartial,
    SearchMode,
    WeightFunction,
    finish_report,
    merge_partials,
)
from .sampling import (
    block_rng,
    combinations_array,
    draw_tuples,
    parallel_map,
    resolve_mode,
    row_chunks,
    sample_blocks,
)
from .settings import SETTINGS

logger = logging.getLogger(__name__)

BASEPOINT_THRESHOLD = 256


def gromov_product(d_xw: Any, d_yw: Any, d_xy: Any) -> Any:
    """(x|y)_w = 1/2 (d(x,w) + d(y,w) - d(x,y))."""
    return 0.5 * (d_xw + d_yw - d_xy)


def _pair_sums(table: np.ndarray, quads: np.ndarray) -> np.ndarray:
    x, y, z, w = quads.T
    return np.stack(
        [
            table[x, z] + table[y, w],
            table[x, w] + table[y, z],
            table[x, y] + table[z, w],
        ],
        axis=-1,
    )


def _max_minus_median(sums: np.ndarray) -> np.ndarray:
    ordered = np.sort(sums, axis=-1)
    return 0.5 * (ordered[..., 2] - ordered[..., 1])


def four_point_defect(xy: float, xz: float, xw: float, yz: float, yw: float, zw: float) -> float:
    """Smallest delta for which the quadruple satisfies the four-point condition.

    With S1 = rho(x,z) + rho(y,w), S2 = rho(x,w) + rho(y,z) and
    S3 = rho(x,y) + rho(z,w), this is (max - median) / 2 of the three sums.
    """
    sums = np.array([xz + yw, xw + yz, xy + zw], dtype=float)
    return float(max(0.0, _max_minus_median(sums)))


def quadruple_defect(table: np.ndarray, quad: Sequence[int]) -> float:
    """Four-point defect of one index quadruple of a pair table."""
    return float(_max_minus_median(_pair_sums(table, np.asarray([quad], dtype=np.intp)))[0])


def _first_index_chunks(n: int) -> List[int]:
    # quadruples are enumerated grouped by their smallest index
    return list(range(max(0, n - 3)))


def _quads_with_first(n: int, first: int) -> np.ndarray:
    rest = combinations_array(n - first - 1, 3) + first + 1
    return np.hstack([np.full((rest.shape[0], 1), first, dtype=np.intp), rest])


def scan_quadruples(
    n: int,
    score,
    mode: SearchMode,
    threads: Optional[int] = None,
) -> ScanPartial:
    """Minimise ``score(quads) -> (values, violations)`` over quadruples.

    Exhaustive mode walks every increasing quadruple grouped by first index;
    sampled mode draws distinct quadruples block by block. Either way the
    partial minima are merged in a fixed order.
    """
    if n < 4:
        return ScanPartial()

    def evaluate(quads: np.ndarray) -> ScanPartial:
        values, violations = score(quads)
        k = int(np.argmin(values))
        return ScanPartial(int(quads.shape[0]), int(violations), float(values[k]), tuple(int(q) for q in quads[k]))

    if mode.is_exhaustive:
        parts = parallel_map(lambda first: evaluate(_quads_with_first(n, first)), _first_index_chunks(n), threads)
    else:
        def sampled(block: Tuple[int, int]) -> ScanPartial:
            block_id, count = block
            return evaluate(draw_tuples(block_rng(mode.seed, block_id), count, n, 4, distinct=True))

        parts = parallel_map(sampled, sample_blocks(mode.samples), threads)
    return merge_partials(parts)


@dataclass(frozen=True)
class DeltaEstimate:
    delta_hat: float
    witness: Tuple[int, ...]
    mode: SearchMode
    checked: int
    family: Optional[MetricFamily] = None
    certified_bound: Optional[float] = None
    lipschitz_warning: bool = False

    @property
    def within_bound(self) -> Optional[bool]:
        if self.certified_bound is None:
            return None
        return self.delta_hat <= self.certified_bound + TOL_ABS

    def as_dict(self) -> Dict[str, Any]:
        return {
            "delta_hat": self.delta_hat,
            "witness": list(self.witness),
            "mode": self.mode.as_dict(),
            "checked": self.checked,
            "family": None if self.family is None else self.family.as_dict(),
            "certified_bound": self.certified_bound,
            "within_bound": self.within_bound,
            "lipschitz_warning": self.lipschitz_warning,
        }


def _quad_mode(n: int, mode: Optional[SearchMode], quad_budget: Optional[int]) -> SearchMode:
    budget = SETTINGS.quad_budget if quad_budget is None else quad_budget
    return resolve_mode(mode, math.comb(n, 4) <= budget, "quadruple scan")


def table_delta(
    table: np.ndarray,
    mode: Optional[SearchMode] = None,
    quad_budget: Optional[int] = None,
    threads: Optional[int] = None,
) -> Tuple[float, Tuple[int, ...], SearchMode, int]:
    """Largest four-point defect over the quadruples of a dense pair table."""
    n = table.shape[0]
    mode = _quad_mode(n, mode, quad_budget)

    def score(quads: np.ndarray):
        return -_max_minus_median(_pair_sums(table, quads)), 0

    best = scan_quadruples(n, score, mode, threads)
    delta = max(0.0, -best.worst) if best.checked else 0.0
    return delta, best.witness, mode, best.checked


def delta_estimate(
    family: MetricFamily,
    space: SampledSpace,
    weights: WeightFunction,
    mode: Optional[SearchMode] = None,
    quad_budget: Optional[int] = None,
    threads: Optional[int] = None,
) -> DeltaEstimate:
    """Empirical Gromov constant of (space, rho_family) against the certified one."""
    warn = family.needs_lipschitz and not weights.lipschitz_certified
    if warn:
        logger.warning("%s delta with non-certified weights; the certified bound does not apply", family.label)
    table = rho_oracle(family, space, weights).dense()
    delta, witness, mode, checked = table_delta(table, mode, quad_budget, threads)
    estimate = DeltaEstimate(
        delta_hat=delta,
        witness=witness,
        mode=mode,
        checked=checked,
        family=family,
        certified_bound=certified_gromov_bound(family),
        lipschitz_warning=warn,
    )
    logger.info("%s delta_hat=%.6g over %d quadruples (%s), bound %.6g",
                family.label, delta, checked, mode.kind, estimate.certified_bound)
    return estimate


def base_delta_estimate(
    space: SampledSpace,
    mode: Optional[SearchMode] = None,
    quad_budget: Optional[int] = None,
    threads: Optional[int] = None,
) -> DeltaEstimate:
    """Four-point defect of the base distance itself."""
    delta, witness, mode, checked = table_delta(np.asarray(space.dense()), mode, quad_budget, threads)
    return DeltaEstimate(delta_hat=delta, witness=witness, mode=mode, checked=checked)


def _gromov_table(table: np.ndarray, w: int) -> np.ndarray:
    return gromov_product(table[:, w][:, None], table[:, w][None, :], table)


def basepoint_defect(
    oracle: PairOracle,
    w: int,
    mode: Optional[SearchMode] = None,
    threads: Optional[int] = None,
) -> Tuple[float, Tuple[int, ...]]:
    """max over (x, y, z) of min((x|y)_w, (y|z)_w) - (x|z)_w, clamped at 0."""
    n = oracle.n
    if not 0 <= w < n:
        raise IndexError(f"Base point {w} is outside 0..{n - 1}")
    table = np.asarray(oracle.dense(), dtype=float)
    G = _gromov_table(table, w)
    mode = resolve_mode(mode, n <= BASEPOINT_THRESHOLD, "base-point scan")

    if mode.is_exhaustive:
        def scan(bounds: Tuple[int, int]) -> ScanPartial:
            start, stop = bounds
            rows = G[start:stop]
            # excess[b, x, z] with y = start + b
            excess = np.minimum(rows[:, :, None], rows[:, None, :]) - G[None, :, :]
            b, x, z = np.unravel_index(int(np.argmax(excess)), excess.shape)
            return ScanPartial(int(excess.size), 0, -float(excess[b, x, z]), (int(x), start + int(b), int(z)))

        chunk = max(1, (1 << 20) // max(1, n * n))
        parts = parallel_map(scan, row_chunks(n, chunk), threads)
    else:
        def scan(block: Tuple[int, int]) -> ScanPartial:
            block_id, count = block
            t = draw_tuples(block_rng(mode.seed, block_id), count, n, 3, distinct=False)
            x, y, z = t[:, 0], t[:, 1], t[:, 2]
            excess = np.minimum(G[x, y], G[y, z]) - G[x, z]
            k = int(np.argmax(excess))
            return ScanPartial(count, 0, -float(excess[k]), (int(x[k]), int(y[k]), int(z[k])))

        parts = parallel_map(scan, sample_blocks(mode.samples), threads)

    best = merge_partials(parts)
    if not best.checked or -best.worst <= 0:
        return 0.0, best.witness if best.checked else ()
    return -best.worst, best.witness


def basepoint_defects(
    oracle: PairOracle, mode: Optional[SearchMode] = None, threads: Optional[int] = None
) -> np.ndarray:
    return np.array([basepoint_defect(oracle, w, mode, threads)[0] for w in range(oracle.n)])


def basepoint_transfer_check(
    oracle: PairOracle,
    mode: Optional[SearchMode] = None,
    threads: Optional[int] = None,
    tol: float = TOL_ABS,
) -> Tuple[AuditReport, np.ndarray]:
    """Check max_w delta_w <= 2 min_w delta_w over all base points w.

    Returns the report (witness ``(argmax w, argmin w)``, worst_defect the
    slack ``2 min - max``) together with the per-base-point defects.
    """
    n = oracle.n
    resolved = resolve_mode(mode, n <= BASEPOINT_THRESHOLD, "base-point scan")
    deltas = basepoint_defects(oracle, resolved, threads)
    if n == 0:
        return finish_report(ScanPartial(), resolved, f"abs {tol:g}"), deltas
    hi, lo = int(np.argmax(deltas)), int(np.argmin(deltas))
    slack = 2.0 * float(deltas[lo]) - float(deltas[hi])
    part = ScanPartial(checked=n, violations=int(slack < -tol), worst=slack, witness=(hi, lo))
    return finish_report(part, resolved, f"abs {tol:g}"), deltas


def product_ratio(values: np.ndarray, quads: np.ndarray) -> np.ndarray:
    """max / median of the three functional products of each quadruple."""
    ordered = np.sort(_pair_sums(np.log(values), quads), axis=-1)
    return np.exp(ordered[..., 2] - ordered[..., 1])


def multiplicative_four_point_check(
    family: MetricFamily,
    space: SampledSpace,
    weights: WeightFunction,
    mode: Optional[SearchMode] = None,
    quad_budget: Optional[int] = None,
    threads: Optional[int] = None,
    tol: float = TOL_ABS,
) -> AuditReport:
    """Check P1 <= K max(P2, P3) for the functional products of every quadruple.

    K is ((2c+1)/c)^2 for DHV, 9 for NA and 4 for IBR. ``worst_defect`` is
    ``K - worst ratio``.
    """
    factor = multiplicative_factor(family)
    if family.needs_lipschitz and not weights.lipschitz_certified:
        logger.warning("Multiplicative check of %s with non-certified weights", family.label)
    table = functional_oracle(family, space, weights).dense()
    # the diagonal never enters: quadruples have distinct indices
    np.fill_diagonal(table, 1.0)
    n = space.n
    mode = _quad_mode(n, mode, quad_budget)

    def score(quads: np.ndarray):
        ratio = product_ratio(table, quads)
        return factor - ratio, int(np.sum(ratio > factor + tol))

    best = scan_quadruples(n, score, mode, threads)
    worst_ratio = factor - best.worst if best.checked else 1.0
    report = finish_report(best, mode, f"abs {tol:g}", worst_ratio=worst_ratio)
    logger.info("%s multiplicative check: worst ratio %.6g (factor %.6g) over %d quadruples",
                family.label, worst_ratio, factor, report.checked)
    return report
