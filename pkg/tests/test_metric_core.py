import math

import numpy as np
import pytest

from hypmetrics.services.errors import DimensionError, EvaluationError, WeightError
from hypmetrics.services.metric_core import (
    ClosedDisc,
    HalfSpace,
    ObstacleSet,
    SampledSpace,
    SearchMode,
    SinglePoint,
    Sphere,
    WeightFunction,
    certify_weights,
    dist_to_set,
    lipschitz_audit,
    lipschitz_slack,
    metric_axiom_audit,
    triangle_slack,
)


def test_dist_to_point_on_line():
    M = ObstacleSet((SinglePoint([0.0]),))
    assert dist_to_set(3.0, M) == 3.0
    assert dist_to_set(0.0, M) == 0.0


def test_dist_to_closed_disc():
    M = ObstacleSet((ClosedDisc([0.0, 0.0], 1.0),))
    assert dist_to_set((2.0, 0.0), M) == pytest.approx(1.0)
    assert dist_to_set((0.5, 0.0), M) == 0.0


def test_dist_takes_the_nearest_primitive():
    M = ObstacleSet((HalfSpace([0.0, 1.0], 0.0), Sphere([0.0, 5.0], 1.0)))
    assert dist_to_set((0.0, 3.0), M) == pytest.approx(1.0)
    assert dist_to_set((0.0, 0.5), M) == pytest.approx(0.5)


def test_dimension_mismatch():
    M = ObstacleSet((ClosedDisc([0.0, 0.0], 1.0),))
    with pytest.raises(DimensionError):
        dist_to_set((1.0, 2.0, 3.0), M)


def test_empty_obstacle_is_rejected():
    with pytest.raises(DimensionError):
        ObstacleSet(())


def test_weights_must_be_positive():
    with pytest.raises(WeightError):
        WeightFunction.custom([1.0, 0.0])


def test_lipschitz_violation_on_the_line():
    space = SampledSpace.from_points([[1.0], [2.0]])
    weights = WeightFunction.custom([2.0, 4.0])
    report = lipschitz_audit(space, weights)
    assert report.violations == 1
    assert report.worst_defect == pytest.approx(-1.0)
    assert report.witness == (0, 1)
    assert not report.passed


def test_constant_weights_are_lipschitz(rng):
    space = SampledSpace.from_points(rng.normal(size=(40, 3)))
    weights, report = certify_weights(space, WeightFunction.custom(np.ones(40)))
    assert report.violations == 0
    assert weights.lipschitz_certified


def test_distance_weights_pass_exhaustively(rng):
    M = ObstacleSet((ClosedDisc([0.0, 0.0], 0.5), SinglePoint([3.0, 3.0])))
    pts = rng.uniform(-4, 4, size=(300, 2))
    pts = pts[M.distances(pts) > 0]
    space = SampledSpace.from_points(pts)
    weights = WeightFunction.from_obstacle(space, M)
    assert weights.lipschitz_certified
    report = lipschitz_audit(space, weights)
    assert report.mode.is_exhaustive
    assert report.checked == space.n * (space.n - 1) // 2
    assert report.violations == 0


def test_lipschitz_witness_reproduces(rng):
    space = SampledSpace.from_points(rng.normal(size=(30, 2)))
    weights = WeightFunction.custom(rng.uniform(0.1, 5.0, size=30))
    report = lipschitz_audit(space, weights)
    i, j = report.witness
    again = lipschitz_slack(space, weights, np.array([i]), np.array([j]))[0]
    assert again == pytest.approx(report.worst_defect, abs=1e-12)


def test_sampled_lipschitz_is_thread_independent(rng):
    space = SampledSpace.from_points(rng.normal(size=(60, 2)))
    weights = WeightFunction.custom(rng.uniform(0.1, 5.0, size=60))
    mode = SearchMode.sampled(50_000, 11)
    one = lipschitz_audit(space, weights, mode, threads=1)
    four = lipschitz_audit(space, weights, mode, threads=4)
    assert one == four


def test_single_point_space_is_a_metric():
    report = metric_axiom_audit(SampledSpace.from_points([[0.0, 0.0]]))
    assert report.violations == 0
    assert report.checked == 0


def test_sampled_audits_on_spaces_smaller_than_a_tuple():
    mode = SearchMode.sampled(100, 0)
    two = SampledSpace.from_points([[0.0], [1.0]])
    report = metric_axiom_audit(two, mode)
    assert (report.checked, report.violations) == (0, 0)
    one = SampledSpace.from_points([[0.0]])
    report = lipschitz_audit(one, WeightFunction.custom([1.0]), mode)
    assert (report.checked, report.violations, report.witness) == (0, 0, ())


def test_euclidean_base_distance_is_a_metric(rng):
    space = SampledSpace.from_points(rng.normal(size=(80, 2)))
    report = metric_axiom_audit(space)
    assert report.mode.is_exhaustive
    assert report.checked == 80 * 79 * 78
    assert report.violations == 0
    assert report.worst_defect > -1e-9


def test_triangle_violation_has_a_witness():
    space = SampledSpace.from_matrix([[0, 1, 5], [1, 0, 1], [5, 1, 0]])
    report = metric_axiom_audit(space)
    assert report.violations >= 1
    assert report.worst_defect == pytest.approx(-3.0)
    assert report.witness == (0, 1, 2)
    assert triangle_slack(space, report.witness) == pytest.approx(report.worst_defect)


def test_identity_and_symmetry_are_checked():
    space = SampledSpace.from_matrix([[0, 1, 1], [2, 0, 1], [1, 1, 0.5]])
    report = metric_axiom_audit(space)
    assert report.violations >= 2


def test_nan_distance_is_an_evaluation_error():
    space = SampledSpace.from_matrix([[0, math.nan], [math.nan, 0]])
    with pytest.raises(EvaluationError) as err:
        metric_axiom_audit(space)
    assert err.value.witness == (0, 1)


def test_sampled_metric_audit_is_reproducible(rng):
    space = SampledSpace.from_points(rng.normal(size=(50, 2)))
    mode = SearchMode.sampled(40_000, 5)
    first = metric_axiom_audit(space, mode, threads=1)
    second = metric_axiom_audit(space, mode, threads=3)
    assert first == second
    assert first.violations == 0
    assert triangle_slack(space, first.witness) == pytest.approx(first.worst_defect)


def test_unmaterialized_space_matches_dense(rng):
    pts = rng.normal(size=(20, 2))
    lazy = SampledSpace.from_points(pts, materialize=False)
    dense = SampledSpace.from_points(pts)
    assert not lazy.is_materialized
    i, j = np.array([0, 3, 7]), np.array([5, 3, 19])
    np.testing.assert_allclose(lazy.pairs(i, j), dense.pairs(i, j))
    np.testing.assert_allclose(lazy.rows(2, 6), dense.rows(2, 6))


def test_report_serialises(rng):
    space = SampledSpace.from_points(rng.normal(size=(10, 2)))
    data = metric_axiom_audit(space).as_dict()
    assert data["mode"] == {"kind": "exhaustive"}
    assert data["passed"] is True
