import math

import numpy as np
import pytest

from conftest import SHIPPED
from hypmetrics.services.errors import DomainError, UnsupportedFamilyError
from hypmetrics.services.families import (
    GO,
    IBR,
    NA,
    Family,
    MetricFamily,
    Variant,
    bound_lower_global,
    bound_table,
    bound_upper_near,
    certified_gromov_bound,
    comparison_functional,
    dhv,
    envelope_at,
    envelope_audit,
    functional_oracle,
    go_equality_probe,
    ibr_go_lower,
    invert_distance_bound,
    multiplicative_factor,
    prior_gromov_bound,
    rho,
    rho_oracle,
    weight_ratio_lower,
)
from hypmetrics.services.metric_core import (
    ObstacleSet,
    SampledSpace,
    SearchMode,
    Sphere,
    WeightFunction,
    metric_axiom_audit,
)
from hypmetrics.services.spaces import random_weights

ALL = [GO, dhv(2.0), dhv(0.5), NA, IBR]
METRICS = [GO, dhv(2.0), dhv(5.0), NA, IBR]


def test_parse_family():
    assert MetricFamily.parse("DHV") == dhv(2.0)
    assert MetricFamily.parse("go", c=3.0).c is None
    assert MetricFamily.parse("dhv", 1.5).label == "dhv(c=1.5)"
    with pytest.raises(UnsupportedFamilyError):
        MetricFamily.parse("apollonian")
    with pytest.raises(DomainError):
        dhv(0.0)


def test_metricity_flag():
    assert not dhv(1.5).metricity_certified
    assert dhv(2.0).metricity_certified
    assert all(f.metricity_certified for f in (GO, NA, IBR))
    assert not IBR.needs_lipschitz


@pytest.mark.parametrize(
    "family, d, fx, fy, expected",
    [
        (GO, 1, 1, 2, 0.5 * math.log(3)),
        (dhv(2.0), 3, 1, 4, math.log(4)),
        (NA, 2, 1, 3, math.log(3)),
        (IBR, 1, 1, 2, math.log(4.5)),
    ],
)
def test_rho_examples(family, d, fx, fy, expected):
    assert rho(family, d, fx, fy) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("family", ALL)
def test_rho_vanishes_on_the_diagonal(family):
    assert rho(family, 0.0, 0.7, 0.7) == pytest.approx(0.0, abs=1e-15)


def test_rho_rejects_bad_weights():
    with pytest.raises(DomainError):
        rho(GO, 1.0, 0.0, 1.0)
    with pytest.raises(DomainError):
        rho(NA, -1.0, 1.0, 1.0)


@pytest.mark.parametrize("family", ALL)
def test_rho_is_bitwise_symmetric(family, rng):
    d = rng.uniform(0, 5, 500)
    fx = rng.uniform(1e-3, 5, 500)
    fy = rng.uniform(1e-3, 5, 500)
    np.testing.assert_array_equal(rho(family, d, fx, fy), rho(family, d, fy, fx))


@pytest.mark.parametrize("family", ALL)
def test_rho_increases_with_distance(family):
    d = np.linspace(0.0, 5.0, 200)
    values = rho(family, d, 0.7, 1.3)
    assert np.all(np.diff(values) > 0)


def test_dhv_increases_with_c(rng):
    d = rng.uniform(0, 3, 200)
    fx = rng.uniform(0.1, 2, 200)
    fy = rng.uniform(0.1, 2, 200)
    values = [rho(dhv(c), d, fx, fy) for c in (0.5, 1.0, 2.0, 5.0)]
    for lower, higher in zip(values, values[1:]):
        assert np.all(lower <= higher)


def test_small_distance_keeps_precision():
    # j ~ d/2 (1/Fx + 1/Fy) for d << F
    assert rho(GO, 1e-12, 1.0, 1.0) == pytest.approx(1e-12, rel=1e-9)


def test_comparison_functionals():
    assert comparison_functional(NA, 2, 1, 3) == pytest.approx(6.0)
    assert comparison_functional(IBR, 0, 1, 1) == pytest.approx(1.0)
    assert comparison_functional(dhv(2.0), 3, 1, 4) == pytest.approx(8.0)
    with pytest.raises(UnsupportedFamilyError):
        comparison_functional(GO, 1, 1, 1)


def test_upper_near_examples():
    assert bound_upper_near(GO, 0.0, 1.0) == 0.0
    assert bound_upper_near(IBR, 0.5, 1.0) == pytest.approx(math.log(8))
    assert bound_upper_near(NA, 0.5, 1.0) == pytest.approx(2 * math.log(1.5 / math.sqrt(0.5)))
    with pytest.raises(DomainError):
        bound_upper_near(GO, 1.0, 1.0)


@pytest.mark.parametrize("family", ALL)
def test_lower_global_vanishes_at_zero(family):
    assert bound_lower_global(family, 0.0, 2.0) == 0.0


def test_lower_global_examples():
    assert bound_lower_global(GO, 1.0, 1.0) == pytest.approx(math.log(1.5))
    assert bound_lower_global(IBR, 1.0, 1.0, Variant.COARSE) == pytest.approx(math.log(2))


def test_inversion_examples():
    e = math.exp(0.5)
    assert invert_distance_bound(GO, 0.5, 1.0) == pytest.approx((e - 1) / (2 - e))
    assert invert_distance_bound(IBR, math.log(2), 1.0, Variant.COARSE) == pytest.approx(1.0)
    assert invert_distance_bound(NA, 1e-12, 1.0) < 1e-9
    with pytest.raises(DomainError):
        invert_distance_bound(GO, math.log(2), 1.0)


@pytest.mark.parametrize("family", ALL)
def test_inversion_undoes_the_lower_envelope(family):
    r = np.array([1e-4, 0.1, 0.5, 2.0])
    if family.tag is Family.GO:
        r = r[bound_lower_global(GO, r, 1.0) < math.log(2)]
    value = bound_lower_global(family, r, 1.0)
    np.testing.assert_allclose(invert_distance_bound(family, value, 1.0), r, rtol=1e-9)


def test_envelope_at_brackets_the_value():
    for family in ALL:
        value = rho(family, 0.5, 1.0, 1.2)
        env = envelope_at(family, 0.5, 1.0, 1.2)
        assert env["lower_global"] <= value + 1e-12
        assert value <= env["upper_near"] + 1e-12
        assert env["inversion"] >= 0.5 - 1e-9


def test_envelope_at_drops_what_does_not_apply():
    # j = log(7) / 2 > log 2
    env = envelope_at(GO, 3.0, 4.0, 1.0)
    assert env["inversion"] is None
    assert env["lower_global"] == pytest.approx(math.log(10 / 7))
    assert envelope_at(GO, 3.0, 1.0, 4.0)["upper_near"] is None


def test_ibr_supplementary_lower_bounds(rng):
    d = rng.uniform(0, 3, 300)
    fx = np.exp(rng.uniform(-3, 3, 300))
    fy = np.exp(rng.uniform(-3, 3, 300))
    v = rho(IBR, d, fx, fy)
    assert np.all(v >= weight_ratio_lower(fx, fy) - 1e-12)
    assert np.all(v >= ibr_go_lower(d, fx, fy) - 1e-12)
    np.testing.assert_allclose(ibr_go_lower(d, fx, fy), 2 * rho(GO, d, fx, fy))


def test_equality_probe_on_vertical_triple():
    probe = go_equality_probe(3.0, 2.0, 1.0, 4.0, 1.0, 2.0)
    assert probe.additivity_defect == pytest.approx(0.5 * math.log(9) - 0.5 * math.log(7), abs=1e-9)
    assert probe.conditions_hold == (True, False, True)
    assert not probe.all_conditions


def test_equality_probe_when_conditions_hold():
    probe = go_equality_probe(2.0, 1.0, 1.0, 1.0, 1.0, 2.0)
    assert probe.all_conditions
    assert probe.additivity_defect == pytest.approx(0.0, abs=1e-12)


def test_equality_probe_on_the_line():
    # M = {0}: x = 1, z = 2, y = 4
    probe = go_equality_probe(3.0, 1.0, 2.0, 1.0, 4.0, 2.0)
    assert probe.conditions_hold == (True, True, False)
    assert probe.additivity_defect > 0


def test_equality_probe_degenerate():
    probe = go_equality_probe(1.5, 0.0, 1.5, 1.0, 2.0, 1.0)
    assert probe.additivity_defect == pytest.approx(0.0, abs=1e-12)


def test_bound_values():
    assert certified_gromov_bound(GO) == pytest.approx(0.25 * math.log(24))
    assert certified_gromov_bound(GO) == pytest.approx(0.794513, abs=1e-6)
    assert certified_gromov_bound(dhv(2.0)) == pytest.approx(0.916291, abs=1e-6)
    assert certified_gromov_bound(NA) == pytest.approx(2.197225, abs=1e-6)
    assert certified_gromov_bound(IBR) == pytest.approx(1.386294, abs=1e-6)
    assert prior_gromov_bound(GO) == pytest.approx(math.log(3))
    assert prior_gromov_bound(NA) == pytest.approx(math.log(15))
    assert prior_gromov_bound(IBR) is None
    assert multiplicative_factor(dhv(2.0)) == pytest.approx(6.25)
    with pytest.raises(UnsupportedFamilyError):
        multiplicative_factor(GO)


def test_dhv_bound_decreases_in_c():
    bounds = [certified_gromov_bound(dhv(c)) for c in (0.5, 1.0, 2.0, 5.0)]
    assert bounds == sorted(bounds, reverse=True)


def test_bound_table():
    table = bound_table(3.0)
    assert set(table) == {"go", "dhv", "na", "ibr"}
    assert table["dhv"]["c"] == 3.0
    assert table["na"]["dilatation"] == 3.0
    assert table["ibr"]["dilatation_coarse"] == 5.0
    assert table["go"]["gromov"] < table["go"]["prior_gromov"]


@pytest.mark.parametrize("name", SHIPPED)
@pytest.mark.parametrize("family", ALL, ids=lambda f: f.label)
def test_envelopes_hold_on_shipped_spaces(name, family, shipped_spaces):
    built = shipped_spaces[name]
    report = envelope_audit(family, built.space, built.weights)
    assert report.mode.is_exhaustive
    assert report.checked == built.space.n * (built.space.n - 1)
    assert report.violations == 0


@pytest.mark.parametrize("name", SHIPPED)
@pytest.mark.parametrize("family", METRICS, ids=lambda f: f.label)
def test_metricity_on_shipped_spaces(name, family, shipped_spaces):
    built = shipped_spaces[name]
    report = metric_axiom_audit(rho_oracle(family, built.space, built.weights))
    assert report.violations == 0


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("name", SHIPPED)
def test_ibr_and_mu_are_metrics_for_any_weights(name, seed, shipped_spaces):
    space = shipped_spaces[name].space
    weights = random_weights(space.n, seed=seed, low=0.01, high=10.0)
    assert metric_axiom_audit(rho_oracle(IBR, space, weights)).violations == 0
    assert metric_axiom_audit(functional_oracle(IBR, space, weights)).violations == 0


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("name", SHIPPED)
def test_ibr_envelopes_for_any_weights(name, seed, shipped_spaces):
    space = shipped_spaces[name].space
    weights = random_weights(space.n, seed=seed, low=0.01, high=10.0)
    assert envelope_audit(IBR, space, weights).violations == 0


def test_sampled_envelope_audit_on_a_single_point():
    space = SampledSpace.from_points([[0.0, 1.0]])
    report = envelope_audit(GO, space, WeightFunction.custom([1.0]), SearchMode.sampled(50, 3))
    assert (report.checked, report.violations) == (0, 0)


def test_dhv_below_two_fails_on_the_disk():
    points = [[-0.99, 0.0], [0.0, 0.0], [0.99, 0.0]]
    space = SampledSpace.from_points(points)
    weights = WeightFunction.from_obstacle(space, ObstacleSet((Sphere([0.0, 0.0], 1.0),)))
    report = metric_axiom_audit(rho_oracle(dhv(1.0), space, weights))
    assert report.violations > 0
    assert report.worst_defect == pytest.approx(2 * math.log(10.9) - math.log(199), abs=1e-9)
    assert sorted(report.witness) == [0, 1, 2]
    assert report.witness[1] == 1
    assert metric_axiom_audit(rho_oracle(dhv(2.0), space, weights)).violations == 0


def test_oracle_diagonal_is_zero(shipped_spaces):
    built = shipped_spaces["unitdisk.json"]
    table = rho_oracle(NA, built.space, built.weights).dense()
    assert np.all(np.diag(table) == 0)
    np.testing.assert_array_equal(table, table.T)
