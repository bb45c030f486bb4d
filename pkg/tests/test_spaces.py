import json

import networkx as nx
import numpy as np
import pytest

from conftest import SHIPPED, SPECS_DIR
from hypmetrics.services.errors import (
    ConnectivityError,
    ConstructionError,
    DomainError,
    SpecParseError,
    WeightError,
)
from hypmetrics.services.metric_core import lipschitz_audit, metric_axiom_audit
from hypmetrics.services.spaces import (
    build,
    collinear_halfspace_triple,
    diameter_triple,
    load_space_spec,
    parse_json,
    parse_space_spec,
)

PATH_GRAPH = {
    "kind": "graph",
    "vertices": ["a", "b", "c"],
    "edges": [{"u": "a", "v": "b"}, {"u": "b", "v": "c"}],
    "obstacle_vertices": ["a"],
}


def test_halfplane_weight_is_the_height():
    built = build({"kind": "halfplane_lattice", "columns": 5, "rows": 5, "spacing": 0.1})
    pts = built.space.points
    k = int(np.flatnonzero(np.isclose(pts[:, 0], 0.3) & np.isclose(pts[:, 1], 0.5))[0])
    assert built.weights.values[k] == pytest.approx(0.5)
    assert built.weights.lipschitz_certified


def test_punctured_weight_is_the_norm():
    built = build({
        "kind": "euclidean_cloud",
        "points": [[3.0, 4.0], [1.0, 0.0]],
        "obstacle": [{"type": "point", "at": [0.0, 0.0]}],
    })
    assert built.weights.values[0] == pytest.approx(5.0)


def test_path_graph():
    built = build(PATH_GRAPH)
    assert built.space.labels == ("b", "c")
    assert built.space.distance(0, 1) == 1.0
    assert built.weights.values.tolist() == [1.0, 2.0]
    assert built.obstacle.is_graph


def test_point_inside_obstacle_is_named():
    spec = {
        "kind": "euclidean_cloud",
        "points": [[0.1, 0.0], [2.0, 0.0]],
        "obstacle": [{"type": "disc", "center": [0.0, 0.0], "radius": 0.5}],
    }
    with pytest.raises(ConstructionError, match="p0"):
        build(spec)


def test_duplicate_points_are_rejected():
    spec = {
        "kind": "euclidean_cloud",
        "points": [[1.0, 1.0], [2.0, 0.0], [1.0, 1.0]],
        "obstacle": [{"type": "point", "at": [0.0, 0.0]}],
    }
    with pytest.raises(ConstructionError, match="more than once"):
        build(spec)


def test_disconnected_graph():
    spec = dict(PATH_GRAPH, vertices=["a", "b", "c", "d"])
    with pytest.raises(ConnectivityError):
        build(spec)


def test_unknown_edge_endpoint():
    spec = dict(PATH_GRAPH, edges=[{"u": "a", "v": "b"}, {"u": "b", "v": "z"}])
    with pytest.raises(ConstructionError, match="'z'"):
        build(spec)


def test_nonpositive_custom_weight():
    spec = {"kind": "halfplane_lattice", "columns": 1, "rows": 2, "weight_source": {"custom": [1.0, -1.0]}}
    with pytest.raises(WeightError):
        build(spec)


def test_custom_weight_table_length():
    spec = {"kind": "halfplane_lattice", "columns": 1, "rows": 2, "weight_source": {"custom": [1.0]}}
    with pytest.raises(WeightError):
        build(spec)


def test_constant_custom_weights_get_certified():
    spec = {"kind": "halfplane_lattice", "columns": 2, "rows": 2, "weight_source": {"custom": [1.0] * 4}}
    built = build(spec)
    assert built.weights.lipschitz_certified
    assert built.weights.source == "custom_table"


def test_random_weights_are_seeded_and_uncertified():
    first = build(load_space_spec(SPECS_DIR / "halfplane_random_weights.json"))
    again = build(load_space_spec(SPECS_DIR / "halfplane_random_weights.json"))
    np.testing.assert_array_equal(first.weights.values, again.weights.values)
    assert np.all((first.weights.values >= 0.05) & (first.weights.values <= 5.0))
    assert not first.weights.lipschitz_certified
    assert first.weights.provenance["random"]["seed"] == 3


def test_random_cloud_keeps_clearance():
    built = build(load_space_spec(SPECS_DIR / "cloud_disc.json"))
    assert built.space.n == 30
    clearance = 1e-3 * np.hypot(4.0, 4.0)
    assert np.all(built.obstacle.distances(built.space.points) >= clearance)
    assert np.all(np.abs(built.space.points) <= 2.0)


def test_unit_disk_includes_center():
    built = build({"kind": "unit_disk", "radii": [0.5], "angles": 4})
    assert built.space.n == 5
    assert built.weights.values[0] == pytest.approx(1.0)
    np.testing.assert_allclose(built.weights.values[1:], 0.5)


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_spaces_pass_base_audits(name, shipped_spaces):
    built = shipped_spaces[name]
    metric = metric_axiom_audit(built.space)
    assert metric.mode.is_exhaustive
    assert metric.violations == 0
    lip = lipschitz_audit(built.space, built.weights)
    assert lip.mode.is_exhaustive
    assert lip.violations == 0


def test_graph_distances_match_path_enumeration(shipped_spaces):
    spec = json.loads((SPECS_DIR / "graph.json").read_text())
    g = nx.Graph()
    for e in spec["edges"]:
        g.add_edge(e["u"], e["v"], weight=e["weight"])
    space = shipped_spaces["graph.json"].space
    for i, a in enumerate(space.labels):
        for j, b in enumerate(space.labels):
            if i == j:
                assert space.distance(i, j) == 0.0
                continue
            lengths = [nx.path_weight(g, p, weight="weight") for p in nx.all_simple_paths(g, a, b)]
            assert space.distance(i, j) == pytest.approx(min(lengths))


def test_malformed_json_reports_the_line():
    with pytest.raises(SpecParseError) as err:
        parse_json('{\n  "kind": "graph",\n  oops\n}')
    assert err.value.line == 3


@pytest.mark.parametrize("text", ['{"radius": NaN}', '{"radius": 1e999}', '{"radius": -Infinity}'])
def test_non_finite_numbers_are_rejected(text):
    with pytest.raises(SpecParseError):
        parse_json(text)


def test_invalid_field_is_named():
    with pytest.raises(SpecParseError) as err:
        parse_space_spec({"kind": "unit_disk", "radii": [1.5]})
    assert "radii" in err.value.field


def test_unknown_kind_and_extra_fields():
    with pytest.raises(SpecParseError):
        parse_space_spec({"kind": "torus"})
    with pytest.raises(SpecParseError):
        parse_space_spec({"kind": "halfplane_lattice", "colums": 3})


def test_missing_spec_file(tmp_path):
    with pytest.raises(OSError):
        load_space_spec(tmp_path / "nope.json")


def test_collinear_triple():
    pts = collinear_halfspace_triple((4, 1, 2))
    np.testing.assert_array_equal(pts, [[0, 4], [0, 1], [0, 2]])
    pts = collinear_halfspace_triple((3, 1, 2), shared_horizontal=(1, 1))
    np.testing.assert_array_equal(pts, [[1, 1, 3], [1, 1, 1], [1, 1, 2]])


@pytest.mark.parametrize("heights", [(1, 1, 1), (0, 1, 2), (-1, 1, 2), (1, 2)])
def test_collinear_triple_rejects(heights):
    with pytest.raises(DomainError):
        collinear_halfspace_triple(heights)


def test_diameter_triple():
    np.testing.assert_array_equal(diameter_triple(0.5), [[-0.5, 0], [0, 0], [0.5, 0]])
    with pytest.raises(DomainError):
        diameter_triple(1.0)
