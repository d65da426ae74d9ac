import io
import math

import numpy as np
import pytest

from hypwalk import delaunay as D
from hypwalk import geom, oracle
from hypwalk.field import ORIGIN, LazyField, points_from_array


def edges_of(z, root=0, **kw):
    return D.graph_from_array(z, root, **kw).edge_set(list(range(len(z))))


def test_two_points_share_an_edge():
    assert edges_of(np.array([0j, 0.3 + 0.1j])) == {(0, 1)}


def test_triangle_is_complete():
    z = np.array([0j, 0.4 + 0j, 0.1 + 0.3j])
    assert edges_of(z) == {(0, 1), (0, 2), (1, 2)}


def test_hexagon_around_root():
    z = np.concatenate([[0j], geom.exp_ray(np.arange(6) * math.pi / 3, 1.0)])
    graph = D.graph_from_array(z, 0)
    assert sorted(graph.neighbors(0).tolist()) == [1, 2, 3, 4, 5, 6]


def test_square_keeps_one_diagonal():
    z = geom.exp_ray(np.arange(4) * math.pi / 2 + 0.3, 1.0)
    graph = D.graph_from_array(z, 0)
    edges = graph.edge_set(list(range(4)))
    outer = {(0, 1), (1, 2), (2, 3), (0, 3)}
    assert outer <= edges
    diagonals = edges - outer
    assert len(diagonals) == 1
    assert graph.degenerate
    assert diagonals == oracle.naive_delaunay(z) - outer


def test_incircle_tie_rule():
    pts = np.array([1 + 0j, 1j, -1 + 0j, -1j])
    inside, tie = D.incircle(pts, 0, 1, 2, 3)
    assert tie


@pytest.mark.parametrize("seed", range(20))
def test_bowyer_watson_matches_qhull(seed):
    rng = np.random.default_rng(seed)
    z = oracle.random_points_in_ball(rng, 50, 4.0)
    bw = D.build_local(points_from_array(z, 0), method="bw").edge_set()
    qh = D.build_local(points_from_array(z, 0), method="qhull").edge_set()
    assert bw == qh


@pytest.mark.parametrize("seed", range(10))
def test_build_local_matches_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    z = oracle.random_points_in_ball(rng, 40, 6.0)
    assert edges_of(z) == oracle.naive_delaunay(z)


def test_far_points_are_not_neighbours():
    # two clusters far apart in the hyperbolic metric are Euclidean neighbours only
    z = np.array([0j, geom.exp_ray(0.0, 9.0), geom.exp_ray(0.05, 9.0), geom.exp_ray(1.0, 1.0),
                  geom.exp_ray(-1.0, 1.0), geom.exp_ray(3.0, 1.0)])
    assert edges_of(z) == oracle.naive_delaunay(z)


def test_certified_root_is_stable_under_larger_windows():
    """Rebuilding with the certified window plus 5 never changes the root's neighbours."""
    for seed in range(100):
        field = LazyField(seed)
        graph, radius = D.certified_graph(field, ORIGIN, 1.0)
        bigger = D.build_local(field.query_disk(ORIGIN, radius + 5.0, 1.0), radius + 5.0)
        ids = {graph.points.ids[j] for j in graph.neighbors(graph.root)}
        assert ids == {bigger.points.ids[j] for j in bigger.neighbors(bigger.root)}


def test_lonely_root_is_uncertified():
    graph = D.build_local(points_from_array(np.array([0j, 0.9 + 0j, -0.9j]), 0), window=3.0)
    assert not D.certify_root(graph).certified


def test_certified_graph_from_field():
    for seed in range(30):
        graph, radius = D.certified_graph(LazyField.for_intensity(seed, 0.2), ORIGIN, 0.2)
        assert D.certify_root(graph).certified
        assert radius <= D.WindowConfig().cap


def test_exact_mean_degree():
    """Gauss-Bonnet: the Delaunay graph of P_lambda + {o} has E deg(o) = 6 + 3 / (pi lambda)."""
    rep = D.root_degree_stats(1.0, 1500, seed=1)
    assert abs(rep.value - (6 + 3 / math.pi)) <= rep.three_sigma
    assert rep.diagnostics["invalid"] == 0


def test_degenerate_window_is_flagged():
    rep = D.root_degree_stats(0.05, 5, window=D.WindowConfig(cap=6))
    assert rep.diagnostics["flagged"]


def test_edge_probability_small_r():
    rep = D.edge_probability(1.0, 0.05, 200)
    assert rep.value == 1.0


def test_edge_probability_bounds_reported():
    rep = D.edge_probability(1.0, 2.0, 400, seed=3)
    lo, hi = rep.diagnostics["lower"], rep.diagnostics["upper"]
    assert lo - rep.three_sigma <= rep.value <= hi + rep.three_sigma


def test_export_round_trip():
    rng = np.random.default_rng(5)
    z = oracle.random_points_in_ball(rng, 30, 3.0)
    graph = D.graph_from_array(z, 0)
    buf = io.StringIO()
    graph.export(buf)
    buf.seek(0)
    z2, edges = oracle.read_graph_export(buf)
    assert np.array_equal(z2, z)
    assert edges == graph.edge_set(list(range(len(z))))
