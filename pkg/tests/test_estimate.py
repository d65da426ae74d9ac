import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypwalk import estimate as E
from hypwalk import geom, oracle, walks
from hypwalk.walks import R_TREE, TessellationSpec, TraceBatch

TEST_MATRICES = [[[2, 1], [1, 1]], [[1, 1], [1, 2]]]


def constant_batch(m=40, n=10):
    z = np.zeros((m, n + 1))
    return TraceBatch("const", z, z.copy(), np.full_like(z, np.nan), np.zeros((m, n)))


def test_report_round_trip():
    rep = E.EstimateReport(0.1 + 0.2, 1e-3, 500, "kingman", {"invalid": 3})
    back = E.EstimateReport.parse(rep.serialize())
    assert (back.value, back.std_error, back.n_samples, back.method) == (rep.value, 1e-3, 500, "kingman")
    assert back.diagnostics["invalid"] == "3"
    with pytest.raises(ValueError):
        E.EstimateReport(1.0, -1.0, 10, "x")


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=50))
@settings(max_examples=50)
def test_unweighted_mean_is_sample_mean(ys):
    mean, se = E.weighted_mean(ys)
    assert mean == pytest.approx(np.mean(ys), abs=1e-9)
    assert se == pytest.approx(np.std(ys, ddof=1) / math.sqrt(len(ys)), abs=1e-9)


def test_kingman_constant_sequence():
    rep = E.speed_kingman(constant_batch())
    assert rep.value == 0 and rep.std_error == 0


def test_kingman_refuses_few_traces():
    with pytest.raises(ValueError, match="at least 30"):
        E.speed_kingman(constant_batch(m=29))


def test_kingman_drops_invalid_traces():
    b = walks.right_angled_walks(1.0, 10, 50, np.random.default_rng(0))
    b.valid[:5] = False
    rep = E.speed_kingman(b)
    assert rep.n_samples == 45 and rep.diagnostics["invalid"] == 5


def test_furstenberg_refusals():
    with pytest.raises(ValueError, match="no past"):
        E.speed_furstenberg(walks.right_angled_walks(1.0, 5, 40, np.random.default_rng(0)))
    with pytest.raises(ValueError, match="50"):
        E.speed_furstenberg(walks.right_angled_walks(1.0, 5, 40, np.random.default_rng(0), past_steps=20))


def test_furstenberg_null_model():
    rng = np.random.default_rng(1)
    vals = []
    for _ in range(2000):
        pts = oracle.random_points_in_ball(rng, 52, 3.0)
        vals.append(E.furstenberg_from_points(pts[0], pts[1], pts[2:]))
    mean, se = E.weighted_mean(vals)
    assert abs(mean) <= 3 * se


@pytest.mark.parametrize("r", [1.0, 2.0, 4.0])
def test_furstenberg_matches_kingman(r):
    b = walks.right_angled_walks(r, 100, 2000, np.random.default_rng(2), past_steps=100)
    k, f = E.speed_kingman(b), E.speed_furstenberg(b)
    assert abs(k.value - f.value) < 3 * math.hypot(k.std_error, f.std_error)


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0, 4.0])
def test_right_angled_lower_bound(r):
    b = walks.right_angled_walks(r, 100, 1000, np.random.default_rng(3), past_steps=60)
    for rep in (E.speed_kingman(b), E.speed_furstenberg(b)):
        assert rep.value >= 0.5 * math.log(math.cosh(r)) - rep.three_sigma


# ---------------------------------------------------------------- entropy

def tree_sampler(degree=4):
    """Endpoints of simple random walk on the degree-regular tree, as reduced words."""
    def sample(rng, n, count):
        out = []
        for labels in rng.integers(degree, size=(count, n)):
            word = []
            for k in labels:
                if word and word[-1] == k:
                    word.pop()
                else:
                    word.append(int(k))
            out.append(tuple(word))
        return out
    return sample


def tree_neighbors(word, degree=4):
    return [word[:-1] if word and word[-1] == k else word + (k,) for k in range(degree)]


def test_deterministic_cycle_has_zero_entropy():
    def cycle(rng, n, count):
        return [n % 7] * count
    rep = E.entropy([cycle] * 3, n_pair=(5, 10), m_walks=100, m_fresh=50)
    assert rep.value == 0 and not rep.diagnostics["biased_high"]


def test_plugin_matches_exact_tree_entropy():
    exact = E.graph_entropies(tree_neighbors, (), 4)
    rep = E.entropy([tree_sampler()] * 20, n_pair=(2, 4), m_walks=20_000, m_fresh=2000, seed=4)
    assert not rep.diagnostics["biased_high"]
    assert rep.value == pytest.approx((exact[4] - exact[2]) / 2, abs=max(rep.three_sigma, 0.02))


def test_plugin_flags_poor_coverage():
    rep = E.entropy_plugin(tree_sampler(), 12, 2000, 500, np.random.default_rng(5))
    assert rep.diagnostics["biased_high"]


def test_depth_law_matches_graph_entropies():
    for n in range(7):
        law = E.regular_tree_depth_law(n, 4)
        assert law.sum() == pytest.approx(1.0, abs=1e-12)
        depths = np.arange(n + 1)
        lp = np.where(law > 0, E.regular_tree_log_prob(depths, n, 4), 0.0)
        assert -np.sum(law * lp) == pytest.approx(E.graph_entropies(tree_neighbors, (), n)[n], abs=1e-12)


def test_exact_kernel_tree_entropy():
    n1, n2 = 200, 400
    b = walks.right_angled_walks(R_TREE, n2, 2000, np.random.default_rng(6))
    rep = E.entropy_tree(b.d_graph[:, n1], b.d_graph[:, n2], n1, n2)
    assert abs(rep.value - 0.5 * math.log(3)) <= rep.three_sigma


def test_group_entropies_on_the_tree():
    h = E.group_entropies(walks.right_angled_steps(R_TREE), 6)
    assert np.allclose(h, E.graph_entropies(tree_neighbors, (), 6), atol=1e-9)


def test_group_entropies_on_triangle_tessellation():
    h = E.group_entropies(walks.tessellation_steps(TessellationSpec(3, 7)), 2)
    p = np.array([1 / 7] + [2 / 49] * 14 + [1 / 49] * 14)
    assert p.sum() == pytest.approx(1.0)
    assert h[1] == pytest.approx(math.log(7), abs=1e-12)
    assert h[2] == pytest.approx(-np.sum(p * np.log(p)), abs=1e-12)


def test_graph_entropies_on_a_cycle():
    h = E.graph_entropies(lambda v: [(v - 1) % 5, (v + 1) % 5], 0, 3)
    assert h[1] == pytest.approx(math.log(2))
    assert h[2] == pytest.approx(1.5 * math.log(2))


# ---------------------------------------------------------------- Lyapunov exponents

def test_rotation_only_lyapunov():
    c, s = math.cos(1.0), math.sin(1.0)
    mats = [[[c, -s], [s, c]], [[c, s], [-s, c]]]
    rng = np.random.default_rng(7)
    direct = E.lyapunov_direct(walks.matrix_walk(mats, [0.5, 0.5], 100, 100, rng))
    dirs = walks.stationary_directions(mats, [0.5, 0.5], 2000, rng, burn_in=100)
    furst = E.lyapunov_furstenberg(mats, [0.5, 0.5], dirs, rng)
    assert abs(direct.value) < 0.01 and abs(furst.value) < 0.01


def test_lyapunov_estimators_agree():
    rng = np.random.default_rng(8)
    tr = walks.matrix_walk(TEST_MATRICES, [0.5, 0.5], 300, 2000, rng)
    direct = E.lyapunov_direct(tr)
    dirs = walks.stationary_directions(TEST_MATRICES, [0.5, 0.5], 20_000, rng)
    furst = E.lyapunov_furstenberg(TEST_MATRICES, [0.5, 0.5], dirs, rng)
    assert abs(direct.value - furst.value) < 3 * math.hypot(direct.std_error, furst.std_error)
    quot = E.quotient_speed(tr)
    assert abs(quot.value - math.sqrt(2) * direct.value) <= quot.three_sigma


# ---------------------------------------------------------------- dimension

def test_correlation_integral_brute_force():
    rng = np.random.default_rng(9)
    theta = rng.uniform(0, 2 * math.pi, 300)
    scales = np.array([0.01, 0.1, 1.0])
    gaps = geom.angle_gap(theta[:, None], theta[None, :])[np.triu_indices(300, 1)]
    assert np.allclose(E.correlation_integral(theta, scales), [(gaps < r).mean() for r in scales])


def test_uniform_angles_have_dimension_one():
    rng = np.random.default_rng(10)
    sample = E.BoundarySample(rng.uniform(0, 2 * math.pi, 10_000), 1e-6)
    rep = E.dimension_correlation(sample, np.logspace(-3, -1, 10))
    assert abs(rep.value - 1) < 0.05


def test_atomic_sample_has_dimension_zero():
    sample = E.BoundarySample(np.full(1000, 2.0), 1e-6)
    assert abs(E.dimension_correlation(sample, np.logspace(-3, -1, 10)).value) < 1e-12


def test_dimension_refuses_scales_below_truncation():
    sample = E.BoundarySample(np.linspace(0, 6, 100), 1e-3)
    with pytest.raises(ValueError, match="admissible"):
        E.dimension_correlation(sample, np.array([1e-3, 5e-3, 0.05, 0.2]))


def test_boundary_angles_are_normalised():
    assert np.all(E.BoundarySample(np.array([-1.0, 7.0]), 0.0).angles < 2 * math.pi)


def test_proportion_error_at_zero_count():
    p, se = E.proportion(0, 10_000)
    assert p == 0 and se > 1e-4
    p, se = E.proportion(5000, 10_000)
    assert p == 0.5 and se == pytest.approx(0.005, rel=1e-3)
    assert all(math.isnan(v) for v in E.proportion(0, 0))
