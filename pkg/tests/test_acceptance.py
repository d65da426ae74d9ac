"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary) and then
asserts.  Run alone with:  pytest tests/test_acceptance.py -v
"""
import math
import time

import numpy as np
import pytest

from hypwalk import cli, delaunay, estimate, geom, oracle, walks
from hypwalk.walks import R_TREE, TessellationSpec

PD_LAMBDAS = (0.5, 0.2, 0.1, 0.05)


@pytest.fixture(scope="module")
def pd_table():
    """The low-intensity PD sweep, shared by the Furstenberg, asymptotics and entropy checks."""
    cfg = cli.RunConfig("pd", seed=0, lambdas=PD_LAMBDAS, steps=30, trials=100, past_steps=50).resolved()
    start = time.perf_counter()
    table = cli.cmd_pd(cfg)
    rows = [dict(zip(table.columns, row)) for row in table.rows]
    return {row["lambda"]: row for row in rows}, time.perf_counter() - start


def test_geometry_formulas(criterion):
    start = time.perf_counter()
    errors = {}
    for name, check in cli._selftest_checks():
        if name != "delaunay_oracle":
            err, tol = check()
            errors[name] = (err, tol)
    rng = np.random.default_rng(1)
    w = rng.uniform(-5, 5, 1000) + 1j * np.exp(rng.uniform(-3, 3, 1000))
    ellipse = 2 * np.log((np.abs(w - 1j) + np.abs(w + 1j)) / 2)
    errors["ellipse"] = (float(np.max(np.abs(geom.f_level(0.0, geom.from_halfplane(w)) - ellipse))), 1e-8)
    r = rng.uniform(0.05, 10, 1000)
    x_r = np.sqrt(np.expm1(r)) + 0j
    errors["cone_point"] = (float(np.max(np.abs(geom.halfplane_f_infinity(x_r) - r))), 1e-10)
    elapsed = time.perf_counter() - start
    worst = max(errors, key=lambda k: errors[k][0] / errors[k][1])
    ok = all(e <= t for e, t in errors.values()) and elapsed < 60
    criterion(1, ok, f"worst {worst} {errors[worst][0]:.2g} (tol {errors[worst][1]:.0e}), {elapsed:.1f}s")
    assert ok


def test_ball_intersection(criterion):
    rng = np.random.default_rng(2)
    violations, total = 0, 0
    for d in (8.0, 12.0, 20.0):
        m = 10_000
        g = geom.random_isometry(rng, max_shift=2.0)
        p, q = g(geom.exp_ray(0.0, d / 2)), g(geom.exp_ray(math.pi, d / 2))
        mid = g(0j)
        s = rng.normal(scale=d / 2, size=m)
        # centers on the bisector at signed distance s from the midpoint
        c = g(geom.exp_ray(np.where(s >= 0, math.pi / 2, -math.pi / 2), np.abs(s)))
        radius = geom.dist(c, p)
        inner = geom.ball_intersection_radius(p, q)
        assert inner == pytest.approx(d / 2 - 3, abs=1e-6)
        assert np.allclose(geom.dist(c, q), radius, atol=1e-6)
        violations += int(np.sum(geom.dist(c, mid) + inner > radius + 1e-9))
        total += m
    criterion(2, violations == 0, f"{violations} violations in {total} (p, q, disk) triples")
    assert violations == 0


def test_delaunay_oracle_equivalence(criterion):
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    agree = explained = 0
    for k in range(1000):
        z = oracle.random_points_in_ball(rng, 40, 6.0)
        graph = delaunay.graph_from_array(z, 0)
        rep = oracle.compare_with_graph(z, graph.edge_set(list(range(len(z)))), f"instance {k}")
        agree += rep.agree
        explained += rep.agree or rep.explained
    elapsed = time.perf_counter() - start
    ok = agree >= 999 and explained == 1000 and elapsed < 600
    criterion(3, ok, f"{agree}/1000 agree, {explained}/1000 agree or tie-explained, {elapsed:.0f}s")
    assert ok


def test_edge_probability_sandwich(criterion):
    details, ok = [], True
    for r in (1.0, 2.0, 4.0):
        rep = delaunay.edge_probability(1.0, r, 10_000, seed=4)
        lo, hi = rep.diagnostics["lower"], rep.diagnostics["upper"]
        inside = lo - rep.three_sigma <= rep.value <= hi + rep.three_sigma
        ok &= inside
        details.append(f"r={r:g}: {rep.value:.4f} in [{lo:.3g}, {hi:.3g}]")
    criterion(4, ok, "; ".join(details))
    assert ok


def test_degree_scaling(criterion):
    scaled = {}
    for lam in (1.0, 0.5, 0.25):
        rep = delaunay.root_degree_stats(lam, 1000, seed=5)
        scaled[lam] = lam * rep.value
    spread = max(scaled.values()) / min(scaled.values())
    ok = spread <= 1.3
    detail = ", ".join(f"lambda={k:g}: {v:.2f}" for k, v in scaled.items())
    criterion(5, ok, f"lambda * mean degree {detail}; max/min {spread:.2f} (needs <= 1.3)")
    assert ok


def test_right_angled_speed(criterion):
    rng = np.random.default_rng(6)
    details, ok = [], True
    for r in (0.5, 1.0, 2.0, 4.0):
        rep = estimate.speed_kingman(walks.right_angled_walks(r, 200, 2000, rng))
        bound = 0.5 * geom.log_cosh(r)
        ok &= rep.value >= bound - rep.three_sigma
        details.append(f"r={r:g}: {rep.value:.4f} >= {bound:.4f}")
    big = estimate.speed_kingman(walks.right_angled_walks(6.0, 200, 2000, rng))
    ok &= 0.45 <= big.value / 6 <= 0.55
    details.append(f"l_6/6={big.value / 6:.4f}")
    tree = estimate.speed_kingman(walks.right_angled_walks(R_TREE, 1000, 2000, rng), graph=True)
    ok &= abs(tree.value - 0.5) <= tree.three_sigma
    details.append(f"tree graph speed {tree.value:.4f} +- {tree.three_sigma:.4f}")
    criterion(6, ok, "; ".join(details))
    assert ok


def test_furstenberg_cross_validation(criterion, pd_table):
    rng = np.random.default_rng(7)
    batches = {"ra r=2": walks.right_angled_walks(2.0, 100, 2000, rng, past_steps=100),
               "pq (3,20)": walks.tessellation_walks(TessellationSpec(3, 20), 100, 2000, rng, past_steps=100)}
    details, ok = [], True
    for name, b in batches.items():
        k, f = estimate.speed_kingman(b), estimate.speed_furstenberg(b)
        z = abs(k.value - f.value) / math.hypot(k.std_error, f.std_error)
        ok &= z < 3
        details.append(f"{name}: {k.value:.3f} vs {f.value:.3f} ({z:.1f} sigma)")
    row = pd_table[0][0.2]
    z = abs(row["speed"] - row["furstenberg"]) / math.hypot(row["speed_3sigma"], row["furstenberg_3sigma"]) * 3
    ok &= z < 3
    details.append(f"PD lambda=0.2: {row['speed']:.3f} vs {row['furstenberg']:.3f} ({z:.1f} sigma)")
    criterion(7, ok, "; ".join(details))
    assert ok


def test_lyapunov(criterion):
    rng = np.random.default_rng(8)
    c, s = math.cos(0.7), math.sin(0.7)
    rot = [[[c, -s], [s, c]], [[0, 1], [-1, 0]]]
    chi_rot = estimate.lyapunov_direct(walks.matrix_walk(rot, [0.5, 0.5], 300, 500, rng)).value
    mats = [[[2, 1], [1, 1]], [[1, 1], [1, 2]]]
    tr = walks.matrix_walk(mats, [0.5, 0.5], 300, 2000, rng)
    direct = estimate.lyapunov_direct(tr)
    furst = estimate.lyapunov_furstenberg(mats, [0.5, 0.5], walks.stationary_directions(mats, [0.5, 0.5], 20_000, rng),
                                          rng)
    quot = estimate.quotient_speed(tr)
    ok = (abs(chi_rot) <= 0.01
          and abs(direct.value - furst.value) < 3 * math.hypot(direct.std_error, furst.std_error)
          and abs(quot.value - math.sqrt(2) * direct.value) <= quot.three_sigma)
    criterion(8, ok, f"rotations {chi_rot:.2g}; direct {direct.value:.5f} vs Furstenberg {furst.value:.5f}; "
                     f"quotient {quot.value:.5f} vs sqrt2*chi {math.sqrt(2) * direct.value:.5f}")
    assert ok


def test_pd_low_intensity_trends(criterion, pd_table):
    rows, elapsed = pd_table
    ratios = [rows[lam]["ratio"] for lam in PD_LAMBDAS]
    graph = [rows[lam]["graph_speed"] for lam in PD_LAMBDAS]
    ok = (all(a < b for a, b in zip(ratios, ratios[1:])) and ratios[-1] >= 0.5
          and all(a < b for a, b in zip(graph, graph[1:])) and elapsed < 45 * 60)
    criterion(9, ok, "ratio " + " < ".join(f"{x:.3f}" for x in ratios) + "; graph speed "
              + " < ".join(f"{x:.3f}" for x in graph) + f"; {elapsed / 60:.1f} min")
    assert ok


def test_entropy(criterion, pd_table):
    rng = np.random.default_rng(9)
    n1, n2 = 200, 400
    b = walks.right_angled_walks(R_TREE, n2, 2000, rng)
    tree = estimate.entropy_tree(b.d_graph[:, n1], b.d_graph[:, n2], n1, n2)
    ok = abs(tree.value - 0.5 * math.log(3)) <= tree.three_sigma
    details = [f"tree {tree.value:.4f} +- {tree.three_sigma:.4f} vs {0.5 * math.log(3):.4f}"]
    for lam, row in sorted(pd_table[0].items(), reverse=True):
        h, h3 = row["entropy"], row["entropy_3sigma"]
        upper = math.log(row["mean_degree"])
        lower = row["graph_speed"] ** 2 / 2
        ok &= h <= upper + h3 and h >= lower - h3 - row["graph_speed"] * row["graph_speed_3sigma"]
        details.append(f"lambda={lam:g}: {lower:.2f} <= h {h:.2f} <= {upper:.2f}")
    criterion(10, ok, "; ".join(details))
    assert ok


def test_dimension_drop(criterion):
    cfg = cli.RunConfig("dim", seed=0).resolved()
    table = cli.cmd_dim(cfg)
    row = dict(zip(table.columns, table.rows[0]))
    ok = (row["slope"] < 0.9 and row["slope"] <= row["entropy_over_speed"] + 0.1
          and abs(row["uniform_slope"] - 1) <= 0.05)
    criterion(11, ok, f"slope {row['slope']:.3f} +- {row['slope_3sigma']:.3f}, h/l {row['entropy_over_speed']:.3f}, "
                      f"uniform control {row['uniform_slope']:.3f}")
    assert ok


REPRO_RUNS = [
    ["pd", "--lambda", "0.5", "--steps", "5", "--trials", "3"],
    ["ra", "--r", "1,6", "--steps", "40", "--trials", "1200", "--past-steps", "50"],
    ["pq", "--q", "7,20", "--steps", "20", "--trials", "1200"],
    ["lyap", "--steps", "50", "--trials", "1100"],
    ["dim", "--q", "20", "--steps", "8", "--trials", "1500"],
    ["edgeprob", "--r", "2", "--trials", "1100"],
]


def test_reproducibility(criterion, tmp_path):
    env = tmp_path / "env.ini"
    env.write_text("entropy_envs = 3\n")
    same = []
    for args in REPRO_RUNS:
        csv = []
        for workers in (1, 8):
            out = tmp_path / f"{args[0]}-{workers}"
            cli.main(args + ["--config", str(env)] * (args[0] == "pd")
                     + ["--seed", "12", "--workers", str(workers), "--out", str(out), "--no-plot"])
            csv.append((next(out.iterdir()) / f"{args[0]}.csv").read_bytes())
        same.append(csv[0] == csv[1])
    ok = all(same)
    criterion(12, ok, ", ".join(f"{a[0]} {'identical' if s else 'DIFFERENT'}" for a, s in zip(REPRO_RUNS, same))
              + " (workers 1 vs 8)")
    assert ok
