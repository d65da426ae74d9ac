"""Experiment harness: seeded runs, a run registry, CSV series and SVG plots.

    python -m hypwalk <command> [--seed N] [--config FILE] [--out DIR] [--workers K] ...

Commands: selftest, pd, ra, pq, lyap, dim, edgeprob.  Exit status is 0 when
every row meets its contract, 1 on a contract failure, 2 on a usage error.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__, delaunay, estimate, geom, oracle, walks
from .field import LazyField

CHUNK = 500
DEFAULTS = {
    "pd": {"lambdas": (0.5, 0.2, 0.1, 0.05), "steps": 30, "trials": 100},
    "ra": {"r": (0.5, 1.0, 2.0, 4.0, 6.0, walks.R_TREE), "steps": 1000, "trials": 2000},
    "pq": {"q": (10, 20, 50), "steps": 30, "trials": 2000},
    "lyap": {"steps": 300, "trials": 2000},
    "dim": {"q": (50,), "steps": 12, "trials": 10_000},
    "edgeprob": {"lambdas": (1.0,), "r": (1.0, 2.0, 4.0), "trials": 10_000},
    "selftest": {},
}


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "selftest"
    seed: int = 0
    steps: int = 0
    trials: int = 0
    workers: int = 1
    out: str = "runs"
    lambdas: tuple = ()
    r: tuple = ()
    p: int = 3
    q: tuple = ()
    past_steps: int = 0
    entropy_envs: int = 20
    samples: int = 20_000
    matrices: str = "2 1 1 1; 1 1 1 2"
    probs: str = "0.5 0.5"
    plot: bool = True

    def resolved(self) -> "RunConfig":
        base = DEFAULTS[self.command]
        out = RunConfig(**asdict(self))
        for key, value in base.items():
            if not getattr(out, key):
                setattr(out, key, value)
        return out


def _coerce(name: str, raw):
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    if kind == "tuple":
        if isinstance(raw, str):
            raw = [x for x in raw.replace(",", " ").split() if x]
        return tuple(float(x) for x in raw) if name != "q" else tuple(int(x) for x in raw)
    if kind == "int":
        return int(raw)
    if kind == "bool":
        return raw if isinstance(raw, bool) else str(raw).lower() in ("1", "true", "yes")
    return str(raw)


def read_config(path) -> dict:
    """Flat `key = value` file; lists are comma or space separated."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    text = Path(path).read_text()
    parser.read_string("[run]\n" + text)
    known = {f.name for f in fields(RunConfig)}
    out = {}
    for key, value in parser["run"].items():
        if key not in known:
            raise UsageError(f"unknown config key {key!r}")
        out[key] = _coerce(key, value)
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hypwalk", description="Random walks on hyperbolic Delaunay graphs and groups.")
    ap.add_argument("command", choices=sorted(DEFAULTS))
    ap.add_argument("--seed", type=int)
    ap.add_argument("--config")
    ap.add_argument("--out")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--lambda", dest="lambdas")
    ap.add_argument("--r")
    ap.add_argument("--p", type=int)
    ap.add_argument("--q")
    ap.add_argument("--steps", type=int)
    ap.add_argument("--trials", type=int)
    ap.add_argument("--past-steps", dest="past_steps", type=int)
    ap.add_argument("--spec", help="matrix spec file: one `prob a b c d` line per matrix")
    ap.add_argument("--no-plot", dest="plot", action="store_false", default=None)
    return ap


def config_from_args(argv) -> RunConfig:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        raise UsageError("bad arguments") from exc
    values = {"command": args.command}
    if args.config:
        values.update(read_config(args.config))
    for key in ("seed", "out", "workers", "lambdas", "r", "p", "q", "steps", "trials", "past_steps", "plot"):
        raw = getattr(args, key)
        if raw is not None:
            values[key] = _coerce(key, raw)
    if args.spec:
        values.update(read_matrix_spec(args.spec))
    cfg = RunConfig(**values).resolved()
    validate(cfg)
    return cfg


def read_matrix_spec(path) -> dict:
    mats, probs = [], []
    for line in Path(path).read_text().splitlines():
        line = line.split("#")[0].strip()
        if line:
            prob, *entries = line.split()
            probs.append(prob)
            mats.append(" ".join(entries))
    return {"matrices": "; ".join(mats), "probs": " ".join(probs)}


def parse_matrices(cfg: RunConfig):
    mats = [np.array([float(x) for x in m.split()]).reshape(2, 2) for m in cfg.matrices.split(";")]
    probs = [float(x) for x in cfg.probs.split()]
    if len(mats) != len(probs):
        raise UsageError("one probability per matrix")
    return mats, probs


def validate(cfg: RunConfig) -> None:
    if cfg.workers < 1 or cfg.steps < 0 or cfg.trials < 0:
        raise UsageError("workers must be positive, steps and trials non-negative")
    if cfg.command == "pd" and any(not 0.05 <= lam <= 1.0 for lam in cfg.lambdas):
        raise UsageError("pd needs every lambda in [0.05, 1]")
    if cfg.command == "edgeprob" and any(not 0 < lam <= 1.0 for lam in cfg.lambdas):
        raise UsageError("edgeprob needs lambda in (0, 1]")
    if cfg.command in ("ra", "edgeprob") and any(r <= 0 for r in cfg.r):
        raise UsageError("r grid must be positive")
    if cfg.command in ("pq", "dim"):
        for q in cfg.q:
            try:
                walks.TessellationSpec(cfg.p, q)
            except ValueError as exc:
                raise UsageError(str(exc)) from exc
    if cfg.command == "lyap":
        try:
            walks.check_unimodular(*parse_matrices(cfg))
        except ValueError as exc:
            raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------- seeding and fan-out

def _seq(*key) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(k) for k in key])


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(_seq(*key))


def _field_seed(*key) -> int:
    return int(_seq(*key).generate_state(1, np.uint64)[0] >> np.uint64(1))


def fan_out(func, tasks, workers: int):
    """Ordered map; results never depend on the worker count."""
    if workers <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, tasks))


def _chunks(total: int):
    return [min(CHUNK, total - k) for k in range(0, total, CHUNK)]


def _ratio(a: float, b: float) -> float:
    return a / b if b else math.nan


def _estimate(func, *args, **kw) -> estimate.EstimateReport:
    """Run an estimator; a refusal becomes a NaN row entry, which fails the row's contract."""
    try:
        return func(*args, **kw)
    except ValueError as exc:
        return estimate.EstimateReport(math.nan, math.nan, 0, "refused", {"reason": str(exc)})


# ---------------------------------------------------------------- tasks (module level, picklable)

def _pd_trial(task):
    seed, gi, trial, lam, steps, past = task
    field = LazyField.for_intensity(_field_seed(seed, gi, trial, 0), lam)
    return walks.pd_walk(field, lam, steps, _rng(seed, gi, trial, 1), past_steps=past)


def _pd_entropy(task):
    seed, gi, env, lam = task
    field = LazyField.for_intensity(_field_seed(seed, gi, env, 0), lam)
    try:
        h, deg = walks.pd_exact_entropies(field, lam, 3)
    except delaunay.CertificationError:
        return None
    return float(h[3] - h[2]), deg


def _group_chunk(task):
    kind, param, seed, gi, ci, size, steps, past = task
    rng = _rng(seed, gi, ci)
    if kind == "ra":
        return walks.right_angled_walks(param, steps, size, rng, past_steps=past)
    return walks.tessellation_walks(walks.TessellationSpec(*param), steps, size, rng, past_steps=past)


def _edge_chunk(task):
    seed, gi, ci, size, lam, r = task
    hits = fails = 0
    for k in range(size):
        field = LazyField.for_intensity(_field_seed(seed, gi, ci, k), lam)
        try:
            hits += delaunay.planted_edge(field, lam, r)[0]
        except delaunay.CertificationError:
            fails += 1
    return hits, fails


def _lyap_chunk(task):
    mats, probs, seed, ci, size, steps = task
    return walks.matrix_walk(mats, probs, steps, size, _rng(seed, 0, ci))


# ---------------------------------------------------------------- commands

@dataclass
class Table:
    name: str
    columns: list
    rows: list
    plot_x: str | None = None
    plot_y: tuple = ()
    passed: bool = True


def _group_batch(kind, param, cfg, gi, past):
    tasks = [(kind, param, cfg.seed, gi, ci, size, cfg.steps, past) for ci, size in enumerate(_chunks(cfg.trials))]
    return walks.TraceBatch.stack(fan_out(_group_chunk, tasks, cfg.workers))


def cmd_pd(cfg: RunConfig) -> Table:
    cols = ["lambda", "n", "speed", "speed_3sigma", "graph_speed", "graph_speed_3sigma", "entropy",
            "entropy_3sigma", "mean_degree", "ratio", "ratio_3sigma", "entropy_over_speed",
            "furstenberg", "furstenberg_3sigma", "fail_rate", "flagged", "ratio_increasing",
            "graph_speed_increasing", "pass"]
    rows = []
    prev_ratio = prev_graph = -math.inf
    ok_all = True
    for gi, lam in sorted(enumerate(cfg.lambdas), key=lambda x: -x[1]):
        tasks = [(cfg.seed, gi, k, lam, cfg.steps, cfg.past_steps) for k in range(cfg.trials)]
        batch = walks.TraceBatch.stack(fan_out(_pd_trial, tasks, cfg.workers))
        fail_rate = float(np.mean(~batch.valid))
        ell = _estimate(estimate.speed_kingman, batch)
        ell_g = _estimate(estimate.speed_kingman, batch, graph=True)
        env = [x for x in fan_out(_pd_entropy, [(cfg.seed, gi, k, lam) for k in range(cfg.entropy_envs)],
                                  cfg.workers) if x is not None]
        h_vals, degs = np.array([e[0] for e in env]), np.array([e[1] for e in env], float)
        h = (estimate.entropy_from_increments(h_vals, degs / degs.mean()) if len(env) >= 2
             else estimate.EstimateReport(math.nan, math.nan, len(env), "refused"))
        mean_deg = float(np.mean(batch.extras["degree0"]))
        scale = 2.0 * math.log(1.0 / lam)
        ratio = _ratio(ell.value, scale)
        furst = _estimate(estimate.speed_furstenberg, batch) if cfg.past_steps >= 50 else None
        ratio_up = ratio > prev_ratio
        graph_up = ell_g.value > prev_graph
        ok = (fail_rate <= 0.01 and ratio_up and graph_up
              and h.value <= math.log(mean_deg) + h.three_sigma
              and h.value >= ell_g.value ** 2 / 2 - h.three_sigma - ell_g.value * ell_g.three_sigma)
        if furst is not None:
            ok &= abs(furst.value - ell.value) <= 3 * math.hypot(furst.std_error, ell.std_error)
        ok_all &= ok
        rows.append([lam, ell.n_samples, ell.value, ell.three_sigma, ell_g.value, ell_g.three_sigma, h.value,
                     h.three_sigma, mean_deg, ratio, _ratio(ell.three_sigma, scale), _ratio(h.value, ell.value),
                     furst.value if furst else math.nan, furst.three_sigma if furst else math.nan,
                     fail_rate, int(fail_rate > 0.01), int(ratio_up), int(graph_up), int(ok)])
        prev_ratio, prev_graph = ratio, ell_g.value
    for row in rows:
        row.insert(1, math.log(1.0 / row[0]))
    cols.insert(1, "log_inv_lambda")
    return Table("pd", cols, rows, "log_inv_lambda", ("ratio", "graph_speed"), ok_all)


def cmd_ra(cfg: RunConfig) -> Table:
    cols = ["r", "n", "speed", "speed_3sigma", "bound", "speed_over_r", "graph_speed", "graph_speed_3sigma",
            "furstenberg", "furstenberg_3sigma", "pass"]
    rows, ok_all = [], True
    for gi, r in enumerate(cfg.r):
        batch = _group_batch("ra", r, cfg, gi, cfg.past_steps)
        ell = _estimate(estimate.speed_kingman, batch)
        ell_g = _estimate(estimate.speed_kingman, batch, graph=True)
        bound = 0.5 * geom.log_cosh(r)
        ok = ell.value >= bound - ell.three_sigma
        if r >= 6:
            ok &= 0.45 <= ell.value / r <= 0.55
        if abs(r - walks.R_TREE) < 1e-9:
            ok &= abs(ell_g.value - 0.5) <= ell_g.three_sigma
        furst = _estimate(estimate.speed_furstenberg, batch) if cfg.past_steps >= 50 else None
        if furst is not None:
            ok &= abs(furst.value - ell.value) <= 3 * math.hypot(furst.std_error, ell.std_error)
        ok_all &= bool(ok)
        rows.append([r, ell.n_samples, ell.value, ell.three_sigma, bound, ell.value / r, ell_g.value,
                     ell_g.three_sigma, furst.value if furst else math.nan,
                     furst.three_sigma if furst else math.nan, int(ok)])
    return Table("ra", cols, rows, "r", ("speed", "bound"), ok_all)


def cmd_pq(cfg: RunConfig) -> Table:
    cols = ["p", "q", "n", "side", "speed", "speed_3sigma", "ratio", "ratio_3sigma", "furstenberg",
            "furstenberg_3sigma", "entropy", "entropy_over_speed", "in_window", "pass"]
    rows, ok_all = [], True
    for gi, q in enumerate(cfg.q):
        spec = walks.TessellationSpec(cfg.p, q)
        batch = _group_batch("pq", (cfg.p, q), cfg, gi, cfg.past_steps)
        ell = _estimate(estimate.speed_kingman, batch)
        scale = 2.0 * math.log(q)
        h = estimate.group_entropies(walks.tessellation_steps(spec), 3)
        h3 = float(h[3] - h[2])
        in_window = 0.75 <= ell.value / scale <= 1.05
        furst = _estimate(estimate.speed_furstenberg, batch) if cfg.past_steps >= 50 else None
        ok = True
        if furst is not None:
            ok = abs(furst.value - ell.value) <= 3 * math.hypot(furst.std_error, ell.std_error)
        if q == max(cfg.q):
            ok &= in_window
        ok_all &= bool(ok)
        rows.append([cfg.p, q, ell.n_samples, spec.side, ell.value, ell.three_sigma, ell.value / scale,
                     ell.three_sigma / scale, furst.value if furst else math.nan,
                     furst.three_sigma if furst else math.nan, h3, _ratio(h3, ell.value), int(in_window), int(ok)])
    return Table("pq", cols, rows, "q", ("ratio",), ok_all)


def cmd_lyap(cfg: RunConfig) -> Table:
    mats, probs = parse_matrices(cfg)
    tasks = [(mats, probs, cfg.seed, ci, size, cfg.steps) for ci, size in enumerate(_chunks(cfg.trials))]
    traces = fan_out(_lyap_chunk, tasks, cfg.workers)
    log_norm = np.concatenate([t.log_norm for t in traces])
    direct = estimate.weighted_mean(log_norm[:, -1] / cfg.steps)
    quotient = estimate.weighted_mean(math.sqrt(2.0) * log_norm[:, -1] / cfg.steps)
    dirs = walks.stationary_directions(mats, probs, cfg.samples, _rng(cfg.seed, 1, 0))
    furst = estimate.lyapunov_furstenberg(mats, probs, dirs, _rng(cfg.seed, 2, 0))
    agree = abs(direct[0] - furst.value) <= 3 * math.hypot(direct[1], furst.std_error)
    ok = agree and abs(quotient[0] - math.sqrt(2.0) * direct[0]) <= 3 * quotient[1] + 1e-12
    row = [cfg.trials, cfg.steps, direct[0], 3 * direct[1], furst.value, furst.three_sigma, quotient[0],
           3 * quotient[1], math.sqrt(2.0) * direct[0], int(ok)]
    cols = ["walks", "n", "chi_direct", "chi_direct_3sigma", "chi_furstenberg", "chi_furstenberg_3sigma",
            "quotient_speed", "quotient_speed_3sigma", "sqrt2_chi", "pass"]
    return Table("lyap", cols, [row], passed=bool(ok))


def boundary_sample(p: int, q: int, steps: int, samples: int, seed: int, workers: int = 1, gi: int = 0):
    cfg = RunConfig("dim", seed=seed, steps=steps, trials=samples, workers=workers)
    batch = _group_batch("pq", (p, q), cfg, gi, 0)
    ell = estimate.speed_kingman(batch)
    trunc = math.exp(-0.5 * ell.value * steps)
    return estimate.BoundarySample(batch.theta[:, -1], trunc), ell


def dimension_scales(truncation: float, count: int = 10):
    lo = max(math.log10(10.0 * truncation), -3.0)
    return np.logspace(lo, -1.0, count)


def cmd_dim(cfg: RunConfig) -> Table:
    cols = ["p", "q", "samples", "slope", "slope_3sigma", "residual_rms", "entropy_over_speed", "speed",
            "uniform_slope", "truncation", "pass"]
    rows, ok_all = [], True
    for gi, q in enumerate(cfg.q):
        sample, ell = boundary_sample(cfg.p, q, cfg.steps, cfg.trials, cfg.seed, cfg.workers, gi)
        h = estimate.group_entropies(walks.tessellation_steps(walks.TessellationSpec(cfg.p, q)), 3)
        ratio = float(h[3] - h[2]) / ell.value
        scales = dimension_scales(sample.truncation)
        dim = estimate.dimension_correlation(sample, scales, companion=ratio)
        uniform = estimate.BoundarySample(_rng(cfg.seed, gi, 99).uniform(0, geom.TWO_PI, cfg.trials), 0.0)
        u_dim = estimate.dimension_correlation(uniform, scales)
        ok = dim.value < 0.9 and dim.value <= ratio + 0.1 and abs(u_dim.value - 1.0) <= 0.05
        ok_all &= ok
        rows.append([cfg.p, q, len(sample.angles), dim.value, dim.three_sigma, dim.diagnostics["residual_rms"],
                     ratio, ell.value, u_dim.value, sample.truncation, int(ok)])
    return Table("dim", cols, rows, "q", ("slope", "entropy_over_speed"), ok_all)


def edge_bounds(lam: float, r: float) -> tuple[float, float]:
    return math.exp(-lam * geom.volume(r / 2.0)), math.exp(-lam * geom.volume(r / 2.0 - geom.BALL_SLACK))


def cmd_edgeprob(cfg: RunConfig) -> Table:
    cols = ["lambda", "r", "n", "estimate", "estimate_3sigma", "lower", "upper", "failures", "pass"]
    rows, ok_all = [], True
    gi = 0
    for lam in cfg.lambdas:
        for r in cfg.r:
            tasks = [(cfg.seed, gi, ci, size, lam, r) for ci, size in enumerate(_chunks(cfg.trials))]
            out = fan_out(_edge_chunk, tasks, cfg.workers)
            hits, fails = sum(o[0] for o in out), sum(o[1] for o in out)
            n = cfg.trials - fails
            p_hat, se = estimate.proportion(hits, n)
            sigma3 = 3 * se
            lower, upper = edge_bounds(lam, r)
            ok = lower - sigma3 <= p_hat <= upper + sigma3
            ok_all &= ok
            rows.append([lam, r, n, p_hat, sigma3, lower, upper, fails, int(ok)])
            gi += 1
    return Table("edgeprob", cols, rows, "r", ("estimate", "lower", "upper"), ok_all)


# ---------------------------------------------------------------- selftest

def _selftest_checks():
    rng = np.random.default_rng(12345)
    theta = rng.uniform(0, geom.TWO_PI, 50)
    z = oracle.random_points_in_ball(rng, 50, 3.0)

    def busemann_limit():
        ref = oracle.horofunction_limit(theta, z, 60.0)
        return float(np.max(np.abs(geom.busemann(theta, z) - ref))), 1e-9

    def busemann_along_ray():
        t = rng.uniform(0, 10, 50)
        return float(np.max(np.abs(geom.busemann(theta, geom.exp_ray(theta, t)) - t))), 1e-9

    def level_function():
        w = geom.to_halfplane(z)
        f_inf = geom.halfplane_f_infinity(w)
        # infinity in the half-plane is the disk boundary point 1 (theta = 0)
        return float(np.max(np.abs(geom.f_level(0.0, z) - f_inf))), 1e-9

    def cone():
        r = rng.uniform(0.1, 8, 50)
        x_r = np.sqrt(np.expm1(r)) + 0j
        err = np.max(np.abs(geom.halfplane_f_infinity(x_r) - r))
        err = max(err, np.max(np.abs(np.abs(np.angle(geom.from_halfplane(x_r))) - geom.cone_angle(r))))
        # points above level r sit inside the cone about the direction 0
        w = oracle.random_points_in_ball(rng, 2000, 6.0)
        above = geom.f_level(0.0, w) > 2.0
        outside = np.abs(geom.angle_gap(np.angle(w[above]), 0.0)) > geom.cone_angle(2.0)
        return float(err) + float(outside.sum()), 1e-12

    def halfplane():
        w = geom.to_halfplane(z)
        return float(np.max(np.abs(geom.halfplane_dist_from_i(w) - geom.dist_origin(z)))), 1e-9

    def isometry():
        g = geom.random_isometry(rng)
        a, b = z[:25], z[25:]
        return float(np.max(np.abs(geom.dist(g(a), g(b)) - geom.dist(a, b)))), 1e-8

    def delaunay_oracle():
        bad = 0
        for k in range(5):
            pts = oracle.random_points_in_ball(rng, 25, 3.0)
            graph = delaunay.graph_from_array(pts)
            bad += not oracle.compare_with_graph(pts, graph.edge_set(list(range(len(pts))))).explained
        return float(bad), 0.5

    return [("busemann_limit", busemann_limit), ("busemann_ray", busemann_along_ray),
            ("level_function", level_function), ("cone_angle", cone), ("halfplane_distance", halfplane),
            ("isometry_invariance", isometry), ("delaunay_oracle", delaunay_oracle)]


def cmd_selftest(stream=sys.stdout) -> int:
    failures = 0
    for name, check in _selftest_checks():
        try:
            err, tol = check()
            ok = err <= tol
            detail = f"error {err:.3g} (tolerance {tol:.0e})"
        except Exception as exc:  # a crash is a failed check, not a crashed suite
            ok, detail = False, f"raised {exc!r}"
        failures += not ok
        stream.write(f"{'ok  ' if ok else 'FAIL'} {name}: {detail}\n")
    return 1 if failures else 0


# ---------------------------------------------------------------- output

def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def write_csv(table: Table, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# {table.name}: {' '.join(table.columns)}\n")
        fh.write(",".join(table.columns) + "\n")
        for row in table.rows:
            fh.write(",".join(format_value(v) for v in row) + "\n")


def render_svg(x, series: dict, path: Path, xlabel: str = "", width: int = 480, height: int = 320) -> None:
    """Minimal line plot of one or more series against x."""
    x = np.asarray(x, float)
    ys = {k: np.asarray(v, float) for k, v in series.items()}
    finite = np.concatenate([v[np.isfinite(v)] for v in ys.values()] + [np.zeros(0)])
    y_lo, y_hi = (finite.min(), finite.max()) if finite.size else (0.0, 1.0)
    if y_hi - y_lo < 1e-12:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    x_lo, x_hi = (x.min(), x.max()) if x.max() > x.min() else (x.min() - 0.5, x.max() + 0.5)
    pad = 40

    def sx(v):
        return pad + (v - x_lo) / (x_hi - x_lo) * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - y_lo) / (y_hi - y_lo) * (height - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
             f'<text x="{width / 2}" y="{height - 8}" font-size="12" text-anchor="middle">{xlabel}</text>',
             f'<text x="4" y="{pad - 8}" font-size="10">{y_hi:.3g}</text>',
             f'<text x="4" y="{height - pad}" font-size="10">{y_lo:.3g}</text>']
    for k, (name, y) in enumerate(ys.items()):
        ok = np.isfinite(y)
        pts = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(x[ok], y[ok]))
        color = colors[k % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        parts.append(f'<text x="{width - pad}" y="{pad + 14 * k}" font-size="11" fill="{color}" '
                     f'text-anchor="end">{name}</text>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


def _version() -> str:
    return __version__


def new_run_dir(cfg: RunConfig) -> tuple[str, Path]:
    digest = hashlib.sha256(json.dumps(asdict(cfg), sort_keys=True).encode()).hexdigest()[:8]
    stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime())
    base = Path(cfg.out)
    run_id, k = f"{stamp}-{digest}", 1
    while (base / run_id).exists():
        k += 1
        run_id = f"{stamp}-{digest}-{k}"
    path = base / run_id
    path.mkdir(parents=True)
    return run_id, path


COMMANDS = {"pd": cmd_pd, "ra": cmd_ra, "pq": cmd_pq, "lyap": cmd_lyap, "dim": cmd_dim, "edgeprob": cmd_edgeprob}


def run(cfg: RunConfig, stream=sys.stdout) -> int:
    if cfg.command == "selftest":
        return cmd_selftest(stream)
    run_id, path = new_run_dir(cfg)
    outputs = [f"{cfg.command}.csv"] + ([f"{cfg.command}.svg"] if cfg.plot else [])
    manifest = {"run_id": run_id, "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                "command": cfg.command, "config": asdict(cfg), "seed": cfg.seed, "version": _version(),
                "outputs": outputs, "duration_s": None}
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    start = time.perf_counter()
    table = COMMANDS[cfg.command](cfg)
    write_csv(table, path / f"{cfg.command}.csv")
    if cfg.plot and table.plot_x:
        idx = table.columns.index(table.plot_x)
        x = [row[idx] for row in table.rows]
        series = {name: [row[table.columns.index(name)] for row in table.rows] for name in table.plot_y}
        render_svg(x, series, path / f"{cfg.command}.svg", xlabel=table.plot_x)
    elif cfg.plot:
        outputs.remove(f"{cfg.command}.svg")
    manifest["duration_s"] = time.perf_counter() - start
    manifest["passed"] = table.passed
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    stream.write(f"{path}\n")
    for row in table.rows:
        stream.write(" ".join(f"{c}={format_value(v)}" for c, v in zip(table.columns, row)) + "\n")
    return 0 if table.passed else 1


def main(argv=None) -> int:
    try:
        cfg = config_from_args(sys.argv[1:] if argv is None else argv)
    except (UsageError, configparser.Error, OSError) as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
