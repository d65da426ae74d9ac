"""Estimators with standard errors: speed, entropy, Lyapunov exponents, dimension."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import geom

MIN_TRACES = 30


@dataclass
class EstimateReport:
    value: float
    std_error: float
    n_samples: int
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.std_error < 0 or math.isnan(self.std_error) and self.n_samples >= 2:
            raise ValueError("invalid standard error")

    @property
    def three_sigma(self) -> float:
        return 3.0 * self.std_error

    def serialize(self) -> str:
        lines = [f"value: {self.value!r}", f"std_error: {self.std_error!r}",
                 f"n_samples: {self.n_samples}", f"method: {self.method}"]
        lines += [f"{k}: {v!r}" for k, v in sorted(self.diagnostics.items())]
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "EstimateReport":
        fields = dict(line.split(": ", 1) for line in text.strip().splitlines())
        diag = {k: v for k, v in fields.items() if k not in ("value", "std_error", "n_samples", "method")}
        return cls(float(fields["value"]), float(fields["std_error"]), int(fields["n_samples"]),
                   fields["method"], diag)


def weighted_mean(values, weights=None) -> tuple[float, float]:
    """Self-normalised weighted mean and its standard error."""
    y = np.asarray(values, float)
    m = len(y)
    w = np.ones(m) if weights is None else np.asarray(weights, float)
    total = w.sum()
    mean = float(np.sum(w * y) / total)
    if m < 2:
        return mean, float("nan")
    se = math.sqrt(np.sum(w ** 2 * (y - mean) ** 2) / total ** 2 * m / (m - 1))
    return mean, se


def proportion(hits: int, n: int) -> tuple[float, float]:
    """Frequency hits/n with the Agresti-Coull standard error.

    The plug-in error sqrt(p(1-p)/n) is 0 at zero or full counts, which would
    reject any nonzero probability; adding two successes and two failures does not.
    """
    if n <= 0:
        return math.nan, math.nan
    p_tilde = (hits + 2.0) / (n + 4.0)
    return hits / n, math.sqrt(p_tilde * (1.0 - p_tilde) / (n + 4.0))


def bias_weights(batch) -> np.ndarray:
    """Degree-bias weights for Poisson-Delaunay traces, ones otherwise."""
    if "degree0" in batch.extras:
        deg = np.asarray(batch.extras["degree0"], float)
        return deg / deg.mean()
    return batch.weights


def _usable(batch, need_past: bool = False):
    ok = batch.valid.copy()
    if need_past:
        if batch.horo is None:
            raise ValueError("traces carry no past branch")
        ok &= np.all(np.isfinite(batch.horo), axis=1)
    n_bad = int(np.sum(~ok))
    batch = batch.select(ok)
    if len(batch) < MIN_TRACES:
        raise ValueError(f"need at least {MIN_TRACES} valid traces, have {len(batch)}")
    return batch, n_bad


def speed_kingman(batch, graph: bool = False) -> EstimateReport:
    """Mean of d(x_0, x_n)/n over traces (graph metric if ``graph``)."""
    batch, n_bad = _usable(batch)
    series = batch.d_graph if graph else batch.d_ambient
    n = batch.n_steps
    y = series[:, -1] / n if n else np.zeros(len(batch))
    value, se = weighted_mean(y, bias_weights(batch))
    return EstimateReport(value, se, len(batch), "kingman-graph" if graph else "kingman",
                          {"n_steps": n, "invalid": n_bad, "kind": batch.kind})


def speed_furstenberg(batch) -> EstimateReport:
    """Average of d(x_{-i}, x_1) - d(x_{-i}, x_0) over the past branch and traces."""
    batch, n_bad = _usable(batch, need_past=True)
    if batch.horo.shape[1] < 50:
        raise ValueError("past branch must have at least 50 steps")
    y = batch.horo.mean(axis=1)
    value, se = weighted_mean(y, bias_weights(batch))
    return EstimateReport(value, se, len(batch), "furstenberg",
                          {"past_steps": batch.horo.shape[1], "invalid": n_bad, "kind": batch.kind})


def furstenberg_from_points(x0, x1, past) -> float:
    """The same estimator for explicit disk points (null-model checks)."""
    past = np.asarray(past, complex)
    return float(np.mean(geom.dist(past, x1) - geom.dist(past, x0)))


# ---------------------------------------------------------------- entropy

def entropy_plugin(sample_endpoints, n: int, m_walks: int, m_fresh: int, rng: np.random.Generator,
                   min_coverage: float = 0.9) -> EstimateReport:
    """Plug-in entropy on one fixed environment.

    ``sample_endpoints(rng, n, count)`` returns hashable endpoints of ``count``
    independent n-step walks.  Fresh endpoints never seen in the reference
    sample are dropped and counted against the coverage ratio.
    """
    counts = Counter(sample_endpoints(rng, n, m_walks))
    fresh = sample_endpoints(rng, n, m_fresh)
    logs = [math.log(counts[x] / m_walks) for x in fresh if x in counts]
    coverage = len(logs) / len(fresh)
    if n == 0 or not logs:
        value, se = 0.0, 0.0
    else:
        value, se = weighted_mean(-np.asarray(logs) / n)
    return EstimateReport(value, se, len(logs), "plugin",
                          {"n": n, "coverage": coverage, "biased_high": coverage < min_coverage,
                           "support": len(counts)})


def entropy(environments, n_pair=(10, 20), m_walks: int = 10_000, m_fresh: int = 2000, seed: int = 0,
            weights=None) -> EstimateReport:
    """Plug-in entropy over independent environments with two-n extrapolation.

    ``environments`` is a list of endpoint samplers (one per environment).  With
    H_n / n = h + c / n the Richardson combination of n1 < n2 is
    (n2 * e2 - n1 * e1) / (n2 - n1).
    """
    n1, n2 = n_pair
    per_env, coverage = [], []
    for k, sampler in enumerate(environments):
        rng = np.random.default_rng([seed, k])
        e1 = entropy_plugin(sampler, n1, m_walks, m_fresh, rng)
        e2 = entropy_plugin(sampler, n2, m_walks, m_fresh, rng)
        per_env.append((n2 * e2.value - n1 * e1.value) / (n2 - n1))
        coverage.append(min(e1.diagnostics["coverage"], e2.diagnostics["coverage"]))
    value, se = weighted_mean(per_env, weights)
    return EstimateReport(value, se if len(per_env) > 1 else 0.0, len(per_env), "plugin-richardson",
                          {"n1": n1, "n2": n2, "min_coverage": float(min(coverage)),
                           "biased_high": bool(min(coverage) < 0.9)})


def regular_tree_depth_law(n: int, degree: int) -> np.ndarray:
    """P(depth of simple random walk on the degree-regular tree after n steps = k)."""
    p = np.zeros(n + 2)
    p[0] = 1.0
    up = (degree - 1) / degree
    for _ in range(n):
        nxt = np.zeros_like(p)
        nxt[1] += p[0]
        nxt[2:] += p[1:-1] * up
        nxt[:-1] += p[1:] * (1 - up)
        p = nxt
    return p[: n + 1]


def regular_tree_log_prob(depths, n: int, degree: int) -> np.ndarray:
    """log p^n(o, x) for tree vertices x at the given depths."""
    law = regular_tree_depth_law(n, degree)
    depths = np.asarray(depths, int)
    spheres = np.where(depths == 0, 0.0, math.log(degree) + (depths - 1) * math.log(degree - 1))
    with np.errstate(divide="ignore"):
        return np.log(law[depths]) - spheres


def entropy_tree(depths_n1, depths_n2, n1: int, n2: int, degree: int = 4) -> EstimateReport:
    """Increment estimator (log p^{n1}(x_{n1}) - log p^{n2}(x_{n2})) / (n2 - n1) with exact kernels."""
    lp1 = regular_tree_log_prob(depths_n1, n1, degree)
    lp2 = regular_tree_log_prob(depths_n2, n2, degree)
    value, se = weighted_mean((lp1 - lp2) / (n2 - n1))
    return EstimateReport(value, se, len(lp1), "exact-kernel-increment", {"n1": n1, "n2": n2, "degree": degree})


def graph_entropies(neighbors, root, n_max: int) -> np.ndarray:
    """Exact H_n = -sum p^n log p^n for n = 0..n_max of simple random walk on a graph.

    ``neighbors(v)`` must be exact for every vertex within n_max - 1 steps of root.
    """
    dist = {root: 1.0}
    out = [0.0]
    for _ in range(n_max):
        nxt = {}
        for v, pv in dist.items():
            nb = neighbors(v)
            share = pv / len(nb)
            for w in nb:
                nxt[w] = nxt.get(w, 0.0) + share
        dist = nxt
        p = np.fromiter(dist.values(), float)
        out.append(float(-np.sum(p * np.log(p))))
    return np.array(out)


def group_entropies(steps, n_max: int) -> np.ndarray:
    """Exact H_n for a group walk with uniform steps, identifying vertices numerically.

    Candidates are merged when their polar coordinates agree to far below the
    smallest possible separation of distinct orbit points at that radius.
    """
    a_steps = np.array([s[0] for s in steps])
    b_steps = np.array([s[1] for s in steps])
    alpha, t, beta, prob = np.zeros(1), np.zeros(1), np.zeros(1), np.ones(1)
    step_len = 2.0 * math.asinh(abs(b_steps[0]))
    out = [0.0]
    q = len(steps)
    for _ in range(n_max):
        alpha = np.repeat(alpha, q)
        t = np.repeat(t, q)
        beta = np.repeat(beta, q)
        prob = np.repeat(prob, q) / q
        a = np.tile(a_steps, len(prob) // q)
        b = np.tile(b_steps, len(prob) // q)
        alpha, t, beta = geom.kak_compose(alpha, t, beta, a, b)
        alpha, t, beta, prob = _merge_vertices(alpha, t, beta, prob, step_len)
        out.append(float(-np.sum(prob * np.log(prob))))
    return np.array(out)


def _merge_vertices(alpha, t, beta, prob, step_len):
    t_key = np.round(t, 6)
    # distinct orbit points at radius t differ in angle by at least ~ e^{step/2 - t}
    tol = 1e-3 * np.exp(step_len / 2.0 - np.maximum(t, step_len))
    # at o only the total rotation alpha + beta is meaningful
    at_origin = t < 1e-6
    beta = np.where(at_origin, alpha + beta, beta)
    alpha = geom.normalize_angle(np.where(at_origin, 0.0, alpha))
    # pull angles just below 2 pi next to those just above 0
    alpha = np.where(alpha > geom.TWO_PI - tol, alpha - geom.TWO_PI, alpha)
    order = np.lexsort((alpha, t_key))
    alpha, t, beta, prob, t_key, tol = (alpha[order], t[order], beta[order], prob[order],
                                        t_key[order], tol[order])
    start = np.ones(len(t), bool)
    start[1:] = (t_key[1:] != t_key[:-1]) | (np.diff(alpha) > tol[1:])
    group = np.cumsum(start) - 1
    merged = np.bincount(group, weights=prob)
    first = np.flatnonzero(start)
    return alpha[first], t[first], beta[first], merged


def entropy_from_increments(h_values, weights=None, method: str = "exact-increment") -> EstimateReport:
    value, se = weighted_mean(h_values, weights)
    return EstimateReport(value, se if len(h_values) > 1 else 0.0, len(h_values), method)


# ---------------------------------------------------------------- Lyapunov exponents

def lyapunov_direct(trace) -> EstimateReport:
    n = trace.log_norm.shape[1] - 1
    value, se = weighted_mean(trace.log_norm[:, -1] / n)
    return EstimateReport(value, se, trace.log_norm.shape[0], "lyapunov-direct", {"n_steps": n})


def lyapunov_furstenberg(matrices, probs, directions, rng: np.random.Generator) -> EstimateReport:
    """Mean of log|A v| with A drawn from the step law and v from stationary samples."""
    stack = np.array([np.asarray(m, float) for m in matrices])
    idx = rng.choice(len(stack), size=len(directions), p=np.asarray(probs, float))
    vals = np.log(np.linalg.norm(np.einsum("wij,wj->wi", stack[idx], directions), axis=1))
    value, se = weighted_mean(vals)
    return EstimateReport(value, se, len(vals), "lyapunov-furstenberg")


def quotient_speed(trace) -> EstimateReport:
    n = trace.log_norm.shape[1] - 1
    value, se = weighted_mean(trace.quotient_distance[:, -1] / n)
    return EstimateReport(value, se, trace.log_norm.shape[0], "quotient-speed", {"n_steps": n})


# ---------------------------------------------------------------- dimension

@dataclass
class BoundarySample:
    angles: np.ndarray
    truncation: float

    def __post_init__(self):
        self.angles = geom.normalize_angle(np.asarray(self.angles, float))


def correlation_integral(angles, scales) -> np.ndarray:
    """Fraction of unordered pairs at circular distance below each scale (scales < pi)."""
    theta = np.sort(np.asarray(angles, float))
    m = len(theta)
    ext = np.concatenate([theta, theta + geom.TWO_PI])
    out = []
    for r in np.atleast_1d(scales):
        hits = np.searchsorted(ext, theta + r, side="left") - np.arange(m) - 1
        out.append(hits.sum() / (m * (m - 1) / 2))
    return np.array(out)


def dimension_correlation(sample: BoundarySample, scales, companion: float | None = None) -> EstimateReport:
    """Slope of log C(r) against log r over the admissible scales."""
    scales = np.asarray(scales, float)
    ok = (scales >= 10.0 * sample.truncation) & (scales <= 0.1)
    scales = scales[ok]
    if len(scales) < 3:
        raise ValueError("fewer than 3 admissible scales")
    c = correlation_integral(sample.angles, scales)
    if np.any(c <= 0):
        raise ValueError("empty correlation integral at the smallest scale")
    x, y = np.log(scales), np.log(c)
    design = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    dof = max(len(x) - 2, 1)
    sigma2 = float(resid @ resid) / dof
    se = math.sqrt(sigma2 / float(np.sum((x - x.mean()) ** 2)))
    diag = {"residual_rms": math.sqrt(float(np.mean(resid ** 2))), "scales": len(scales),
            "truncation": sample.truncation}
    if companion is not None:
        diag["h_over_l"] = companion
    return EstimateReport(float(coef[0]), se, len(sample.angles), "correlation-dimension", diag)
