"""Random walks on the hyperbolic plane as products of isometries.

Group walks (right-angled, {p,q} tessellation, SL(2,R) products) are run in
batches: the current element g_n is held in polar form R(alpha) A(t) R(beta),
so x_n = g_n(o) sits at distance t in direction alpha, and every step right
multiplies by a small fixed isometry.  An independent second representation
(a normalised SU(1,1) matrix with a separate log scale) guards the first.

The Poisson-Delaunay walk moves between field points; each step builds the
certified Delaunay neighbourhood of the walker in its own frame.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import estimate, geom
from .delaunay import CertificationError, WindowConfig, certified_graph
from .field import ORIGIN, LazyField, Site, halfplane_distance

GUARD_TOL = 1e-6
R_TREE = 2.0 * math.acosh(math.sqrt(2.0))


@dataclass(frozen=True)
class TessellationSpec:
    p: int
    q: int

    def __post_init__(self):
        if self.p < 3 or self.q < 3 or 1 / self.p + 1 / self.q >= 0.5:
            raise ValueError(f"{{{self.p},{self.q}}} is not a hyperbolic tessellation")

    @property
    def side(self) -> float:
        return 2.0 * math.acosh(math.cos(math.pi / self.p) / math.sin(math.pi / self.q))


@dataclass
class TraceBatch:
    """Per-walk series, one row per walk.

    ``horo`` holds d(x_{-i}, x_1) - d(x_{-i}, x_0) for i = 1..N when a past
    branch was run.  ``weights`` are degree-bias weights (ones for group walks).
    """

    kind: str
    d_ambient: np.ndarray
    d_graph: np.ndarray
    theta: np.ndarray
    step: np.ndarray
    horo: np.ndarray | None = None
    weights: np.ndarray | None = None
    valid: np.ndarray | None = None
    guard: np.ndarray | None = None
    extras: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        m = self.d_ambient.shape[0]
        if self.weights is None:
            self.weights = np.ones(m)
        if self.valid is None:
            self.valid = np.ones(m, bool)
        if self.guard is None:
            self.guard = np.zeros(m)

    def __len__(self):
        return self.d_ambient.shape[0]

    @property
    def n_steps(self) -> int:
        return self.d_ambient.shape[1] - 1

    def select(self, mask) -> "TraceBatch":
        pick = np.flatnonzero(mask)
        extras = {k: (v[pick] if isinstance(v, np.ndarray) and len(v) == len(self) else v)
                  for k, v in self.extras.items()}
        return TraceBatch(self.kind, self.d_ambient[pick], self.d_graph[pick], self.theta[pick], self.step[pick],
                          None if self.horo is None else self.horo[pick], self.weights[pick], self.valid[pick],
                          self.guard[pick], extras)

    def export(self, index: int, stream) -> None:
        """Rows `k d_ambient d_graph theta flag` for one walk."""
        flag = 0 if self.valid[index] else 1
        for k in range(self.n_steps + 1):
            stream.write(f"{k} {self.d_ambient[index, k]:.17g} {self.d_graph[index, k]:.17g} "
                         f"{self.theta[index, k]:.17g} {flag}\n")

    @classmethod
    def stack(cls, traces: list["TraceBatch"]) -> "TraceBatch":
        def cat(name):
            parts = [getattr(t, name) for t in traces]
            if any(p is None for p in parts):
                return None
            return np.concatenate(parts)

        extras = {}
        for key in traces[0].extras:
            vals = [t.extras[key] for t in traces]
            extras[key] = np.concatenate(vals) if isinstance(vals[0], np.ndarray) else vals
        return cls(traces[0].kind, cat("d_ambient"), cat("d_graph"), cat("theta"), cat("step"), cat("horo"),
                   cat("weights"), cat("valid"), cat("guard"), extras)


# ---------------------------------------------------------------- group walks

def _mul(a1, b1, a2, b2):
    """SU(1,1) product of the pairs (a1, b1) and (a2, b2)."""
    return a1 * a2 + b1 * np.conj(b2), a1 * b2 + b1 * np.conj(a2)


def _su11(g: geom.Isometry):
    return complex(g.a), complex(g.b)


def right_angled_steps(r: float):
    """Rotate the frame by k * 90 degrees, k in {-1, 0, 1, 2}, then move r forward."""
    return [_su11(geom.rotation(k * math.pi / 2) @ geom.translation(r)) for k in (-1, 0, 1, 2)]


def tessellation_steps(spec: TessellationSpec):
    """Turn by 2 pi k / q from the incoming edge, cross the edge, face back along it.

    The frame always points at the previous vertex, so k = 0 backtracks and the
    q choices are exactly the q edges at the current vertex.
    """
    r = spec.side
    return [_su11(geom.rotation(2 * math.pi * k / spec.q) @ geom.translation(r) @ geom.rotation(math.pi))
            for k in range(spec.q)]


class _ReducedWord:
    """Group elements along a walk, kept as the reduced word's partial products.

    A backtrack pops one level and turns the element below by the exact
    rotation s_j s_back, so nothing ever cancels numerically.  Each level holds
    the element twice: in polar form and as a normalised SU(1,1) pair with a
    separate log scale.  The two are updated by independent arithmetic.
    Without a backtrack index every step pushes onto level 0.
    """

    def __init__(self, a_steps, b_steps, n_walks: int, n_steps: int, backtrack=None):
        self.a_steps, self.b_steps, self.backtrack = a_steps, b_steps, backtrack
        self.rows = np.arange(n_walks)
        keep = n_steps + 1 if backtrack is not None else 1
        self.level = np.zeros(n_walks, int)
        self.alpha, self.t, self.beta = (np.zeros((n_walks, keep)) for _ in range(3))
        self.sa = np.ones((n_walks, keep), complex)
        self.sb = np.zeros((n_walks, keep), complex)
        self.slog = np.zeros((n_walks, keep))
        self.pushed = np.zeros((n_walks, keep), int)
        if backtrack is not None:
            # step directions and the rotations s_j s_back, in units of 2 pi / m
            m = self.m = len(a_steps)
            self.unit = np.rint(geom.normalize_angle(np.angle(b_steps / np.conj(a_steps))) * m / geom.TWO_PI
                                ).astype(int) % m
            self.turn = np.array([_mul(a_steps[j], b_steps[j], a_steps[backtrack], b_steps[backtrack])[0]
                                  for j in range(m)])
            self.turn_angle = geom.normalize_angle(2.0 * np.angle(self.turn))
            turn_units = np.rint(self.turn_angle * m / geom.TWO_PI).astype(int) % m
            self.turn_units = turn_units
            # per level: the direction leading back to the level below, in that level's frame
            self.back_unit = np.full((n_walks, keep), self.unit[backtrack])

    def step(self, choice):
        a, b = self.a_steps[choice], self.b_steps[choice]
        rows, lvl = self.rows, self.level
        if self.backtrack is None:
            self.alpha[:, 0], self.t[:, 0], self.beta[:, 0] = geom.kak_compose(
                self.alpha[:, 0], self.t[:, 0], self.beta[:, 0], a, b)
            ma, mb = _mul(self.sa[:, 0], self.sb[:, 0], a, b)
            scale = np.abs(ma)
            self.sa[:, 0], self.sb[:, 0] = ma / scale, mb / scale
            self.slog[:, 0] += np.log(scale)
            return
        back = (self.unit[choice] == self.back_unit[rows, lvl]) & (lvl > 0)
        below = np.maximum(lvl - 1, 0)
        top_step = self.pushed[rows, lvl]
        new = np.where(back, lvl - 1, lvl + 1)
        # pop: the element one level down, turned by s_j s_back
        rot, rot_angle = self.turn[top_step], self.turn_angle[top_step]
        pop_beta = geom.normalize_angle(self.beta[rows, below] + rot_angle)
        pop_a, pop_b = self.sa[rows, below] * rot, self.sb[rows, below] * np.conj(rot)
        pop_back = (self.back_unit[rows, below] - self.turn_units[top_step]) % self.m
        # push: right-multiply the current top by the step
        alpha, t, beta = geom.kak_compose(self.alpha[rows, lvl], self.t[rows, lvl], self.beta[rows, lvl], a, b)
        ma, mb = _mul(self.sa[rows, lvl], self.sb[rows, lvl], a, b)
        scale = np.abs(ma)
        self.alpha[rows, new] = np.where(back, self.alpha[rows, below], alpha)
        self.t[rows, new] = np.where(back, self.t[rows, below], t)
        self.beta[rows, new] = np.where(back, pop_beta, beta)
        self.sa[rows, new] = np.where(back, pop_a, ma / scale)
        self.sb[rows, new] = np.where(back, pop_b, mb / scale)
        self.slog[rows, new] = np.where(back, self.slog[rows, below], self.slog[rows, lvl] + np.log(scale))
        self.pushed[rows, new] = np.where(back, self.pushed[rows, new], choice)
        self.back_unit[rows, new] = np.where(back, pop_back, self.unit[self.backtrack])
        self.level = new

    def current(self):
        """(alpha, t, beta) of the current elements."""
        lvl = self.level
        return self.alpha[self.rows, lvl], self.t[self.rows, lvl], self.beta[self.rows, lvl]

    def check_distance(self):
        """d(o, x) from the SU(1,1) route."""
        mb, log_scale = self.sb[self.rows, self.level], self.slog[self.rows, self.level]
        with np.errstate(divide="ignore"):
            t = 2.0 * geom.asinh_from_log(np.log(np.abs(mb)) + log_scale)
        return np.where(np.abs(mb) == 0, 0.0, t)


def _group_walk(steps, probs, n_steps: int, n_walks: int, rng: np.random.Generator, backtrack=None,
                past_steps: int = 0, kind: str = "group") -> TraceBatch:
    a_steps = np.array([s[0] for s in steps])
    b_steps = np.array([s[1] for s in steps])
    probs = None if probs is None else np.asarray(probs, float)
    choice = rng.choice(len(steps), size=(n_walks, n_steps), p=probs)
    word = _ReducedWord(a_steps, b_steps, n_walks, n_steps, backtrack)
    d_amb = np.zeros((n_walks, n_steps + 1))
    alphas = np.zeros((n_walks, n_steps + 1))
    depth = np.zeros((n_walks, n_steps + 1))
    for k in range(n_steps):
        word.step(choice[:, k])
        alpha, t, _ = word.current()
        d_amb[:, k + 1] = t
        alphas[:, k + 1] = alpha
        depth[:, k + 1] = word.level
    t = d_amb[:, -1]
    guard = np.abs(word.check_distance() - t) / np.maximum(t, 1.0)
    theta = np.where(d_amb > 0, alphas, np.nan)
    step_len = np.full((n_walks, n_steps), float(2.0 * math.asinh(abs(b_steps[0]))))
    if backtrack is None:
        depth[:] = np.nan
    batch = TraceBatch(kind, d_amb, depth, theta, step_len, guard=guard, valid=guard <= GUARD_TOL)
    batch.extras["alpha_final"] = alphas[:, -1]
    if past_steps:
        past_alpha, past_t = np.zeros((n_walks, past_steps)), np.zeros((n_walks, past_steps))
        choice_p = rng.choice(len(steps), size=(n_walks, past_steps), p=probs)
        past = _ReducedWord(a_steps, b_steps, n_walks, past_steps, backtrack)
        for k in range(past_steps):
            past.step(choice_p[:, k])
            past_alpha[:, k], past_t[:, k], _ = past.current()
        t1, a1 = d_amb[:, 1:2], alphas[:, 1:2]
        batch.horo = geom.dist_polar(past_t, past_alpha, t1, a1) - past_t
    return batch


def right_angled_walks(r: float, n_steps: int, n_walks: int, rng: np.random.Generator,
                       past_steps: int = 0) -> TraceBatch:
    if r <= 0:
        raise ValueError("step length must be positive")
    return _group_walk(right_angled_steps(r), None, n_steps, n_walks, rng, backtrack=3,
                       past_steps=past_steps, kind="right-angled")


def tessellation_walks(spec: TessellationSpec, n_steps: int, n_walks: int, rng: np.random.Generator,
                       past_steps: int = 0) -> TraceBatch:
    return _group_walk(tessellation_steps(spec), None, n_steps, n_walks, rng, backtrack=0,
                       past_steps=past_steps, kind=f"pq-{spec.p}-{spec.q}")


def right_angled_walk(r: float, n_steps: int, rng: np.random.Generator, past_steps: int = 0) -> TraceBatch:
    return right_angled_walks(r, n_steps, 1, rng, past_steps)


def pq_walk(spec: TessellationSpec, n_steps: int, rng: np.random.Generator, past_steps: int = 0) -> TraceBatch:
    return tessellation_walks(spec, n_steps, 1, rng, past_steps)


# ---------------------------------------------------------------- matrix products

CAYLEY = np.array([[1.0, -1j], [1.0, 1j]])
CAYLEY_INV = np.linalg.inv(CAYLEY)


def sl2_to_disk(m) -> tuple[complex, complex]:
    """The disk isometry conjugate (by the Cayley map) to the Mobius action of m."""
    m = np.asarray(m, dtype=float)
    u = CAYLEY @ m @ CAYLEY_INV
    u = u / np.sqrt(np.linalg.det(u))
    return complex(u[0, 0]), complex(u[0, 1])


def check_unimodular(matrices, probs):
    for m in matrices:
        if abs(np.linalg.det(np.asarray(m, float)) - 1.0) > 1e-10:
            raise ValueError("matrix walk needs determinant one")
    if abs(sum(probs) - 1.0) > 1e-12:
        raise ValueError("probabilities must sum to one")


@dataclass
class MatrixTrace:
    """log||A_n ... A_1|| per walk and step, plus unit directions A_n...A_1 v0 / |.|."""

    log_norm: np.ndarray
    direction: np.ndarray
    guard: np.ndarray
    kak: tuple

    @property
    def quotient_distance(self) -> np.ndarray:
        """sqrt(log^2 s1 + log^2 s2) = sqrt(2) log s1 for unimodular products."""
        return math.sqrt(2.0) * self.log_norm

    @property
    def sigma_product(self) -> np.ndarray:
        return np.exp(self.log_norm) * np.exp(-self.log_norm)

    def matrix(self, index: int = 0) -> np.ndarray:
        """The accumulated product of one walk, up to sign (only sensible while it fits in floats)."""
        alpha, t, beta = (x[index] for x in self.kak)
        g = geom.isometry_from_kak(alpha, t, beta).inverse()
        u = np.array([[g.a, g.b], [np.conj(g.b), np.conj(g.a)]])
        return np.real(CAYLEY_INV @ u @ CAYLEY)


def matrix_walk(matrices, probs, n_steps: int, n_walks: int, rng: np.random.Generator,
                v0=(1.0, 0.0)) -> MatrixTrace:
    """Products A_n ... A_1 of i.i.d. unimodular matrices.

    x_n = (A_n ... A_1)^{-1} i in the half-plane is a right random walk whose
    distance from i is 2 log s1(A_n ... A_1); that is what the polar route tracks.
    """
    check_unimodular(matrices, probs)
    mats = [np.asarray(m, float) for m in matrices]
    inv = [sl2_to_disk(np.linalg.inv(m)) for m in mats]
    a_steps = np.array([s[0] for s in inv])
    b_steps = np.array([s[1] for s in inv])
    stack = np.array(mats)
    choice = rng.choice(len(mats), size=(n_walks, n_steps), p=np.asarray(probs, float))
    alpha = np.zeros(n_walks)
    t = np.zeros(n_walks)
    beta = np.zeros(n_walks)
    scaled = np.tile(np.eye(2), (n_walks, 1, 1))
    log_scale = np.zeros(n_walks)
    v = np.tile(np.asarray(v0, float) / np.linalg.norm(v0), (n_walks, 1))
    log_norm = np.zeros((n_walks, n_steps + 1))
    guard = np.zeros(n_walks)
    for k in range(n_steps):
        idx = choice[:, k]
        alpha, t, beta = geom.kak_compose(alpha, t, beta, a_steps[idx], b_steps[idx])
        log_norm[:, k + 1] = t / 2.0
        a = stack[idx]
        v = np.einsum("wij,wj->wi", a, v)
        v /= np.linalg.norm(v, axis=1)[:, None]
        scaled = np.einsum("wij,wjk->wik", a, scaled)
        s = np.abs(scaled).max(axis=(1, 2))
        scaled /= s[:, None, None]
        log_scale += np.log(s)
    frob = np.sum(scaled ** 2, axis=(1, 2))
    det = np.linalg.det(scaled)
    s1 = np.sqrt(0.5 * (frob + np.sqrt(np.maximum(frob ** 2 - 4 * det ** 2, 0.0))))
    check = log_scale + np.log(s1)
    guard = np.abs(check - log_norm[:, -1]) / np.maximum(np.abs(log_norm[:, -1]), 1.0)
    return MatrixTrace(log_norm, v, guard, (alpha, t, beta))


def stationary_directions(matrices, probs, n_samples: int, rng: np.random.Generator,
                          burn_in: int = 1000, v0=(1.0, 0.0)) -> np.ndarray:
    """Unit vectors approximately distributed by the stationary measure of v -> A v / |A v|."""
    check_unimodular(matrices, probs)
    stack = np.array([np.asarray(m, float) for m in matrices])
    v = np.tile(np.asarray(v0, float) / np.linalg.norm(v0), (n_samples, 1))
    for _ in range(burn_in):
        a = stack[rng.choice(len(stack), size=n_samples, p=np.asarray(probs, float))]
        v = np.einsum("wij,wj->wi", a, v)
        v /= np.linalg.norm(v, axis=1)[:, None]
    return v


# ---------------------------------------------------------------- Poisson-Delaunay walk

@dataclass
class PDWalkResult:
    """One Poisson-Delaunay walk: sites, certified neighbourhoods and the derived series."""

    sites: list
    neighbors: dict
    degree0: int
    windows: list
    failed: bool = False


def _run_pd(field: LazyField, lam: float, n_steps: int, rng: np.random.Generator,
            window: WindowConfig) -> PDWalkResult:
    site = ORIGIN
    sites = [site]
    neighbors = {}
    windows = []
    degree0 = 0
    for k in range(n_steps):
        try:
            graph, radius = certified_graph(field, site, lam, window)
        except CertificationError:
            return PDWalkResult(sites, neighbors, degree0, windows, failed=True)
        root = graph.root
        nbrs = graph.neighbors(root)
        if k == 0:
            degree0 = len(nbrs)
        neighbors[site.ident] = [graph.points.ids[j] for j in nbrs]
        windows.append(radius)
        j = int(nbrs[rng.integers(len(nbrs))])
        site = graph.points.site(j)
        sites.append(site)
    return PDWalkResult(sites, neighbors, degree0, windows)


def _bfs(adjacency: dict, source) -> dict:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for w in adjacency.get(u, ()):
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def _halfplane_track(field: LazyField, sites):
    xs, ly = zip(*(s.global_halfplane(field.tile_width) for s in sites))
    return np.array(xs), np.array(ly)


def pd_walk(field: LazyField, lam: float, n_steps: int, rng: np.random.Generator, past_steps: int = 0,
            window: WindowConfig | None = None) -> TraceBatch:
    """Simple random walk on the Delaunay graph of P_lambda + {o}, started at o.

    Ambient distances come from global half-plane coordinates of the visited
    field points; the guard recomputes them by composing the frame-to-frame
    isometries in polar form.  Graph distances are breadth-first distances in
    the explored part of the graph (an upper bound on the true ones).
    """
    if not 0.05 - 1e-12 <= lam <= 1.0 + 1e-12:
        raise ValueError("intensity outside the supported range [0.05, 1]")
    if n_steps > 200:
        raise ValueError("at most 200 steps")
    window = window or WindowConfig()
    past_rng, future_rng = rng.spawn(2)
    run = _run_pd(field, lam, n_steps, future_rng, window)
    past = _run_pd(field, lam, past_steps, past_rng, window) if past_steps else None
    n_done = len(run.sites) - 1
    xs, ly = _halfplane_track(field, run.sites)
    d_amb = np.full(n_steps + 1, np.nan)
    d_amb[: n_done + 1] = halfplane_distance(0.0, 0.0, xs, ly)
    w = xs + 1j * np.exp(ly)
    theta = np.full(n_steps + 1, np.nan)
    moved = d_amb[: n_done + 1] > 0
    theta[: n_done + 1][moved] = geom.normalize_angle(np.angle((w[moved] - 1j) / (w[moved] + 1j)))
    # second route: compose frame maps in polar form along the loop-erased path;
    # frames are canonical per site, so a revisit restores the stored element exactly
    stack = [(ORIGIN.ident, 0.0, 0.0, 0.0)]
    depth_of = {ORIGIN.ident: 0}
    guard = 0.0
    steps = np.full(n_steps, np.nan)
    for k in range(n_done):
        nxt = run.sites[k + 1]
        g = field.frame_map(nxt, run.sites[k])
        steps[k] = geom.dist_origin(g(0j))
        if nxt.ident in depth_of:
            for ident, *_ in stack[depth_of[nxt.ident] + 1:]:
                del depth_of[ident]
            del stack[depth_of[nxt.ident] + 1:]
        else:
            _, alpha, t, beta = stack[-1]
            alpha, t, beta = (float(x) for x in geom.kak_compose(alpha, t, beta, g.a, g.b))
            depth_of[nxt.ident] = len(stack)
            stack.append((nxt.ident, alpha, t, beta))
        t = stack[-1][2]
        guard = max(guard, abs(t - d_amb[k + 1]) / max(d_amb[k + 1], 1.0))
    adjacency = {}
    for src in (run, past) if past else (run,):
        for u, nbrs in src.neighbors.items():
            for v in nbrs:
                adjacency.setdefault(u, set()).add(v)
                adjacency.setdefault(v, set()).add(u)
    hops = _bfs(adjacency, ORIGIN.ident)
    d_graph = np.full(n_steps + 1, np.nan)
    d_graph[: n_done + 1] = [hops.get(s.ident, np.nan) for s in run.sites]
    failed = run.failed or (past is not None and past.failed)
    batch = TraceBatch("poisson-delaunay", d_amb[None], d_graph[None], theta[None], steps[None],
                       valid=np.array([not failed and guard <= GUARD_TOL]), guard=np.array([guard]))
    batch.extras["degree0"] = np.array([run.degree0])
    batch.extras["window_mean"] = np.array([np.mean(run.windows) if run.windows else np.nan])
    batch.extras["failed"] = np.array([failed])
    if past is not None and not failed and n_done >= 1:
        px, ply = _halfplane_track(field, past.sites[1:])
        batch.horo = (halfplane_distance(px, ply, xs[1], ly[1]) - halfplane_distance(px, ply, xs[0], ly[0]))[None]
    return batch


def degree_weights(degrees) -> np.ndarray:
    """Importance weights deg(o) / mean deg(o) for the degree-biased law."""
    degrees = np.asarray(degrees, float)
    return degrees / degrees.mean()


def pd_exact_entropies(field: LazyField, lam: float, n_max: int, window: WindowConfig | None = None):
    """Exact H_0..H_{n_max} of the Poisson-Delaunay walk from o in one environment.

    Every vertex within n_max - 1 hops of o gets its own certified neighbourhood,
    built in its own frame, exactly as the walk does.  Returns (entropies, deg(o)).
    """
    window = window or WindowConfig()
    sites = {ORIGIN.ident: ORIGIN}
    cache = {}

    def neighbors(ident):
        if ident not in cache:
            graph, _ = certified_graph(field, sites[ident], lam, window)
            nbrs = graph.neighbors(graph.root)
            for j in nbrs:
                sites.setdefault(graph.points.ids[j], graph.points.site(int(j)))
            cache[ident] = [graph.points.ids[j] for j in nbrs]
        return cache[ident]

    h = estimate.graph_entropies(neighbors, ORIGIN.ident, n_max)
    return h, len(neighbors(ORIGIN.ident))
