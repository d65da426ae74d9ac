"""Hyperbolic Delaunay graphs of finite point sets in the Poincare disk.

Hyperbolic disks are exactly the Euclidean disks whose closure sits inside the
open unit disk, so the hyperbolic Delaunay graph is the Euclidean one with
every edge that has no witness circle inside the unit disk removed.  The
witness circles of a Euclidean Delaunay edge are the circles through its two
endpoints centered on the bisector segment between the circumcenters of the
adjacent triangles (a ray for hull edges); the filter minimises |c| + |c - p|
over that set.

A vertex is certified when all its incident triangles are hyperbolic and their
circumdisks sit inside the window ball (minus a margin): points outside the
window cannot then change its neighbours.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.spatial import Delaunay as QhullDelaunay

from . import geom
from .estimate import EstimateReport, proportion, weighted_mean
from .field import ORIGIN, LazyField, LocalPoints, Site, insert_root, points_from_array

SMALL_N = 64  # below this size the pure-python triangulator is used
TIE_EPS = 1e-12


@dataclass
class WindowConfig:
    initial: float | None = None  # default: R_lambda + 3, at least 4
    growth: float = 2.0
    cap: float = 30.0
    margin: float = 0.5

    def start(self, lam: float) -> float:
        if self.initial is not None:
            return self.initial
        return max(4.0, geom.PLANE.radius_for_intensity(lam) + 3.0)


# ---------------------------------------------------------------- predicates

def _orient(p, q, r) -> float:
    return (q.real - p.real) * (r.imag - p.imag) - (q.imag - p.imag) * (r.real - p.real)


def _incircle_raw(a, b, c, d):
    """In-circle determinant (positive when d is inside the ccw circle a, b, c) and its magnitude scale."""
    ax, ay = a.real - d.real, a.imag - d.imag
    bx, by = b.real - d.real, b.imag - d.imag
    cx, cy = c.real - d.real, c.imag - d.imag
    la, lb, lc = ax * ax + ay * ay, bx * bx + by * by, cx * cx + cy * cy
    det = la * (bx * cy - cx * by) - lb * (ax * cy - cx * ay) + lc * (ax * by - bx * ay)
    scale = (la * (np.abs(bx * cy) + np.abs(cx * by)) + lb * (np.abs(ax * cy) + np.abs(cx * ay))
             + lc * (np.abs(ax * by) + np.abs(bx * ay)))
    return det, scale


def incircle(pts, i: int, j: int, k: int, l: int) -> tuple[bool, bool]:
    """Is point l strictly inside circumcircle(i, j, k) (ccw)?  Second flag marks a tie.

    Ties are broken by lifting the smallest index highest: l is inside iff its
    barycentric weight on the smallest-index vertex is positive.
    """
    a, b, c, d = pts[i], pts[j], pts[k], pts[l]
    det, scale = _incircle_raw(a, b, c, d)
    if abs(det) > TIE_EPS * scale:
        return det > 0, False
    m = min(i, j, k, l)
    if m == l:
        return False, True
    others = [v for v in (i, j, k) if v != m]
    side_l = _orient(pts[others[0]], pts[others[1]], d)
    side_m = _orient(pts[others[0]], pts[others[1]], pts[m])
    return side_l * side_m > 0, True


# ---------------------------------------------------------------- triangulations

def bowyer_watson(z) -> tuple[np.ndarray, np.ndarray, bool]:
    """Incremental Delaunay triangulation with a far super-triangle.

    Returns (augmented points, ccw triangles including super vertices, tie flag).
    The three super vertices get the largest indices, so ties never favour them.
    """
    z = np.asarray(z, dtype=complex)
    n = len(z)
    far = 1e4 * max(1.0, float(np.max(np.abs(z))) if n else 1.0)
    pts = list(z) + [far * np.exp(1j * (math.pi / 2 + 2 * math.pi * s / 3)) for s in range(3)]
    triangles = {0: (n, n + 1, n + 2)}
    edge_owner = {(n, n + 1): 0, (n + 1, n + 2): 0, (n + 2, n): 0}
    next_id = 1
    tie = False
    for p in range(n):
        seed = None
        for tid, (i, j, k) in triangles.items():
            a, b, c = pts[i], pts[j], pts[k]
            if _orient(a, b, pts[p]) >= 0 and _orient(b, c, pts[p]) >= 0 and _orient(c, a, pts[p]) >= 0:
                seed = tid
                break
        if seed is None:
            raise RuntimeError("point outside the super triangle")
        bad = {seed}
        stack = [seed]
        while stack:
            tid = stack.pop()
            i, j, k = triangles[tid]
            for u, v in ((i, j), (j, k), (k, i)):
                other = edge_owner.get((v, u))
                if other is None or other in bad:
                    continue
                inside, flagged = incircle(pts, *triangles[other], p)
                tie = tie or flagged
                if inside:
                    bad.add(other)
                    stack.append(other)
        boundary = []
        for tid in bad:
            i, j, k = triangles[tid]
            for u, v in ((i, j), (j, k), (k, i)):
                if edge_owner.get((v, u)) not in bad:
                    boundary.append((u, v))
        for tid in bad:
            i, j, k = triangles.pop(tid)
            for u, v in ((i, j), (j, k), (k, i)):
                if edge_owner.get((u, v)) == tid:
                    del edge_owner[(u, v)]
        for u, v in boundary:
            triangles[next_id] = (u, v, p)
            for e in ((u, v), (v, p), (p, u)):
                edge_owner[e] = next_id
            next_id += 1
    tri = np.array(sorted(triangles.values()), dtype=int).reshape(-1, 3)
    return np.asarray(pts, dtype=complex), tri, tie


def qhull_triangulation(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    tri = QhullDelaunay(np.column_stack([z.real, z.imag])).simplices.astype(int)
    a, b, c = z[tri[:, 0]], z[tri[:, 1]], z[tri[:, 2]]
    flip = ((b - a).conjugate() * (c - a)).imag < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    return tri


def circumcircles(pts, tri):
    a, b, c = pts[tri[:, 0]], pts[tri[:, 1]], pts[tri[:, 2]]
    ba, ca = b - a, c - a
    den = 2.0 * (ba.conjugate() * ca).imag
    with np.errstate(divide="ignore", invalid="ignore"):
        center = a + 1j * (abs(ca) ** 2 * ba - abs(ba) ** 2 * ca) / den
    radius = np.abs(center - a)
    bad = ~np.isfinite(center)
    center[bad] = 1e12
    radius[bad] = 1e12
    return center, radius


def _edge_table(tri, n_real: int):
    """Undirected edges between real vertices with their one or two triangles."""
    m = len(tri)
    src = np.concatenate([tri[:, 0], tri[:, 1], tri[:, 2]])
    dst = np.concatenate([tri[:, 1], tri[:, 2], tri[:, 0]])
    owner = np.tile(np.arange(m), 3)
    real = (src < n_real) & (dst < n_real)
    src, dst, owner = src[real], dst[real], owner[real]
    lo, hi = np.minimum(src, dst), np.maximum(src, dst)
    key = lo.astype(np.int64) * (n_real + 3) + hi
    order = np.argsort(key, kind="stable")
    key, src, dst, owner = key[order], src[order], dst[order], owner[order]
    first = np.ones(len(key), bool)
    first[1:] = key[1:] != key[:-1]
    starts = np.flatnonzero(first)
    count = np.diff(np.append(starts, len(key)))
    t1 = owner[starts]
    t2 = np.where(count == 2, owner[np.minimum(starts + 1, len(key) - 1)], -1)
    return src[starts], dst[starts], t1, t2


def _witness_minimum(pts, u, v, t1, t2, centers):
    """min over witness circles of |c| + |c - p| for each edge (u, v)."""
    p = pts[u]
    c1 = centers[t1]
    two = t2 >= 0
    c2 = np.where(two, centers[np.maximum(t2, 0)], 0)
    # hull edge: the ray leaves c1 on the side away from its triangle
    d = pts[v] - pts[u]
    outward = -1j * d / np.abs(d)
    length = np.abs(c1) + 4.0
    end = np.where(two, c2, c1 + outward * length)
    lo = np.zeros(len(u))
    hi = np.ones(len(u))
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0

    def f(s):
        c = c1 + s * (end - c1)
        return np.abs(c) + np.abs(c - p)

    x1 = hi - inv_phi * (hi - lo)
    x2 = lo + inv_phi * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(60):
        left = f1 < f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        x2n = np.where(left, x1, lo + inv_phi * (hi - lo))
        x1n = np.where(left, hi - inv_phi * (hi - lo), x2)
        f2n = np.where(left, f1, np.nan)
        f1n = np.where(left, np.nan, f2)
        need1 = np.isnan(f1n)
        need2 = np.isnan(f2n)
        f1n[need1] = f(x1n)[need1]
        f2n[need2] = f(x2n)[need2]
        x1, x2, f1, f2 = x1n, x2n, f1n, f2n
    return np.minimum.reduce([f1, f2, f(np.zeros(len(u))), f(np.ones(len(u)))])


# ---------------------------------------------------------------- graphs

@dataclass
class Certificate:
    root: object
    r_needed: float
    window: float
    margin: float

    @property
    def certified(self) -> bool:
        return self.r_needed <= self.window - self.margin

    @property
    def status(self) -> str:
        return "certified" if self.certified else "uncertified"


@dataclass
class LocalGraph:
    points: LocalPoints
    triangles: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    reach: np.ndarray  # per vertex: hyperbolic radius about the frame origin holding its flower
    window: float
    margin: float = 0.5
    degenerate: bool = False
    witness: np.ndarray = dc_field(default=None, repr=False)
    edges: np.ndarray = dc_field(default=None, repr=False)

    @property
    def root(self):
        return self.points.root

    @property
    def vertices(self) -> list:
        return self.points.ids

    def __len__(self):
        return len(self.points)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def degree(self, i: int) -> int:
        return int(self.indptr[i + 1] - self.indptr[i])

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def certified(self) -> np.ndarray:
        return self.reach <= self.window - self.margin

    def edge_set(self, labels=None) -> set:
        labels = self.points.ids if labels is None else labels
        out = set()
        for a, b in self.edges:
            la, lb = labels[a], labels[b]
            out.add((la, lb) if la <= lb else (lb, la))
        return out

    def export(self, stream) -> None:
        """Adjacency text: `id: id id ...` lines after a coordinate table."""
        stream.write(f"# vertices {len(self)} window {self.window!r}\n")
        for i, (ident, z) in enumerate(zip(self.points.ids, self.points.z)):
            stream.write(f"v {i} {z.real:.17g} {z.imag:.17g} {' '.join(map(str, ident))}\n")
        for i in range(len(self)):
            stream.write(f"{i}: {' '.join(str(j) for j in self.neighbors(i))}\n")


def build_local(points: LocalPoints, window: float = math.inf, margin: float = 0.5,
                method: str = "auto") -> LocalGraph:
    """Hyperbolic Delaunay graph of the points, plus per-vertex certification radii."""
    n = len(points)
    z = points.z
    if n < 3:
        edges = np.array([[0, 1]]) if n == 2 else np.zeros((0, 2), int)
        indptr = np.array([0, 1, 2]) if n == 2 else np.zeros(n + 1, int)
        indices = np.array([1, 0]) if n == 2 else np.zeros(0, int)
        return LocalGraph(points, np.zeros((0, 3), int), indptr, indices, np.full(n, np.inf), window,
                          margin, False, np.zeros(len(edges)), edges)
    if method == "auto":
        method = "bw" if n <= SMALL_N else "qhull"
    tie = False
    if method == "bw":
        pts, tri, tie = bowyer_watson(z)
    else:
        pts, tri = z, qhull_triangulation(z)
    centers, radii = circumcircles(pts, tri)
    tri_reach = np.abs(centers) + radii
    u, v, t1, t2 = _edge_table(tri, n)
    witness = np.minimum(tri_reach[t1], np.where(t2 >= 0, tri_reach[np.maximum(t2, 0)], np.inf))
    slow = witness >= 1.0
    if np.any(slow):
        witness[slow] = _witness_minimum(pts, u[slow], v[slow], t1[slow], t2[slow], centers)
    keep = witness < 1.0
    edges = np.column_stack([u[keep], v[keep]])
    # per-vertex flower reach; hull and super-vertex contacts are never certified
    vertex_reach = np.zeros(len(pts))
    flat = tri.ravel()
    np.maximum.at(vertex_reach, flat, np.repeat(tri_reach, 3))
    vertex_reach = vertex_reach[:n]
    if method != "bw":
        vertex_reach[_hull_vertices(tri, n)] = np.inf
    with np.errstate(divide="ignore"):
        reach = np.where(vertex_reach < 1.0, 2.0 * np.arctanh(np.minimum(vertex_reach, 1.0)), np.inf)
    if method != "bw":
        tie = _has_ties(pts, tri, u, v, t1, t2)
    indptr, indices = _csr(edges, n)
    return LocalGraph(points, tri, indptr, indices, reach, window, margin, tie, witness[keep], edges)


def _hull_vertices(tri, n: int) -> np.ndarray:
    u, v, t1, t2 = _edge_table(tri, n)
    hull = t2 < 0
    return np.unique(np.concatenate([u[hull], v[hull]]))


def _has_ties(pts, tri, u, v, t1, t2) -> bool:
    """Near-cocircular quadrilaterals across interior edges."""
    two = t2 >= 0
    if not np.any(two):
        return False
    a, b, c = (pts[tri[t1[two], k]] for k in range(3))
    other = tri[t2[two]]
    mask = (other != u[two, None]) & (other != v[two, None])
    d = pts[other[np.arange(len(other)), mask.argmax(axis=1)]]
    det, scale = _incircle_raw(a, b, c, d)
    return bool(np.any(np.abs(det) <= TIE_EPS * scale))


def _csr(edges, n: int):
    if len(edges) == 0:
        return np.zeros(n + 1, int), np.zeros(0, int)
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, int)
    np.add.at(indptr, src + 1, 1)
    return np.cumsum(indptr), dst


def certify_root(graph: LocalGraph) -> Certificate:
    root = graph.root
    if root is None:
        raise ValueError("graph has no root")
    return Certificate(graph.points.ids[root], float(graph.reach[root]), graph.window, graph.margin)


def graph_from_array(z, root: int = 0, **kwargs) -> LocalGraph:
    return build_local(points_from_array(z, root), **kwargs)


# ---------------------------------------------------------------- certified neighbourhoods

class CertificationError(RuntimeError):
    pass


def certified_graph(field: LazyField, center: Site, lam: float, window: WindowConfig | None = None,
                    start: float | None = None) -> tuple[LocalGraph, float]:
    """Grow the query window until the center's flower fits inside it.

    Returns the graph and the window radius used; raises CertificationError at the cap.
    """
    window = window or WindowConfig()
    radius = start if start is not None else window.start(lam)
    while True:
        radius = min(radius, window.cap)
        pts = field.query_disk(center, radius, lam)
        if pts.root is None:
            raise RuntimeError("center is not a point of the field")
        graph = build_local(pts, radius, window.margin)
        if certify_root(graph).certified:
            return graph, radius
        if radius >= window.cap:
            raise CertificationError(f"window cap {window.cap} reached")
        radius += window.growth


def planted_edge(field: LazyField, lam: float, r: float, window: WindowConfig | None = None) -> tuple[bool, float]:
    """Is o adjacent to the planted point at distance r in P_lambda + {o, x}?

    Absent Euclidean edges are final (more points only remove edges).  A present
    edge is final once some witness disk lies inside the window.
    """
    window = window or WindowConfig()
    radius = r + 1.5
    x = geom.exp_ray(0.0, r)
    while True:
        radius = min(radius, window.cap)
        pts = field.query_disk(ORIGIN, radius, lam)
        pts = insert_root(pts, x, ident=("x",))
        pts.root = pts.index_of(ORIGIN.ident)
        n = len(pts)
        method = "bw" if n <= SMALL_N else "qhull"
        if method == "bw":
            aug, tri, _ = bowyer_watson(pts.z)
        else:
            aug, tri = pts.z, qhull_triangulation(pts.z)
        u, v, t1, t2 = _edge_table(tri, n)
        o, xi = pts.root, n - 1
        hit = np.flatnonzero(((u == o) & (v == xi)) | ((u == xi) & (v == o)))
        if not hit.size:
            return False, radius
        centers, _ = circumcircles(aug, tri)
        best = float(_witness_minimum(aug, u[hit], v[hit], t1[hit], t2[hit], centers)[0])
        if best >= 1.0:
            return False, radius
        if 2.0 * math.atanh(best) <= radius - window.margin:
            return True, radius
        if radius >= window.cap:
            raise CertificationError(f"window cap {window.cap} reached")
        radius += window.growth


def _trial_field(seed: int, trial: int, lam: float) -> LazyField:
    key = int(np.random.SeedSequence([seed, trial]).generate_state(1, np.uint64)[0] >> np.uint64(1))
    return LazyField.for_intensity(key, lam)


def root_degree_stats(lam: float, trials: int, seed: int = 0, window: WindowConfig | None = None) -> EstimateReport:
    """Mean degree of o in the Delaunay graph of P_lambda + {o}.

    Trials whose window hits the cap are counted as invalid and flagged.
    """
    degrees, failed = [], 0
    for k in range(trials):
        try:
            graph, _ = certified_graph(_trial_field(seed, k, lam), ORIGIN, lam, window)
        except CertificationError:
            failed += 1
            continue
        degrees.append(graph.degree(graph.root))
    if len(degrees) < 2:
        return EstimateReport(math.nan, math.nan, len(degrees), "root-degree",
                              {"invalid": failed, "flagged": True, "lambda": lam})
    value, se = weighted_mean(degrees)
    return EstimateReport(value, se, len(degrees), "root-degree",
                          {"invalid": failed, "flagged": failed > 0.01 * trials, "lambda": lam})


def edge_probability(lam: float, r: float, trials: int, seed: int = 0,
                     window: WindowConfig | None = None) -> EstimateReport:
    """P(o ~ x) for a planted point x at distance r, with the two-sided bounds in the diagnostics."""
    hits, failed = 0, 0
    for k in range(trials):
        try:
            hits += planted_edge(_trial_field(seed, k, lam), lam, r, window)[0]
        except CertificationError:
            failed += 1
    n = trials - failed
    p, se = proportion(hits, n)
    lower = math.exp(-lam * geom.volume(r / 2.0))
    upper = math.exp(-lam * geom.volume(r / 2.0 - geom.BALL_SLACK))
    return EstimateReport(p, se, n, "planted-edge",
                          {"invalid": failed, "lower": lower, "upper": upper, "lambda": lam, "r": r})
