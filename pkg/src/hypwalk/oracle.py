"""Brute-force reference computations used to check the fast code paths.

Nothing here shares code with the Delaunay builder beyond the distance kernel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geom

BISECTOR_HALF_LENGTH = 30.0
MAX_POINTS = 200


@dataclass
class OracleReport:
    instance: str
    agree: bool
    mismatches: list = field(default_factory=list)
    ties: list = field(default_factory=list)
    explained: bool = True
    truncation: float = BISECTOR_HALF_LENGTH


def _closer(c, x, p):
    """Sign of d(c, x) - d(c, p): negative where x is strictly closer."""
    return np.abs(c - x) ** 2 * geom.one_minus_abs2(p) - np.abs(c - p) ** 2 * geom.one_minus_abs2(x)


def _ear_edges(indices, angles) -> set:
    """Triangulation of a convex cocircular polygon by repeatedly cutting off the smallest index."""
    ring = [i for _, i in sorted(zip(angles, indices))]
    edges = {tuple(sorted((ring[k], ring[(k + 1) % len(ring)]))) for k in range(len(ring))}
    while len(ring) > 3:
        k = ring.index(min(ring))
        prev, nxt = ring[k - 1], ring[(k + 1) % len(ring)]
        edges.add(tuple(sorted((prev, nxt))))
        ring.pop(k)
    return edges


def naive_delaunay(points, half_length: float = BISECTOR_HALF_LENGTH, tol: float = 1e-7,
                   report: OracleReport | None = None) -> set:
    """Hyperbolic Delaunay edges by the bisector-interval method.

    For each pair (p, q) the candidate centers are the bisector points at
    signed arclength s in [-L, L] from the midpoint.  A third point x removes
    the parameters where it is strictly closer than p; since two geodesics cross
    at most once this is a ray, located by bisection to 1e-9.  The pair is an
    edge iff the removed rays leave a gap.  Near-zero gaps are decided by the
    smallest-index ear rule on the cocircular points.
    """
    z = np.asarray(points, dtype=complex)
    n = len(z)
    if n > MAX_POINTS:
        raise ValueError(f"oracle refuses more than {MAX_POINTS} points")
    edges = set()
    if n < 2:
        return edges
    if n == 2:
        return {(0, 1)}
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    pi = np.array([p[0] for p in pairs])
    # frame per pair: midpoint to 0, p to the negative real axis
    mids = np.array([geom.midpoint(z[i], z[j]) for i, j in pairs])
    s = np.sqrt(geom.one_minus_abs2(mids))
    a, b = 1.0 / s, -mids / s  # z -> (a z + b)/(conj(b) z + a): sends mid to 0

    def to_frame(w):
        return (a[:, None] * w + b[:, None]) / (np.conj(b)[:, None] * w + a[:, None])

    zi = to_frame(z[pi][:, None])[:, 0]
    turn = np.exp(-1j * (np.angle(-zi)))
    p_frame = zi * turn
    others = np.array([[k for k in range(n) if k not in (i, j)] for i, j in pairs]).reshape(len(pairs), n - 2)
    x_frame = to_frame(z[others]) * turn[:, None]
    p_b = p_frame[:, None]

    def center(sv):
        return 1j * np.tanh(sv / 2.0)

    lo_val = _closer(center(np.full(x_frame.shape, -half_length)), x_frame, p_b)
    hi_val = _closer(center(np.full(x_frame.shape, half_length)), x_frame, p_b)
    blocks_all = (lo_val < 0) & (hi_val < 0)
    left_ray = (lo_val < 0) & (hi_val >= 0)
    right_ray = (lo_val >= 0) & (hi_val < 0)
    lo = np.full(x_frame.shape, -half_length)
    hi = np.full(x_frame.shape, half_length)
    while np.max(hi - lo) > 1e-9:
        mid = 0.5 * (lo + hi)
        val = _closer(center(mid), x_frame, p_b)
        # keep the sign change bracketed
        go_right = np.where(left_ray, val < 0, val >= 0)
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
    cut = 0.5 * (lo + hi)
    left_end = np.where(left_ray, cut, -half_length).max(axis=1) if n > 2 else np.full(len(pairs), -half_length)
    right_end = np.where(right_ray, cut, half_length).min(axis=1) if n > 2 else np.full(len(pairs), half_length)
    gap = right_end - left_end
    blocked = blocks_all.any(axis=1) if n > 2 else np.zeros(len(pairs), bool)
    for k, (i, j) in enumerate(pairs):
        if blocked[k]:
            continue
        if gap[k] > tol:
            edges.add((i, j))
            continue
        if gap[k] < -tol:
            continue
        # tie: every point whose ray ends near the critical parameter is on the circle
        s_star = 0.5 * (left_end[k] + right_end[k])
        near = (np.abs(cut[k] - s_star) <= 10 * tol) & (left_ray[k] | right_ray[k])
        circle = [i, j] + [int(v) for v in others[k][near]]
        c = center(s_star)
        frame_pts = np.concatenate([[p_frame[k], -p_frame[k]], x_frame[k][near]])
        angles = np.angle(frame_pts - c)
        if report is not None:
            report.ties.append(tuple(sorted(circle)))
        if (i, j) in _ear_edges(circle, angles):
            edges.add((i, j))
    return edges


def horofunction_limit(theta: float, z, t: float):
    """d(x_t, o) - d(x_t, z) for x_t at distance t toward theta, in log domain."""
    if t > 200:
        raise ValueError("t beyond oracle range")
    s, phi = geom.to_polar(z)
    out = t - geom.dist_polar(t, theta, s, phi)
    out = np.where(np.asarray(s) == 0, 0.0, out)
    return out if out.ndim else float(out)


def compare_with_graph(z, graph_edges: set, label: str = "") -> OracleReport:
    rep = OracleReport(label, True)
    ref = naive_delaunay(z, report=rep)
    diff = ref ^ graph_edges
    rep.mismatches = sorted(diff)
    tied = {tuple(sorted(e)) for c in rep.ties for e in [(c[a], c[b]) for a in range(len(c)) for b in range(a + 1, len(c))]}
    rep.agree = not diff
    rep.explained = all(e in tied for e in diff)
    return rep


def read_graph_export(stream):
    """Parse the adjacency text written by LocalGraph.export into (coords, edges)."""
    coords, edges = {}, set()
    for line in stream:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("v "):
            parts = line.split()
            coords[int(parts[1])] = complex(float(parts[2]), float(parts[3]))
            continue
        head, _, rest = line.partition(":")
        i = int(head)
        for tok in rest.split():
            j = int(tok)
            edges.add((min(i, j), max(i, j)))
    z = np.array([coords[k] for k in sorted(coords)])
    return z, edges


def random_points_in_ball(rng: np.random.Generator, n: int, radius: float):
    r = geom.uniform_disk_radius(rng.uniform(size=n), radius)
    return geom.exp_ray(rng.uniform(0.0, geom.TWO_PI, n), r)

