"""Hyperbolic plane geometry in the Poincare disk, curvature -1.

Points are plain complex numbers (or numpy complex arrays) with |z| < 1.
The half-plane model is reached through the Cayley map z -> (z - i)/(z + i).

Large distances are handled in a polar "log-domain" form: a point at distance
t from the origin in direction alpha is stored as the pair (t, alpha) and the
helpers ``dist_polar`` / ``kak_compose`` never form 1 - |z| explicitly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

TWO_PI = 2.0 * math.pi
BALL_SLACK = 3.0  # r_1 in the ball-intersection bound


def _as_array(z):
    return np.asarray(z, dtype=complex)


def check_point(z) -> None:
    """Raise ValueError unless every entry lies strictly inside the unit disk."""
    if np.any(np.abs(_as_array(z)) >= 1.0):
        raise ValueError("point outside the open unit disk")


def normalize_angle(theta):
    """Map angles into [0, 2*pi)."""
    out = np.mod(theta, TWO_PI)
    # mod rounds tiny negative inputs up to exactly 2*pi
    out = np.where(out >= TWO_PI, 0.0, out)
    return out if out.ndim else float(out)


def angle_gap(a, b):
    """Unsigned circular distance between two angles, in [0, pi]."""
    d = np.abs(np.mod(np.asarray(a) - np.asarray(b) + math.pi, TWO_PI) - math.pi)
    return d if np.ndim(d) else float(d)


# ---------------------------------------------------------------- stable scalar helpers

def log_cosh(x):
    x = np.abs(np.asarray(x, dtype=float))
    return x + np.log1p(np.exp(-2.0 * x)) - math.log(2.0)


def log_sinh(x):
    """log(sinh x) for x > 0."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return x + np.log(-np.expm1(-2.0 * x)) - math.log(2.0)


def asinh_from_log(log_x):
    """asinh(exp(log_x)) without overflow."""
    log_x = np.asarray(log_x, dtype=float)
    big = log_x > 20.0
    small_val = np.arcsinh(np.exp(np.minimum(log_x, 20.0)))
    big_val = log_x + np.log1p(np.sqrt(1.0 + np.exp(-2.0 * np.maximum(log_x, 20.0))))
    out = np.where(big, big_val, small_val)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------- distances

def one_minus_abs2(z):
    r = np.abs(z)
    return (1.0 - r) * (1.0 + r)


def dist(p, q):
    """Hyperbolic distance between disk points (vectorized)."""
    p = _as_array(p)
    q = _as_array(q)
    num = np.abs(p - q)
    den = np.sqrt(one_minus_abs2(p) * one_minus_abs2(q))
    with np.errstate(divide="ignore"):
        out = 2.0 * np.arcsinh(num / den)
    return out if out.ndim else float(out)


def dist_origin(z):
    out = 2.0 * np.arctanh(np.abs(_as_array(z)))
    return out if out.ndim else float(out)


def dist_polar(t1, a1, t2, a2):
    """Distance between the points at polar coordinates (t1, a1) and (t2, a2).

    Uses sinh^2(d/2) = sinh^2((t1-t2)/2) + sinh(t1) sinh(t2) sin^2((a1-a2)/2),
    evaluated through logs so that t up to ~1e3 is fine.
    """
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    half_gap = np.abs(np.sin((np.asarray(a1) - np.asarray(a2)) / 2.0))
    with np.errstate(divide="ignore"):
        radial = 2.0 * log_sinh(np.abs(t1 - t2) / 2.0)
        angular = log_sinh(t1) + log_sinh(t2) + 2.0 * np.log(half_gap)
    log_s2 = np.logaddexp(radial, angular)
    out = 2.0 * asinh_from_log(0.5 * log_s2)
    out = np.where(np.isneginf(log_s2), 0.0, out)
    return out if out.ndim else float(out)


def to_polar(z):
    """(distance from origin, argument) of disk points."""
    z = _as_array(z)
    return dist_origin(z), normalize_angle(np.angle(z))


def exp_ray(theta, t):
    """Point at distance t from the origin along direction theta."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("ray parameter must be nonnegative")
    out = np.tanh(np.asarray(t, dtype=float) / 2.0) * np.exp(1j * np.asarray(theta, dtype=float))
    return out if out.ndim else complex(out)


def midpoint(p, q):
    """Hyperbolic midpoint of two disk points."""
    g = translation_to(p)
    w = g.inverse()(q)
    s = dist_origin(w)
    return g(exp_ray(np.angle(w), s / 2.0))


# ---------------------------------------------------------------- half-plane bridge

def to_halfplane(z):
    z = _as_array(z)
    out = 1j * (1.0 + z) / (1.0 - z)
    return out if out.ndim else complex(out)


def from_halfplane(w):
    w = _as_array(w)
    out = (w - 1j) / (w + 1j)
    return out if out.ndim else complex(out)


def halfplane_dist_from_i(w):
    """d(i, w) in the upper half-plane."""
    w = _as_array(w)
    out = 2.0 * np.log((np.abs(w - 1j) + np.abs(w + 1j)) / (2.0 * np.sqrt(w.imag)))
    return out if out.ndim else float(out)


def halfplane_dist(w1, w2):
    w1 = _as_array(w1)
    w2 = _as_array(w2)
    out = 2.0 * np.arcsinh(np.abs(w1 - w2) / (2.0 * np.sqrt(w1.imag * w2.imag)))
    return out if out.ndim else float(out)


def halfplane_f_infinity(w):
    """Busemann-plus-distance at the boundary point infinity, seen from i."""
    w = _as_array(w)
    out = 2.0 * np.log((np.abs(w - 1j) + np.abs(w + 1j)) / 2.0)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------- horofunctions

def busemann(theta, z):
    """Busemann function toward e^{i theta}, zero at the origin, +t along the ray."""
    z = _as_array(z)
    rho = np.abs(z)
    # |z - e^{i theta}|^2 without rounding |e^{i theta}|
    gap2 = (1.0 - rho) ** 2 + 4.0 * rho * np.sin((np.angle(z) - np.asarray(theta)) / 2.0) ** 2
    out = np.log(one_minus_abs2(z) / gap2)
    return out if out.ndim else float(out)


def f_level(theta, z):
    return busemann(theta, z) + dist_origin(z)


def cone_angle(r):
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("cone angle needs r > 0")
    out = 2.0 * np.arctan(1.0 / np.sqrt(np.expm1(r)))
    return out if out.ndim else float(out)


def ball_intersection_radius(p, q):
    return max(dist(p, q) / 2.0 - BALL_SLACK, 0.0)


# ---------------------------------------------------------------- isometries

@dataclass(frozen=True)
class Isometry:
    """z -> (a z + b) / (conj(b) z + conj(a)) with |a|^2 - |b|^2 = 1."""

    a: complex = 1.0 + 0j
    b: complex = 0j

    def __post_init__(self):
        det = abs(self.a) ** 2 - abs(self.b) ** 2
        if det <= 0:
            raise ValueError("not a disk isometry")
        if abs(det - 1.0) > 1e-12:
            s = math.sqrt(det)
            object.__setattr__(self, "a", complex(self.a) / s)
            object.__setattr__(self, "b", complex(self.b) / s)

    def __call__(self, z):
        z = _as_array(z)
        out = (self.a * z + self.b) / (np.conj(self.b) * z + np.conj(self.a))
        return out if out.ndim else complex(out)

    def __matmul__(self, other: "Isometry") -> "Isometry":
        a1, b1, a2, b2 = self.a, self.b, other.a, other.b
        return Isometry(a1 * a2 + b1 * np.conj(b2), a1 * b2 + b1 * np.conj(a2))

    def inverse(self) -> "Isometry":
        return Isometry(np.conj(self.a), -self.b)

    @property
    def translation_length(self) -> float:
        """Distance moved by the origin."""
        return dist_origin(self(0j))


def rotation(theta) -> Isometry:
    return Isometry(complex(np.exp(0.5j * theta)), 0j)


def translation(t) -> Isometry:
    """Translation by t along the real diameter."""
    return Isometry(complex(math.cosh(t / 2.0)), complex(math.sinh(t / 2.0)))


def translation_to(x) -> Isometry:
    """The transvection along the geodesic through 0 and x, sending 0 to x."""
    x = complex(x)
    s = math.sqrt(1.0 - abs(x) ** 2)
    return Isometry(1.0 / s, x / s)


def central_symmetry(x) -> Isometry:
    """The involution swapping the origin and x: z -> (x - z)/(1 - conj(x) z)."""
    x = complex(x)
    check_point(x)
    s = math.sqrt((1.0 - abs(x)) * (1.0 + abs(x)))
    if abs(x) == 0.0:
        return Isometry()
    return Isometry(-1j / s, 1j * x / s)


def random_isometry(rng: np.random.Generator, max_shift: float = 3.0) -> Isometry:
    shift = exp_ray(rng.uniform(0, TWO_PI), rng.uniform(0, max_shift))
    return translation_to(shift) @ rotation(rng.uniform(0, TWO_PI))


# ---------------------------------------------------------------- polar group elements

def kak_compose(alpha, t, beta, a, b):
    """Right-multiply the elements R(alpha) A(t) R(beta) by the SU(1,1) maps (a, b).

    All arguments broadcast.  Returns the new (alpha, t, beta).  The distance
    parameter t is carried through log sinh / log cosh so that it stays exact
    for t in the hundreds.
    """
    eb = np.exp(0.5j * np.asarray(beta))
    n11 = eb * a
    n12 = eb * b
    n21 = np.conj(eb) * np.conj(b)
    n22 = np.conj(eb) * np.conj(a)
    tau = np.tanh(np.asarray(t, dtype=float) / 2.0)
    p11 = n11 + tau * n21
    p12 = n12 + tau * n22
    lc = log_cosh(np.asarray(t, dtype=float) / 2.0)
    with np.errstate(divide="ignore"):
        log_s = lc + np.log(np.abs(p12))
    t_new = 2.0 * asinh_from_log(log_s)
    t_new = np.where(np.isneginf(log_s), 0.0, t_new)
    arg11 = np.angle(p11)
    arg12 = np.angle(p12)
    alpha_new = np.mod(np.asarray(alpha) + arg11 + arg12, TWO_PI)
    beta_new = np.mod(arg11 - arg12, TWO_PI)
    return alpha_new, t_new, beta_new


def kak_from_isometry(g: Isometry):
    """Polar decomposition (alpha, t, beta) of a disk isometry."""
    t = 2.0 * math.asinh(abs(g.b))
    s = np.angle(g.a)
    d = np.angle(g.b) if abs(g.b) > 0 else s
    return float(np.mod(s + d, TWO_PI)), t, float(np.mod(s - d, TWO_PI))


def isometry_from_kak(alpha, t, beta) -> Isometry:
    return rotation(alpha) @ translation(t) @ rotation(beta)


# ---------------------------------------------------------------- volumes

@dataclass(frozen=True)
class VolumeProfile:
    """Ball volume V(r) and sphere area v(r) = V'(r) in H^d."""

    dim: int = 2

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dimension must be at least 2")

    @property
    def sphere_const(self) -> float:
        """Area of the unit Euclidean sphere S^{d-1}."""
        d = self.dim
        return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)

    def density(self, r):
        r = np.asarray(r, dtype=float)
        out = np.where(r > 0, self.sphere_const * np.sinh(np.maximum(r, 0.0)) ** (self.dim - 1), 0.0)
        return out if out.ndim else float(out)

    def log_density(self, r):
        return math.log(self.sphere_const) + (self.dim - 1) * log_sinh(np.asarray(r, dtype=float))

    def _scaled_integral(self, r: float) -> float:
        """J = e^{-n r} * int_0^r sinh^n(s) ds with n = dim - 1."""
        n = self.dim - 1
        if r < 2.0:
            val, _ = integrate.quad(lambda s: math.sinh(s) ** n, 0.0, r, epsabs=0.0, epsrel=1e-13)
            return val * math.exp(-n * r)
        e2 = math.exp(-2.0 * r)
        j_prev2 = r  # J_0
        j_prev1 = (math.cosh(r) - 1.0) * math.exp(-r) if r < 700 else 0.5  # J_1
        if n == 1:
            return j_prev1
        j = {0: j_prev2, 1: j_prev1}
        for m in range(2, n + 1):
            lead = ((1.0 - e2) / 2.0) ** (m - 1) * (1.0 + e2) / 2.0 / m
            j[m] = lead - (m - 1) / m * e2 * j[m - 2]
        return j[n]

    def log_volume(self, r: float) -> float:
        if r <= 0:
            return -math.inf
        if self.dim == 2:
            return math.log(4.0 * math.pi) + 2.0 * float(log_sinh(r / 2.0))
        n = self.dim - 1
        return math.log(self.sphere_const) + n * r + math.log(self._scaled_integral(r))

    def volume(self, r):
        if np.ndim(r):
            return np.array([self.volume(float(x)) for x in np.ravel(r)]).reshape(np.shape(r))
        if r <= 0:
            return 0.0
        if self.dim == 2:
            return 4.0 * math.pi * math.sinh(r / 2.0) ** 2
        return math.exp(self.log_volume(r))

    def radius_for_intensity(self, lam: float) -> float:
        """R_lambda = 2/(d-1) log(1/lambda)."""
        return 2.0 / (self.dim - 1) * math.log(1.0 / lam)


PLANE = VolumeProfile(2)


def volume(r, dim: int = 2):
    return VolumeProfile(dim).volume(r)


def density(r, dim: int = 2):
    return VolumeProfile(dim).density(r)


def uniform_disk_radius(u, radius):
    """Inverse CDF of the hyperbolic distance of a uniform point in a ball of given radius."""
    return np.arccosh(1.0 + u * (np.cosh(radius) - 1.0))
