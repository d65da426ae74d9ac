"""Lazily generated, deterministic Poisson field on the hyperbolic plane.

The plane is cut into the binary horocyclic tiling of the upper half-plane:
tile (level k, offset j) is the box

    2^k * W * j <= x < 2^k * W * (j + 1),   2^k <= y < 2^(k+1)

which has hyperbolic area W/2 for every (k, j).  Tile indices are exact Python
integers and each point is stored in its tile's local coordinates
u + i v with 0 <= u < W, 1 <= v < 2, so nothing underflows however far a
walk wanders.  The base point o of the disk is the half-plane point i, which
is tile (0, 0) at local coordinates 0 + 1i.

Inside a tile the points are produced as the arrivals of a rate
lambda_max * area Poisson process on the mark axis [0, 1] ("Poisson rain"),
so the points with mark <= lambda / lambda_max form an intensity-lambda
process and asking for a smaller lambda only reads a prefix.  Every random
number is a counter-based hash of (seed, k, j, arrival, slot).
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import geom

ROOT_ID = ("o",)
DEFAULT_QUERY_MAX = 30.0
_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix(x):
    """splitmix64 finalizer on uint64 arrays."""
    with np.errstate(over="ignore"):
        x = x + _GOLDEN
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return x ^ (x >> np.uint64(31))


def _mix_int(value: int) -> int:
    """Hash an arbitrary Python int (any sign, any size) to 64 bits."""
    acc = np.uint64(len(bin(value)))
    sign = 1 if value < 0 else 0
    value = abs(value)
    acc = _mix(acc ^ np.uint64(sign))
    while True:
        acc = _mix(acc ^ np.uint64(value & _MASK64))
        value >>= 64
        if not value:
            return int(acc)


def _uniform(keys, counter: int):
    """Uniform doubles in (0, 1) from tile keys and a counter."""
    with np.errstate(over="ignore"):
        h = _mix(_mix(keys ^ np.uint64((counter * 0xD1B54A32D192ED03) & _MASK64)))
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


@dataclass(frozen=True)
class ChunkIndex:
    level: int
    offset: int


@dataclass(frozen=True)
class MarkedPoint:
    position: complex  # disk coordinates in the chunk's reference frame
    mark: float
    chunk: ChunkIndex
    arrival: int


@dataclass(frozen=True)
class Site:
    """A location given by tile and tile-local half-plane coordinates."""

    level: int
    offset: int
    local: complex
    ident: tuple = ROOT_ID

    def global_halfplane(self, width: float):
        """(x, log y) of the point in the global upper half-plane."""
        x = math.ldexp(width * self.offset + self.local.real, self.level)
        log_y = math.log(self.local.imag) + self.level * math.log(2.0)
        return x, log_y


ORIGIN = Site(0, 0, 1j, ROOT_ID)


def halfplane_distance(xa, log_ya, xb, log_yb):
    """Hyperbolic distance between half-plane points given as (x, log y)."""
    xa, xb = np.asarray(xa, float), np.asarray(xb, float)
    log_ya, log_yb = np.asarray(log_ya, float), np.asarray(log_yb, float)
    ya, yb = np.exp(log_ya), np.exp(log_yb)
    with np.errstate(divide="ignore"):
        log_chord = np.log(np.hypot(xa - xb, ya - yb)) - math.log(2.0) - 0.5 * (log_ya + log_yb)
    out = 2.0 * geom.asinh_from_log(log_chord)
    return np.where(np.isneginf(log_chord), 0.0, out)


def site_from_disk(z: complex, width: float) -> Site:
    """Locate a global disk point in the tiling."""
    w = complex(geom.to_halfplane(z))
    level = math.floor(math.log2(w.imag))
    scale = 2.0 ** level
    offset = math.floor(w.real / (width * scale))
    local = complex(w.real / scale - width * offset, w.imag / scale)
    return Site(level, offset, local, ("disk", z))


@dataclass
class LocalPoints:
    """Field points near a center, in the disk frame that puts the center at 0.

    ``ids`` are global identities: (level, offset, arrival) for field points
    and ROOT_ID for o.  ``root`` is the index of the flagged root vertex.
    """

    z: np.ndarray
    marks: np.ndarray
    ids: list
    levels: np.ndarray
    offsets: list
    local: np.ndarray
    center: Site | None = None
    radius: float = 0.0
    root: int | None = None

    def __len__(self):
        return len(self.z)

    def site(self, index: int) -> Site:
        return Site(int(self.levels[index]), self.offsets[index], complex(self.local[index]), self.ids[index])

    def index_of(self, ident) -> int | None:
        for i, other in enumerate(self.ids):
            if other == ident:
                return i
        return None

    def transformed(self, g: geom.Isometry) -> "LocalPoints":
        return LocalPoints(np.asarray(g(self.z)), self.marks, self.ids, self.levels, self.offsets,
                           self.local, self.center, self.radius, self.root)

    def subset(self, mask) -> "LocalPoints":
        idx = np.flatnonzero(mask)
        root = None
        if self.root is not None and mask[self.root]:
            root = int(np.searchsorted(idx, self.root))
        return LocalPoints(self.z[idx], self.marks[idx], [self.ids[i] for i in idx], self.levels[idx],
                           [self.offsets[i] for i in idx], self.local[idx], self.center, self.radius, root)


def empty_points() -> LocalPoints:
    return LocalPoints(np.zeros(0, complex), np.zeros(0), [], np.zeros(0, int), [], np.zeros(0, complex))


def insert_root(points: LocalPoints, root: complex = 0j, ident=ROOT_ID, tol: float = 1e-12) -> LocalPoints:
    """Add a flagged root vertex at ``root`` (frame coordinates)."""
    if len(points) and np.min(np.abs(points.z - root)) <= tol:
        raise ValueError("root coincides with an existing point")
    if ident in points.ids:
        raise ValueError("root already present")
    return LocalPoints(
        np.append(points.z, complex(root)),
        np.append(points.marks, 0.0),
        points.ids + [ident],
        np.append(points.levels, 0),
        points.offsets + [0],
        np.append(points.local, 1j),
        points.center,
        points.radius,
        len(points),
    )


def points_from_array(z, root: int | None = None) -> LocalPoints:
    """Wrap bare disk coordinates (tests, oracles) as a LocalPoints set."""
    z = np.asarray(z, dtype=complex)
    n = len(z)
    return LocalPoints(z, np.zeros(n), [("p", i) for i in range(n)], np.zeros(n, int), [0] * n,
                       np.full(n, 1j), None, 0.0, root)


@dataclass
class LazyField:
    seed: int
    lambda_max: float = 1.0
    tile_width: float = 4.0
    cache_capacity: int = 4096
    query_max: float = DEFAULT_QUERY_MAX
    _cache: OrderedDict = dc_field(default_factory=OrderedDict, repr=False)

    def __post_init__(self):
        if self.lambda_max < 0:
            raise ValueError("negative intensity")
        self._seed_key = np.uint64(_mix_int(int(self.seed)))

    @classmethod
    def for_intensity(cls, seed: int, lambda_max: float, **kwargs) -> "LazyField":
        """Field with tiles sized to hold about two points at lambda_max."""
        width = float(np.clip(4.0 / max(lambda_max, 1e-9), 4.0, 128.0))
        return cls(seed, lambda_max, tile_width=width, **kwargs)

    @property
    def tile_area(self) -> float:
        return self.tile_width / 2.0

    # ------------------------------------------------------------ generation

    def _keys(self, level: int, j_lo: int, count: int):
        """Per-tile 64-bit keys for tiles (level, j_lo .. j_lo + count - 1)."""
        base = _mix(self._seed_key ^ np.uint64(_mix_int(level)))
        lo0 = j_lo & _MASK64
        lo = (np.uint64(lo0) + np.arange(count, dtype=np.uint64)) if count else np.zeros(0, np.uint64)
        carry = lo < np.uint64(lo0)
        hi0 = j_lo >> 64
        hi_keys = np.where(carry, np.uint64(_mix_int(hi0 + 1)), np.uint64(_mix_int(hi0)))
        return _mix(_mix(base ^ hi_keys) ^ lo)

    def _generate(self, keys, threshold: float):
        """Arrivals with mark <= threshold for each key.

        Returns (tile index, arrival number, mark, u, v) arrays.
        """
        rate = self.lambda_max * self.tile_area
        out_tile, out_arrival, out_mark, out_u, out_v = [], [], [], [], []
        if rate <= 0 or threshold <= 0 or len(keys) == 0:
            empty = np.zeros(0)
            return empty.astype(int), empty.astype(int), empty, empty, empty
        active = np.arange(len(keys))
        marks = np.zeros(len(keys))
        arrival = 0
        while active.size:
            k = keys[active]
            marks[active] += -np.log(_uniform(k, 3 * arrival)) / rate
            keep = marks[active] <= threshold
            active = active[keep]
            if not active.size:
                break
            k = k[keep]
            out_tile.append(active)
            out_arrival.append(np.full(active.size, arrival))
            out_mark.append(marks[active].copy())
            out_u.append(self.tile_width * _uniform(k, 3 * arrival + 1))
            # density proportional to 1/v^2 on [1, 2)
            out_v.append(1.0 / (1.0 - 0.5 * _uniform(k, 3 * arrival + 2)))
            arrival += 1
        if not out_tile:
            empty = np.zeros(0)
            return empty.astype(int), empty.astype(int), empty, empty, empty
        return (np.concatenate(out_tile), np.concatenate(out_arrival), np.concatenate(out_mark),
                np.concatenate(out_u), np.concatenate(out_v))

    def chunk_points(self, idx: ChunkIndex, threshold: float = 1.0):
        """(arrival, mark, local) arrays for one tile, cached."""
        key = (idx.level, idx.offset, threshold)
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        _, arrival, mark, u, v = self._generate(self._keys(idx.level, idx.offset, 1), threshold)
        value = (arrival, mark, u + 1j * v)
        self._cache[key] = value
        if len(self._cache) > self.cache_capacity:
            self._cache.popitem(last=False)
        return value

    # ------------------------------------------------------------ queries

    def _level_ranges(self, center: Site, radius: float):
        """Yield (delta, j_lo, count) for the tiles meeting the disk."""
        u, v = center.local.real, center.local.imag
        cy, rho = v * math.cosh(radius), v * math.sinh(radius)
        y_lo, y_hi = v * math.exp(-radius), v * math.exp(radius)
        j0, width = center.offset, self.tile_width
        for delta in range(math.floor(math.log2(y_lo)), math.floor(math.log2(y_hi)) + 1):
            s_lo, s_hi = max(2.0 ** delta, y_lo), min(2.0 ** (delta + 1), y_hi)
            yc = min(max(cy, s_lo), s_hi)
            half = math.sqrt(max(rho * rho - (yc - cy) ** 2, 0.0))
            ends = []
            for x in (u - half, u + half):
                f = x / width
                if delta >= 0:
                    ends.append((j0 + math.floor(f)) >> delta)
                else:
                    ends.append(j0 * (1 << -delta) + math.floor(f * 2.0 ** -delta))
            yield delta, ends[0], ends[1] - ends[0] + 1

    def query_disk(self, center, radius: float, lam: float, include_origin: bool = True) -> LocalPoints:
        """Field points of intensity ``lam`` within ``radius`` of ``center``.

        ``center`` is a Site or a disk point of the global frame.  Returned
        coordinates live in the disk frame z -> (z - w)/(z - conj w) of the
        center's tile-local half-plane coordinates w.
        """
        if lam > self.lambda_max * (1 + 1e-12):
            raise ValueError("requested intensity exceeds lambda_max of the coupled field")
        if lam <= 0:
            raise ValueError("intensity must be positive")
        if radius > self.query_max:
            raise ValueError(f"query radius {radius} beyond supported precision ({self.query_max})")
        if not isinstance(center, Site):
            center = site_from_disk(complex(center), self.tile_width)
        if radius <= 0:
            out = empty_points()
            out.center = center
            return out
        threshold = lam / self.lambda_max
        w = center.local
        j0, k0, width = center.offset, center.level, self.tile_width
        zs, marks, slots, tiles, arrivals, local = [], [], [], [], [], []
        level_info = []
        for delta, j_lo, count in self._level_ranges(center, radius):
            keys = self._keys(k0 + delta, j_lo, count)
            tile, arrival, mark, u, v = self._generate(keys, threshold)
            if not tile.size:
                continue
            if delta >= 0:
                base = float((j_lo << delta) - j0)
                step = float(1 << delta)
            else:
                base = (j_lo - (j0 << -delta)) / 2.0 ** -delta
                step = 2.0 ** delta
            zs.append(2.0 ** delta * (u + 1j * v) + width * (base + step * tile))
            marks.append(mark)
            slots.append(np.full(tile.size, len(level_info)))
            level_info.append((k0 + delta, j_lo))
            tiles.append(tile)
            arrivals.append(arrival)
            local.append(u + 1j * v)
        if zs:
            zeta = np.concatenate(zs)
            eta = (zeta - w) / (zeta - np.conj(w))
            marks_arr = np.concatenate(marks)
            slot_arr, tile_arr = np.concatenate(slots), np.concatenate(tiles)
            arrival_arr, local_arr = np.concatenate(arrivals), np.concatenate(local)
        else:
            eta, marks_arr, local_arr = np.zeros(0, complex), np.zeros(0), np.zeros(0, complex)
            slot_arr = tile_arr = arrival_arr = np.zeros(0, int)
        keep = np.flatnonzero(np.abs(eta) <= math.tanh(radius / 2.0))
        ids, offsets = [], []
        for slot, t, a in zip(slot_arr[keep].tolist(), tile_arr[keep].tolist(), arrival_arr[keep].tolist()):
            level, j_lo = level_info[slot]
            ids.append((level, j_lo + t, a))
            offsets.append(j_lo + t)
        levels_arr = np.array([level_info[s][0] for s in slot_arr[keep].tolist()], dtype=int)
        pts = LocalPoints(eta[keep], marks_arr[keep], ids, levels_arr, offsets, local_arr[keep], center, radius)
        if center.ident != ROOT_ID:
            pts.root = pts.index_of(center.ident)
        if include_origin:
            eta_o = self.frame_coordinates(center, ORIGIN)
            if eta_o is not None and abs(eta_o) <= math.tanh(radius / 2.0):
                if center.ident == ROOT_ID:
                    pts = insert_root(pts, 0j)
                else:
                    root = pts.root
                    pts = insert_root(pts, eta_o)
                    pts.root = root
        return pts

    def frame_coordinates(self, center: Site, target: Site):
        """Disk coordinates of ``target`` in the frame of ``center`` (None if hopelessly far)."""
        delta = target.level - center.level
        if abs(delta) > 1000:
            return None
        if delta >= 0:
            shift = (target.offset << delta) - center.offset
        else:
            shift = (target.offset - (center.offset << -delta)) / 2.0 ** -delta
        if abs(shift) > 1e300:
            return None
        zeta = 2.0 ** delta * target.local + self.tile_width * float(shift)
        w = center.local
        return complex((zeta - w) / (zeta - np.conj(w)))

    def frame_map(self, source: Site, target: Site) -> geom.Isometry:
        """The isometry taking frame coordinates at ``source`` to those at ``target``."""
        delta = source.level - target.level
        if delta >= 0:
            shift = (source.offset << delta) - target.offset
        else:
            shift = (source.offset - (target.offset << -delta)) / 2.0 ** -delta
        s, t = 2.0 ** delta, self.tile_width * float(shift)
        w1, w2 = source.local, target.local
        inv_phi1 = np.array([[-np.conj(w1), w1], [-1.0, 1.0]])
        affine = np.array([[s, t], [0.0, 1.0]])
        phi2 = np.array([[1.0, -w2], [1.0, -np.conj(w2)]])
        m = phi2 @ affine @ inv_phi1
        lam = np.sqrt(np.linalg.det(m))
        return geom.Isometry(complex(m[0, 0] / lam), complex(m[0, 1] / lam))


def sample_chunk(field: LazyField, idx: ChunkIndex) -> list[MarkedPoint]:
    """All intensity-lambda_max points of one tile, in the tile's disk frame.

    The tile frame is the Cayley image of its local half-plane coordinates.
    """
    arrival, mark, local = field.chunk_points(idx)
    disk = geom.from_halfplane(local)
    return [MarkedPoint(complex(z), float(m), idx, int(a)) for z, m, a in zip(np.atleast_1d(disk), mark, arrival)]


def export_snapshot(field: LazyField, chunks, stream, lam: float | None = None) -> None:
    """Write chunk contents as text: a header per chunk, then `re im mark level offset` rows."""
    threshold = 1.0 if lam is None else lam / field.lambda_max
    stream.write(f"# seed {field.seed} lambda_max {field.lambda_max!r} tile_width {field.tile_width!r}\n")
    for idx in chunks:
        arrival, mark, local = field.chunk_points(idx, threshold)
        stream.write(f"# chunk {idx.level} {idx.offset} scale 2^{idx.level} "
                     f"shift {field.tile_width!r}*{idx.offset} frame cayley\n")
        disk = np.atleast_1d(geom.from_halfplane(local))
        for z, m in zip(disk, mark):
            stream.write(f"{z.real:.17g} {z.imag:.17g} {m:.17g} {idx.level} {idx.offset}\n")
