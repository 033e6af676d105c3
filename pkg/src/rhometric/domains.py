"""Planar domains: membership, boundary distance, boundary sampling.

Three domain variants are supported:

* :class:`HalfPlaneWindow` -- the box ``[x_lo, x_hi] x (0, y_max)`` of the
  upper half-plane.  Only the bottom segment is boundary; the side and top
  walls are reflecting (no path crosses them) and do not count towards the
  boundary distance, which is therefore simply ``y``.
* :class:`UnitDisk`.
* :class:`Snowflake` -- the Koch-type domain with self-adjusting removal
  ratios, represented by its level-``depth`` polygon.

All variants are frozen dataclasses. The array helpers (``*_many``) take
``(m, 2)`` arrays and skip validation; the module-level functions take
single points and raise on invalid input.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidDigit, OutOfRange, PointOutsideDomain, RhoMetricError, UnsupportedMode

SQRT3 = math.sqrt(3.0)
# Base triangle of the snowflake (counter-clockwise); Sigma is the bottom side.
TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, SQRT3 / 2.0]])
TRIANGLE_CENTROID = TRIANGLE.mean(axis=0)

BOUNDARY_TOL = 1e-9


class Point(NamedTuple):
    x: float
    y: float


def _as_points(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    return arr.reshape(-1, 2)


def _seg_distance(points: np.ndarray, segs: np.ndarray, chunk: int = 2_000_000) -> np.ndarray:
    """Minimum Euclidean distance from each point to a set of segments.

    ``segs`` has rows ``x0, y0, x1, y1``. Brute force, chunked over points.
    """
    points = _as_points(points)
    out = np.empty(len(points))
    a = segs[:, :2]
    d = segs[:, 2:] - a
    dd = np.einsum("ij,ij->i", d, d)
    step = max(1, chunk // max(1, len(segs)))
    for lo in range(0, len(points), step):
        p = points[lo:lo + step, None, :]
        w = p - a[None]
        t = np.clip(np.einsum("mij,ij->mi", w, d) / dd[None], 0.0, 1.0)
        diff = w - t[..., None] * d[None]
        out[lo:lo + step] = np.sqrt(np.min(np.einsum("mij,mij->mi", diff, diff), axis=1))
    return out


def _even_odd(points: np.ndarray, segs: np.ndarray, chunk: int = 2_000_000) -> np.ndarray:
    """Even-odd (ray casting to +x) polygon membership."""
    points = _as_points(points)
    out = np.empty(len(points), dtype=bool)
    x0, y0, x1, y1 = segs.T
    step = max(1, chunk // max(1, len(segs)))
    for lo in range(0, len(points), step):
        px = points[lo:lo + step, 0:1]
        py = points[lo:lo + step, 1:2]
        straddle = (y0[None] > py) != (y1[None] > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = x0[None] + (py - y0[None]) * (x1 - x0)[None] / (y1 - y0)[None]
        hits = straddle & (px < xcross)
        out[lo:lo + step] = (np.count_nonzero(hits, axis=1) % 2) == 1
    return out


# ---------------------------------------------------------------------------
# Domain variants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HalfPlaneWindow:
    x_lo: float = 0.0
    x_hi: float = 1.0
    y_max: float = 1.0
    john_alpha: float | None = None

    kind = "half-plane-window"

    def __post_init__(self):
        if not self.x_lo < self.x_hi:
            raise RhoMetricError("HalfPlaneWindow needs x_lo < x_hi")
        if not self.y_max > 0:
            raise RhoMetricError("HalfPlaneWindow needs y_max > 0")

    def inside_many(self, pts: np.ndarray) -> np.ndarray:
        pts = _as_points(pts)
        x, y = pts[:, 0], pts[:, 1]
        return (x > self.x_lo) & (x < self.x_hi) & (y > 0) & (y < self.y_max)

    def distance_many(self, pts: np.ndarray) -> np.ndarray:
        return np.abs(_as_points(pts)[:, 1])

    def in_closure_many(self, pts: np.ndarray, tol: float = BOUNDARY_TOL) -> np.ndarray:
        pts = _as_points(pts)
        x, y = pts[:, 0], pts[:, 1]
        return (x >= self.x_lo - tol) & (x <= self.x_hi + tol) & (y >= -tol) & (y <= self.y_max + tol)

    def inward_normal(self, p) -> np.ndarray:
        return np.array([0.0, 1.0])

    def grid_frame(self):
        """Root tiling ``(origin, h0, nx, ny)`` used by the Whitney grid."""
        width = self.x_hi - self.x_lo
        if self.y_max >= width:
            h0, nx = width, 1
        else:
            nx = math.ceil(width / self.y_max - 1e-12)
            h0 = width / nx
        ny = max(1, int(math.floor(self.y_max / h0 + 1e-12)))
        return np.array([self.x_lo, 0.0]), h0, nx, ny

    @property
    def boundary_length(self) -> float:
        return self.x_hi - self.x_lo


@dataclass(frozen=True)
class UnitDisk:
    john_alpha: float | None = None

    kind = "unit-disk"

    def inside_many(self, pts: np.ndarray) -> np.ndarray:
        pts = _as_points(pts)
        return np.hypot(pts[:, 0], pts[:, 1]) < 1.0

    def distance_many(self, pts: np.ndarray) -> np.ndarray:
        pts = _as_points(pts)
        return np.abs(1.0 - np.hypot(pts[:, 0], pts[:, 1]))

    def in_closure_many(self, pts: np.ndarray, tol: float = BOUNDARY_TOL) -> np.ndarray:
        pts = _as_points(pts)
        return np.hypot(pts[:, 0], pts[:, 1]) <= 1.0 + tol

    def inward_normal(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return -p / np.hypot(*p)

    def grid_frame(self):
        return np.array([-1.0, -1.0]), 2.0, 1, 1

    @property
    def boundary_length(self) -> float:
        return 2.0 * math.pi


@dataclass(frozen=True)
class SnowflakeLevels:
    """Segments of the side Sigma at every construction level.

    ``lengths[k]`` is l_k, ``alphas[k]`` is the removal ratio used to go from
    level k-1 to level k (``alphas[0]`` is NaN). ``segments[k]`` is a
    ``(4**k, 4)`` array of ``x0, y0, x1, y1`` and ``addresses[k]`` the
    matching digit strings, both in left-to-right order along Sigma.
    """

    s: float
    depth: int
    lengths: tuple[float, ...]
    alphas: tuple[float, ...]
    segments: tuple[np.ndarray, ...] = field(repr=False, compare=False)
    addresses: tuple[tuple[str, ...], ...] = field(repr=False, compare=False)

    def polygon_segments(self, level: int | None = None) -> np.ndarray:
        """All ``3 * 4**level`` segments of the closed polygon, counter-clockwise."""
        level = self.depth if level is None else level
        sigma = self.segments[level]
        parts = [sigma]
        for k in (1, 2):
            ang = 2.0 * math.pi * k / 3.0
            rot = np.array([[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]])
            p0 = (sigma[:, :2] - TRIANGLE_CENTROID) @ rot.T + TRIANGLE_CENTROID
            p1 = (sigma[:, 2:] - TRIANGLE_CENTROID) @ rot.T + TRIANGLE_CENTROID
            parts.append(np.hstack([p0, p1]))
        return np.vstack(parts)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["address", "x0", "y0", "x1", "y1", "level", "length"])
            for k in range(self.depth + 1):
                for addr, seg in zip(self.addresses[k], self.segments[k]):
                    w.writerow([addr, *(repr(float(v)) for v in seg), k, repr(self.lengths[k])])


def snowflake_build(s: float, depth: int) -> SnowflakeLevels:
    """Build the snowflake side Sigma down to level ``depth``.

    The removal ratio solves ``alpha = x (1 - alpha) / 2`` with
    ``x = l_k ** (1 - 2 s)``, i.e. ``alpha = x / (2 + x)``; every segment
    of length l_k is replaced by four segments of length
    ``l_{k+1} = l_k (1 - alpha) / 2`` with an outward tent over the removed
    middle part.
    """
    if not 0.0 < s < 0.5:
        raise OutOfRange(f"snowflake exponent s must lie in (0, 1/2), got {s}")
    if depth < 1:
        raise OutOfRange(f"snowflake depth must be >= 1, got {depth}")
    lengths = [1.0]
    alphas = [math.nan]
    segs = [np.array([[0.0, 0.0, 1.0, 0.0]])]
    addrs: list[tuple[str, ...]] = [("",)]
    for k in range(depth):
        lk = lengths[-1]
        x = lk ** (1.0 - 2.0 * s)
        alpha = x / (2.0 + x)
        lnext = lk * (1.0 - alpha) / 2.0
        height = math.sqrt(max(lnext * lnext - (alpha * lk / 2.0) ** 2, 0.0))
        prev = segs[-1]
        p = prev[:, :2]
        q = prev[:, 2:]
        u = (q - p) / lk
        n = np.column_stack([u[:, 1], -u[:, 0]])  # outward for a CCW polygon
        a = p + lnext * u
        b = q - lnext * u
        m = p + 0.5 * lk * u + height * n
        children = np.stack(
            [np.hstack([p, a]), np.hstack([a, m]), np.hstack([m, b]), np.hstack([b, q])], axis=1
        ).reshape(-1, 4)
        segs.append(children)
        addrs.append(tuple(parent + d for parent in addrs[-1] for d in "1234"))
        lengths.append(lnext)
        alphas.append(alpha)
    return SnowflakeLevels(s, depth, tuple(lengths), tuple(alphas), tuple(segs), tuple(addrs))


def snowflake_point(levels: SnowflakeLevels, address: str) -> Point:
    """Left endpoint of the segment of Sigma with the given address."""
    if any(c not in "1234" for c in address):
        raise InvalidDigit(f"snowflake address digits must be in 1..4, got {address!r}")
    k = len(address)
    if k > levels.depth:
        raise OutOfRange(f"address length {k} exceeds built depth {levels.depth}")
    index = 0
    for c in address:
        index = 4 * index + (int(c) - 1)
    x0, y0 = levels.segments[k][index, :2]
    return Point(float(x0), float(y0))


@dataclass(frozen=True)
class Snowflake:
    s: float
    depth: int
    john_alpha: float | None = None

    kind = "snowflake"

    def __post_init__(self):
        if not 0.0 < self.s < 0.5:
            raise RhoMetricError("Snowflake needs 0 < s < 1/2")
        if self.depth < 1:
            raise RhoMetricError("Snowflake needs depth >= 1")

    @cached_property
    def levels(self) -> SnowflakeLevels:
        return snowflake_build(self.s, self.depth)

    @cached_property
    def polygon(self) -> np.ndarray:
        return self.levels.polygon_segments()

    @property
    def vertices(self) -> np.ndarray:
        return self.polygon[:, :2]

    def inside_many(self, pts: np.ndarray) -> np.ndarray:
        pts = _as_points(pts)
        return _even_odd(pts, self.polygon) & (_seg_distance(pts, self.polygon) > 1e-12)

    def distance_many(self, pts: np.ndarray) -> np.ndarray:
        return _seg_distance(pts, self.polygon)

    def in_closure_many(self, pts: np.ndarray, tol: float = BOUNDARY_TOL) -> np.ndarray:
        pts = _as_points(pts)
        return _even_odd(pts, self.polygon) | (_seg_distance(pts, self.polygon) <= tol)

    def inward_normal(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        segs = self.polygon
        d = _seg_distance_each(p, segs)
        near = np.flatnonzero(d <= d.min() + 1e-12)
        normals = []
        for i in near:
            u = segs[i, 2:] - segs[i, :2]
            u = u / np.hypot(*u)
            normals.append([-u[1], u[0]])
        v = np.sum(normals, axis=0)
        return v / np.hypot(*v)

    def grid_frame(self):
        pts = self.vertices
        lo = pts.min(axis=0)
        side = float((pts.max(axis=0) - lo).max()) * (1.0 + 1e-6)
        return lo - 0.5e-6 * side, side, 1, 1

    @property
    def boundary_length(self) -> float:
        return 3.0 * 4 ** self.depth * self.levels.lengths[-1]


def _seg_distance_each(p: np.ndarray, segs: np.ndarray) -> np.ndarray:
    a = segs[:, :2]
    d = segs[:, 2:] - a
    w = p[None] - a
    t = np.clip(np.einsum("ij,ij->i", w, d) / np.einsum("ij,ij->i", d, d), 0.0, 1.0)
    diff = w - t[:, None] * d
    return np.hypot(diff[:, 0], diff[:, 1])


Domain = HalfPlaneWindow | UnitDisk | Snowflake


# ---------------------------------------------------------------------------
# Point queries
# ---------------------------------------------------------------------------


def is_inside(domain: Domain, p) -> bool:
    """True iff ``p`` lies in the open domain."""
    return bool(domain.inside_many(_as_points(p))[0])


def boundary_distance(domain: Domain, p, closure: bool = False) -> float:
    """Euclidean distance from ``p`` to the domain boundary.

    With ``closure=True`` points on the boundary (or anywhere in the closure)
    are accepted, so boundary samples evaluate to 0.
    """
    pts = _as_points(p)
    ok = domain.in_closure_many(pts) if closure else domain.inside_many(pts)
    if not ok[0]:
        raise PointOutsideDomain(f"point {tuple(pts[0])} is outside the {domain.kind} domain")
    return float(domain.distance_many(pts)[0])


def _spaced(count: int, n: int) -> np.ndarray:
    return (np.arange(n) * count) // n


def sample_boundary(domain: Domain, n: int, mode: str = "uniform", cantor=None) -> list[Point]:
    """Deterministic boundary samples.

    ``uniform`` spaces points evenly in the boundary parameter (x for the
    window, angle for the disk, arc length for the snowflake polygon).
    ``endpoints-of-set`` picks evenly indexed endpoints of a Cantor set on
    the window's boundary segment (pass ``cantor``) or left endpoints of the
    snowflake segments addressed by ``{2,3}^depth``.
    """
    if n < 2:
        raise OutOfRange("sample_boundary needs n >= 2")
    if mode == "uniform":
        if isinstance(domain, HalfPlaneWindow):
            xs = np.linspace(domain.x_lo, domain.x_hi, n)
            return [Point(float(x), 0.0) for x in xs]
        if isinstance(domain, UnitDisk):
            ang = 2.0 * math.pi * np.arange(n) / n
            return [Point(float(math.cos(a)), float(math.sin(a))) for a in ang]
        verts = domain.vertices
        if n > len(verts):
            raise OutOfRange(f"only {len(verts)} polygon vertices available")
        return [Point(*map(float, verts[i])) for i in _spaced(len(verts), n)]
    if mode == "endpoints-of-set":
        if isinstance(domain, HalfPlaneWindow) and cantor is not None:
            ends = cantor.endpoints()
            if n > len(ends):
                raise OutOfRange(f"only {len(ends)} set endpoints available")
            w = domain.x_hi - domain.x_lo
            return [Point(float(domain.x_lo + w * ends[i]), 0.0) for i in _spaced(len(ends), n)]
        if isinstance(domain, Snowflake):
            lv = domain.levels
            idx = [i for i, a in enumerate(lv.addresses[lv.depth]) if set(a) <= {"2", "3"}]
            if n > len(idx):
                raise OutOfRange(f"only {len(idx)} set-A vertices available")
            segs = lv.segments[lv.depth]
            return [Point(*map(float, segs[idx[i], :2])) for i in _spaced(len(idx), n)]
    raise UnsupportedMode(f"mode {mode!r} is not supported for the {domain.kind} domain")


def domain_from_params(kind: str, **params) -> Domain:
    """Construct a domain from a config-style name and keyword parameters."""
    if kind in ("half-plane-window", "halfplane", "half-plane"):
        return HalfPlaneWindow(
            float(params.get("x_lo", 0.0)), float(params.get("x_hi", 1.0)), float(params.get("y_max", 1.0))
        )
    if kind in ("unit-disk", "disk"):
        return UnitDisk()
    if kind == "snowflake":
        return Snowflake(float(params.get("s", 0.4)), int(params.get("depth", 3)))
    raise RhoMetricError(f"unknown domain type {kind!r}")


def points_array(points: Sequence) -> np.ndarray:
    return np.array([[p[0], p[1]] for p in points], dtype=float)
