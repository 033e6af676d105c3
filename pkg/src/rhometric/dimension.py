"""Covering/packing counts over finite metric spaces and log-log slope fits.

Counts come from greedy r-nets: a point is kept when it is at distance
``>= r`` from everything kept so far. The kept set covers at radius r and
its r/2-balls are disjoint, so one pass gives both a covering and a packing
count. Curves over a ladder of radii reuse the nets of larger radii as seeds,
which makes every curve monotone.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np
from scipy import stats

from .densities import CantorSet, TwoPhaseParams, level_log_h
from .errors import (
    DegenerateWindow,
    IncompatibleLevel,
    OutOfRange,
    PointsNotInSet,
    ResolutionFloorBreached,
)

VARIANTS = ("net-cover", "packing")
MAX_DIGIT_SAMPLE = 2 ** 16


@dataclass(frozen=True)
class ScaleLadder:
    r0: float
    factor: float
    count: int

    def __post_init__(self):
        if not self.r0 > 0:
            raise OutOfRange("ladder r0 must be positive")
        if not 0 < self.factor < 1:
            raise OutOfRange("ladder factor must lie in (0, 1)")
        if self.count < 1:
            raise OutOfRange("ladder count must be >= 1")

    @property
    def radii(self) -> np.ndarray:
        return self.r0 * self.factor ** np.arange(self.count)

    @property
    def octaves(self) -> float:
        # rounded so that e.g. 2**-0.25 over 21 rungs reports exactly 5
        return round((self.count - 1) * math.log2(1.0 / self.factor), 9)


# ---------------------------------------------------------------------------
# Distance oracles
# ---------------------------------------------------------------------------


class MatrixOracle:
    """Distances read from a precomputed symmetric matrix."""

    def __init__(self, matrix, resolution: float = 0.0):
        self.matrix = np.asarray(matrix, dtype=float)
        n = self.matrix.shape[0]
        if self.matrix.shape != (n, n):
            raise ValueError("distance matrix must be square")
        self.resolution = float(resolution)

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def row(self, i: int) -> np.ndarray:
        return self.matrix[i]

    def distance(self, i: int, j: int) -> float:
        return float(self.matrix[i, j])

    def scaled(self, c: float) -> "MatrixOracle":
        return MatrixOracle(c * self.matrix, c * self.resolution)


class EuclideanOracle:
    """Euclidean distances between points on a line or in the plane."""

    def __init__(self, points, resolution: float = 0.0):
        pts = np.asarray(points, dtype=float)
        self.points = pts.reshape(-1, 1) if pts.ndim == 1 else pts
        self.resolution = float(resolution)

    def __len__(self) -> int:
        return len(self.points)

    def row(self, i: int) -> np.ndarray:
        return np.sqrt(((self.points - self.points[i]) ** 2).sum(axis=1))

    def distance(self, i: int, j: int) -> float:
        return float(np.sqrt(((self.points[i] - self.points[j]) ** 2).sum()))


class TreeOracle:
    """Ultrametric on Cantor points: ``h_m`` for the deepest shared level m.

    ``log_h[m]`` is the log-diameter attached to level m. Two points in the
    same deepest interval are at distance ``h_level``, the resolution floor.
    """

    def __init__(self, cantor: CantorSet, xs, log_h):
        self.level = cantor.level
        self.log_h = np.asarray(log_h, dtype=float)
        if len(self.log_h) < self.level + 1:
            raise OutOfRange("log_h must cover every level of the set")
        idx = np.atleast_1d(cantor.interval_index(np.asarray(xs, dtype=float)))
        if np.any(idx < 0):
            raise PointsNotInSet("tree oracle points must lie in the built set")
        self.index = idx.astype(np.int64)
        self.resolution = math.exp(self.log_h[self.level])

    @classmethod
    def twophase(cls, params: TwoPhaseParams, cantor: CantorSet, xs) -> "TreeOracle":
        return cls(cantor, xs, [level_log_h(params, m) for m in range(cantor.level + 1)])

    def __len__(self) -> int:
        return len(self.index)

    def row(self, i: int) -> np.ndarray:
        x = self.index ^ self.index[i]
        bits = np.zeros(len(x), dtype=np.int64)
        nz = x > 0
        bits[nz] = np.floor(np.log2(x[nz])).astype(np.int64) + 1
        return np.exp(self.log_h[self.level - bits])

    def distance(self, i: int, j: int) -> float:
        m = self.level - int(self.index[i] ^ self.index[j]).bit_length()
        return math.exp(self.log_h[m])


# ---------------------------------------------------------------------------
# Nets and count curves
# ---------------------------------------------------------------------------


def _greedy(oracle, r: float, order, seed_rows=None):
    """Greedy net at radius r. Returns (kept list, running min-distance array)."""
    n = len(oracle)
    near = np.full(n, np.inf) if seed_rows is None else seed_rows[1].copy()
    kept = [] if seed_rows is None else list(seed_rows[0])
    for i in order:
        if near[i] >= r:
            kept.append(int(i))
            near = np.minimum(near, oracle.row(int(i)))
            near[i] = -np.inf
    return kept, near


def net_count(oracle, r: float, order=None) -> int:
    """Number of points kept by a greedy r-net in the given (default: input) order."""
    if not r > 0:
        raise OutOfRange("net radius must be positive")
    order = range(len(oracle)) if order is None else order
    return len(_greedy(oracle, r, order)[0])


@dataclass(frozen=True)
class CountCurve:
    radii: np.ndarray
    counts: np.ndarray
    variant: str

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r", "count", "variant"])
            for r, c in zip(self.radii, self.counts):
                w.writerow([repr(float(r)), int(c), self.variant])


def count_curve(oracle, ladder, variant: str = "net-cover", order=None) -> CountCurve:
    """Net counts over a ladder of radii.

    ``net-cover``: N(r) is the size of an r-net (a covering by r-balls).
    ``packing``: N(r) is the size of a 2r-net, whose r-balls are disjoint.
    Nets are nested (each seeded with the net of the next larger radius), so
    N is non-increasing in r.
    """
    if variant not in VARIANTS:
        raise OutOfRange(f"unknown count variant {variant!r}")
    radii = ladder.radii if isinstance(ladder, ScaleLadder) else np.asarray(ladder, dtype=float)
    if np.any(radii <= 0):
        raise OutOfRange("radii must be positive")
    floor = 2.0 * getattr(oracle, "resolution", 0.0)
    if radii.min() < floor:
        raise ResolutionFloorBreached(
            f"radius {radii.min():g} is below twice the oracle resolution ({floor:g})")
    eff = radii * (2.0 if variant == "packing" else 1.0)
    order = list(range(len(oracle))) if order is None else list(order)
    counts = np.empty(len(radii), dtype=np.int64)
    state = None
    for j in np.argsort(-eff, kind="stable"):
        state = _greedy(oracle, eff[j], order, state)
        counts[j] = len(state[0])
    return CountCurve(np.asarray(radii, dtype=float), counts, variant)


def tree_count_curve(log_diams, radii, log_radii: bool = False) -> CountCurve:
    """Analytic greedy-net counts on a binary interval tree.

    ``log_diams[m]`` is the (decreasing) log-diameter at level m, so two points
    whose deepest shared level is m are at distance ``exp(log_diams[m])``. With
    one point per deepest interval, ``N(r) = 2**min(M(r) + 1, K)`` where
    ``M(r) = max{m : diam_m >= r}`` and K is the deepest level. Counts are
    returned as floats.
    """
    log_d = np.asarray(log_diams, dtype=float)
    k = len(log_d) - 1
    lr = np.asarray(radii, dtype=float)
    if not log_radii:
        lr = np.log(lr)
    # M(r) + 1 = number of levels whose diameter is >= r
    above = np.searchsorted(-log_d, -lr, side="right")
    # float counts: deep trees overflow 64-bit integers
    counts = np.exp2(np.minimum(above, k).astype(float))
    return CountCurve(np.exp(lr), counts, "net-cover")


# ---------------------------------------------------------------------------
# Slope fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DimensionEstimate:
    slope: float
    intercept: float
    stderr: float
    r2: float
    win_lo: int
    win_hi: int
    slope_min: float
    slope_max: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["slope", "stderr", "r2", "win_lo", "win_hi", "slope_min", "slope_max"])
            w.writerow([repr(self.slope), repr(self.stderr), repr(self.r2), self.win_lo,
                        self.win_hi, repr(self.slope_min), repr(self.slope_max)])


def fit_slope(log_inv_r, log_n, win_lo: int = 0, win_hi: int = 0) -> DimensionEstimate:
    x = np.asarray(log_inv_r, dtype=float)
    y = np.asarray(log_n, dtype=float)
    if len(x) < 3:
        raise DegenerateWindow("need at least three scales in the fit window")
    if np.ptp(x) == 0:
        raise DegenerateWindow("all radii in the window coincide")
    order = np.argsort(x)
    x, y = x[order], y[order]
    fit = stats.linregress(x, y)
    resid = y - (fit.intercept + fit.slope * x)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    # repeated scales are averaged before taking adjacent-scale slopes
    keys, inv = np.unique(np.round(x, 10), return_inverse=True)
    ux = np.bincount(inv, weights=x) / np.bincount(inv)
    uy = np.bincount(inv, weights=y) / np.bincount(inv)
    adj = np.diff(uy) / np.diff(ux) if len(keys) > 1 else np.array([np.nan])
    return DimensionEstimate(float(fit.slope), float(fit.intercept), float(fit.stderr), r2,
                             win_lo, win_hi, float(adj.min()), float(adj.max()))


def fit_dimension(curve: CountCurve, window: tuple[int, int] | None = None) -> DimensionEstimate:
    """OLS slope of log N against log(1/r) on ``curve[lo:hi + 1]``."""
    n = len(curve.radii)
    lo, hi = (0, n - 1) if window is None else window
    if not 0 <= lo <= hi < n:
        raise DegenerateWindow(f"window {window} outside the ladder of {n} scales")
    sl = slice(lo, hi + 1)
    return fit_slope(-np.log(curve.radii[sl]), np.log(curve.counts[sl].astype(float)), lo, hi)


# ---------------------------------------------------------------------------
# Digit-frequency point sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DigitFrequencyPoints:
    t: Fraction
    level: int
    points: np.ndarray
    weights: np.ndarray
    total: int

    @property
    def sampled(self) -> bool:
        return self.total > len(self.points)


def _as_fraction(t) -> Fraction:
    if isinstance(t, Fraction):
        return t
    if isinstance(t, int):
        return Fraction(t)
    f = Fraction(t).limit_denominator(12)
    if abs(float(f) - float(t)) > 1e-12:
        raise OutOfRange(f"t={t} is not a fraction with denominator <= 12")
    return f


def _block_patterns(p: int, q: int) -> list[tuple[int, ...]]:
    """All length-q digit blocks with exactly p ones and the rest in {0, 2}."""
    out = []
    for ones in combinations(range(q), p):
        rest = [i for i in range(q) if i not in ones]
        for mask in range(2 ** len(rest)):
            block = [1] * q
            for b, i in enumerate(rest):
                block[i] = 2 if (mask >> b) & 1 else 0
            out.append(tuple(block))
    return sorted(out)


def digit_frequency_points(t, level: int) -> DigitFrequencyPoints:
    """Level-k triadic points whose digit-1 frequency is exactly t in every q-block.

    Points are left endpoints ``sum d_i 3**-i`` of level-k triadic intervals.
    Weights follow the natural measure: each digit 1 contributes a factor t,
    each digit 0 or 2 a factor (1 - t)/2. When there are more than 2**16
    points a deterministic, evenly spaced subset (in lexicographic order) is
    returned.
    """
    t = _as_fraction(t)
    if not 0 <= t <= 1:
        raise OutOfRange("t must lie in [0, 1]")
    p, q = t.numerator, t.denominator
    if q > 12:
        raise OutOfRange("denominator of t must be <= 12")
    if level <= 0 or level % q:
        raise IncompatibleLevel(f"level {level} is not a positive multiple of {q}")
    blocks = _block_patterns(p, q)
    nb = level // q
    total = len(blocks) ** nb
    if total <= MAX_DIGIT_SAMPLE:
        picks = range(total)
    else:
        picks = [(i * total) // MAX_DIGIT_SAMPLE for i in range(MAX_DIGIT_SAMPLE)]
    block_vals = [sum(d * 3.0 ** -(i + 1) for i, d in enumerate(b)) for b in blocks]
    pts = np.empty(len(picks))
    for j, idx in enumerate(picks):
        x = 0.0
        digits = []
        for _ in range(nb):
            idx, r = divmod(idx, len(blocks))
            digits.append(r)
        # most significant block first
        for pos, r in enumerate(reversed(digits)):
            x += block_vals[r] * 3.0 ** (-q * pos)
        pts[j] = x
    tf = float(t)
    ones = p * nb
    w = tf ** ones * ((1.0 - tf) / 2.0) ** (level - ones)
    return DigitFrequencyPoints(t, level, pts, np.full(len(pts), w), total)
