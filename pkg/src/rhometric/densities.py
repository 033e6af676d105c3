"""Density families, Cantor-set constructions and the Harnack check.

Cantor sets come in two parameterisations that are kept distinct:

* ``"ratio"`` style: each construction interval keeps two children of
  relative length ``c`` (constant ``a``, or the two-phase ``a``/``b``
  schedule), so ``l_k = a**k`` for a constant ratio.
* ``"removal"`` style: the middle fraction ``alpha_n`` is removed at step
  ``n`` and ``l_k = prod_{n<=k} (1 - alpha_n) / 2``.

``keep_ratio`` / ``removal_fraction`` convert between the two.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .domains import Domain, HalfPlaneWindow, _as_points
from .errors import (
    ConstraintViolated,
    InvalidDigit,
    InvalidRatio,
    InvalidSpec,
    OutOfRange,
    PointOutsideDomain,
    ScheduleNotIncreasing,
    UnsupportedDomain,
)

LOG2 = math.log(2.0)
LOG3 = math.log(3.0)


def keep_ratio(alpha: float) -> float:
    """Child/parent length ratio for removal fraction ``alpha``."""
    return (1.0 - alpha) / 2.0


def removal_fraction(ratio: float) -> float:
    return 1.0 - 2.0 * ratio


# ---------------------------------------------------------------------------
# Cantor sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CantorSpec:
    """Ratio schedule of a symmetric two-child Cantor construction in [0, 1]."""

    source: str
    a: float | None = None
    b: float | None = None
    schedule: tuple[int, ...] = ()
    alphas: tuple[float, ...] = ()
    style: str = "ratio"

    def __post_init__(self):
        if self.source == "constant":
            if self.style == "ratio" and not (self.a is not None and 0.0 < self.a < 0.5):
                raise InvalidRatio(f"constant ratio a must lie in (0, 1/2), got {self.a}")
            if self.style == "removal" and not (self.a is not None and 0.0 < self.a < 1.0):
                raise InvalidRatio(f"removal fraction must lie in (0, 1), got {self.a}")
        elif self.source == "two-phase":
            for name, v in (("a", self.a), ("b", self.b)):
                if v is None or not 0.0 < v < 0.5:
                    raise InvalidRatio(f"two-phase ratio {name} must lie in (0, 1/2), got {v}")
            sch = self.schedule
            if any(int(n) != n or n < 1 for n in sch):
                raise ScheduleNotIncreasing("schedule entries must be positive integers")
            if any(n1 >= n2 for n1, n2 in zip(sch, sch[1:])):
                raise ScheduleNotIncreasing(f"schedule must be strictly increasing: {sch}")
        elif self.source == "explicit":
            if any(not 0.0 < al < 1.0 for al in self.alphas):
                raise InvalidRatio("explicit removal fractions must lie in (0, 1)")
        else:
            raise InvalidSpec(f"unknown Cantor source {self.source!r}")

    @classmethod
    def constant(cls, a: float, style: str = "ratio") -> "CantorSpec":
        return cls("constant", a=a, style=style)

    @classmethod
    def two_phase(cls, a: float, b: float, schedule: Sequence[int]) -> "CantorSpec":
        return cls("two-phase", a=a, b=b, schedule=tuple(int(n) for n in schedule))

    @classmethod
    def explicit(cls, alphas: Sequence[float]) -> "CantorSpec":
        return cls("explicit", alphas=tuple(float(x) for x in alphas), style="removal")

    def ratio(self, n: int) -> float:
        """Child/parent length ratio used at construction step ``n >= 1``."""
        if self.source == "constant":
            return self.a if self.style == "ratio" else keep_ratio(self.a)
        if self.source == "two-phase":
            phase = sum(1 for m in self.schedule if m < n)
            return self.a if phase % 2 == 0 else self.b
        if n > len(self.alphas):
            raise OutOfRange(f"explicit schedule has only {len(self.alphas)} steps")
        return keep_ratio(self.alphas[n - 1])

    def log_length(self, k: int) -> float:
        return sum(math.log(self.ratio(n)) for n in range(1, k + 1))

    def length(self, k: int) -> float:
        out = 1.0
        for n in range(1, k + 1):
            out *= self.ratio(n)
        return out


@dataclass(frozen=True)
class CantorSet:
    """Level-by-level intervals ``[left, left + lengths[k]]`` of a Cantor set."""

    spec: CantorSpec
    level: int
    lengths: tuple[float, ...]
    lefts: tuple[np.ndarray, ...] = field(repr=False, compare=False)

    @property
    def style(self) -> str:
        return self.spec.style

    def intervals(self, k: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        k = self.level if k is None else k
        return self.lefts[k], self.lefts[k] + self.lengths[k]

    def weights(self, k: int | None = None) -> np.ndarray:
        k = self.level if k is None else k
        return np.full(2 ** k, 2.0 ** -k)

    def endpoints(self) -> np.ndarray:
        """Sorted endpoints (left, right, left, right, ...) at the deepest level."""
        lo, hi = self.intervals()
        return np.column_stack([lo, hi]).ravel()

    def interval_index(self, x) -> np.ndarray:
        """Deepest-level interval containing each x, or -1."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        lo = self.lefts[self.level]
        i = np.searchsorted(lo, x, side="right") - 1
        ok = (i >= 0) & (x <= lo[np.clip(i, 0, None)] + self.lengths[self.level])
        return np.where(ok, i, -1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["level", "index", "left", "right", "weight"])
            for k in range(self.level + 1):
                lo, hi = self.intervals(k)
                wt = repr(2.0 ** -k)
                for i in range(len(lo)):
                    w.writerow([k, i, repr(float(lo[i])), repr(float(hi[i])), wt])


def cantor_build(spec: CantorSpec, level: int) -> CantorSet:
    """Enumerate the ``2**level`` construction intervals of every level."""
    if level < 0:
        raise OutOfRange("Cantor level must be >= 0")
    lengths = [1.0]
    lefts = [np.zeros(1)]
    for n in range(1, level + 1):
        ln = lengths[-1] * spec.ratio(n)
        prev = lefts[-1]
        lefts.append(np.column_stack([prev, prev + lengths[-1] - ln]).ravel())
        lengths.append(ln)
    return CantorSet(spec, level, tuple(lengths), tuple(lefts))


def dist_to_set(cantor: CantorSet, x) -> float | np.ndarray:
    """Distance from x to the union of the deepest-level intervals.

    Binary search over the sorted left endpoints; accepts scalars or arrays.
    """
    xs = np.asarray(x, dtype=float)
    flat = np.atleast_1d(xs).ravel()
    lo = cantor.lefts[cantor.level]
    ln = cantor.lengths[cantor.level]
    i = np.searchsorted(lo, flat, side="right") - 1
    left_gap = np.where(i >= 0, flat - (lo[np.clip(i, 0, None)] + ln), np.inf)
    j = np.clip(i + 1, 0, len(lo) - 1)
    right_gap = np.where(i + 1 < len(lo), lo[j] - flat, np.inf)
    d = np.maximum(np.minimum(left_gap, right_gap), 0.0)
    d = np.where((i >= 0) & (left_gap <= 0), 0.0, d)
    if xs.ndim == 0:
        return float(d[0])
    return d.reshape(xs.shape)


# ---------------------------------------------------------------------------
# Two-phase profile
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoPhaseParams:
    """Parameters of the two-phase profile density.

    The profile is a piecewise power law in ``t`` (distance to the set):
    exponent ``lam`` on ``[r_k, R_k]`` and ``eta`` on ``[R_{k+1}, r_k]``,
    where the thresholds are the construction lengths at the schedule levels.
    Coefficients are fixed by continuity and ``profile(1) = 1``.
    """

    a: float
    b: float
    lam: float
    eta: float
    xi: float
    schedule: tuple[int, ...] = ()

    @property
    def cantor_spec(self) -> CantorSpec:
        return CantorSpec.two_phase(self.a, self.b, self.schedule)

    def log_level_length(self, k: int) -> float:
        return self.cantor_spec.log_length(k)

    def level_length(self, k: int) -> float:
        return math.exp(self.log_level_length(k))

    @cached_property
    def _pieces(self):
        """Breakpoints (log, descending from 0) and per-piece exponent/log-coefficient."""
        log_bp = [0.0] + [self.log_level_length(n) for n in self.schedule]
        exps = [self.lam if j % 2 == 0 else self.eta for j in range(len(log_bp))]
        logc = [0.0]
        for j in range(1, len(log_bp)):
            logc.append(logc[-1] + (exps[j - 1] - exps[j]) * log_bp[j])
        return np.array(log_bp), np.array(exps), np.array(logc)

    def thresholds(self) -> dict[str, list[float]]:
        """The r_i (ends of ratio-a phases) and R_i (ends of ratio-b phases)."""
        lens = [self.level_length(n) for n in self.schedule]
        return {"r": [1.0] + lens[0::2], "R": [1.0] + lens[1::2]}


def two_phase_solve(a: float, b: float, lam: float, schedule: Sequence[int] = ()) -> TwoPhaseParams:
    """Solve ``a**(1+lam) = b**(1+eta) = xi`` for ``eta`` and validate."""
    if not 0.0 < a < b < 0.5:
        raise ConstraintViolated("0 < a < b < 1/2", f"a={a}, b={b}")
    if not -1.0 < lam < 0.0:
        raise ConstraintViolated("-1 < lambda < 0", f"lambda={lam}")
    log_xi = (1.0 + lam) * math.log(a)
    if not -LOG2 < log_xi < -0.5 * LOG2:
        raise ConstraintViolated("-log 2 < log xi < -(1/2) log 2", f"log xi = {log_xi:.6g}")
    eta = (1.0 + lam) * math.log(a) / math.log(b) - 1.0
    if not lam < eta < 0.0:
        raise ConstraintViolated("-1 < lambda < eta < 0", f"lambda={lam}, eta={eta:.6g}")
    sch = tuple(int(n) for n in schedule)
    CantorSpec.two_phase(a, b, sch)  # schedule validation
    return TwoPhaseParams(a, b, lam, eta, math.exp(log_xi), sch)


def _profile_log(params: TwoPhaseParams, log_t: np.ndarray) -> np.ndarray:
    log_bp, exps, logc = params._pieces
    # piece j covers log_bp[j+1] <= log t <= log_bp[j]
    j = np.searchsorted(-log_bp, -log_t, side="right") - 1
    j = np.clip(j, 0, len(log_bp) - 1)
    return logc[j] + exps[j] * log_t


def profile_eval(params: TwoPhaseParams, t):
    """Profile value at ``0 < t <= 1`` (scalar or array)."""
    ts = np.asarray(t, dtype=float)
    if np.any(~(ts > 0.0)) or np.any(ts > 1.0):
        raise OutOfRange("profile argument t must lie in (0, 1]")
    out = np.exp(_profile_log(params, np.log(ts)))
    return float(out) if ts.ndim == 0 else out


def profile_log_integral(params: TwoPhaseParams, log_t: float) -> float:
    """``log`` of the integral of the profile over ``[0, t]``, piecewise closed form."""
    log_bp, exps, logc = params._pieces
    edges = list(log_bp[1:]) + [-math.inf]
    terms = []
    for j in range(len(log_bp)):
        hi = min(log_bp[j], log_t)
        lo = edges[j]
        if hi <= lo:
            continue
        p1 = exps[j] + 1.0
        frac = 0.0 if lo == -math.inf else math.exp(p1 * (lo - hi))
        terms.append(logc[j] + p1 * hi - math.log(p1) + math.log1p(-frac))
    m = max(terms)
    return m + math.log(sum(math.exp(v - m) for v in terms))


def profile_integral(params: TwoPhaseParams, t: float) -> float:
    if not 0.0 < t <= 1.0:
        raise OutOfRange("profile argument t must lie in (0, 1]")
    return math.exp(profile_log_integral(params, math.log(t)))


def level_log_h(params: TwoPhaseParams, k: int) -> float:
    """``log h_k`` where ``h_k`` integrates the profile over ``[0, l_k]``."""
    return profile_log_integral(params, params.log_level_length(k))


# ---------------------------------------------------------------------------
# Triadic weights
# ---------------------------------------------------------------------------


TRIADIC_MAX_LEVEL = 30


def triadic_weight(address: str, beta: float, lam: float) -> float:
    """Weight of the triadic cell with the given address over {0, 1, 2}."""
    if any(c not in "012" for c in address):
        raise InvalidDigit(f"triadic address digits must be in 0..2, got {address!r}")
    ones = address.count("1")
    return 3.0 ** (-beta * ones - lam * (len(address) - ones))


def _count_ones_base3(idx: np.ndarray, ndig: np.ndarray) -> np.ndarray:
    idx = idx.copy()
    ones = np.zeros_like(idx)
    for k in range(int(ndig.max(initial=0))):
        active = k < ndig
        ones += active & (idx % 3 == 1)
        idx //= 3
    return ones


def _triadic_level_log(x: np.ndarray, n: np.ndarray, beta: float, lam: float) -> np.ndarray:
    """Linear interpolation in x of log-weights between level-n cell centres."""
    m = 3 ** n
    s = x * m - 0.5
    i0 = np.clip(np.floor(s).astype(np.int64), 0, m - 1)
    i1 = np.clip(i0 + 1, 0, m - 1)
    w = np.clip(s - i0, 0.0, 1.0)

    def logw(i):
        ones = _count_ones_base3(i, n)
        return -LOG3 * (beta * ones + lam * (n - ones))

    return (1.0 - w) * logw(i0) + w * logw(i1)


def triadic_log_density(x, y, beta: float, lam: float) -> np.ndarray:
    """Log of the interpolated triadic density at ``(x, y)``.

    Cell Q_i = I_i x [|I_i|, 3|I_i|] has its centre at height ``2 * 3**-n``;
    values are interpolated linearly in x within a level and linearly in
    ``log y`` between consecutive levels. The density is 1 above ``y = 2``.
    """
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    y = np.asarray(y, dtype=float)
    u = np.log(2.0 / y) / LOG3
    u = np.where(u > 0.0, u, 0.0)
    # levels past TRIADIC_MAX_LEVEL (y < 1e-14) reuse the deepest weights
    u = np.minimum(u, TRIADIC_MAX_LEVEL)
    n0 = np.floor(u).astype(np.int64)
    frac = u - n0
    v0 = _triadic_level_log(x, n0, beta, lam)
    v1 = _triadic_level_log(x, n0 + 1, beta, lam)
    return (1.0 - frac) * v0 + frac * v1


# ---------------------------------------------------------------------------
# Density variants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    c: float = 1.0

    kind = "constant"

    def values(self, pts: np.ndarray, domain: Domain, floor: float = 0.0) -> np.ndarray:
        return np.full(len(_as_points(pts)), float(self.c))


@dataclass(frozen=True)
class PowerBoundary:
    """``rho = scale * d(x) ** beta``."""

    beta: float
    scale: float = 1.0

    kind = "power-boundary"

    def __post_init__(self):
        if not self.beta > -1.0:
            raise InvalidSpec("PowerBoundary needs beta > -1")

    def values(self, pts, domain: Domain, floor: float = 0.0) -> np.ndarray:
        d = domain.distance_many(pts)
        return self.scale * np.maximum(d, floor) ** self.beta


@dataclass(frozen=True)
class PowerDistToSet:
    """``rho = scale * max(dist(x, C), floor) ** beta`` for C on the window boundary.

    The Cantor set (built in [0, 1]) is placed at ``origin + span * C`` on
    the boundary line ``y = 0``.
    """

    beta: float
    cantor: CantorSet
    origin: float = 0.0
    span: float = 1.0
    scale: float = 1.0

    kind = "power-dist-to-set"

    def __post_init__(self):
        if not self.beta > -1.0:
            raise InvalidSpec("PowerDistToSet needs beta > -1")

    def set_offsets(self, xs: np.ndarray) -> np.ndarray:
        """Horizontal distance from boundary abscissae to the embedded set."""
        return self.span * dist_to_set(self.cantor, (np.asarray(xs) - self.origin) / self.span)

    def values(self, pts, domain: Domain, floor: float = 0.0) -> np.ndarray:
        if not isinstance(domain, HalfPlaneWindow):
            raise UnsupportedDomain("PowerDistToSet is defined on half-plane windows only")
        pts = _as_points(pts)
        dist = np.hypot(self.set_offsets(pts[:, 0]), pts[:, 1])
        return self.scale * np.maximum(dist, floor) ** self.beta


@dataclass(frozen=True)
class TriadicMultifractal:
    beta: float
    lam: float
    scale: float = 1.0

    kind = "triadic"

    def __post_init__(self):
        if not (-1.0 < self.beta < 0.0 and -1.0 < self.lam < 0.0) or self.beta == self.lam:
            raise InvalidSpec("TriadicMultifractal needs -1 < beta, lambda < 0 and beta != lambda")

    def values(self, pts, domain: Domain, floor: float = 0.0) -> np.ndarray:
        pts = _as_points(pts)
        y = np.maximum(domain.distance_many(pts), floor if floor > 0 else 0.0)
        return self.scale * np.exp(triadic_log_density(pts[:, 0], y, self.beta, self.lam))


@dataclass(frozen=True)
class TwoPhaseProfile:
    """``rho = scale * profile(dist(x, C))`` with C the two-phase Cantor set."""

    params: TwoPhaseParams
    cantor: CantorSet
    scale: float = 1.0

    kind = "two-phase"

    def values(self, pts, domain: Domain, floor: float = 0.0) -> np.ndarray:
        if not isinstance(domain, HalfPlaneWindow):
            raise UnsupportedDomain("TwoPhaseProfile is defined on half-plane windows only")
        pts = _as_points(pts)
        dist = np.hypot(dist_to_set(self.cantor, pts[:, 0]), pts[:, 1])
        t = np.clip(dist, max(floor, 1e-300), 1.0)
        return self.scale * np.exp(_profile_log(self.params, np.log(t)))


@dataclass(frozen=True)
class ExpReciprocal:
    scale: float = 1.0

    kind = "exp-reciprocal"

    def values(self, pts, domain: Domain, floor: float = 0.0) -> np.ndarray:
        d = domain.distance_many(pts)
        with np.errstate(divide="ignore"):
            return self.scale * np.exp(-1.0 / d)


Density = Constant | PowerBoundary | PowerDistToSet | TriadicMultifractal | TwoPhaseProfile | ExpReciprocal


def scaled(density: Density, c: float) -> Density:
    """The same density multiplied by ``c``."""
    from dataclasses import replace

    if isinstance(density, Constant):
        return Constant(density.c * c)
    return replace(density, scale=density.scale * c)


def eval_density(density: Density, p, domain: Domain, floor: float = 0.0) -> float:
    """Density value at a single interior point."""
    pts = _as_points(p)
    if not domain.inside_many(pts)[0]:
        raise PointOutsideDomain(f"point {tuple(pts[0])} is outside the domain")
    return float(density.values(pts, domain, floor)[0])


def harnack_check(density: Density, domain: Domain, samples: int = 2000, seed: int = 0) -> float:
    """Monte Carlo estimate of the Harnack constant.

    Draws x uniformly in the domain and y uniformly in the Euclidean ball
    ``B(x, d(x)/2)``; returns ``max(rho(y)/rho(x), rho(x)/rho(y))``.
    """
    ss = np.random.SeedSequence(seed)
    rng_x, rng_y = (np.random.default_rng(s) for s in ss.spawn(2))
    origin, h0, nx, ny = domain.grid_frame()
    xs = np.empty((0, 2))
    while len(xs) < samples:
        cand = origin + rng_x.random((2 * samples, 2)) * np.array([nx * h0, ny * h0])
        xs = np.vstack([xs, cand[domain.inside_many(cand)]])
    xs = xs[:samples]
    dx = domain.distance_many(xs)
    ang = 2.0 * math.pi * rng_y.random(samples)
    rad = 0.5 * dx * np.sqrt(rng_y.random(samples))
    ys = xs + np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    keep = domain.distance_many(ys) > 0
    rx = density.values(xs[keep], domain)
    ry = density.values(ys[keep], domain)
    ratio = ry / rx
    return float(np.max(np.maximum(ratio, 1.0 / ratio)))
