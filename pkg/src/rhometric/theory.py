"""Closed-form dimension formulas, digit-frequency spectra and parameter schedules."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .densities import CantorSpec
from .domains import SnowflakeLevels
from .errors import EmptyProfile, InvalidSpec, NonpositiveDenominator, OutOfRange

LOG2 = math.log(2.0)
LOG3 = math.log(3.0)
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
PROFILE_TAGS = ("d+", "D+", "d-", "D-", "e-")


def golden_max(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-8):
    """Golden-section search for the maximum of a unimodal f on [lo, hi]."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    best = [(f(x), x) for x in (a, b, 0.5 * (a + b))]
    val, x = max(best)
    return x, val


def _grid_then_golden(f, lo: float, hi: float, steps: int, tol: float = 1e-8):
    grid = np.linspace(lo, hi, steps + 1)
    vals = np.array([f(x) for x in grid])
    i = int(np.argmax(vals))
    x, v = golden_max(f, grid[max(i - 1, 0)], grid[min(i + 1, steps)], tol)
    if v < vals[i]:
        return float(grid[i]), float(vals[i])
    return float(x), float(v)


# ---------------------------------------------------------------------------
# Dimension profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DimensionProfile:
    """Tabulated nondecreasing map beta -> dimension on a grid inside (-1, inf).

    ``func`` optionally gives exact values between grid points (used for the
    refinement step); otherwise the table is interpolated linearly.
    ``extends_to_minus_one`` records that the table stands for a profile whose
    domain reaches down to beta = -1.
    """

    betas: np.ndarray
    values: np.ndarray
    tag: str = "d+"
    extends_to_minus_one: bool = False
    func: Callable[[float], float] | None = None

    def __post_init__(self):
        if self.tag not in PROFILE_TAGS:
            raise OutOfRange(f"unknown profile tag {self.tag!r}")
        b = np.asarray(self.betas, dtype=float)
        if len(b) and (np.any(b <= -1.0) or np.any(np.diff(b) <= 0)):
            raise OutOfRange("profile betas must be increasing and > -1")

    def __call__(self, beta: float) -> float:
        if self.func is not None:
            return float(self.func(beta))
        return float(np.interp(beta, self.betas, self.values))


@dataclass(frozen=True)
class SupResult:
    value: float
    beta_star: float | None
    diverges: bool


def sup_formula(profile: DimensionProfile, tol: float = 1e-8) -> SupResult:
    """``sup_beta profile(beta) / (1 + beta)``: grid maximum, then golden refinement.

    A profile reaching down to beta = -1 with a positive value there makes the
    supremum infinite; that case is reported with ``diverges=True``.
    """
    betas = np.asarray(profile.betas, dtype=float)
    vals = np.asarray(profile.values, dtype=float)
    if len(betas) == 0:
        raise EmptyProfile("profile has no grid points")
    if profile.extends_to_minus_one and vals[0] > 0:
        return SupResult(math.inf, -1.0, True)
    ratio = vals / (1.0 + betas)
    i = int(np.argmax(ratio))
    best_b, best_v = float(betas[i]), float(ratio[i])
    if len(betas) > 1:
        lo, hi = betas[max(i - 1, 0)], betas[min(i + 1, len(betas) - 1)]
        b, v = golden_max(lambda x: profile(x) / (1.0 + x), lo, hi, tol)
        if v > best_v:
            best_b, best_v = b, v
    return SupResult(best_v, best_b, False)


def step_profile(s: float, beta: float, floor_dim: float, beta_max: float = 0.0,
                 steps: int = 200) -> DimensionProfile:
    """Profile equal to s on [beta, beta_max) and to ``max(s, floor_dim)`` at beta_max."""
    grid = np.linspace(beta, beta_max, steps + 1) if beta < beta_max else np.array([float(beta)])
    vals = np.full(len(grid), float(s))
    vals[-1] = max(s, floor_dim)

    def f(x):
        return max(s, floor_dim) if x >= beta_max else s

    return DimensionProfile(grid, vals, "d+", False, f)


# ---------------------------------------------------------------------------
# Triadic digit-frequency spectrum
# ---------------------------------------------------------------------------


def _xlogx(x: float) -> float:
    return 0.0 if x == 0.0 else x * math.log(x)


def spectrum_dim_d(t: float) -> float:
    """Dimension of the triadic points with digit-1 frequency t."""
    if not 0.0 <= t <= 1.0:
        raise OutOfRange(f"t must lie in [0, 1], got {t}")
    u = (1.0 - t) / 2.0
    # -t log t - (1 - t) log((1 - t)/2), with 0 log 0 = 0
    return (-_xlogx(t) - 2.0 * _xlogx(u)) / LOG3 + 0.0


def spectrum_dim_rho(t: float, beta: float, lam: float) -> float:
    denom = 1.0 + t * beta + (1.0 - t) * lam
    if not denom > 0:
        raise NonpositiveDenominator(f"1 + t beta + (1 - t) lambda = {denom} <= 0")
    return spectrum_dim_d(t) / denom


@dataclass(frozen=True)
class FMax:
    beta: float
    lam: float
    t_star: float
    value: float

    def to_text(self) -> str:
        return (f'{{"beta": {self.beta!r}, "lambda": {self.lam!r}, '
                f'"t_star": {self.t_star!r}, "value": {self.value!r}}}')


def f_max(beta: float, lam: float, tol: float = 1e-8) -> FMax:
    """Maximum over t in [0, 1] of ``spectrum_dim_rho(t, beta, lam)``."""
    if not (-1.0 < beta < 0.0 and -1.0 < lam < 0.0):
        raise OutOfRange("beta and lambda must lie in (-1, 0)")
    t, v = _grid_then_golden(lambda x: spectrum_dim_rho(x, beta, lam), 0.0, 1.0, 1000, tol)
    return FMax(beta, lam, t, v)


def f_bounds(beta: float, lam: float) -> tuple[float, float]:
    """Lower and upper bounds for f(beta, lambda)."""
    lower = max(1.0 / (1.0 + beta / 3.0 + 2.0 * lam / 3.0), LOG2 / ((1.0 + lam) * LOG3))
    upper = 1.0 / (1.0 + min(beta, lam))
    return lower, upper


def spectrum_table(beta: float, lam: float, steps: int) -> list[tuple[float, float, float]]:
    if steps < 1:
        raise OutOfRange("steps must be >= 1")
    out = []
    for i in range(steps + 1):
        t = i / steps
        out.append((t, spectrum_dim_d(t), spectrum_dim_rho(t, beta, lam)))
    return out


def write_spectrum_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "dim_d", "dim_rho"])
        for t, dd, dr in rows:
            w.writerow([repr(float(t)), repr(float(dd)), repr(float(dr))])


def spectrum_profile(beta: float, lam: float, steps: int = 2000) -> DimensionProfile:
    """Monotone envelope ``gamma -> max{dim_d(t) : t beta + (1 - t) lambda <= gamma}``.

    Feeding this to ``sup_formula`` is a change of variables of ``f_max``.
    """
    lo, hi = min(beta, lam), max(beta, lam)
    if hi == lo:
        hi = lo + 1e-3

    def env(g: float) -> float:
        if beta == lam:
            return 1.0 if g >= lam else 0.0
        # feasible t form an interval; the concave spectrum peaks at t = 1/3
        t0 = (lam - g) / (lam - beta)
        if beta < lam:
            if t0 > 1.0:
                return 0.0
            return spectrum_dim_d(max(t0, 1.0 / 3.0, 0.0))
        t1 = (g - lam) / (beta - lam)
        if t1 < 0.0:
            return 0.0
        return spectrum_dim_d(min(t1, 1.0 / 3.0, 1.0))

    grid = np.linspace(lo, hi, steps + 1)
    return DimensionProfile(grid, np.array([env(g) for g in grid]), "e-", False, env)


# ---------------------------------------------------------------------------
# Cantor-set dimensions and related predictions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CantorDims:
    dim: float
    Dim: float
    schedule_warning: bool = False


def cantor_dims(spec: CantorSpec) -> CantorDims:
    """Lower/upper dimension values of a constant or two-phase Cantor set.

    For two-phase sets the pair is valid only when the phase lengths grow
    fast; ``schedule_warning`` is set when consecutive schedule ratios do not
    increase.
    """
    if spec.source == "constant":
        d = -LOG2 / math.log(spec.ratio(1))
        return CantorDims(d, d)
    if spec.source == "two-phase":
        sch = spec.schedule
        ratios = [n2 / n1 for n1, n2 in zip(sch, sch[1:])]
        warn = len(ratios) < 2 or any(r2 <= r1 for r1, r2 in zip(ratios, ratios[1:]))
        return CantorDims(-LOG2 / math.log(spec.a), -LOG2 / math.log(spec.b), warn)
    raise InvalidSpec(f"dimension formula unavailable for {spec.source!r} Cantor sets")


def twophase_rho_dim(a: float, lam: float) -> float:
    """``-log 2 / ((1 + lambda) log a)``."""
    return -LOG2 / ((1.0 + lam) * math.log(a))


@dataclass(frozen=True)
class BoundaryDims:
    dim_rho: float
    Dim_rho: float
    set_dim_rho: float
    set_Dim_rho: float


def set_boundary_prediction(s: float, t: float, beta: float, n: int = 2) -> BoundaryDims:
    """Boundary dimensions when rho ~ d(x, C)**beta near a set C of dims (s, t)."""
    if not 0 <= s <= t < n:
        raise OutOfRange("need 0 <= s <= t < n")
    if not beta > -1:
        raise OutOfRange("need beta > -1")
    a, b = s / (1.0 + beta), t / (1.0 + beta)
    return BoundaryDims(max(n - 1, a), max(n - 1, b), a, b)


# ---------------------------------------------------------------------------
# Schedules for sparse density examples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HSchedule:
    lengths: tuple
    heights: tuple
    satisfied: tuple[bool, ...]


def h_schedule(lengths: Sequence) -> HSchedule:
    """Heights ``h_n = min(h_{n-1}, l_n / 2, 2**(-n**2) / l_n)`` for n = 1, 2, ...

    The third term gives ``2**n l_n**(1/n) h_n**(1/n) <= 1``; halving l_n makes
    ``h_n < l_n`` strict. Exact when the lengths are Fractions or ints.
    """
    ls = list(lengths)
    if any(not x > 0 for x in ls) or any(x2 >= x1 for x1, x2 in zip(ls, ls[1:])):
        raise OutOfRange("lengths must be positive and strictly decreasing")
    exact = all(isinstance(x, (int, Fraction)) for x in ls)
    one = Fraction(1) if exact else 1.0
    hs, ok = [], []
    for n, ell in enumerate(ls, start=1):
        cap = one / 2 ** (n * n) / ell
        h = min(ell / 2, cap)
        if hs:
            h = min(h, hs[-1])
        hs.append(h)
        # 2^n l^{1/n} h^{1/n} <= 1  <=>  l h <= 2^{-n^2}
        ok.append(bool(ell * h <= one / 2 ** (n * n) * (1 if exact else 1 + 1e-12)))
    return HSchedule(tuple(ls), tuple(hs), tuple(ok))


@dataclass(frozen=True)
class SnowflakePathBound:
    k: int
    partial_sum: float
    ratio_to_lk_s: float
    terms: np.ndarray
    identity_max_err: float
    term_ratios: np.ndarray


def snowflake_path_bound(levels: SnowflakeLevels, k: int) -> SnowflakePathBound:
    """Partial sum of ``alpha_n**-0.5 l_n**0.5`` from n = k to the built depth.

    Also checks ``alpha_n**-0.5 l_n**0.5 == l_{n-1}**s`` term by term.
    """
    if not 1 <= k < levels.depth:
        raise OutOfRange(f"k must lie in [1, {levels.depth - 1}]")
    s = levels.s
    ns = range(k, levels.depth + 1)
    terms = np.array([levels.alphas[n] ** -0.5 * levels.lengths[n] ** 0.5 for n in ns])
    ident = np.array([levels.lengths[n - 1] ** s for n in ns])
    err = float(np.max(np.abs(terms - ident) / ident))
    total = float(terms.sum())
    return SnowflakePathBound(k, total, total / levels.lengths[k] ** s, terms, err,
                              terms[1:] / terms[:-1])
