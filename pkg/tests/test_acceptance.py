"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line."""

import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from rhometric import dimension as dm
from rhometric import metric as mt
from rhometric import theory as th
from rhometric.cli import parse_config
from rhometric.densities import (
    CantorSpec,
    Constant,
    ExpReciprocal,
    PowerBoundary,
    TriadicMultifractal,
    cantor_build,
    harnack_check,
    scaled,
    two_phase_solve,
)
from rhometric.domains import HalfPlaneWindow, snowflake_build
from rhometric.experiments import get_runner

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
LOG32 = math.log(2) / math.log(3)


@pytest.fixture
def report(capsys):
    def emit(label, ok, text):
        with capsys.disabled():
            print(f"\n[acceptance] {'PASS' if ok else 'FAIL'} {label}: {text}")
        assert ok, f"{label}: {text}"
    return emit


def run(name):
    cfg = parse_config((CONFIGS / f"{name}.cfg").read_text())
    start = time.perf_counter()
    outcome = get_runner(name)(cfg)
    return outcome, time.perf_counter() - start


def test_1_snowflake_exponent(report):
    out, secs = run("snowflake-exponent")
    slope = out.measured
    n_pairs = len(out.tables["pairs.csv"][1])
    seps = sorted({float(r[1]) for r in out.tables["pairs.csv"][1]})
    ok = (abs(slope - 0.5) <= 0.05 and n_pairs == 33 and secs <= 120
          and math.isclose(seps[-1], 2 ** -2) and math.isclose(seps[0], 2 ** -7))
    report("1 snowflake-exponent", ok,
           f"slope {slope:.4f} vs 0.5 +- 0.05, {n_pairs} pairs, {secs:.1f}s")


def test_2_cantor_beta(report):
    out, secs = run("cantor-beta")
    pred = LOG32 / 0.5
    ok = (abs(out.measured - pred) <= 0.1 and out.details["octaves"] >= 5
          and len(out.counts[0].counts) > 0 and out.counts[0].counts.max() <= 1024 and secs <= 300)
    report("2 cantor-beta", ok,
           f"net slope {out.measured:.4f} vs {pred:.4f} +- 0.1 "
           f"(packing {out.details['packing_slope']:.4f}), {out.details['octaves']:.1f} octaves, {secs:.1f}s")


def test_3_triadic_spectrum(report):
    v = th.f_max(-0.5, -1 / 3).value
    diag = max(abs(th.f_max(lam, lam).value - 1 / (1 + lam)) for lam in (-0.2, -1 / 3, -0.45))
    rng = np.random.default_rng(2024)
    bad = 0
    for beta, lam in rng.uniform(-0.99, -0.01, size=(100, 2)):
        lo, hi = th.f_bounds(beta, lam)
        f = th.f_max(beta, lam).value
        bad += not (lo <= f + 1e-12 and f < hi)
    ok = 1.64 <= v <= 1.66 and diag <= 1e-6 and bad == 0
    report("3 triadic-spectrum", ok,
           f"f_max(-1/2,-1/3)={v:.5f} in [1.64,1.66], diagonal err {diag:.1e}, bound failures {bad}/100")


def test_4_gh_comparison(report):
    out, secs = run("gh-comparison")
    d = out.details
    ok = (len(out.tables["pairs.csv"][1]) == 64 and d["ratio_min"] >= 0.95 and d["ratio_max"] <= 10
          and d["ratio_max"] <= 1.1 * d["ratio_max_coarser"])
    report("4 gh-comparison", ok,
           f"ratio range [{d['ratio_min']:.3f}, {d['ratio_max']:.3f}] within [0.95, 10]; "
           f"max ratio depth 10 -> 11: {d['ratio_max_coarser']:.3f} -> {d['ratio_max']:.3f}, {secs:.1f}s")


def test_5_two_phase_packing(report):
    out, secs = run("two-phase-packing")
    pred = -math.log(2) / (0.5 * math.log(0.3))
    gap = out.details["max_adjacent_slope"] - out.measured
    ok = abs(out.measured - pred) <= 0.08 and gap >= 0.1 and secs <= 60
    report("5 two-phase-packing", ok,
           f"r_k slope {out.measured:.4f} vs {pred:.4f} +- 0.08; max adjacent slope "
           f"{out.details['max_adjacent_slope']:.4f} (gap {gap:.3f} >= 0.1), {secs:.2f}s")


def test_6_exp_density_bound(report):
    out, _ = run("exp-density-bound")
    worst = max(out.details["graph_over_bound"] + out.details["tent_over_bound"])
    # the bound must also hold at coarser grids
    dom = HalfPlaneWindow()
    pairs = [(0.2, 0.2 + s) for s in (0.5, 0.3, 0.2, 0.1)]
    for depth in (8, 9, 10):
        anchors = np.array([[0.2, 0.0]] + [[b, 0.0] for _, b in pairs])
        g = mt.build_graph(dom, ExpReciprocal(), mt.whitney_grid(dom, depth), anchors)
        dm_row = mt.rho_distance_matrix(g)[0, 1:]
        bound = 3 * np.exp(-1 / np.array([b - a for a, b in pairs]))
        worst = max(worst, float((dm_row / bound).max()))
    ok = worst <= 1.0
    report("6 exp-density-bound", ok, f"max d_rho / (3 exp(-1/|x-y|)) = {worst:.3e} over all scales and depths 8-11")


def _axioms(d):
    rng = np.random.default_rng(11)
    i, j, k = rng.integers(0, len(d), size=(3, 10_000))
    return bool(np.array_equal(d, d.T)), float(np.max(d[i, k] - d[i, j] - d[j, k]))


def _oracle_matrix(o):
    return np.array([o.row(i) for i in range(len(o))])


def test_7_property_suites(report):
    checks = {}
    # metric axioms on every oracle
    dom = HalfPlaneWindow()
    xs = np.linspace(0.05, 0.95, 40)
    anchors = np.column_stack([xs, np.zeros_like(xs)])
    graph = mt.build_graph(dom, PowerBoundary(-0.5), mt.whitney_grid(dom, 10), anchors)
    d_graph = mt.rho_distance_matrix(graph)
    cset = cantor_build(CantorSpec.constant(1 / 3), 7)
    p = two_phase_solve(0.3, 0.45, -0.5, (3, 9))
    tp = cantor_build(p.cantor_spec, 9)
    oracles = {
        "graph": d_graph,
        "euclidean": _oracle_matrix(dm.EuclideanOracle(np.random.default_rng(1).uniform(size=(80, 2)))),
        "tree": _oracle_matrix(dm.TreeOracle.twophase(p, tp, tp.intervals()[0])),
        "matrix": _oracle_matrix(dm.MatrixOracle(np.abs(cset.intervals()[0][:, None] - cset.intervals()[0][None, :]))),
    }
    worst_tri = 0.0
    sym = True
    for m in oracles.values():
        s, t = _axioms(m)
        sym &= s
        worst_tri = max(worst_tri, t)
    checks["symmetry exact"] = sym
    checks["triangle <= 1e-9"] = worst_tri <= 1e-9
    # rho -> c rho
    c = 2.0
    g2 = mt.build_graph(dom, scaled(PowerBoundary(-0.5), c), graph.grid, anchors)
    d2 = mt.rho_distance_matrix(g2)
    checks["c rho scales d_rho by c"] = bool(np.array_equal(d2, c * d_graph))
    ladder = dm.ScaleLadder(0.6, 2 ** -0.5, 6)
    s1 = dm.fit_dimension(dm.count_curve(dm.MatrixOracle(d_graph), ladder)).slope
    s2 = dm.fit_dimension(dm.count_curve(dm.MatrixOracle(d2), ladder.radii * c)).slope
    checks["dimension invariant under c rho"] = abs(s1 - s2) <= 1e-9
    # grid refinement
    a4 = np.array([[0.15, 0], [0.4, 0], [0.55, 0], [0.85, 0]], dtype=float)
    mono = True
    for rho in (Constant(1.0), PowerBoundary(-0.5), TriadicMultifractal(-0.4, -0.3)):
        prev = None
        for depth in (8, 9, 10):
            d = mt.rho_distance_matrix(mt.build_graph(dom, rho, mt.whitney_grid(dom, depth), a4))
            if prev is not None:
                mono &= bool(np.all(d <= prev + 1e-12))
            prev = d
    checks["refinement monotone"] = mono
    # dims sanity from exact counts
    ds, _ = run("dims-sanity")
    checks["dims-sanity slope"] = abs(ds.measured - LOG32) <= 0.03
    # snowflake recurrences
    lv = snowflake_build(0.3, 10)
    rec = math.isclose(lv.alphas[1], 1 / 3, abs_tol=1e-15) and math.isclose(lv.lengths[1], 1 / 3, abs_tol=1e-15)
    rec &= all(lv.lengths[k] / 4 < lv.lengths[k + 1] < lv.lengths[k] / 2 for k in range(10))
    checks["snowflake recurrences"] = rec
    # spectrum endpoints
    checks["spectrum endpoints"] = (math.isclose(th.spectrum_dim_d(0), LOG32, abs_tol=1e-15)
                                    and math.isclose(th.spectrum_dim_d(1 / 3), 1.0, abs_tol=1e-15)
                                    and th.spectrum_dim_d(1) == 0.0)
    # h schedule
    hs = th.h_schedule([Fraction(1, 4 ** n) for n in range(1, 10)])
    checks["h_schedule inequality"] = all(hs.satisfied) and all(
        ell * h <= Fraction(1, 2 ** (n * n)) for n, (ell, h) in enumerate(zip(hs.lengths, hs.heights), 1))
    # harnack
    hk = True
    for beta in (-0.9, -0.5, -0.1, 0.5, 1.0):
        hk &= harnack_check(PowerBoundary(beta), dom, samples=2000, seed=0) <= 2 ** abs(beta) + 1e-9
    checks["harnack <= 2^|beta|"] = hk
    failed = [k for k, v in checks.items() if not v]
    report("7 property suites", not failed,
           f"{len(checks) - len(failed)}/{len(checks)} suites green" + (f", failing: {failed}" if failed else ""))


def test_8_volume_growth(report):
    out, _ = run("volume-growth")
    ratios = out.details["ratios"]
    ok = out.measured <= 10 and len(ratios) == 5 and min(ratios) > 0
    report("8 volume-growth", ok,
           f"mu_rho(B)/r^2 over 4 octaves in [{min(ratios):.3f}, {max(ratios):.3f}], spread {out.measured:.2f} <= 10")
