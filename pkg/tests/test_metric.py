import dataclasses
import math

import numpy as np
import pytest
from scipy.sparse import csr_matrix

from rhometric import metric as mt
from rhometric.densities import (
    CantorSpec,
    Constant,
    ExpReciprocal,
    PowerBoundary,
    PowerDistToSet,
    TriadicMultifractal,
    cantor_build,
    level_log_h,
    scaled,
    two_phase_solve,
)
from rhometric.domains import HalfPlaneWindow, Snowflake, UnitDisk, sample_boundary
from rhometric.errors import (
    AnchorNotOnBoundary,
    DepthExceeded,
    DisconnectedAnchor,
    EmptyBall,
    PointsNotInSet,
    Unreachable,
    UnsupportedDomain,
)

HP = HalfPlaneWindow()


def window_anchors(xs):
    xs = np.asarray(xs, dtype=float)
    return np.column_stack([xs, np.zeros_like(xs)])


@pytest.fixture(scope="module")
def power_graph():
    g = mt.whitney_grid(HP, 10)
    return mt.build_graph(HP, PowerBoundary(-0.5), g, window_anchors(np.linspace(0.1, 0.9, 9)))


# --------------------------------------------------------------------- grid


def test_depth_guard():
    with pytest.raises(DepthExceeded):
        mt.whitney_grid(HP, 15)


def test_halfplane_depth3_sizes():
    g = mt.whitney_grid(HP, 3)
    assert np.all(g.sizes <= g.dist)
    # sizes halve towards the boundary: each level's cells sit at height 1.5 * size
    for lv in range(1, 4):
        sel = g.levels == lv
        assert np.allclose(g.centers[sel, 1], 1.5 * g.sizes[sel])


@pytest.mark.parametrize("dom,depth", [(HP, 9), (UnitDisk(), 8), (Snowflake(0.3, 3), 7),
                                       (HalfPlaneWindow(-0.5, 1.5, 1.0), 8)])
def test_whitney_size_bounds(dom, depth):
    g = mt.whitney_grid(dom, depth)
    assert np.all(g.sizes <= g.dist)
    assert np.all(g.sizes >= g.dist / 8)
    assert np.all(dom.inside_many(g.centers))


def test_grid_tiles_window_minus_collar():
    for depth in (5, 8):
        g = mt.whitney_grid(HP, depth)
        h = 2.0 ** -depth
        assert (g.sizes ** 2).sum() == pytest.approx(1.0 - h, abs=1e-12)


@pytest.mark.parametrize("dom", [HP, UnitDisk()])
def test_grid_nested(dom):
    for m in (5, 7):
        coarse = mt.whitney_grid(dom, m)
        fine = mt.whitney_grid(dom, m + 1)
        key_c = {(int(l), int(i), int(j)) for l, (i, j) in zip(coarse.levels, coarse.ij)}
        key_f = {(int(l), int(i), int(j)) for l, (i, j) in zip(fine.levels, fine.ij)}
        assert key_c <= key_f
        # new cells live in the coarse grid's collar
        new = np.array([(l, i, j) not in key_c for l, (i, j) in zip(fine.levels, fine.ij)])
        assert np.all(fine.dist[new] - fine.sizes[new] / math.sqrt(2) <= 2 * coarse.h_min)


def test_cell_count_growth():
    counts = {m: len(mt.whitney_grid(HP, m)) for m in (8, 10)}
    for m, n in counts.items():
        formula = 4 / 3 * 2 ** m
        assert formula / 2 <= n <= 2 * formula
    assert counts[10] / counts[8] == pytest.approx(4, rel=0.02)


def test_locate_roundtrip():
    g = mt.whitney_grid(UnitDisk(), 7)
    assert np.array_equal(g.locate(g.centers), np.arange(len(g)))
    assert g.locate(np.array([[5.0, 5.0]]))[0] == -1


# -------------------------------------------------------------------- graph


def test_vertical_leg_closed_form():
    t = np.array([0.01])
    w = mt._vertical_leg(PowerBoundary(-0.5), HP, np.array([0.5, 0.0]), np.array([0.0, 1.0]), t, 0.0)
    assert w[0] == pytest.approx(0.2, rel=1e-14)


def test_vertical_leg_dist_to_set_matches_quadrature():
    from scipy import integrate

    c = cantor_build(CantorSpec.constant(1 / 3), 6)
    rho = PowerDistToSet(-0.5, c)
    a = np.array([0.45, 0.0])
    dx = float(rho.set_offsets(np.array([0.45]))[0])
    t = np.array([0.003, 0.07])
    got = mt._vertical_leg(rho, HP, a, np.array([0.0, 1.0]), t, 0.0)
    ref = [integrate.quad(lambda s: math.hypot(dx, s) ** -0.5, 0, tt, epsabs=0, epsrel=1e-12)[0] for tt in t]
    assert np.allclose(got, ref, rtol=1e-10)


def test_graph_weights_nonnegative_undirected(power_graph):
    g = power_graph
    assert np.all(g.weights >= 0)
    assert (g.csr != g.csr.T).nnz == 0


@pytest.mark.parametrize("depth", [10, 11])
def test_constant_density_metrication_halfplane(depth):
    xs = [0.1, 0.23, 0.5, 0.77, 0.9]
    g = mt.build_graph(HP, Constant(1.0), mt.whitney_grid(HP, depth), window_anchors(xs))
    d = mt.rho_distance_matrix(g)
    for i in range(len(xs)):
        for j in range(i + 1, len(xs)):
            ratio = d[i, j] / abs(xs[i] - xs[j])
            assert 1.0 <= ratio <= 1.03


def test_constant_density_metrication_disk():
    dom = UnitDisk()
    pts = np.array(sample_boundary(dom, 6))
    g = mt.build_graph(dom, Constant(1.0), mt.whitney_grid(dom, 10), pts)
    d = mt.rho_distance_matrix(g)
    e = np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1))
    off = ~np.eye(len(pts), dtype=bool)
    ratio = d[off] / e[off]
    assert ratio.min() >= 1.0 and ratio.max() <= 1.03


def test_scaling_exact(power_graph):
    g2 = mt.build_graph(HP, scaled(power_graph.density, 2.0), power_graph.grid, power_graph.anchors)
    assert np.array_equal(g2.weights, 2.0 * power_graph.weights)
    d1 = mt.rho_distance_matrix(power_graph)
    d2 = mt.rho_distance_matrix(g2)
    assert np.array_equal(d2, 2.0 * d1)
    g3 = mt.build_graph(HP, scaled(power_graph.density, 3.0), power_graph.grid, power_graph.anchors)
    assert np.allclose(mt.rho_distance_matrix(g3), 3.0 * d1, rtol=1e-13, atol=0)


def test_rho_distance_basic(power_graph):
    assert mt.rho_distance(power_graph, 2, 2) == 0.0
    assert mt.rho_distance(power_graph, 1, 6) == mt.rho_distance(power_graph, 6, 1)


def test_matrix_matches_pairwise(power_graph):
    d = mt.rho_distance_matrix(power_graph)
    assert np.all(np.diag(d) == 0)
    assert np.array_equal(d, d.T)
    n = len(power_graph.anchors)
    for i in range(n):
        for j in range(i + 1, n):
            assert abs(d[i, j] - mt.rho_distance(power_graph, i, j)) <= 1e-12


def test_matrix_triangle_inequality(power_graph):
    d = mt.rho_distance_matrix(power_graph)
    rng = np.random.default_rng(0)
    i, j, k = rng.integers(0, len(d), size=(3, 10_000))
    assert np.max(d[i, k] - d[i, j] - d[j, k]) <= 1e-9


def test_collinear_triangle_constant():
    g = mt.build_graph(HP, Constant(1.0), mt.whitney_grid(HP, 9), window_anchors([0.2, 0.5, 0.8]))
    d = mt.rho_distance_matrix(g)
    assert d[0, 2] <= d[0, 1] + d[1, 2]


def test_tent_upper_bound_and_slack_decreases():
    xs = [0.2, 0.3, 0.45, 0.7]
    slacks = []
    for depth in (9, 11):
        g = mt.build_graph(HP, PowerBoundary(-0.5), mt.whitney_grid(HP, depth), window_anchors(xs))
        d = mt.rho_distance_matrix(g)
        worst = 0.0
        for j in range(1, len(xs)):
            r = xs[j] - xs[0]
            tent = mt.tent_cost_power(-0.5, r)
            assert 0 <= d[0, j] <= tent
            worst = max(worst, d[0, j] / tent)
        slacks.append(worst)
    assert slacks[1] <= slacks[0]


@pytest.mark.parametrize("rho", [Constant(1.0), PowerBoundary(-0.5), TriadicMultifractal(-0.4, -0.3)])
def test_refinement_monotone(rho):
    anchors = window_anchors([0.15, 0.4, 0.55, 0.85])
    prev = None
    for depth in (7, 8, 9, 10):
        d = mt.rho_distance_matrix(mt.build_graph(HP, rho, mt.whitney_grid(HP, depth), anchors))
        if prev is not None:
            assert np.all(d <= prev + 1e-12)
        prev = d


def test_snowflake_graph():
    dom = Snowflake(0.3, 3)
    pts = np.array(sample_boundary(dom, 6))
    g = mt.build_graph(dom, Constant(1.0), mt.whitney_grid(dom, 7), pts)
    d = mt.rho_distance_matrix(g)
    e = np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1))
    off = ~np.eye(len(pts), dtype=bool)
    assert np.all(d[off] >= e[off])


def test_graph_errors():
    g = mt.whitney_grid(HP, 6)
    with pytest.raises(AnchorNotOnBoundary):
        mt.build_graph(HP, Constant(1.0), g, np.array([[0.5, 0.2]]))
    empty = mt.whitney_grid(HP, 0)
    with pytest.raises(DisconnectedAnchor):
        mt.build_graph(HP, Constant(1.0), empty, window_anchors([0.5]))


def test_unreachable(power_graph):
    n = power_graph.n_nodes
    cut = dataclasses.replace(power_graph, csr=csr_matrix((n, n)))
    with pytest.raises(Unreachable):
        mt.rho_distance(cut, 0, 1)
    with pytest.raises(Unreachable):
        mt.rho_distance_matrix(cut)


def test_exp_density_tiny_weights_kept():
    g = mt.build_graph(HP, ExpReciprocal(), mt.whitney_grid(HP, 10), window_anchors([0.2, 0.7]))
    assert np.all(g.weights >= 0.0)
    assert g.weights.min() < 1e-100
    d = mt.rho_distance_matrix(g)
    assert np.isfinite(d).all()


def test_path_height(power_graph):
    h = mt.path_height(power_graph, 0, 8)
    assert 0 < h <= 1.0


# ------------------------------------------------------------------- radial


def test_radial_constant_is_three_r():
    r = 0.3
    assert mt.radial_path_distance(Constant(1.0), HP, (0.2, 0.0), (0.2 + r, 0.0)) == pytest.approx(3 * r, rel=1e-9)


def test_radial_power_closed_form():
    val = mt.radial_path_distance(PowerBoundary(-0.5), HP, (0.5, 0.0), (0.51, 0.0))
    assert val == pytest.approx(0.5, rel=1e-6)
    assert mt.tent_cost_power(-0.5, 0.01) == pytest.approx(0.5)


def test_radial_disk_constant():
    x, y = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    assert mt.radial_path_distance(Constant(1.0), UnitDisk(), x, y) == pytest.approx(2 * math.sqrt(2), rel=1e-9)


def test_radial_unsupported_domain():
    with pytest.raises(UnsupportedDomain):
        mt.radial_path_distance(Constant(1.0), Snowflake(0.3, 2), (0, 0), (1, 0))


def test_radial_triadic_dominates_graph():
    rho = TriadicMultifractal(-0.4, -0.3)
    xs = [0.1, 0.35, 0.6]
    d = mt.rho_distance_matrix(mt.build_graph(HP, rho, mt.whitney_grid(HP, 10), window_anchors(xs)))
    for j in (1, 2):
        rad = mt.radial_path_distance(rho, HP, (xs[0], 0.0), (xs[j], 0.0))
        ratio = rad / d[0, j]
        print(f"triadic radial / graph ratio: {ratio:.4f}")
        assert 0.95 <= ratio <= 10


# --------------------------------------------------------------- two-phase


def test_tree_distance_twophase():
    p = two_phase_solve(0.3, 0.45, -0.5, (3, 9))
    c = cantor_build(p.cantor_spec, 12)
    lefts = c.intervals()[0]
    x = lefts[5]
    assert mt.tree_distance_twophase(p, c, x, x) == pytest.approx(math.exp(level_log_h(p, 12)))
    assert mt.tree_distance_twophase(p, c, lefts[0], lefts[-1]) == pytest.approx(math.exp(level_log_h(p, 0)))
    # siblings share level 11
    assert mt.tree_distance_twophase(p, c, lefts[0], lefts[1]) == pytest.approx(math.exp(level_log_h(p, 11)))
    with pytest.raises(PointsNotInSet):
        mt.tree_distance_twophase(p, c, 0.5, x)


# ------------------------------------------------------------- diagnostics


def test_volume_growth_constant_half_disk():
    g = mt.build_graph(HP, Constant(1.0), mt.whitney_grid(HP, 12), window_anchors([0.5, 0.25]))
    ratios = mt.volume_growth_check(g, 0, [0.2, 0.1, 0.05, 0.025])
    for v in ratios:
        assert abs(v / (math.pi / 2) - 1) <= 0.2
    assert max(ratios) / min(ratios) <= 1.05


def test_local_exponents_power():
    xs = np.concatenate([[0.5], 0.5 + np.geomspace(0.002, 0.4, 40)])
    anchors = window_anchors(xs)
    e = np.abs(xs[:, None] - xs[None, :])
    radii = np.geomspace(0.3, 0.02, 6)
    for beta, expect in ((-0.5, 0.5), (0.0, 1.0)):
        rho = PowerBoundary(beta) if beta else Constant(1.0)
        g = mt.build_graph(HP, rho, mt.whitney_grid(HP, 12), anchors)
        d = mt.rho_distance_matrix(g)
        rho_radii = d[0, 1:].max() * np.geomspace(0.8, 0.3, 5)
        res = mt.local_exponents(e, d, 0, radii, rho_radii)
        assert res.rho_slope == pytest.approx(expect, abs=0.06)
        assert res.rho_slope_min <= res.rho_slope <= res.rho_slope_max
        # inverse scaling of the d-diameter of rho-balls
        assert res.d_slope == pytest.approx(1 / expect, abs=0.25)


def test_local_exponents_far_from_set():
    c = cantor_build(CantorSpec.constant(1 / 3), 8)
    dom = HalfPlaneWindow(-1.0, 1.0, 1.0)
    xs = np.concatenate([[-0.5], -0.5 + np.geomspace(0.002, 0.2, 30)])
    g = mt.build_graph(dom, PowerDistToSet(-0.5, c), mt.whitney_grid(dom, 12), window_anchors(xs))
    e = np.abs(xs[:, None] - xs[None, :])
    res = mt.local_exponents(e, mt.rho_distance_matrix(g), 0, np.geomspace(0.15, 0.01, 5))
    assert res.rho_slope == pytest.approx(1.0, abs=0.08)


def test_local_exponents_empty_ball():
    e = np.array([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(EmptyBall):
        mt.local_exponents(e, e, 0, [0.5])


# ------------------------------------------------------------------ export


def test_matrix_exports(tmp_path, power_graph):
    d = mt.rho_distance_matrix(power_graph)
    mt.write_rhom(tmp_path / "d.rhom", d)
    raw = (tmp_path / "d.rhom").read_bytes()
    assert raw[:4] == b"RHOM"
    assert int.from_bytes(raw[4:8], "little") == 1
    assert int.from_bytes(raw[8:12], "little") == len(d)
    assert len(raw) == 12 + 8 * d.size
    assert np.array_equal(mt.read_rhom(tmp_path / "d.rhom"), d)
    mt.write_matrix_csv(tmp_path / "d.csv", d)
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0].split(",")[1:] == [str(i) for i in range(len(d))]
    back = np.array([[float(v) for v in ln.split(",")[1:]] for ln in lines[1:]])
    assert np.array_equal(back, d)
