"""Graph approximation of the density metric on Whitney grids.

A Whitney grid is a quadtree whose leaves satisfy ``size <= d(center)``;
cells that would need splitting beyond ``max_depth`` are dropped, leaving a
boundary collar of width about ``h_min``. Cell centres are joined with a
16-neighbour stencil (king + knight moves, located through the quadtree so
that it works across size changes) and edge weights use the midpoint rule
``|p - q| * rho((p + q) / 2)``.

Boundary anchors are attached to every cell lying above them within one
cell size: the leg runs along the inward normal (integrated in closed form
where the density allows it, otherwise with an 8-panel midpoint rule) and
then across to the cell centre. Because old leaves survive refinement and
anchor edges only depend on the leaf they reach, the graph at depth m is a
subgraph of the graph at depth m + 1.
"""

from __future__ import annotations

import csv
import heapq
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.special import hyp2f1

from .densities import (
    CantorSet,
    Constant,
    Density,
    PowerBoundary,
    PowerDistToSet,
    TriadicMultifractal,
    TwoPhaseParams,
    TwoPhaseProfile,
    level_log_h,
)
from .domains import BOUNDARY_TOL, Domain, HalfPlaneWindow, UnitDisk, _as_points, points_array
from .errors import (
    AnchorNotOnBoundary,
    DepthExceeded,
    DisconnectedAnchor,
    EmptyBall,
    OutOfRange,
    PointsNotInSet,
    Unreachable,
    UnsupportedDomain,
)

MAX_DEPTH = 14
STENCIL = np.array(
    [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1),
     (1, 2), (2, 1), (-1, 2), (-2, 1), (1, -2), (2, -1), (-1, -2), (-2, -1)],
    dtype=float,
)
LEG_PANELS = 8


# ---------------------------------------------------------------------------
# Whitney grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WhitneyGrid:
    domain: Domain
    max_depth: int
    origin: np.ndarray
    h0: float
    nx: int
    ny: int
    centers: np.ndarray
    sizes: np.ndarray
    levels: np.ndarray
    ij: np.ndarray
    dist: np.ndarray
    edges: np.ndarray = field(repr=False)
    _keys: tuple = field(repr=False)

    def __len__(self) -> int:
        return len(self.sizes)

    @property
    def h_min(self) -> float:
        return float(self.sizes.min())

    def locate(self, pts) -> np.ndarray:
        """Index of the leaf containing each point, or -1."""
        pts = _as_points(pts)
        out = np.full(len(pts), -1, dtype=np.int64)
        for level, (keys, ids) in enumerate(self._keys):
            if len(keys) == 0:
                continue
            size = self.h0 / 2 ** level
            rows = self.ny * 2 ** level
            g = np.floor((pts - self.origin) / size).astype(np.int64)
            ok = (g[:, 0] >= 0) & (g[:, 1] >= 0) & (g[:, 0] < self.nx * 2 ** level) & (g[:, 1] < rows)
            q = g[:, 0] * rows + g[:, 1]
            pos = np.clip(np.searchsorted(keys, q), 0, len(keys) - 1)
            hit = ok & (keys[pos] == q) & (out < 0)
            out[hit] = ids[pos[hit]]
        return out


def whitney_grid(domain: Domain, max_depth: int) -> WhitneyGrid:
    """Quadtree leaves with ``size <= d(center)`` down to ``max_depth`` levels."""
    if max_depth > MAX_DEPTH:
        raise DepthExceeded(f"max_depth {max_depth} exceeds the limit {MAX_DEPTH}")
    if max_depth < 0:
        raise OutOfRange("max_depth must be >= 0")
    origin, h0, nx, ny = domain.grid_frame()
    origin = np.asarray(origin, dtype=float)
    gi, gj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    cand = np.column_stack([gi.ravel(), gj.ravel()]).astype(np.int64)
    out_ij, out_lv, out_c, out_d = [], [], [], []
    for level in range(max_depth + 1):
        size = h0 / 2 ** level
        centers = origin + (cand + 0.5) * size
        inside = domain.inside_many(centers)
        d = domain.distance_many(centers)
        leaf = inside & (size <= d)
        out_ij.append(cand[leaf])
        out_lv.append(np.full(int(leaf.sum()), level))
        out_c.append(centers[leaf])
        out_d.append(d[leaf])
        if level == max_depth:
            break
        # cells entirely outside the domain are discarded
        split = ~leaf & (inside | (d <= size * math.sqrt(0.5)))
        parent = cand[split]
        cand = np.concatenate(
            [parent * 2 + np.array(off) for off in ((0, 0), (0, 1), (1, 0), (1, 1))]
        )
        cand = cand[np.lexsort((cand[:, 1], cand[:, 0]))]
    ij = np.concatenate(out_ij)
    levels = np.concatenate(out_lv)
    centers = np.concatenate(out_c)
    dist = np.concatenate(out_d)
    sizes = h0 / 2.0 ** levels
    keys = []
    start = 0
    for level, block in enumerate(out_ij):
        rows = ny * 2 ** level
        k = block[:, 0] * rows + block[:, 1]
        order = np.argsort(k, kind="stable")
        keys.append((k[order], start + order))
        start += len(block)
    grid = WhitneyGrid(domain, max_depth, origin, float(h0), nx, ny, centers, sizes, levels, ij, dist,
                       np.empty((0, 2), dtype=np.int64), tuple(keys))
    object.__setattr__(grid, "edges", _stencil_edges(grid))
    return grid


def _stencil_edges(grid: WhitneyGrid) -> np.ndarray:
    n = len(grid)
    if n == 0:
        return np.empty((0, 2), dtype=np.int64)
    src = np.repeat(np.arange(n), len(STENCIL))
    q = (grid.centers[:, None, :] + STENCIL[None, :, :] * grid.sizes[:, None, None]).reshape(-1, 2)
    dst = grid.locate(q)
    ok = (dst >= 0) & (dst != src)
    a = np.minimum(src[ok], dst[ok])
    b = np.maximum(src[ok], dst[ok])
    pairs = np.unique(np.column_stack([a, b]), axis=0)
    # the segment lies in B(p, d(p)) u B(q, d(q)) and hence in the domain
    gap = np.hypot(*(grid.centers[pairs[:, 0]] - grid.centers[pairs[:, 1]]).T)
    keep = gap < grid.dist[pairs[:, 0]] + grid.dist[pairs[:, 1]]
    return pairs[keep]


# ---------------------------------------------------------------------------
# Metric graph
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MetricGraph:
    """Weighted undirected graph on cell centres (first) and anchors (last)."""

    domain: Domain
    density: Density
    grid: WhitneyGrid
    anchors: np.ndarray
    edges: np.ndarray
    weights: np.ndarray
    floor: float
    leg_min: np.ndarray = field(repr=False)
    csr: csr_matrix = field(repr=False)

    @property
    def n_cells(self) -> int:
        return len(self.grid)

    @property
    def n_nodes(self) -> int:
        return self.n_cells + len(self.anchors)

    def anchor_node(self, a: int) -> int:
        if not 0 <= a < len(self.anchors):
            raise IndexError(f"anchor index {a} out of range")
        return self.n_cells + a

    @property
    def resolution(self) -> float:
        """Largest over anchors of the cheapest leg leaving that anchor (rho units)."""
        return float(self.leg_min.max()) if len(self.leg_min) else 0.0

    def node_heights(self) -> np.ndarray:
        return np.concatenate([self.grid.dist, np.zeros(len(self.anchors))])


def _vertical_leg(density: Density, domain: Domain, a: np.ndarray, n: np.ndarray,
                  t: np.ndarray, floor: float) -> np.ndarray:
    """Integral of rho along ``a + s n`` for ``0 <= s <= t`` (one anchor, many t)."""
    closed_domain = isinstance(domain, (HalfPlaneWindow, UnitDisk))
    if isinstance(density, Constant):
        return density.c * t
    if isinstance(density, PowerBoundary) and closed_domain:
        b = density.beta
        return density.scale * t ** (1.0 + b) / (1.0 + b)
    if isinstance(density, PowerDistToSet) and isinstance(domain, HalfPlaneWindow):
        b = density.beta
        dx = float(density.set_offsets(np.array([a[0]]))[0])
        if dx == 0.0:
            return density.scale * t ** (1.0 + b) / (1.0 + b)
        return density.scale * t * dx ** b * hyp2f1(-b / 2.0, 0.5, 1.5, -(t / dx) ** 2)
    frac = (np.arange(LEG_PANELS) + 0.5) / LEG_PANELS
    s = t[:, None] * frac[None, :]
    pts = a[None, None, :] + s[..., None] * n[None, None, :]
    vals = density.values(pts.reshape(-1, 2), domain, floor).reshape(s.shape)
    return vals.sum(axis=1) * t / LEG_PANELS


def build_graph(domain: Domain, density: Density, grid: WhitneyGrid, anchors) -> MetricGraph:
    """Weighted graph approximating ``d_rho`` between the given boundary anchors."""
    anchors = points_array(anchors) if not isinstance(anchors, np.ndarray) else _as_points(anchors)
    floor = grid.h_min if isinstance(density, (PowerDistToSet, TwoPhaseProfile)) else 0.0
    centers = grid.centers
    e = grid.edges
    p, q = centers[e[:, 0]], centers[e[:, 1]]
    w_cells = np.hypot(*(q - p).T) * density.values(0.5 * (p + q), domain, floor)

    on_bdry = domain.in_closure_many(anchors) & (domain.distance_many(anchors) <= BOUNDARY_TOL)
    if not np.all(on_bdry):
        bad = anchors[~on_bdry][0]
        raise AnchorNotOnBoundary(f"anchor {tuple(bad)} is not on the boundary")

    n_cells = len(grid)
    a_src, a_dst, a_w = [], [], []
    leg_min = np.empty(len(anchors))
    probe = (np.arange(1, LEG_PANELS + 1) - 0.5) / LEG_PANELS
    for k, a in enumerate(anchors):
        nrm = domain.inward_normal(a)
        perp_dir = np.array([-nrm[1], nrm[0]])
        rel = centers - a
        t = rel @ nrm
        perp = rel @ perp_dir
        cand = np.flatnonzero((t > 0) & (np.abs(perp) <= grid.sizes))
        if len(cand) == 0:
            raise DisconnectedAnchor(f"anchor {k} at {tuple(a)} reaches no grid cell")
        tc, pc = t[cand], perp[cand]
        foot = a + tc[:, None] * nrm
        if not isinstance(domain, (HalfPlaneWindow, UnitDisk)):
            # non-convex domain: both pieces of the leg must stay inside
            up = a + (tc[:, None, None] * probe[None, :, None]) * nrm
            across = foot[:, None, :] + (pc[:, None, None] * probe[None, :, None]) * perp_dir
            pts = np.concatenate([up, across], axis=1)
            ok = domain.inside_many(pts.reshape(-1, 2)).reshape(len(cand), -1).all(axis=1)
            cand, tc, pc, foot = cand[ok], tc[ok], pc[ok], foot[ok]
            if len(cand) == 0:
                raise DisconnectedAnchor(f"anchor {k} at {tuple(a)} reaches no grid cell")
        vert = _vertical_leg(density, domain, a, nrm, tc, floor)
        mids = foot + 0.5 * pc[:, None] * perp_dir
        horiz = np.abs(pc) * density.values(mids, domain, floor)
        w = vert + horiz
        leg_min[k] = w.min()
        a_src.append(np.full(len(cand), n_cells + k))
        a_dst.append(cand)
        a_w.append(w)

    edges = np.vstack([e, np.column_stack([np.concatenate(a_dst), np.concatenate(a_src)])])
    weights = np.concatenate([w_cells, *a_w])
    n = n_cells + len(anchors)
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    mat = csr_matrix((np.concatenate([weights, weights]), (rows, cols)), shape=(n, n))
    graph = MetricGraph(domain, density, grid, anchors, edges, weights, floor, leg_min, mat)
    if len(anchors) > 1:
        _, labels = connected_components(mat, directed=False)
        if len(set(labels[n_cells:])) != 1:
            raise DisconnectedAnchor("anchors lie in different connected components")
    return graph


def _heap_dijkstra(graph: MetricGraph, source: int, target: int | None = None):
    """Label-setting shortest paths with a binary heap; ties broken by node index."""
    indptr, indices, data = graph.csr.indptr, graph.csr.indices, graph.csr.data
    dist = {source: 0.0}
    pred = {source: -1}
    done = set()
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == target:
            break
        for k in range(indptr[u], indptr[u + 1]):
            v = int(indices[k])
            nd = d + data[k]
            if v not in dist or nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))
    return dist, pred


def rho_distance(graph: MetricGraph, a: int, b: int) -> float:
    """Shortest-path rho-distance between anchors ``a`` and ``b``."""
    src, dst = graph.anchor_node(a), graph.anchor_node(b)
    if src == dst:
        return 0.0
    lo, hi = min(src, dst), max(src, dst)
    dist, _ = _heap_dijkstra(graph, lo, hi)
    if hi not in dist:
        raise Unreachable(f"anchor {b} is unreachable from anchor {a}")
    return float(dist[hi])


def distances_from(graph: MetricGraph, a: int) -> np.ndarray:
    """Distances from anchor ``a`` to every node (cells first, then anchors)."""
    return dijkstra(graph.csr, directed=True, indices=graph.anchor_node(a))


def rho_distance_matrix(graph: MetricGraph, anchors=None, chunk: int = 32) -> np.ndarray:
    """Pairwise anchor distances, one shortest-path sweep per anchor, symmetrised."""
    idx = np.arange(len(graph.anchors)) if anchors is None else np.asarray(anchors, dtype=int)
    if len(idx) < 2:
        raise OutOfRange("rho_distance_matrix needs at least two anchors")
    nodes = graph.n_cells + idx
    out = np.empty((len(idx), len(idx)))
    for lo in range(0, len(idx), chunk):
        sweep = dijkstra(graph.csr, directed=True, indices=nodes[lo:lo + chunk])
        out[lo:lo + chunk] = sweep[:, nodes]
    if not np.all(np.isfinite(out)):
        raise Unreachable("some anchors are mutually unreachable")
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, 0.0)
    return out


def path_height(graph: MetricGraph, a: int, b: int) -> float:
    """Maximal boundary distance along the computed geodesic between two anchors.

    Diagnostic for the height condition ``h(gamma) >= d(x, y)^(1 + eps)``.
    """
    src, dst = graph.anchor_node(a), graph.anchor_node(b)
    _, pred = dijkstra(graph.csr, directed=True, indices=src, return_predecessors=True)
    heights = graph.node_heights()
    h, node = 0.0, dst
    while node >= 0:
        h = max(h, heights[node])
        node = pred[node]
    return float(h)


# ---------------------------------------------------------------------------
# Radial / tent paths
# ---------------------------------------------------------------------------


def _quad(f, lo, hi, points=None) -> float:
    if hi <= lo:
        return 0.0
    pts = None
    if points is not None:
        inner = sorted(p for p in points if lo < p < hi)
        pts = inner[:100] or None
    val, _ = integrate.quad(f, lo, hi, epsrel=1e-6, epsabs=0.0, limit=400, points=pts)
    return float(val)


def _breaks(density: Density, r: float) -> list[float] | None:
    if isinstance(density, TriadicMultifractal):
        out, n = [], 0
        while 2.0 * 3.0 ** -n > r * 1e-6:
            out.append(2.0 * 3.0 ** -n)
            n += 1
        return out
    return None


def radial_path_distance(density: Density, domain: Domain, x, y) -> float:
    """rho-length of the comparison path between two boundary points.

    Half-plane window: up ``r = |x - y|`` from x, across at height r, and down
    to y. Unit disk: the two radial integrals of rho over length ``|x - y|``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)

    def rho(pt):
        return float(density.values(np.asarray(pt, dtype=float).reshape(1, 2), domain)[0])

    if isinstance(domain, HalfPlaneWindow):
        r = float(abs(x[0] - y[0]))
        if r == 0.0:
            return 0.0
        if r > domain.y_max:
            raise OutOfRange("tent path leaves the window (|x - y| > y_max)")
        brk = _breaks(density, r)
        leg1 = _quad(lambda t: rho((x[0], t)), 0.0, r, brk)
        leg3 = _quad(lambda t: rho((y[0], t)), 0.0, r, brk)
        lo, hi = sorted((x[0], y[0]))
        top = _quad(lambda s: rho((s, r)), lo, hi)
        return leg1 + top + leg3
    if isinstance(domain, UnitDisk):
        dxy = float(np.hypot(*(x - y)))
        return _quad(lambda t: rho((1.0 - t) * x), 0.0, dxy) + _quad(lambda t: rho((1.0 - t) * y), 0.0, dxy)
    raise UnsupportedDomain("radial paths are defined for half-plane windows and the unit disk")


def tent_cost_power(beta: float, r: float) -> float:
    """Closed-form tent-path cost for ``rho = y**beta``: ``(2/(1+beta) + 1) r**(1+beta)``."""
    return (2.0 / (1.0 + beta) + 1.0) * r ** (1.0 + beta)


# ---------------------------------------------------------------------------
# Two-phase tree distances
# ---------------------------------------------------------------------------


def tree_distance_twophase(params: TwoPhaseParams, cantor: CantorSet, x: float, y: float) -> float:
    """``h_m`` for the deepest level m at which x and y share an interval.

    For ``x == y`` (same deepest interval) this returns ``h_level``, the
    resolution floor of the built set.
    """
    ix, iy = cantor.interval_index([x, y])
    if ix < 0 or iy < 0:
        raise PointsNotInSet(f"points {x}, {y} are not both in the level-{cantor.level} set")
    m = cantor.level - int(int(ix) ^ int(iy)).bit_length()
    return math.exp(level_log_h(params, m))


# ---------------------------------------------------------------------------
# Conformal-density diagnostics
# ---------------------------------------------------------------------------


def volume_growth_check(graph: MetricGraph, anchor: int, radii) -> list[float]:
    """``mu_rho(B_rho(x, r)) / r**2`` for each radius, x the given anchor.

    Each cell contributes ``rho(center)**2 * size**2`` times the fraction of it
    assumed inside the ball: the fraction ramps linearly from 1 to 0 as the
    centre distance crosses ``r`` over one cell's rho-width. Counting whole
    cells by their centres alone overestimates by ~25% because Whitney cells
    at the rim of the ball are as large as their distance to the boundary.
    """
    dist = distances_from(graph, anchor)[: graph.n_cells]
    g = graph.grid
    rho = graph.density.values(g.centers, graph.domain, graph.floor)
    mass = rho ** 2 * g.sizes ** 2
    width = rho * g.sizes
    out = []
    for r in radii:
        frac = np.clip((r - dist) / width + 0.5, 0.0, 1.0)
        out.append(float((frac * mass).sum()) / r ** 2)
    return out


@dataclass(frozen=True)
class LocalExponents:
    radii: np.ndarray
    diam_rho_of_d_ball: np.ndarray
    diam_d_of_rho_ball: np.ndarray
    rho_slope: float
    d_slope: float
    rho_slope_min: float
    rho_slope_max: float
    d_slope_min: float
    d_slope_max: float


def _ball_diam(center_row: np.ndarray, radius: float, other: np.ndarray) -> float:
    inside = np.flatnonzero(center_row < radius)
    if len(inside) < 2:
        raise EmptyBall(f"ball of radius {radius:g} holds fewer than two points")
    return float(other[np.ix_(inside, inside)].max())


def _slopes(log_r: np.ndarray, log_v: np.ndarray):
    slope = float(np.polyfit(log_r, log_v, 1)[0])
    adj = np.diff(log_v) / np.diff(log_r)
    return slope, float(adj.min()), float(adj.max())


def local_exponents(d_matrix, rho_matrix, base: int, radii, rho_radii=None) -> LocalExponents:
    """Scaling of ``diam_rho(B_d(x, r))`` and ``diam_d(B_rho(x, r))`` in r.

    Both balls are taken in the finite anchor set. ``rho_radii`` sets the radii
    of the rho-balls (defaults to ``radii``). Returns log-log regression slopes
    and min/max adjacent-scale slopes.
    """
    d = np.asarray(d_matrix, dtype=float)
    rho = np.asarray(rho_matrix, dtype=float)
    radii = np.asarray(radii, dtype=float)
    rho_radii = radii if rho_radii is None else np.asarray(rho_radii, dtype=float)
    a = np.array([_ball_diam(d[base], r, rho) for r in radii])
    b = np.array([_ball_diam(rho[base], r, d) for r in rho_radii])
    s1 = _slopes(np.log(radii), np.log(a))
    s2 = _slopes(np.log(rho_radii), np.log(b))
    return LocalExponents(radii, a, b, s1[0], s2[0], s1[1], s1[2], s2[1], s2[2])


# ---------------------------------------------------------------------------
# Matrix export
# ---------------------------------------------------------------------------

RHOM_MAGIC = b"RHOM"
RHOM_VERSION = 1


def write_matrix_csv(path, matrix: np.ndarray, labels=None) -> None:
    matrix = np.asarray(matrix, dtype=float)
    labels = list(range(len(matrix))) if labels is None else list(labels)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + labels)
        for lab, row in zip(labels, matrix):
            w.writerow([lab] + [repr(float(v)) for v in row])


def write_rhom(path, matrix: np.ndarray) -> None:
    """Binary dump: magic, u32 version, u32 n, row-major little-endian float64."""
    matrix = np.ascontiguousarray(matrix, dtype="<f8")
    n = matrix.shape[0]
    if matrix.shape != (n, n):
        raise ValueError("RHOM matrices must be square")
    with open(path, "wb") as fh:
        fh.write(RHOM_MAGIC + struct.pack("<II", RHOM_VERSION, n))
        fh.write(matrix.tobytes(order="C"))


def read_rhom(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(12)
        if head[:4] != RHOM_MAGIC:
            raise ValueError("not an RHOM file")
        version, n = struct.unpack("<II", head[4:])
        if version != RHOM_VERSION:
            raise ValueError(f"unsupported RHOM version {version}")
        data = np.frombuffer(fh.read(8 * n * n), dtype="<f8")
    return data.reshape(n, n).copy()
