"""Cluster structure of a configuration: labels, window geometry, colors,
and boundary loops.

Labeling is union-find over open bonds (or same-state adjacency for site
configurations).  Window statistics restrict clusters to an observation
window and report exact Euclidean diameters of the restricted site sets
(convex hull, then max over hull vertex pairs).  Loop tracing walks the
medial lattice of a free square patch: around every site sit four quarter
arcs, and at each bond midpoint arcs are joined according to whether the
bond is open (strands run along the bond) or closed (strands wrap the
endpoints).  Every medial edge then lies on exactly one closed loop.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from . import lattice as lat
from .sampler import edge_arrays, _find, _union


@dataclass
class ClusterLabeling:
    """Dense cluster labels for one configuration on one graph."""

    graph: lat.LatticeGraph
    labels: np.ndarray          # (N,) int32 in [0, count)
    count: int
    sizes: np.ndarray           # (count,) int64 full-graph site counts
    dual_labels: Optional[np.ndarray] = None
    dual_count: int = 0

    def labels_grid(self) -> np.ndarray:
        """Labels reshaped (ny, nx); defined for full rectangular grids."""
        g = self.graph
        if g.nx * g.ny != g.nsites:
            raise ValueError("labels_grid needs a full rectangular grid")
        return self.labels.reshape(g.ny, g.nx)


@njit(cache=True)
def _label_kernel(n, eu, ev, mask, premerge, labels):
    parent = np.empty(n, np.int32)
    csize = np.empty(n, np.int32)
    for i in range(n):
        parent[i] = i
        csize[i] = 1
    for k in range(1, premerge.size):
        _union(parent, csize, premerge[0], premerge[k])
    for e in range(eu.size):
        if mask[e]:
            _union(parent, csize, eu[e], ev[e])
    rootlab = np.full(n, -1, np.int32)
    k = 0
    for i in range(n):
        r = _find(parent, i)
        if rootlab[r] < 0:
            rootlab[r] = k
            k += 1
        labels[i] = rootlab[r]
    return k


def label_clusters(graph: lat.LatticeGraph, config: np.ndarray,
                   config_kind: Optional[str] = None,
                   with_dual: bool = False) -> ClusterLabeling:
    """Label clusters of a bond configuration (open-bond connectivity) or a
    site configuration (same-state adjacency; both species labeled).

    `config_kind` in {"bonds", "sites"} disambiguates when the graph has as
    many bonds as sites.  Wired graphs pre-merge their hull sites.  With
    `with_dual`, also label the dual configuration (closed bonds open on the
    dual graph); requires a graph that carries a dual-bond map."""
    n = graph.nsites
    eu, ev = edge_arrays(graph)
    if config_kind is None:
        if graph.nbonds == n:
            raise ValueError("ambiguous config size; pass config_kind")
        config_kind = "bonds" if config.size == graph.nbonds else "sites"
    if config_kind == "bonds":
        if config.size != graph.nbonds:
            raise ValueError("bond config has wrong size")
        mask = np.ascontiguousarray(config, dtype=np.bool_)
    elif config_kind == "sites":
        if config.size != n:
            raise ValueError("site config has wrong size")
        state = np.asarray(config)
        mask = state[eu] == state[ev]
    else:
        raise ValueError(f"unknown config_kind {config_kind!r}")
    labels = np.empty(n, np.int32)
    k = _label_kernel(n, eu, ev, mask, graph.premerge_sites, labels)
    sizes = np.bincount(labels, minlength=k).astype(np.int64)
    out = ClusterLabeling(graph=graph, labels=labels, count=int(k), sizes=sizes)
    if with_dual:
        if graph.dual_edges is None:
            raise ValueError("graph carries no dual-bond map")
        if config_kind != "bonds":
            raise ValueError("dual labeling is defined for bond configs")
        du = np.ascontiguousarray(graph.dual_edges[:, 0])
        dv = np.ascontiguousarray(graph.dual_edges[:, 1])
        dlabels = np.empty(graph.dual_nsites, np.int32)
        dk = _label_kernel(graph.dual_nsites, du, dv, ~mask,
                           np.empty(0, np.int32), dlabels)
        out.dual_labels = dlabels
        out.dual_count = int(dk)
    return out


# ---------------------------------------------------------------------------
# window statistics


@njit(cache=True)
def _group_diameters(xs, ys, starts, out):
    """Exact max pairwise distance per group; points in each group are sorted
    lexicographically by (x, y) so a monotone-chain hull applies."""
    maxpts = 0
    for g in range(starts.size - 1):
        if starts[g + 1] - starts[g] > maxpts:
            maxpts = starts[g + 1] - starts[g]
    hx = np.empty(2 * maxpts + 1, np.float64)
    hy = np.empty(2 * maxpts + 1, np.float64)
    for g in range(starts.size - 1):
        lo, hi = starts[g], starts[g + 1]
        m = hi - lo
        if m <= 1:
            out[g] = 0.0
            continue
        if m == 2:
            out[g] = np.hypot(xs[lo + 1] - xs[lo], ys[lo + 1] - ys[lo])
            continue
        # lower hull
        nh = 0
        for i in range(lo, hi):
            while nh >= 2 and ((hx[nh - 1] - hx[nh - 2]) * (ys[i] - hy[nh - 2])
                               - (hy[nh - 1] - hy[nh - 2]) * (xs[i] - hx[nh - 2])) <= 0.0:
                nh -= 1
            hx[nh] = xs[i]
            hy[nh] = ys[i]
            nh += 1
        # upper hull
        base = nh + 1
        nh2 = nh
        for i in range(hi - 2, lo - 1, -1):
            while nh2 >= base and ((hx[nh2 - 1] - hx[nh2 - 2]) * (ys[i] - hy[nh2 - 2])
                                   - (hy[nh2 - 1] - hy[nh2 - 2]) * (xs[i] - hx[nh2 - 2])) <= 0.0:
                nh2 -= 1
            hx[nh2] = xs[i]
            hy[nh2] = ys[i]
            nh2 += 1
        best = 0.0
        for i in range(nh2):
            for j in range(i + 1, nh2):
                d = (hx[i] - hx[j]) ** 2 + (hy[i] - hy[j]) ** 2
                if d > best:
                    best = d
        out[g] = np.sqrt(best)


@njit(cache=True)
def _minmax_dist(coords, labels, k, fx, fy, periodic, lx, ly, tri, scale,
                 dmin, dmax):
    half = np.sqrt(3.0) / 2.0
    for i in range(coords.shape[0]):
        di = coords[i, 0] - fx
        dj = coords[i, 1] - fy
        if periodic:
            di -= lx * np.round(di / lx)
            dj -= ly * np.round(dj / ly)
        if tri:
            ex = di + 0.5 * dj
            ey = half * dj
        else:
            ex = di
            ey = dj
        d = np.sqrt(ex * ex + ey * ey) * scale
        l = labels[i]
        if d < dmin[l]:
            dmin[l] = d
        if d > dmax[l]:
            dmax[l] = d


@dataclass
class ClusterStats:
    """Per-cluster window statistics: one row per cluster meeting the window.

    `window_order`/`group_starts` give each cluster's window support:
    sites of cluster row g are window_order[group_starts[g]:group_starts[g+1]].
    Distances to the reference point are over the full cluster (min-image on
    tori); diameters are over the window-restricted site set."""

    ids: np.ndarray             # (m,) cluster labels
    total_sizes: np.ndarray     # (m,) int64
    window_sizes: np.ndarray    # (m,) int64
    diameters: np.ndarray       # (m,) float64, continuum units
    dmin: Optional[np.ndarray]
    dmax: Optional[np.ndarray]
    window_order: np.ndarray    # sorted window site indices, grouped by cluster
    group_starts: np.ndarray    # (m+1,)

    def __len__(self) -> int:
        return len(self.ids)


def cluster_stats(labeling: ClusterLabeling, window: lat.Window,
                  refpoint=None) -> ClusterStats:
    g = labeling.graph
    wsites = g.window_sites(window)
    if wsites.size == 0:
        raise ValueError("window contains no sites")
    wl = labeling.labels[wsites]
    pos = g.positions()
    xs, ys = pos[wsites, 0], pos[wsites, 1]
    order = np.lexsort((ys, xs, wl))
    wl_sorted = wl[order]
    boundaries = np.nonzero(np.diff(wl_sorted))[0] + 1
    starts = np.concatenate(([0], boundaries, [wl_sorted.size])).astype(np.int64)
    ids = wl_sorted[starts[:-1]].astype(np.int32)
    window_sizes = np.diff(starts)
    diam = np.empty(len(ids), np.float64)
    _group_diameters(xs[order], ys[order], starts, diam)
    dmin = dmax = None
    if refpoint is not None:
        fx, fy = lat.invert_embed(g.kind, refpoint[0] / g.a, refpoint[1] / g.a)
        dmin_all = np.full(labeling.count, np.inf)
        dmax_all = np.full(labeling.count, -np.inf)
        _minmax_dist(g.coords, labeling.labels, labeling.count, fx, fy,
                     g.boundary == "periodic", g.nx, g.ny,
                     g.kind == "triangular", g.a, dmin_all, dmax_all)
        dmin, dmax = dmin_all[ids], dmax_all[ids]
    return ClusterStats(
        ids=ids, total_sizes=labeling.sizes[ids],
        window_sizes=window_sizes.astype(np.int64), diameters=diam,
        dmin=dmin, dmax=dmax,
        window_order=wsites[order].astype(np.int32), group_starts=starts,
    )


# ---------------------------------------------------------------------------
# cluster coloring


@dataclass
class SpinConfig:
    """Cluster colors pushed down to sites."""

    graph: lat.LatticeGraph
    q: int
    cluster_colors: np.ndarray  # (k,) int8
    colors: np.ndarray          # (N,) int8


def color_clusters(labeling: ClusterLabeling, q: int,
                   rng: np.random.Generator,
                   fixed: Optional[tuple] = None) -> SpinConfig:
    """Independent uniform colors per cluster (the spin marginal given the
    bond configuration).  `fixed=(label, color)` pins one cluster, e.g. a
    ghost-joined cluster to the favored color; the pinned cluster consumes
    no draw."""
    cc = rng.integers(0, q, size=labeling.count).astype(np.int8)
    if fixed is not None:
        cc[fixed[0]] = fixed[1]
    return SpinConfig(graph=labeling.graph, q=int(q),
                      cluster_colors=cc, colors=cc[labeling.labels])


# ---------------------------------------------------------------------------
# medial loops

# Quarter arcs around a site, by the pair of bond directions they join.
# Directions: 0=E, 1=N, 2=W, 3=S.  Arc q joins _ARC_DIRS[q][0] to [1].
_ARC_DIRS = ((0, 1), (1, 2), (2, 3), (3, 0))
_STEP = {0: (1, 0), 1: (0, 1), 2: (-1, 0), 3: (0, -1)}


@dataclass
class Loop:
    vertices: np.ndarray        # (L, 2) bond midpoints, continuum units
    length: int                 # number of medial edges (= arcs traversed)
    sites_inside: bool          # primal sites immediately inside the loop


@dataclass
class LoopSet:
    loops: list
    n_arcs: int

    def __len__(self) -> int:
        return len(self.loops)

    def count_with_sites_inside(self) -> int:
        return sum(1 for l in self.loops if l.sites_inside)


def _bond_key(x, y, direction):
    """Canonical (x, y, orientation) key of the bond leaving (x,y) toward
    `direction`; orientation 0 = horizontal, 1 = vertical."""
    if direction == 0:
        return (x, y, 0)
    if direction == 2:
        return (x - 1, y, 0)
    if direction == 1:
        return (x, y, 1)
    return (x, y - 1, 1)


def _midpoint(x, y, direction):
    dx, dy = _STEP[direction]
    return (x + 0.5 * dx, y + 0.5 * dy)


def trace_medial_loops(graph: lat.LatticeGraph, bond_open: np.ndarray) -> LoopSet:
    """All medial loops of a free square patch.

    Every site contributes four quarter arcs; arcs meet at bond midpoints
    (bonds outside the graph count as closed).  Open bond: strands run along
    both sides of the bond.  Closed bond: strands wrap each endpoint.  The
    walk visits each arc exactly once, so loops partition the 4N medial
    edges.  `sites_inside` marks loops that wrap sites (cluster outer
    boundaries) as opposed to holes."""
    if graph.kind != "square" or graph.boundary != "free":
        raise ValueError("medial loops are defined on free square patches")
    coords = graph.coords
    site_at = {(int(x), int(y)): s for s, (x, y) in enumerate(coords)}
    open_bond = {}
    for e, (u, v) in enumerate(graph.edges):
        x1, y1 = coords[u]
        x2, y2 = coords[v]
        key = (int(min(x1, x2)), int(min(y1, y2)), 0 if y1 == y2 else 1)
        open_bond[key] = bool(bond_open[e])

    # Arc ends incident to each bond midpoint, slotted so pairing is direct:
    # horizontal bond: [0: left q0, 1: left q3, 2: right q1, 3: right q2]
    # vertical bond:   [0: lower q0, 1: lower q1, 2: upper q2, 3: upper q3]
    # keyed by (quadrant, direction of the bond as seen from the site)
    slot_of = {(0, 0): 0, (3, 0): 1, (1, 2): 2, (2, 2): 3,
               (0, 1): 0, (1, 1): 1, (2, 3): 2, (3, 3): 3}
    incident = {}
    for (x, y), s in site_at.items():
        for q in range(4):
            for end, direction in enumerate(_ARC_DIRS[q]):
                key = _bond_key(x, y, direction)
                slot = slot_of[(q, direction)]
                incident.setdefault(key, {})[slot] = (s, q, end)

    partner = {}
    for key, slots in incident.items():
        is_open = open_bond.get(key, False)
        if is_open:
            # strands run along the bond: NE/SW strands differ by orientation
            pairs = ((0, 2), (1, 3)) if key[2] == 0 else ((0, 3), (1, 2))
        else:
            pairs = ((0, 1), (2, 3))
        for a, b in pairs:
            ea, eb = slots.get(a), slots.get(b)
            if ea is None or eb is None:
                if is_open:
                    raise AssertionError("open bond with a missing endpoint")
                continue
            partner[ea] = eb
            partner[eb] = ea

    visited = np.zeros((graph.nsites, 4), bool)
    loops = []
    pos_scale = graph.a
    for s0 in range(graph.nsites):
        for q0 in range(4):
            if visited[s0, q0]:
                continue
            verts = []
            s, q, end = s0, q0, 0
            while True:
                visited[s, q] = True
                exit_end = 1 - end
                x, y = coords[s]
                verts.append(_midpoint(int(x), int(y), _ARC_DIRS[q][exit_end]))
                s, q, end = partner[(s, q, exit_end)]
                if s == s0 and q == q0 and end == 0:
                    break
            varr = np.asarray(verts, np.float64) * pos_scale
            px, py = coords[s0, 0] * pos_scale, coords[s0, 1] * pos_scale
            loops.append(Loop(vertices=varr, length=len(verts),
                              sites_inside=_point_in_polygon(px, py, varr)))
    return LoopSet(loops=loops, n_arcs=4 * graph.nsites)


def _point_in_polygon(px: float, py: float, verts: np.ndarray) -> bool:
    """Even-odd ray cast.  Vertices sit at bond midpoints (half-integer
    lattice coordinates) while sites sit at integers, so the horizontal ray
    through a site never grazes a vertex."""
    inside = False
    n = len(verts)
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        if (y1 > py) != (y2 > py):
            xcross = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if xcross > px:
                inside = not inside
    return inside


def loops_to_json(loopset: LoopSet) -> dict:
    """Plot-ready polyline description of a loop set."""
    return {
        "count": len(loopset),
        "n_medial_edges": loopset.n_arcs,
        "loops": [
            {
                "vertices": [[float(x), float(y)] for x, y in loop.vertices],
                "length": int(loop.length),
                "sites_inside": bool(loop.sites_inside),
            }
            for loop in loopset.loops
        ],
    }
