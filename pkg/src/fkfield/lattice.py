"""Lattice geometry: graphs, duals, observation regions.

A graph is a flat site/edge array bundle (plus CSR adjacency) so numba kernels
can consume it directly.  Square lattices carry a dual-bond map where one is
well defined: on the torus (faces form the dual torus) and on free rectangular
patches (bounded faces plus one outer super-site).  Triangular lattices and
irregular site subsets carry no dual map.

Conventions
-----------
* Spacing `a` is dimensionless; the unit observation window [0,1]^2 over
  spacing a = 1/n contains (n+1)^2 sites: both boundary rows belong to the
  window.
* Site order is row-major: site = j*nx + i.  Edge order is per-site in a fixed
  direction sweep (E, N, then SE for triangular), which pins the byte layout of
  packed bond configurations.
* "wired" boundary means free geometry with the hull sites treated as
  pre-merged by every labeling; the graph just records which sites those are.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

SQRT3_2 = np.sqrt(3.0) / 2.0


@dataclass(frozen=True)
class LatticeSpec:
    """What to build: kind in {square, triangular}, linear size n, boundary
    in {free, periodic, wired}, spacing a."""

    kind: str = "square"
    n: int = 8
    boundary: str = "free"
    a: float = 1.0

    def validate(self) -> None:
        if self.kind not in ("square", "triangular"):
            raise ValueError(f"unknown lattice kind {self.kind!r}")
        if self.boundary not in ("free", "periodic", "wired"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.boundary == "periodic" and self.n < 3:
            raise ValueError("periodic lattice needs n >= 3 (no multi-edges)")
        if not (self.a > 0):
            raise ValueError("spacing a must be positive")


@dataclass(frozen=True)
class Window:
    """Axis-aligned square region; inside is the closed box."""

    x0: float
    y0: float
    side: float


@dataclass(frozen=True)
class Disc:
    """Closed Euclidean ball of radius r around (cx, cy)."""

    cx: float
    cy: float
    r: float


@dataclass(frozen=True)
class Annulus:
    """Annulus r1 <= dist <= r2 around (cx, cy).  The companion strict
    regions are dist < r1 (inner) and dist > r2 (outer)."""

    cx: float
    cy: float
    r1: float
    r2: float

    def validate(self) -> None:
        if not (0 < self.r1 < self.r2):
            raise ValueError("annulus needs 0 < r1 < r2")


@dataclass(frozen=True)
class PointClass:
    """Where a site sits relative to a region."""

    distance: float
    inside: bool
    inside_inner: Optional[bool] = None
    outside_outer: Optional[bool] = None


class LatticeGraph:
    """Flat array bundle for one finite lattice."""

    def __init__(self, kind, boundary, nx, ny, a, coords, edges,
                 boundary_sites, dual_nsites=0, dual_edges=None,
                 dual_coords=None, center_site=-1):
        self.kind = kind
        self.boundary = boundary
        self.nx = int(nx)
        self.ny = int(ny)
        self.a = float(a)
        self.coords = coords                    # (N,2) int32 lattice coords
        self.edges = edges                      # (E,2) int32 site pairs
        self.boundary_sites = boundary_sites    # int32 hull sites (may be empty)
        self.dual_nsites = int(dual_nsites)
        self.dual_edges = dual_edges            # (E,2) int32 dual pairs, aligned with edges
        self.dual_coords = dual_coords          # (dual_nsites,2) float lattice coords
        self.center_site = int(center_site)
        self.nsites = int(len(coords))
        self.nbonds = int(len(edges))
        self._adj = None
        self._pos = None

    # -- derived structure ------------------------------------------------

    @property
    def wired(self) -> bool:
        return self.boundary == "wired"

    @property
    def premerge_sites(self) -> np.ndarray:
        """Sites every labeling must union first (empty unless wired)."""
        if self.wired:
            return self.boundary_sites
        return np.empty(0, dtype=np.int32)

    def adjacency(self):
        """CSR adjacency (indptr, neighbor sites, incident edge ids)."""
        if self._adj is None:
            deg = np.zeros(self.nsites + 1, dtype=np.int64)
            for u, v in self.edges:
                deg[u + 1] += 1
                deg[v + 1] += 1
            indptr = np.cumsum(deg)
            nbr = np.empty(indptr[-1], dtype=np.int32)
            nbr_edge = np.empty(indptr[-1], dtype=np.int32)
            fill = indptr[:-1].copy()
            for e, (u, v) in enumerate(self.edges):
                nbr[fill[u]] = v
                nbr_edge[fill[u]] = e
                fill[u] += 1
                nbr[fill[v]] = u
                nbr_edge[fill[v]] = e
                fill[v] += 1
            self._adj = (indptr, nbr, nbr_edge)
        return self._adj

    def positions(self) -> np.ndarray:
        """Continuum embedding (N,2) float64, spacing applied."""
        if self._pos is None:
            self._pos = embed(self.kind, self.coords.astype(np.float64)) * self.a
        return self._pos

    def degrees(self) -> np.ndarray:
        indptr, _, _ = self.adjacency()
        return np.diff(indptr)

    # -- metric ------------------------------------------------------------

    def torus_lengths(self):
        """Index-space periods (nx, ny) or None when not periodic."""
        if self.boundary != "periodic":
            return None
        return (self.nx, self.ny)

    def site_point_distance(self, site: int, px: float, py: float) -> float:
        """Euclidean distance from a site to a continuum point, min-image on tori."""
        ci, cj = self.coords[site]
        fi, fj = invert_embed(self.kind, px / self.a, py / self.a)
        di, dj = ci - fi, cj - fj
        if self.boundary == "periodic":
            di -= self.nx * np.round(di / self.nx)
            dj -= self.ny * np.round(dj / self.ny)
        ex, ey = embed_delta(self.kind, di, dj)
        return float(np.hypot(ex, ey) * self.a)

    def window_sites(self, window: Window) -> np.ndarray:
        """Indices of sites inside the closed window box (no wrap applied:
        callers place windows well inside the fundamental domain)."""
        pos = self.positions()
        tol = 1e-9 * max(1.0, abs(window.side))
        keep = (
            (pos[:, 0] >= window.x0 - tol)
            & (pos[:, 0] <= window.x0 + window.side + tol)
            & (pos[:, 1] >= window.y0 - tol)
            & (pos[:, 1] <= window.y0 + window.side + tol)
        )
        return np.nonzero(keep)[0].astype(np.int32)


def embed(kind: str, coords: np.ndarray) -> np.ndarray:
    """Lattice coords -> plane, unit bond length (spacing applied by caller)."""
    out = np.empty_like(coords, dtype=np.float64)
    if kind == "square":
        out[...] = coords
    else:
        out[..., 0] = coords[..., 0] + 0.5 * coords[..., 1]
        out[..., 1] = SQRT3_2 * coords[..., 1]
    return out


def embed_delta(kind: str, di, dj):
    if kind == "square":
        return di, dj
    return di + 0.5 * dj, SQRT3_2 * dj


def invert_embed(kind: str, x: float, y: float):
    """Plane point (in lattice units) -> fractional lattice coords."""
    if kind == "square":
        return x, y
    j = y / SQRT3_2
    return x - 0.5 * j, j


def _grid_edges(nx, ny, periodic, dirs):
    """Edges of a rectangular index grid along the given direction steps."""
    eu, ev = [], []
    for j in range(ny):
        for i in range(nx):
            s = j * nx + i
            for di, dj in dirs:
                ii, jj = i + di, j + dj
                if periodic:
                    ii %= nx
                    jj %= ny
                elif not (0 <= ii < nx and 0 <= jj < ny):
                    continue
                eu.append(s)
                ev.append(jj * nx + ii)
    return (np.asarray(eu, dtype=np.int32).reshape(-1),
            np.asarray(ev, dtype=np.int32).reshape(-1))


def _grid_coords(nx, ny):
    jj, ii = np.mgrid[0:ny, 0:nx]
    return np.stack([ii.ravel(), jj.ravel()], axis=1).astype(np.int32)


def _hull_sites(nx, ny):
    coords = _grid_coords(nx, ny)
    on = (coords[:, 0] == 0) | (coords[:, 0] == nx - 1) | \
         (coords[:, 1] == 0) | (coords[:, 1] == ny - 1)
    return np.nonzero(on)[0].astype(np.int32)


def _square_dual(nx, ny, periodic, eu, ev):
    """Dual pair per primal edge.  Torus: faces form an (nx,ny) dual torus.
    Free: bounded faces + outer super-site (last index)."""
    fu = np.empty(len(eu), dtype=np.int32)
    fv = np.empty(len(eu), dtype=np.int32)
    if periodic:
        def face(i, j):
            return (j % ny) * nx + (i % nx)
        n_dual = nx * ny
    else:
        fnx, fny = nx - 1, ny - 1
        outer = fnx * fny

        def face(i, j):
            if 0 <= i < fnx and 0 <= j < fny:
                return j * fnx + i
            return outer
        n_dual = fnx * fny + 1
    for k in range(len(eu)):
        i, j = eu[k] % nx, eu[k] // nx
        horizontal = (ev[k] % nx) != i
        if horizontal:
            fu[k], fv[k] = face(i, j - 1), face(i, j)
        else:
            fu[k], fv[k] = face(i - 1, j), face(i, j)
    dual_edges = np.stack([fu, fv], axis=1)
    if periodic:
        di, dj = np.mgrid[0:nx, 0:ny]
        dual_coords = np.stack([di.T.ravel() + 0.5, dj.T.ravel() + 0.5], axis=1)
    else:
        dj, di = np.mgrid[0:ny - 1, 0:nx - 1]
        dual_coords = np.stack([di.ravel() + 0.5, dj.ravel() + 0.5], axis=1)
        dual_coords = np.vstack([dual_coords, [[np.nan, np.nan]]])
    return n_dual, dual_edges, dual_coords


def rect_lattice(nx: int, ny: int, boundary: str = "free", a: float = 1.0) -> LatticeGraph:
    """Square-lattice rectangle nx x ny sites.  Free rectangles and tori carry
    the dual-bond map; wired rectangles mark hull sites for pre-merging."""
    if nx < 1 or ny < 1:
        raise ValueError("need nx, ny >= 1")
    periodic = boundary == "periodic"
    if periodic and (nx < 3 or ny < 3):
        raise ValueError("periodic lattice needs nx, ny >= 3")
    eu, ev = _grid_edges(nx, ny, periodic, [(1, 0), (0, 1)])
    edges = np.stack([eu, ev], axis=1) if len(eu) else np.empty((0, 2), np.int32)
    coords = _grid_coords(nx, ny)
    if boundary == "wired":
        n_dual, dual_edges, dual_coords = 0, None, None
    else:
        n_dual, dual_edges, dual_coords = _square_dual(nx, ny, periodic, eu, ev)
    return LatticeGraph(
        kind="square", boundary=boundary, nx=nx, ny=ny, a=a,
        coords=coords, edges=edges, boundary_sites=_hull_sites(nx, ny),
        dual_nsites=n_dual, dual_edges=dual_edges, dual_coords=dual_coords,
    )


def _triangular_lattice(n: int, boundary: str, a: float) -> LatticeGraph:
    periodic = boundary == "periodic"
    eu, ev = _grid_edges(n, n, periodic, [(1, 0), (0, 1), (1, -1)])
    edges = np.stack([eu, ev], axis=1)
    return LatticeGraph(
        kind="triangular", boundary=boundary, nx=n, ny=n, a=a,
        coords=_grid_coords(n, n), edges=edges, boundary_sites=_hull_sites(n, n),
    )


def build_lattice(spec: LatticeSpec) -> LatticeGraph:
    spec.validate()
    if spec.kind == "square":
        return rect_lattice(spec.n, spec.n, spec.boundary, spec.a)
    if spec.boundary == "wired":
        raise ValueError("wired boundary is defined for square lattices only")
    return _triangular_lattice(spec.n, spec.boundary, spec.a)


def site_subgraph(cells, a: float = 1.0, boundary: str = "free") -> LatticeGraph:
    """Induced square-lattice subgraph on an explicit site set.

    For oracle-scale graphs (paths, trominoes, ...).  No dual map."""
    cells = [(int(i), int(j)) for i, j in cells]
    if len(set(cells)) != len(cells):
        raise ValueError("duplicate sites")
    index = {c: k for k, c in enumerate(cells)}
    eu, ev = [], []
    for (i, j), s in index.items():
        for di, dj in ((1, 0), (0, 1)):
            t = index.get((i + di, j + dj))
            if t is not None:
                eu.append(s)
                ev.append(t)
    coords = np.asarray(cells, dtype=np.int32)
    edges = (np.stack([np.asarray(eu, np.int32), np.asarray(ev, np.int32)], axis=1)
             if eu else np.empty((0, 2), np.int32))
    hull = [index[c] for c in cells if any(
        (c[0] + di, c[1] + dj) not in index for di, dj in
        ((1, 0), (-1, 0), (0, 1), (0, -1)))]
    return LatticeGraph(
        kind="square", boundary=boundary, nx=0, ny=0, a=a,
        coords=coords, edges=edges,
        boundary_sites=np.asarray(sorted(hull), dtype=np.int32),
    )


def disc_graph(radius: float, boundary: str = "free", a: float = 1.0) -> LatticeGraph:
    """Square-lattice ball {|x| <= radius} (radius in lattice units), centered
    at the origin site.  Boundary sites are those with a neighbor outside the
    ball; `wired` marks them for pre-merging."""
    if radius < 1:
        raise ValueError("radius must be >= 1 lattice unit")
    if boundary not in ("free", "wired"):
        raise ValueError("disc boundary must be free or wired")
    r = int(np.floor(radius))
    cells = [(i, j) for j in range(-r, r + 1) for i in range(-r, r + 1)
             if i * i + j * j <= radius * radius]
    g = site_subgraph(cells, a=a, boundary=boundary)
    g.center_site = cells.index((0, 0))
    return g


def classify_point(graph: LatticeGraph, site: int, region) -> PointClass:
    """Distance/containment record for one site against one region.

    Annuli report the strict inner/outer flags used by crossing counts:
    inside_inner means dist < r1, outside_outer means dist > r2."""
    pos = graph.positions()[site]
    if isinstance(region, Window):
        d = float(np.hypot(pos[0] - region.x0, pos[1] - region.y0))
        tol = 1e-9 * max(1.0, abs(region.side))
        inside = (region.x0 - tol <= pos[0] <= region.x0 + region.side + tol and
                  region.y0 - tol <= pos[1] <= region.y0 + region.side + tol)
        return PointClass(distance=d, inside=bool(inside))
    if isinstance(region, Disc):
        d = graph.site_point_distance(site, region.cx, region.cy)
        return PointClass(distance=d, inside=bool(d <= region.r))
    if isinstance(region, Annulus):
        region.validate()
        d = graph.site_point_distance(site, region.cx, region.cy)
        return PointClass(
            distance=d,
            inside=bool(region.r1 <= d <= region.r2),
            inside_inner=bool(d < region.r1),
            outside_outer=bool(d > region.r2),
        )
    raise TypeError(f"unknown region type {type(region).__name__}")
