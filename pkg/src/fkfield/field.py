"""The rescaled cluster-area field.

The normalization Theta is fixed by the sum rule
``Theta^-2 = E sum_i |C_i ∩ window|^2`` (equivalently the window sum of
pair-connection probabilities), so the rescaled areas ``W_i = Theta |C_i|``
satisfy ``E sum_i W_i^2 = 1`` identically.  Two independent estimation
routes are kept deliberately:

* ``cluster-moment``: per snapshot, sum of squared window-restricted
  cluster sizes.
* ``two-point-sum``: translation-averaged pair-connection indicator summed
  over all window displacement classes.  Uses exact label matching (no spin
  signs), so at p = 0 only the diagonal survives and the route is exact.

The field value of a test function f is ``Theta * sum_x f(x) s_x`` over
window sites, where s_x is the sign of the site's cluster color.  Its
cutoff version keeps only clusters of window diameter > eps and sums in the
same site order, so at eps = 0 both values agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numba import njit, prange

from . import lattice as lat
from .clusters import ClusterLabeling, ClusterStats, cluster_stats, label_clusters
from .sampler import Ensemble
from .stats import batch_means, merge_mean_stderr


# ---------------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class TestFunction:
    """Continuum test function with compact support."""

    fn: Callable[[np.ndarray], np.ndarray]   # (m,2) -> (m,)
    bbox: tuple                               # (x0, y0, x1, y1)
    label: str = "f"

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.fn(np.atleast_2d(points))


def indicator(window: lat.Window) -> TestFunction:
    x0, y0, s = window.x0, window.y0, window.side

    def fn(pts):
        tol = 1e-9 * max(1.0, abs(s))
        return (((pts[:, 0] >= x0 - tol) & (pts[:, 0] <= x0 + s + tol)
                 & (pts[:, 1] >= y0 - tol) & (pts[:, 1] <= y0 + s + tol))
                .astype(np.float64))

    return TestFunction(fn=fn, bbox=(x0, y0, x0 + s, y0 + s),
                        label=f"ind[{x0:g},{y0:g},{s:g}]")


def gaussian_bump(cx: float, cy: float, sigma: float) -> TestFunction:
    """Gaussian bump truncated at three standard deviations."""

    def fn(pts):
        d2 = (pts[:, 0] - cx) ** 2 + (pts[:, 1] - cy) ** 2
        out = np.exp(-0.5 * d2 / sigma ** 2)
        out[d2 > (3.0 * sigma) ** 2] = 0.0
        return out

    r = 3.0 * sigma
    return TestFunction(fn=fn, bbox=(cx - r, cy - r, cx + r, cy + r),
                        label=f"bump[{cx:g},{cy:g},{sigma:g}]")


def product_integral(f: TestFunction, g: TestFunction, order: int = 120) -> float:
    """Gauss-Legendre quadrature of f*g over the intersection of supports
    (lattice-free reference value for continuum identities)."""
    x0 = max(f.bbox[0], g.bbox[0])
    y0 = max(f.bbox[1], g.bbox[1])
    x1 = min(f.bbox[2], g.bbox[2])
    y1 = min(f.bbox[3], g.bbox[3])
    if x0 >= x1 or y0 >= y1:
        return 0.0
    nodes, weights = np.polynomial.legendre.leggauss(order)
    xs = 0.5 * (x1 - x0) * (nodes + 1.0) + x0
    ys = 0.5 * (y1 - y0) * (nodes + 1.0) + y0
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    vals = f(pts) * g(pts)
    w2 = np.outer(weights, weights).ravel()
    return float(np.dot(vals, w2) * 0.25 * (x1 - x0) * (y1 - y0))


# ---------------------------------------------------------------------------
# sign schemes


def potts_signs(q: int, k: int) -> np.ndarray:
    """Sign vector of the color-k observable: +1 on color k, -1/(q-1) off it.

    Mean 0, variance 1/(q-1) under a uniform color; the q vectors sum to 0
    componentwise."""
    if q < 2:
        raise ValueError("sign vectors need q >= 2")
    if not (0 <= k < q):
        raise ValueError("observable color out of range")
    v = np.full(q, -1.0 / (q - 1.0))
    v[k] = 1.0
    return v


# ---------------------------------------------------------------------------
# normalization


@dataclass
class ScaleFactorEstimate:
    """Normalization estimate Theta with its route and error."""

    value: float
    stderr: float
    method: str
    spacing: float
    n_snapshots: int
    inv_sq_mean: float          # estimate of Theta^-2 (the window pair sum)
    inv_sq_stderr: float
    per_chain_series: list      # per-chain per-snapshot Theta^-2 contributions


def ensemble_labelings(ens: Ensemble):
    """Labelings of every snapshot (bond or site payload)."""
    if ens.sites_packed is not None:
        for t in range(len(ens)):
            yield label_clusters(ens.graph, ens.site_config(t), "sites")
    else:
        for t in range(len(ens)):
            yield label_clusters(ens.graph, ens.bond_config(t), "bonds")


def _as_list(ensembles):
    return [ensembles] if isinstance(ensembles, Ensemble) else list(ensembles)


@njit(cache=True, parallel=True)
def _window_pair_sum(lab, w):
    """sum_d m(d) * #{x : lab[x] == lab[x+d]} over a (w-1)-box of
    displacements, m(d) = (w-|dx|)(w-|dy|), torus wrap."""
    ly, lx = lab.shape
    total = 0.0
    for dy in prange(0, w):
        acc = 0.0
        dx0 = 1 if dy == 0 else -(w - 1)
        sym = 2.0
        if dy == 0:
            # dx = 0 handled exactly: the diagonal term is site count
            acc += float(w * w) * float(ly * lx)
        for dx in range(dx0, w):
            cnt = 0
            for y in range(ly):
                yy = y + dy
                if yy >= ly:
                    yy -= ly
                for x in range(lx):
                    xx = x + dx
                    if xx >= lx:
                        xx -= lx
                    elif xx < 0:
                        xx += lx
                    if lab[y, x] == lab[yy, xx]:
                        cnt += 1
            acc += sym * float((w - abs(dx)) * (w - dy)) * float(cnt)
        total += acc
    return total


def _placement_indices(g: lat.LatticeGraph, window: lat.Window,
                       placements: int):
    """Site-index arrays for a k x k grid of translated window copies.

    Translation invariance on the torus makes every copy identically
    distributed; averaging them cuts the variance of the window moment."""
    k = int(round(math.sqrt(placements)))
    if k * k != placements or k < 1:
        raise ValueError("placements must be a positive perfect square")
    if k == 1:
        return [g.window_sites(window)]
    if g.boundary != "periodic":
        raise ValueError("multiple placements need a periodic graph")
    w_lat = int(round(window.side / g.a)) + 1
    if w_lat > min(g.nx, g.ny) // k:
        raise ValueError("placement grid too fine for this window")
    out = []
    for j in range(k):
        for i in range(k):
            ox = (i * (g.nx // k)) * g.a
            oy = (j * (g.ny // k)) * g.a
            out.append(g.window_sites(lat.Window(ox, oy, window.side)))
    return out


def scale_factor(ensembles, window: lat.Window,
                 method: str = "cluster-moment",
                 placements: int = 1) -> ScaleFactorEstimate:
    """Estimate Theta over one or more chains.

    cluster-moment works on any graph; two-point-sum needs a periodic square
    graph whose window is site-aligned (the bulk-window convention)."""
    ensembles = _as_list(ensembles)
    g = ensembles[0].graph
    if placements > 1 and method != "cluster-moment":
        raise ValueError("placement averaging only applies to cluster-moment")
    idx_sets = (_placement_indices(g, window, placements)
                if method == "cluster-moment" else None)
    per_chain = []
    for ens in ensembles:
        vals = np.empty(len(ens), np.float64)
        if method == "cluster-moment":
            for t, labeling in enumerate(ensemble_labelings(ens)):
                acc = 0.0
                for idx in idx_sets:
                    counts = np.bincount(labeling.labels[idx],
                                         minlength=labeling.count)
                    counts = counts.astype(np.float64)
                    acc += float(np.dot(counts, counts))
                vals[t] = acc / len(idx_sets)
        elif method == "two-point-sum":
            if g.kind != "square" or g.boundary != "periodic":
                raise ValueError("two-point-sum route needs a periodic square graph")
            w = int(round(window.side / g.a)) + 1
            n_tot = float(g.nsites)
            for t, labeling in enumerate(ensemble_labelings(ens)):
                grid = np.ascontiguousarray(labeling.labels_grid())
                vals[t] = _window_pair_sum(grid, w) / n_tot
        else:
            raise ValueError(f"unknown method {method!r}")
        per_chain.append(vals)
    means, errs = zip(*(batch_means(v) for v in per_chain))
    m, me = merge_mean_stderr(np.array(means), np.array(errs))
    theta = 1.0 / np.sqrt(m)
    theta_err = 0.5 * theta ** 3 * me if np.isfinite(me) else float("nan")
    return ScaleFactorEstimate(
        value=float(theta), stderr=float(theta_err), method=method,
        spacing=g.a, n_snapshots=sum(len(e) for e in ensembles),
        inv_sq_mean=float(m), inv_sq_stderr=float(me),
        per_chain_series=per_chain,
    )


# ---------------------------------------------------------------------------
# area families and field values


@dataclass
class AreaMeasureFamily:
    """Rescaled window areas of the clusters meeting the window, with the
    diameter cutoff applied (keep diam > cutoff)."""

    graph: lat.LatticeGraph
    scale: float
    cutoff: float
    q: int
    observable: int
    cluster_ids: np.ndarray
    areas: np.ndarray           # W_i = scale * |C_i ∩ window|
    diameters: np.ndarray
    colors: np.ndarray          # int8 uniform colors (kept rows)
    signs: np.ndarray           # sign-vector values of the observable color
    stats: ClusterStats
    all_colors: np.ndarray      # colors for every stats row
    kept: np.ndarray            # bool mask over stats rows

    def __len__(self) -> int:
        return int(self.kept.sum())


def rescaled_area_family(stats: ClusterStats, graph: lat.LatticeGraph,
                         scale: float, cutoff: float,
                         q: int, rng: np.random.Generator,
                         observable: int = 0) -> AreaMeasureFamily:
    """Attach signed rescaled areas to the window clusters of one snapshot.

    Colors are drawn uniformly per cluster row (independent of geometry),
    one draw per row whether or not the row passes the cutoff, so families
    at different cutoffs from the same rng state share colors."""
    colors = rng.integers(0, q, size=len(stats)).astype(np.int8)
    v = potts_signs(q, observable)
    # cutoff 0 keeps everything (singletons have diameter exactly 0)
    kept = stats.diameters > cutoff if cutoff > 0 else np.ones(len(stats), bool)
    return AreaMeasureFamily(
        graph=graph, scale=float(scale), cutoff=float(cutoff), q=int(q),
        observable=int(observable),
        cluster_ids=stats.ids[kept],
        areas=scale * stats.window_sizes[kept].astype(np.float64),
        diameters=stats.diameters[kept],
        colors=colors[kept], signs=v[colors[kept]],
        stats=stats, all_colors=colors, kept=kept,
    )


def _window_signed_sum(graph, window, f, site_signs, site_keep=None) -> float:
    """sum over window sites of f * sign (* keep), in window-site order.
    Single canonical order so cutoff and plain values can agree exactly."""
    wsites = graph.window_sites(window)
    vals = f(graph.positions()[wsites]) * site_signs[wsites]
    if site_keep is not None:
        vals = vals * site_keep[wsites]
    return float(vals.sum())


def field_value(spins, scale: float, f: TestFunction, window: lat.Window,
                observable: int = 0) -> float:
    """Phi(f) = scale * sum_x f(x) s_x over window sites."""
    v = potts_signs(spins.q, observable)
    site_signs = v[spins.colors]
    return scale * _window_signed_sum(spins.graph, window, f, site_signs)


def cutoff_field_value(family: AreaMeasureFamily, f: TestFunction,
                       window: lat.Window) -> float:
    """Field value keeping only clusters with window diameter > cutoff.

    Summed site-wise in the same order as `field_value`; with cutoff 0 and
    matching colors the two agree bit for bit."""
    st = family.stats
    g = family.graph
    v = potts_signs(family.q, family.observable)
    site_signs = np.zeros(g.nsites, np.float64)
    site_keep = np.zeros(g.nsites, np.float64)
    for row in range(len(st)):
        sl = slice(st.group_starts[row], st.group_starts[row + 1])
        sites = st.window_order[sl]
        site_signs[sites] = v[family.all_colors[row]]
        site_keep[sites] = 1.0 if family.kept[row] else 0.0
    return family.scale * _window_signed_sum(g, window, f, site_signs, site_keep)


def family_spins(family: AreaMeasureFamily, labeling: ClusterLabeling):
    """SpinConfig whose window-cluster colors match the family's draws
    (non-window clusters get color 0; test functions supported in the window
    never see them)."""
    from .clusters import SpinConfig
    cc = np.zeros(labeling.count, np.int8)
    cc[family.stats.ids] = family.all_colors
    return SpinConfig(graph=family.graph, q=family.q,
                      cluster_colors=cc, colors=cc[labeling.labels])


def cluster_function_sums(stats: ClusterStats, graph: lat.LatticeGraph,
                          f: TestFunction) -> np.ndarray:
    """Per window-cluster sums of f over the cluster's window sites."""
    vals = f(graph.positions()[stats.window_order])
    if len(stats) == 0:
        return np.zeros(0)
    return np.add.reduceat(vals, stats.group_starts[:-1])


def field_covariance_given_clusters(stats: ClusterStats, graph: lat.LatticeGraph,
                                    scale: float, f: TestFunction,
                                    g: TestFunction, q: int = 2) -> float:
    """E[Phi(f) Phi(g) | clusters]: signs marginalized exactly.

    Colors are independent across clusters with sign variance 1/(q-1), so
    the conditional covariance is scale^2/(q-1) * sum_i F_i G_i."""
    fs = cluster_function_sums(stats, graph, f)
    gs = cluster_function_sums(stats, graph, g)
    return scale ** 2 / (q - 1.0) * float(np.dot(fs, gs))
