"""Scaling estimators: radial profiles, circuit/crossing statistics, moment
series, power-law fits, and magnetization curves.

Error model: per-snapshot values are reduced per chain with batch means
(autocorrelation-safe), then merged across chains; nonlinear summaries (fit
exponents) get jackknife-over-chain errors when several chains exist.

Bulk conventions: observables live on a padded torus (linear size =
padding * n) with the unit observation window centered; annuli and rings are
kept inside a quarter of the torus so wrap effects stay out of range.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield
from typing import Optional

import numpy as np
from numba import njit, prange

from . import lattice as lat
from .clusters import cluster_stats, label_clusters
from .field import ensemble_labelings, _as_list
from .sampler import CouplingSpec, Ensemble, Schedule, critical_point, run_chain
from .stats import batch_means, merge_mean_stderr

PADDING = 4


# ---------------------------------------------------------------------------
# result records


@dataclass
class RadialProfile:
    """Radius-indexed estimates with errors; per_chain rows allow jackknives."""

    radii: np.ndarray
    values: np.ndarray
    stderrs: np.ndarray
    kind: str
    per_chain: Optional[np.ndarray] = None   # (chains, K)
    meta: dict = dfield(default_factory=dict)


@dataclass
class ScalingSeries:
    """Scale-indexed estimates (cutoffs, spacings, fields)."""

    scales: np.ndarray
    values: np.ndarray
    stderrs: np.ndarray
    kind: str
    per_chain: Optional[np.ndarray] = None
    meta: dict = dfield(default_factory=dict)


@dataclass
class FitResult:
    exponent: float
    stderr: float
    amplitude: float
    fit_range: tuple
    n_points: int
    goodness: float   # weighted rms log-residual


# ---------------------------------------------------------------------------
# fitting


def fit_power_law(xs, ys, yerrs=None, fit_range=None, per_chain=None) -> FitResult:
    """Weighted least squares for y = A x^theta on log-log axes.

    Weights are inverse squared relative errors when `yerrs` is given.  The
    exponent error comes from a leave-one-chain-out jackknife when `per_chain`
    (chains x points) is provided with >= 2 chains, else from the WLS
    covariance."""
    xs = np.asarray(xs, np.float64)
    ys = np.asarray(ys, np.float64)
    keep = (xs > 0) & (ys > 0) & np.isfinite(ys)
    if fit_range is not None:
        lo, hi = fit_range
        keep &= (xs >= lo) & (xs <= hi)
    if yerrs is not None:
        yerrs = np.asarray(yerrs, np.float64)
        wts = np.where(keep & np.isfinite(yerrs) & (yerrs > 0),
                       (ys / np.where(yerrs > 0, yerrs, 1.0)) ** 2, 0.0)
        if not (wts[keep] > 0).any():
            wts = keep.astype(np.float64)
    else:
        wts = keep.astype(np.float64)
    wts = np.where(keep, wts, 0.0)
    if keep.sum() < 2:
        raise ValueError("need at least two positive points in range")

    def wls(yvals):
        ly = np.log(yvals[keep])
        lx = np.log(xs[keep])
        w = wts[keep]
        sw = w.sum()
        mx = np.dot(w, lx) / sw
        my = np.dot(w, ly) / sw
        sxx = np.dot(w, (lx - mx) ** 2)
        slope = np.dot(w, (lx - mx) * (ly - my)) / sxx
        inter = my - slope * mx
        resid = ly - (inter + slope * lx)
        return slope, inter, resid, sxx, w

    slope, inter, resid, sxx, w = wls(ys)
    dof = max(keep.sum() - 2, 1)
    chi2 = float(np.dot(w, resid ** 2))
    goodness = np.sqrt(chi2 / w.sum())
    stderr = float(np.sqrt(max(chi2 / dof, 1e-300) / sxx))
    if per_chain is not None:
        pc = np.asarray(per_chain, np.float64)
        c = pc.shape[0]
        if c >= 2:
            total = pc.sum(axis=0)
            reps = []
            for i in range(c):
                loo = (total - pc[i]) / (c - 1)
                if (loo[keep] > 0).all():
                    reps.append(wls(loo)[0])
            if len(reps) >= 2:
                reps = np.asarray(reps)
                stderr = float(np.sqrt((len(reps) - 1) / len(reps)
                                       * np.sum((reps - reps.mean()) ** 2)))
    return FitResult(exponent=float(slope), stderr=stderr,
                     amplitude=float(np.exp(inter)),
                     fit_range=(float(xs[keep].min()), float(xs[keep].max())),
                     n_points=int(keep.sum()), goodness=float(goodness))


def _combine_chain_table(table):
    """(chains, K) per-chain means plus per-chain stderrs -> pooled arrays."""
    means, errs = table
    vals = np.empty(means.shape[1])
    ses = np.empty(means.shape[1])
    for k in range(means.shape[1]):
        vals[k], ses[k] = merge_mean_stderr(means[:, k], errs[:, k])
    return vals, ses


# ---------------------------------------------------------------------------
# geometry helpers


def padded_spec(n: int, kind: str = "square", padding: int = PADDING) -> lat.LatticeSpec:
    """Bulk simulation spec: periodic torus of linear size padding*n at
    spacing 1/n (the unit window then occupies the central 1/padding)."""
    return lat.LatticeSpec(kind=kind, n=padding * n, boundary="periodic", a=1.0 / n)


def centered_window(graph: lat.LatticeGraph, n: int) -> lat.Window:
    """Unit window with site-aligned corners, centered on the torus."""
    if graph.kind == "square":
        off = (graph.nx - (n + 1)) // 2
        return lat.Window(off * graph.a, off * graph.a, 1.0)
    # triangular embedding: center of the rhombic fundamental domain
    cx = 0.75 * graph.nx * graph.a
    cy = lat.SQRT3_2 * 0.5 * graph.ny * graph.a
    return lat.Window(cx - 0.5, cy - 0.5, 1.0)


def _offset_grid(kind: str, rmax_lattice: float):
    r = int(np.ceil(rmax_lattice)) + 2
    dj, di = np.mgrid[-r:r + 1, -r:r + 1]
    di = di.ravel().astype(np.int64)
    dj = dj.ravel().astype(np.int64)
    ex, ey = lat.embed_delta(kind, di.astype(np.float64), dj.astype(np.float64))
    return di, dj, np.hypot(ex, ey)


def ring_offsets(kind: str, r_lattice: float):
    """Offsets of the inner boundary of the r-ball: within the ball but with
    a lattice neighbor outside."""
    di, dj, dist = _offset_grid(kind, r_lattice)
    inside = dist <= r_lattice
    steps = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    if kind == "triangular":
        steps += [(1, -1), (-1, 1)]
    coord = {(int(a), int(b)): k for k, (a, b) in enumerate(zip(di, dj))}
    keep = np.zeros(di.size, bool)
    for k in np.nonzero(inside)[0]:
        for si, sj in steps:
            t = coord.get((int(di[k]) + si, int(dj[k]) + sj))
            if t is None or not inside[t]:
                keep[k] = True
                break
    sel = inside & keep
    return di[sel].astype(np.int32), dj[sel].astype(np.int32)


def ball_offsets(kind: str, r_lattice: float, strict: bool):
    di, dj, dist = _offset_grid(kind, r_lattice)
    sel = dist < r_lattice if strict else dist <= r_lattice
    return di[sel].astype(np.int32), dj[sel].astype(np.int32)


def origin_grid(graph: lat.LatticeGraph, per_side: int):
    """Evenly spaced origin sites (ix, iy) on a periodic grid."""
    sx = graph.nx // per_side
    sy = graph.ny // per_side
    ox, oy = [], []
    for j in range(per_side):
        for i in range(per_side):
            ox.append((i * sx + sx // 2) % graph.nx)
            oy.append((j * sy + sy // 2) % graph.ny)
    return np.asarray(ox, np.int32), np.asarray(oy, np.int32)


# ---------------------------------------------------------------------------
# two-point profile


@njit(cache=True, parallel=True)
def _match_counts(lab, dxs, dys, out):
    ly, lx = lab.shape
    for k in prange(dxs.size):
        dx, dy = dxs[k], dys[k]
        cnt = 0
        for y in range(ly):
            yy = y + dy
            if yy >= ly:
                yy -= ly
            for x in range(lx):
                xx = x + dx
                if xx >= lx:
                    xx -= lx
                if lab[y, x] == lab[yy, xx]:
                    cnt += 1
        out[k] = cnt


def default_steps(rmax_lattice: int, count: int = 24):
    steps = np.unique(np.round(np.geomspace(1, rmax_lattice, count)).astype(np.int64))
    return steps[steps >= 1]


def twopoint_profile(ensembles, steps=None) -> RadialProfile:
    """Pair-connection probability vs distance on a periodic square graph.

    Improved estimator: exact cluster-label matching, translation averaged
    over the torus; axis and diagonal displacement classes are binned into
    their exact-distance shells (r and r*sqrt(2))."""
    ensembles = _as_list(ensembles)
    g = ensembles[0].graph
    if g.kind != "square" or g.boundary != "periodic":
        raise ValueError("two-point profile needs a periodic square graph")
    if steps is None:
        steps = default_steps(g.nx // 8)
    steps = np.asarray(steps, np.int64)
    # displacement classes: (r,0),(0,r) in one shell; (r,r),(r,-r) in another
    dxs, dys, shell, dist = [], [], [], []
    for si, r in enumerate(steps):
        dxs += [r, 0]
        dys += [0, r]
        shell += [2 * si, 2 * si]
        dist += [r * g.a, r * g.a]
        if 2 * r <= g.nx // 2:
            dxs += [r, r]
            dys += [r, g.ny - r]
            shell += [2 * si + 1, 2 * si + 1]
            dist += [r * g.a * np.sqrt(2.0)] * 2
    dxs = np.asarray(dxs, np.int64)
    dys = np.asarray(dys, np.int64)
    shell = np.asarray(shell, np.int64)
    nshell = 2 * len(steps)
    shell_r = np.zeros(nshell)
    for k in range(len(dxs)):
        shell_r[shell[k]] = dist[k]
    used = np.bincount(shell, minlength=nshell) > 0

    n_tot = float(g.nsites)
    chain_means, chain_errs = [], []
    for ens in ensembles:
        vals = np.empty((len(ens), nshell))
        counts = np.empty(len(dxs), np.int64)
        for t, labeling in enumerate(ensemble_labelings(ens)):
            grid = np.ascontiguousarray(labeling.labels_grid())
            _match_counts(grid, dxs, dys, counts)
            acc = np.bincount(shell, weights=counts / n_tot, minlength=nshell)
            vals[t] = acc / np.maximum(np.bincount(shell, minlength=nshell), 1)
        m_e = [batch_means(vals[:, k]) for k in range(nshell)]
        chain_means.append([m for m, _ in m_e])
        chain_errs.append([e for _, e in m_e])
    means = np.asarray(chain_means)
    errs = np.asarray(chain_errs)
    values, ses = _combine_chain_table((means, errs))
    order = np.argsort(shell_r[used])
    return RadialProfile(
        radii=shell_r[used][order], values=values[used][order],
        stderrs=ses[used][order], kind="two-point",
        per_chain=means[:, used][:, order],
        meta={"spacing": g.a, "steps": steps.tolist()},
    )


# ---------------------------------------------------------------------------
# one-arm profile


@njit(cache=True, parallel=True)
def _one_arm_events(lab, occ, use_occ, ox, oy, rdi, rdj, rstarts, out):
    ly, lx = lab.shape
    for o in prange(ox.size):
        x0, y0 = ox[o], oy[o]
        lz = lab[y0, x0]
        alive = True
        if use_occ and not occ[y0, x0]:
            alive = False
        for ri in range(rstarts.size - 1):
            hit = 0
            if alive:
                for t in range(rstarts[ri], rstarts[ri + 1]):
                    yy = (y0 + rdj[t]) % ly
                    xx = (x0 + rdi[t]) % lx
                    if lab[yy, xx] == lz:
                        hit = 1
                        break
            out[o, ri] = hit


def one_arm_profile(ensembles, radii, mode: str = "bulk",
                    per_side: int = 8) -> RadialProfile:
    """P(origin's cluster reaches the boundary of the r-ball).

    bulk mode scans an origin grid on torus snapshots; radii are continuum
    distances.  Site payloads require the origin occupied, so the value is
    the occupied-species one-arm probability."""
    if mode != "bulk":
        raise ValueError("use disc_one_arm for wired/free boundaries")
    ensembles = _as_list(ensembles)
    g = ensembles[0].graph
    radii = np.asarray(radii, np.float64)
    rl = radii / g.a
    if (2 * rl.max()) > min(g.nx, g.ny) / 2:
        raise ValueError("largest radius exceeds a quarter of the torus")
    rdi, rdj, rstarts = [], [], [0]
    for r in rl:
        di, dj = ring_offsets(g.kind, float(r))
        rdi.append(di)
        rdj.append(dj)
        rstarts.append(rstarts[-1] + di.size)
    rdi = np.concatenate(rdi)
    rdj = np.concatenate(rdj)
    rstarts = np.asarray(rstarts, np.int64)
    ox, oy = origin_grid(g, per_side)
    use_occ = ensembles[0].sites_packed is not None

    chain_means, chain_errs = [], []
    for ens in ensembles:
        vals = np.empty((len(ens), radii.size))
        out = np.empty((ox.size, radii.size), np.uint8)
        for t, labeling in enumerate(ensemble_labelings(ens)):
            grid = np.ascontiguousarray(labeling.labels_grid())
            occ = (np.ascontiguousarray(ens.site_config(t).reshape(g.ny, g.nx))
                   if use_occ else np.zeros((1, 1), bool))
            _one_arm_events(grid, occ, use_occ, ox, oy, rdi, rdj, rstarts, out)
            vals[t] = out.mean(axis=0)
        m_e = [batch_means(vals[:, k]) for k in range(radii.size)]
        chain_means.append([m for m, _ in m_e])
        chain_errs.append([e for _, e in m_e])
    means = np.asarray(chain_means)
    errs = np.asarray(chain_errs)
    values, ses = _combine_chain_table((means, errs))
    return RadialProfile(radii=radii, values=values, stderrs=ses,
                         kind="one-arm", per_chain=means,
                         meta={"mode": mode, "spacing": g.a,
                               "origins": int(ox.size)})


def disc_one_arm(radii_lattice, boundary: str, coupling: CouplingSpec,
                 schedule: Schedule, a: float = 1.0) -> RadialProfile:
    """One-arm probability on distance-r balls with free or wired boundary.

    Each radius gets its own chain (fresh graph); the event is center
    connected to the ball boundary."""
    values, ses, per_chain = [], [], []
    for r in radii_lattice:
        g = lat.disc_graph(float(r), boundary, a)
        cms, ces = [], []
        for c in range(schedule.chains):
            ens = run_chain(g, coupling, schedule, chain=c)
            hits = np.empty(len(ens))
            bsites = g.boundary_sites
            for t, labeling in enumerate(ensemble_labelings(ens)):
                lz = labeling.labels[g.center_site]
                if boundary == "wired":
                    hits[t] = 1.0 if labeling.labels[bsites[0]] == lz else 0.0
                else:
                    hits[t] = 1.0 if (labeling.labels[bsites] == lz).any() else 0.0
            m, e = batch_means(hits)
            cms.append(m)
            ces.append(e)
        m, e = merge_mean_stderr(np.asarray(cms), np.asarray(ces))
        values.append(m)
        ses.append(e)
        per_chain.append(cms)
    return RadialProfile(
        radii=np.asarray(radii_lattice, np.float64) * a,
        values=np.asarray(values), stderrs=np.asarray(ses),
        kind="one-arm", per_chain=np.asarray(per_chain).T,
        meta={"mode": boundary, "spacing": a},
    )


# ---------------------------------------------------------------------------
# circuits and crossings


def _half_ball_offsets(r_lattice: float, strict: bool):
    # dual sites sit at half-integer offsets from any primal site center
    r = int(np.ceil(r_lattice)) + 2
    dj, di = np.mgrid[-r:r + 1, -r:r + 1]
    di = di.ravel()
    dj = dj.ravel()
    dist = np.hypot(di + 0.5, dj + 0.5)
    sel = dist < r_lattice if strict else dist <= r_lattice
    return di[sel].astype(np.int32), dj[sel].astype(np.int32)


def annulus_circuit_prob(ensembles, r1: float, r2: float,
                         species: str = "primal",
                         per_side: int = 4) -> RadialProfile:
    """Probability of a circuit in the (r1, r2)-annulus around grid centers.

    Planar duality: a primal-open circuit exists iff no dual-open cluster
    crosses the annulus (strictly inside r1 to strictly outside r2); a
    dual-open circuit exists iff no primal-open cluster crosses.  The
    complement crossing indicator is what gets measured, with the same
    ball-offset scan as crossing_counts: a cluster crosses iff it owns a
    site inside the r1-ball and not all its sites fit in the r2-ball."""
    ensembles = _as_list(ensembles)
    g = ensembles[0].graph
    if g.kind != "square" or g.boundary != "periodic":
        raise ValueError("circuit probabilities need a periodic square torus")
    if 2 * r2 / g.a > min(g.nx, g.ny) / 2:
        raise ValueError("outer radius exceeds a quarter of the torus")
    # nearest dual site sits at a*sqrt(2)/2 from a site center; a thinner
    # inner disc can hold no blocking endpoint and the verdict goes vacuous
    if r1 <= g.a or r2 - r1 < g.a:
        raise ValueError("degenerate annulus: need r1 > a and r2 - r1 >= a")
    r1l, r2l = r1 / g.a, r2 / g.a
    if species == "primal":
        in1di, in1dj = _half_ball_offsets(r1l, strict=True)
        in2di, in2dj = _half_ball_offsets(r2l, strict=False)
    else:
        in1di, in1dj = ball_offsets("square", r1l, strict=True)
        in2di, in2dj = ball_offsets("square", r2l, strict=False)
    ox, oy = origin_grid(g, per_side)

    chain_means, chain_errs = [], []
    for ens in ensembles:
        vals = np.empty((len(ens), 1))
        for t in range(len(ens)):
            bonds = ens.bond_config(t)
            labeling = label_clusters(g, bonds, "bonds", with_dual=True)
            if species == "primal":
                grid = np.ascontiguousarray(
                    labeling.dual_labels.reshape(g.ny, g.nx))
                sizes = np.bincount(labeling.dual_labels,
                                    minlength=labeling.dual_count)
                count = labeling.dual_count
            else:
                grid = np.ascontiguousarray(labeling.labels_grid())
                sizes = labeling.sizes
                count = labeling.count
            marked = np.zeros(count, np.bool_)
            cnt = np.zeros(count, np.int64)
            touched = np.empty(in2di.size, np.int32)
            hit = 0.0
            for o in range(ox.size):
                blocked = _crossing_count_one(
                    grid, sizes, ox[o], oy[o], in1di, in1dj, in2di, in2dj,
                    marked, cnt, touched)
                # circuit of one species <=> no crossing of the other
                hit += 0.0 if blocked else 1.0
            vals[t, 0] = hit / ox.size
        m, e = batch_means(vals[:, 0])
        chain_means.append([m])
        chain_errs.append([e])
    means = np.asarray(chain_means)
    errs = np.asarray(chain_errs)
    values, ses = _combine_chain_table((means, errs))
    return RadialProfile(
        radii=np.asarray([r2]), values=values, stderrs=ses,
        kind=f"circuit-{species}", per_chain=means,
        meta={"r1": r1, "r2": r2, "spacing": g.a, "centers": int(ox.size)},
    )


@njit(cache=True)
def _crossing_count_one(lab, sizes, x0, y0, in1di, in1dj, in2di, in2dj,
                        marked, cnt, touched):
    ly, lx = lab.shape
    ntouch = 0
    for t in range(in2di.size):
        yy = (y0 + in2dj[t]) % ly
        xx = (x0 + in2di[t]) % lx
        l = lab[yy, xx]
        if cnt[l] == 0:
            touched[ntouch] = l
            ntouch += 1
        cnt[l] += 1
    for t in range(in1di.size):
        yy = (y0 + in1dj[t]) % ly
        xx = (x0 + in1di[t]) % lx
        marked[lab[yy, xx]] = True
    n = 0
    for i in range(ntouch):
        l = touched[i]
        if marked[l] and cnt[l] < sizes[l]:
            n += 1
    for i in range(ntouch):
        l = touched[i]
        cnt[l] = 0
        marked[l] = False
    return n


def crossing_counts(ensembles, r1: float, r2: float,
                    per_side: int = 8) -> np.ndarray:
    """N(z; r1, r2) = number of distinct clusters with a site strictly inside
    the r1-ball of z and a site strictly outside the r2-ball.

    Returns an array (total snapshots, origins) of counts, chains
    concatenated in index order."""
    ensembles = _as_list(ensembles)
    g = ensembles[0].graph
    if g.kind != "square" or g.boundary != "periodic":
        raise ValueError("crossing counts need a periodic square torus")
    r1l, r2l = r1 / g.a, r2 / g.a
    if 2 * r2l > min(g.nx, g.ny) / 2:
        raise ValueError("outer radius exceeds a quarter of the torus")
    in1di, in1dj = ball_offsets(g.kind, r1l, strict=True)
    in2di, in2dj = ball_offsets(g.kind, r2l, strict=False)
    ox, oy = origin_grid(g, per_side)
    rows = []
    for ens in ensembles:
        out = np.empty((len(ens), ox.size), np.int64)
        for t, labeling in enumerate(ensemble_labelings(ens)):
            grid = np.ascontiguousarray(labeling.labels_grid())
            sizes = labeling.sizes
            marked = np.zeros(labeling.count, np.bool_)
            cnt = np.zeros(labeling.count, np.int64)
            touched = np.empty(in2di.size, np.int32)
            for o in range(ox.size):
                out[t, o] = _crossing_count_one(
                    grid, sizes, ox[o], oy[o], in1di, in1dj, in2di, in2dj,
                    marked, cnt, touched)
        rows.append(out)
    return np.vstack(rows)


@dataclass
class TailSummary:
    """Geometric-tail summary of crossing counts."""

    kmax: int
    tail: np.ndarray           # P(N >= k), k = 1..kmax
    tail_stderr: np.ndarray
    events: np.ndarray         # raw event counts per k
    ratio: float               # fitted geometric ratio
    ratio_stderr: float
    induction_margin: np.ndarray  # P(N>=k) - P(N>=1) P(N>=k-1), k = 2..kmax
    induction_sigma: np.ndarray


def crossing_tail_summary(counts: np.ndarray, kmax: int = 6,
                          min_events: int = 50) -> TailSummary:
    """Tail probabilities, geometric-decay fit over k with enough events, and
    the submultiplicativity margins P(N>=k) <= P(N>=1) P(N>=k-1)."""
    snaps = counts.shape[0]
    ks = np.arange(1, kmax + 1)
    tail = np.empty(kmax)
    terr = np.empty(kmax)
    events = np.empty(kmax, np.int64)
    for i, k in enumerate(ks):
        ind = (counts >= k).mean(axis=1)
        tail[i], terr[i] = batch_means(ind)
        events[i] = int((counts >= k).sum())
    fit_keep = (events >= min_events) & (tail > 0)
    if fit_keep.sum() >= 2:
        fit = fit_power_law(np.exp(ks[fit_keep].astype(np.float64)),
                            tail[fit_keep], terr[fit_keep])
        # log-linear in k: reuse power-law machinery with x = e^k
        ratio = float(np.exp(fit.exponent))
        ratio_err = ratio * fit.stderr
    else:
        ratio, ratio_err = float("nan"), float("nan")
    margin = np.empty(kmax - 1)
    sigma = np.empty(kmax - 1)
    for i, k in enumerate(range(2, kmax + 1)):
        lhs, lerr = tail[k - 1], terr[k - 1]
        rhs = tail[0] * tail[k - 2]
        rerr = rhs * np.sqrt(
            (terr[0] / tail[0]) ** 2 + (terr[k - 2] / max(tail[k - 2], 1e-300)) ** 2
        ) if tail[0] > 0 and tail[k - 2] > 0 else 0.0
        margin[i] = lhs - rhs
        sigma[i] = np.sqrt(lerr ** 2 + rerr ** 2)
    return TailSummary(kmax=kmax, tail=tail, tail_stderr=terr, events=events,
                       ratio=ratio, ratio_stderr=ratio_err,
                       induction_margin=margin, induction_sigma=sigma)


# ---------------------------------------------------------------------------
# cluster-size moment series


def small_cluster_moment(ensembles, window: lat.Window, scale: float,
                         cutoffs=None) -> ScalingSeries:
    """S(eps) = E sum over clusters with window diameter <= eps of W_i^2.

    Complementary to the cutoff field: S(eps) + (kept-cluster moment) equals
    the full normalized second moment."""
    ensembles = _as_list(ensembles)
    if cutoffs is None:
        cutoffs = np.sqrt(2.0) * 0.5 ** np.arange(1, 7, dtype=np.float64)
    cutoffs = np.sort(np.asarray(cutoffs, np.float64))
    chain_means, chain_errs = [], []
    for ens in ensembles:
        vals = np.empty((len(ens), cutoffs.size))
        for t, labeling in enumerate(ensemble_labelings(ens)):
            st = cluster_stats(labeling, window)
            w2 = (scale * st.window_sizes.astype(np.float64)) ** 2
            order = np.argsort(st.diameters, kind="stable")
            csum = np.cumsum(w2[order])
            idx = np.searchsorted(st.diameters[order], cutoffs, side="right")
            vals[t] = np.where(idx > 0, csum[np.maximum(idx - 1, 0)], 0.0)
        m_e = [batch_means(vals[:, k]) for k in range(cutoffs.size)]
        chain_means.append([m for m, _ in m_e])
        chain_errs.append([e for _, e in m_e])
    means = np.asarray(chain_means)
    errs = np.asarray(chain_errs)
    values, ses = _combine_chain_table((means, errs))
    return ScalingSeries(scales=cutoffs, values=values, stderrs=ses,
                         kind="small-cluster-moment", per_chain=means,
                         meta={"scale": scale, "spacing": ensembles[0].graph.a})


def decay_ratios(profile: RadialProfile, factor: float = 2.0) -> ScalingSeries:
    """tau(factor * r) / tau(r) for radii pairs present in the profile.

    Power-law decay keeps these ratios inside a band (0, 1) uniformly in r;
    exponential decay would drive them to 0, a mass gap to 1."""
    rs, vals, errs = profile.radii, profile.values, profile.stderrs
    out_r, out_v, out_e = [], [], []
    for i, r in enumerate(rs):
        target = factor * r
        j = np.argmin(np.abs(rs - target))
        if abs(rs[j] - target) > 1e-9 * max(1.0, target) or j == i:
            continue
        if vals[i] <= 0:
            continue
        ratio = vals[j] / vals[i]
        rel = np.sqrt((errs[j] / max(vals[j], 1e-300)) ** 2
                      + (errs[i] / vals[i]) ** 2)
        out_r.append(r)
        out_v.append(ratio)
        out_e.append(abs(ratio) * rel)
    return ScalingSeries(scales=np.asarray(out_r), values=np.asarray(out_v),
                         stderrs=np.asarray(out_e), kind="decay-ratio",
                         meta={"factor": factor})


# ---------------------------------------------------------------------------
# magnetization and near-critical scaling


def magnetization(graph: lat.LatticeGraph, h: float, schedule: Schedule,
                  p: Optional[float] = None):
    """M(h) = E[fraction of sites joined to the ghost] at the critical point
    (or given p).  Conditional-expectation estimator: no sign noise."""
    if p is None:
        p = critical_point("fk", 2, graph.kind)
    coup = CouplingSpec(model="fk", q=2, p=p, h=h, boundary=graph.boundary)
    cms, ces = [], []
    for c in range(schedule.chains):
        ens = run_chain(graph, coup, schedule, chain=c)
        frac = ens.ghost_size.astype(np.float64) / graph.nsites
        m, e = batch_means(frac)
        cms.append(m)
        ces.append(e)
    return merge_mean_stderr(np.asarray(cms), np.asarray(ces)) + (cms,)


def magnetization_curve(n: int, h_values, schedule: Schedule) -> ScalingSeries:
    """M(h) on an n x n torus at the critical point."""
    g = lat.build_lattice(lat.LatticeSpec("square", n, "periodic", 1.0 / n))
    vals, errs, pcs = [], [], []
    for h in h_values:
        m, e, cms = magnetization(g, float(h), schedule)
        vals.append(m)
        errs.append(e)
        pcs.append(cms)
    return ScalingSeries(scales=np.asarray(h_values, np.float64),
                         values=np.asarray(vals), stderrs=np.asarray(errs),
                         kind="magnetization", per_chain=np.asarray(pcs).T,
                         meta={"n": n})


def near_critical_plateau(a_values, lam: float, m_values, m_stderrs=None) -> ScalingSeries:
    """x(a) = a^(-1/8) M(h = lam a^(15/8)): constant iff M ~ h^(1/15).

    Pure transform; measurement drivers feed in M values."""
    a = np.asarray(a_values, np.float64)
    m = np.asarray(m_values, np.float64)
    vals = a ** (-0.125) * m
    errs = (a ** (-0.125) * np.asarray(m_stderrs, np.float64)
            if m_stderrs is not None else np.full_like(vals, np.nan))
    return ScalingSeries(scales=a, values=vals, stderrs=errs,
                         kind="near-critical-plateau", meta={"lambda": lam})


def plateau_fields(a_values, lam: float) -> np.ndarray:
    """The matched external fields h = lam * a^(15/8)."""
    return lam * np.asarray(a_values, np.float64) ** 1.875
