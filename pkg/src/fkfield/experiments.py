"""Experiment pipelines: one entry point per configured kind.

Each pipeline samples what it needs, reduces per-chain partials in fixed
chain-index order, and returns {filename: bytes} blobs plus a JSON-ready
summary.  `run_experiment` writes the blobs and a digest manifest.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from numba import njit

from . import artifacts as art
from . import estimators as est
from . import field as fld
from . import lattice as lat
from . import sampler as smp
from .clusters import _label_kernel, color_clusters, cluster_stats, label_clusters
from .config import (ExperimentConfig, coupling_spec, lattice_spec, oracle_graph,
                     parse_test_function, resolved_p, schedule, serialize_config,
                     spacing, _parse_list)
from .field import ensemble_labelings, potts_signs
from .rng import COLOR_STREAM, stream
from .stats import batch_means, merge_mean_stderr


# ---------------------------------------------------------------------------
# chain sampling, optionally across processes


def _graph_desc(cfg: ExperimentConfig, n: Optional[int] = None) -> tuple:
    if n is None:
        spec = lattice_spec(cfg)
        return ("spec", spec.kind, spec.n, spec.boundary, spec.a)
    spec = est.padded_spec(n, kind=cfg.lattice)
    return ("spec", spec.kind, spec.n, spec.boundary, spec.a)


def _build_from_desc(desc: tuple) -> lat.LatticeGraph:
    tag = desc[0]
    if tag == "spec":
        _, kind, n, boundary, a = desc
        return lat.build_lattice(lat.LatticeSpec(kind=kind, n=n, boundary=boundary, a=a))
    if tag == "rect":
        _, nx, ny, boundary, a = desc
        return lat.rect_lattice(nx, ny, boundary, a)
    raise ValueError(f"unknown graph descriptor {tag!r}")


def _chain_worker(payload):
    desc, coup_fields, sched_fields, chain = payload
    graph = _build_from_desc(desc)
    coup = smp.CouplingSpec(**coup_fields)
    sched = smp.Schedule(**sched_fields)
    ens = smp.run_chain(graph, coup, sched, chain=chain)
    ens.graph = None  # rebuilt by the parent; keeps the pickle small
    return chain, ens


def sample_ensembles(desc: tuple, coupling: smp.CouplingSpec,
                     sched: smp.Schedule, jobs: int = 1) -> List[smp.Ensemble]:
    """All chains of a schedule; chains run in parallel when jobs > 1.

    The merge order is fixed by chain index, so results are identical
    whatever the completion order."""
    graph = _build_from_desc(desc)
    if jobs <= 1 or sched.chains == 1:
        return smp.run_chains(graph, coupling, sched)
    coup_fields = dict(model=coupling.model, q=coupling.q, p=coupling.p,
                       h=coupling.h, boundary=coupling.boundary)
    sched_fields = dict(sweeps=sched.sweeps, therm=sched.therm,
                        thinning=sched.thinning, seed=sched.seed,
                        chains=sched.chains)
    payloads = [(desc, coup_fields, sched_fields, c) for c in range(sched.chains)]
    out: List[Optional[smp.Ensemble]] = [None] * sched.chains
    with ProcessPoolExecutor(max_workers=min(jobs, sched.chains)) as pool:
        for chain, ens in pool.map(_chain_worker, payloads):
            ens.graph = graph
            out[chain] = ens
    return out  # type: ignore[return-value]


def _padded_ensembles(cfg: ExperimentConfig, jobs: int,
                      n: Optional[int] = None,
                      model: Optional[str] = None,
                      p: Optional[float] = None,
                      seed: Optional[int] = None):
    """Bulk-convention ensembles: periodic torus 4n at spacing 1/n."""
    n = cfg.n if n is None else n
    desc = _graph_desc(cfg, n=n)
    coup = smp.CouplingSpec(model=model or cfg.model, q=cfg.q,
                            p=resolved_p(cfg) if p is None else p,
                            h=cfg.h, boundary="periodic")
    sched = schedule(cfg)
    if seed is not None:
        sched = smp.Schedule(sweeps=sched.sweeps, therm=sched.therm,
                             thinning=sched.thinning, seed=seed,
                             chains=sched.chains)
    ensembles = sample_ensembles(desc, coup, sched, jobs)
    graph = ensembles[0].graph
    window = est.centered_window(graph, n)
    return graph, window, ensembles


# ---------------------------------------------------------------------------
# oracle verification


@njit(cache=True)
def _oracle_tally(packed, nbonds, nsites, eu, ev, premerge,
                  deu, dev, dnsites, dpremerge, has_dual, nbatch):
    """Batch sums of sampled observables over one chain's packed snapshots.

    Returns per-batch sums of pair-connection indicators, sum of squared
    cluster sizes, cluster-count histogram, loop-count histogram, and the
    per-batch snapshot counts."""
    snaps = packed.shape[0]
    npairs = nsites * (nsites - 1) // 2
    conn = np.zeros((nbatch, npairs), np.float64)
    sumsq = np.zeros(nbatch, np.float64)
    khist = np.zeros((nbatch, nsites + 1), np.float64)
    lmax = nsites + dnsites + 1
    lhist = np.zeros((nbatch, lmax), np.float64)
    counts = np.zeros(nbatch, np.int64)
    labels = np.empty(nsites, np.int32)
    dlabels = np.empty(dnsites if dnsites > 0 else 1, np.int32)
    mask = np.empty(nbonds, np.bool_)
    dmask = np.empty(nbonds, np.bool_)
    for t in range(snaps):
        b = t * nbatch // snaps
        counts[b] += 1
        for e in range(nbonds):
            mask[e] = (packed[t, e >> 3] >> (e & 7)) & 1
        k = _label_kernel(nsites, eu, ev, mask, premerge, labels)
        idx = 0
        for i in range(nsites):
            for j in range(i + 1, nsites):
                if labels[i] == labels[j]:
                    conn[b, idx] += 1.0
                idx += 1
        sizes = np.zeros(k, np.int64)
        for i in range(nsites):
            sizes[labels[i]] += 1
        acc = 0.0
        for c in range(k):
            acc += sizes[c] * sizes[c]
        sumsq[b] += acc
        khist[b, k] += 1.0
        if has_dual:
            for e in range(nbonds):
                dmask[e] = not mask[e]
            kd = _label_kernel(dnsites, deu, dev, dmask, dpremerge, dlabels)
            lhist[b, k + kd - 1] += 1.0
    return conn, sumsq, khist, lhist, counts


@dataclass
class OracleReport:
    """Sampled-versus-enumerated comparison; pass needs every deviation
    within four standard errors."""

    graph_shape: str
    p: float
    q: int
    snapshots: int
    observables: Dict[str, dict]
    passed: bool

    def to_json(self) -> dict:
        return {
            "graph": self.graph_shape,
            "p": self.p,
            "q": self.q,
            "snapshots": self.snapshots,
            "observables": self.observables,
            "passed": self.passed,
        }


def _sigma_dev(dev: float, se: float) -> float:
    if se > 0:
        return dev / se
    return 0.0 if dev <= 1e-12 else float("inf")


def _prob_sigma(dev: float, batch_se: float, ref: float, snaps: int) -> float:
    """Deviation in standard errors for a probability estimate.

    Batch errors vanish when an event never fires; the binomial floor under
    the reference keeps rare bins (expected counts of order one) from
    reporting infinite sigmas."""
    floor = math.sqrt(max(ref * (1.0 - ref), 0.0) / snaps)
    return _sigma_dev(dev, max(batch_se, floor))


def _batch_table_stats(sums: np.ndarray, counts: np.ndarray):
    """(mean, stderr) per column from per-batch sums and snapshot counts."""
    means = sums / counts[:, None]
    nb = counts.size
    m = means.mean(axis=0)
    se = means.std(axis=0, ddof=1) / math.sqrt(nb)
    return m, se


def verify_against_oracle(graph: lat.LatticeGraph, coupling: smp.CouplingSpec,
                          sched: smp.Schedule) -> OracleReport:
    """Sample the chain and compare connectivities, E sum |C|^2, the
    cluster-count distribution, and loop counts against exact enumeration."""
    exact = smp.exact_enumerate(graph, coupling)
    ensembles = smp.run_chains(graph, coupling, sched)
    eu, ev = smp.edge_arrays(graph)
    premerge = graph.premerge_sites
    has_dual = graph.dual_edges is not None and graph.boundary == "free"
    if has_dual:
        deu = np.ascontiguousarray(graph.dual_edges[:, 0])
        dev = np.ascontiguousarray(graph.dual_edges[:, 1])
        dnsites = graph.dual_nsites
    else:
        deu = np.zeros(graph.nbonds, np.int32)
        dev = np.zeros(graph.nbonds, np.int32)
        dnsites = 0
    dpremerge = np.zeros(0, np.int32)
    nbatch = 20

    conn_rows, sumsq_rows, khist_rows, lhist_rows, count_rows = [], [], [], [], []
    for ens in ensembles:
        conn, sumsq, khist, lhist, counts = _oracle_tally(
            ens.bonds_packed, graph.nbonds, graph.nsites, eu, ev, premerge,
            deu, dev, dnsites, dpremerge, has_dual, nbatch)
        conn_rows.append(conn)
        sumsq_rows.append(sumsq)
        khist_rows.append(khist)
        lhist_rows.append(lhist)
        count_rows.append(counts)
    conn = np.vstack(conn_rows)
    sumsq = np.concatenate(sumsq_rows)
    khist = np.vstack(khist_rows)
    lhist = np.vstack(lhist_rows)
    counts = np.concatenate(count_rows)
    snapshots = int(counts.sum())

    observables: Dict[str, dict] = {}

    conn_m, conn_se = _batch_table_stats(conn, counts)
    idx = 0
    worst = (0.0, 0.0)
    for i in range(graph.nsites):
        for j in range(i + 1, graph.nsites):
            ref = exact.connectivity[i, j]
            dev_ij = abs(conn_m[idx] - ref)
            sig = _prob_sigma(dev_ij, conn_se[idx], ref, snapshots)
            if sig > worst[1]:
                worst = (dev_ij, sig)
            idx += 1
    observables["connectivity"] = {
        "max_abs_dev": worst[0], "max_sigma": worst[1], "n": idx}

    m, se = _batch_table_stats(sumsq[:, None], counts)
    dev_s = abs(m[0] - exact.sum_sq_sizes)
    observables["sum_sq_sizes"] = {
        "max_abs_dev": dev_s, "max_sigma": _sigma_dev(dev_s, se[0]), "n": 1}

    kh_m, kh_se = _batch_table_stats(khist, counts)
    worst = (0.0, 0.0)
    kref = exact.cluster_count_probs
    for k in range(kh_m.size):
        ref = kref[k] if k < kref.size else 0.0
        dev_k = abs(kh_m[k] - ref)
        sig = _prob_sigma(dev_k, kh_se[k], ref, snapshots)
        if sig > worst[1]:
            worst = (dev_k, sig)
    observables["cluster_count"] = {
        "max_abs_dev": worst[0], "max_sigma": worst[1], "n": int(kh_m.size)}

    if has_dual and exact.loop_count_probs is not None:
        lh_m, lh_se = _batch_table_stats(lhist, counts)
        worst = (0.0, 0.0)
        lref = exact.loop_count_probs
        for l in range(lh_m.size):
            ref = lref[l] if l < lref.size else 0.0
            dev_l = abs(lh_m[l] - ref)
            sig = _prob_sigma(dev_l, lh_se[l], ref, snapshots)
            if sig > worst[1]:
                worst = (dev_l, sig)
        observables["loop_count"] = {
            "max_abs_dev": worst[0], "max_sigma": worst[1], "n": int(lh_m.size)}

    passed = all(o["max_sigma"] <= 4.0 for o in observables.values())
    shape = f"{graph.nx}x{graph.ny}" if graph.nx else f"{graph.nsites} sites"
    return OracleReport(graph_shape=shape, p=coupling.p, q=coupling.q,
                        snapshots=snapshots, observables=observables,
                        passed=passed)


# ---------------------------------------------------------------------------
# pipelines


def _fit_range(cfg: ExperimentConfig, default_lo: float, default_hi: float):
    lo = cfg.fit_lo if cfg.fit_lo > 0 else default_lo
    hi = cfg.fit_hi if cfg.fit_hi > 0 else default_hi
    return (lo, hi)


def _fit_or_full(xs, ys, es, fit_range, per_chain=None):
    """Power-law fit over the range, widened to all data when the range
    holds fewer than two points (small smoke-test lattices)."""
    try:
        return est.fit_power_law(xs, ys, es, fit_range=fit_range,
                                 per_chain=per_chain)
    except ValueError:
        return est.fit_power_law(xs, ys, es, fit_range=None,
                                 per_chain=per_chain)


def _profile_csv(profile) -> bytes:
    return art.series_csv(profile.radii, profile.values, profile.stderrs,
                          scale_name="r")


def _run_oracle(cfg: ExperimentConfig, jobs: int):
    graph = oracle_graph(cfg)
    report = verify_against_oracle(graph, coupling_spec(cfg), schedule(cfg))
    blobs = {"oracle_report.json": art.json_bytes(report.to_json())}
    return blobs, {"passed": report.passed,
                   "observables": report.observables}


def _run_twopoint(cfg: ExperimentConfig, jobs: int):
    graph, window, ensembles = _padded_ensembles(cfg, jobs)
    steps = _parse_list("radii", cfg.radii, int) or None
    profile = est.twopoint_profile(ensembles, steps)
    rng = _fit_range(cfg, 4 * graph.a, 0.25)
    fit = _fit_or_full(profile.radii, profile.values, profile.stderrs,
                       rng, per_chain=profile.per_chain)
    blobs = {
        "tau_profile.csv": _profile_csv(profile),
        "fit.json": art.fit_json(fit, {"observable": "two-point"}),
    }
    return blobs, {"exponent": fit.exponent, "stderr": fit.stderr}


def _run_onearm(cfg: ExperimentConfig, jobs: int):
    a = spacing(cfg)
    steps = _parse_list("radii", cfg.radii, int) or est.default_steps(cfg.n // 4).tolist()
    if cfg.arm_boundary == "bulk":
        graph, window, ensembles = _padded_ensembles(cfg, jobs)
        radii = np.asarray(steps, np.float64) * graph.a
        profile = est.one_arm_profile(ensembles, radii)
    else:
        coup = coupling_spec(cfg)
        profile = est.disc_one_arm(steps, cfg.arm_boundary, coup,
                                   schedule(cfg), a=a)
    rng = _fit_range(cfg, 4 * a, 0.25)
    fit = _fit_or_full(profile.radii, profile.values, profile.stderrs,
                       rng, per_chain=profile.per_chain)
    blobs = {
        "onearm_profile.csv": _profile_csv(profile),
        "fit.json": art.fit_json(fit, {"observable": "one-arm",
                                       "mode": cfg.arm_boundary}),
    }
    return blobs, {"exponent": fit.exponent, "stderr": fit.stderr}


def _spacing_scan(cfg: ExperimentConfig) -> List[float]:
    avals = _parse_list("a_values", cfg.a_values, float)
    if not avals:
        return [spacing(cfg)]
    return avals


def _n_from_spacing(a: float) -> int:
    n = round(1.0 / a)
    if abs(n * a - 1.0) > 1e-9:
        raise ValueError(f"spacing {a} is not the inverse of an integer")
    return int(n)


def _run_rsw(cfg: ExperimentConfig, jobs: int):
    rows = []
    per_a = []
    for a in _spacing_scan(cfg):
        n = _n_from_spacing(a)
        graph, window, ensembles = _padded_ensembles(cfg, jobs, n=n)
        popen = est.annulus_circuit_prob(ensembles, cfg.r1, cfg.r2, "primal")
        pdual = est.annulus_circuit_prob(ensembles, cfg.r1, cfg.r2, "dual")
        ov, oe = float(popen.values[0]), float(popen.stderrs[0])
        dv, de = float(pdual.values[0]), float(pdual.stderrs[0])
        rows.append((a, ov, oe, dv, de))
        joint = math.hypot(oe, de)
        per_a.append({
            "a": a, "open": ov, "open_stderr": oe,
            "dual": dv, "dual_stderr": de,
            "sigmas_from_zero": ov / oe if oe > 0 else math.inf,
            "sigmas_from_one": (1.0 - ov) / oe if oe > 0 else math.inf,
            "duality_sigma": abs(ov - dv) / joint if joint > 0 else 0.0,
        })
    vals = [r[1] for r in rows]
    summary = {
        "min_open": min(vals), "max_open": max(vals),
        "in_band": bool(min(vals) >= 0.05 and max(vals) <= 0.95),
        "per_a": per_a,
    }
    blobs = {"rsw.csv": art.csv_bytes(
        ("a", "open_value", "open_stderr", "dual_value", "dual_stderr"), rows)}
    return blobs, summary


def _run_crossings(cfg: ExperimentConfig, jobs: int):
    graph, window, ensembles = _padded_ensembles(cfg, jobs)
    counts = est.crossing_counts(ensembles, cfg.r1, cfg.r2)
    tail = est.crossing_tail_summary(counts)
    ks = np.arange(1, tail.kmax + 1)
    blobs = {
        "crossing_tail.csv": art.csv_bytes(
            ("k", "tail", "stderr", "events"),
            [(int(k), float(v), float(e), int(n)) for k, v, e, n in
             zip(ks, tail.tail, tail.tail_stderr, tail.events)]),
        "induction.csv": art.csv_bytes(
            ("k", "margin", "sigma"),
            [(int(k), float(m), float(s)) for k, m, s in
             zip(range(2, tail.kmax + 1), tail.induction_margin,
                 tail.induction_sigma)]),
        "lambda_fit.json": art.json_bytes({
            "ratio": tail.ratio, "stderr": tail.ratio_stderr,
            "r1": cfg.r1, "r2": cfg.r2}),
    }
    return blobs, {"ratio": tail.ratio, "ratio_stderr": tail.ratio_stderr}


def _run_small_clusters(cfg: ExperimentConfig, jobs: int):
    graph, window, ensembles = _padded_ensembles(cfg, jobs)
    theta = fld.scale_factor(ensembles, window, cfg.method)
    eps = _parse_list("epsilons", cfg.epsilons, float) or None
    series = est.small_cluster_moment(ensembles, window, theta.value, eps)
    rng = _fit_range(cfg, float(series.scales[0]), float(series.scales[-1]))
    fit = _fit_or_full(series.scales, series.values, series.stderrs,
                       rng, per_chain=series.per_chain)
    blobs = {
        "small_cluster_moment.csv": art.series_csv(
            series.scales, series.values, series.stderrs, "epsilon"),
        "fit.json": art.fit_json(fit, {"observable": "small-cluster-moment",
                                       "theta": theta.value}),
    }
    return blobs, {"exponent": fit.exponent, "stderr": fit.stderr,
                   "theta": theta.value}


def _field_pair_stats(ensembles, window, scale, f, g, q):
    """Mean conditional covariance  scale^2/(q-1) sum_i F_i G_i  per chain."""
    cms, ces = [], []
    for ens in ensembles:
        vals = np.empty(len(ens))
        for t, labeling in enumerate(ensemble_labelings(ens)):
            st = cluster_stats(labeling, window)
            vals[t] = fld.field_covariance_given_clusters(
                st, ens.graph, scale, f, g, q)
        m, e = batch_means(vals)
        cms.append(m)
        ces.append(e)
    return merge_mean_stderr(np.asarray(cms), np.asarray(ces))


def _run_field(cfg: ExperimentConfig, jobs: int):
    graph, window, ensembles = _padded_ensembles(cfg, jobs)
    theta = fld.scale_factor(ensembles, window, cfg.method)
    f = parse_test_function("f_spec", cfg.f_spec)(window)
    g = parse_test_function("g_spec", cfg.g_spec)(window)
    pairs = {
        "fg": (f, g), "ff": (f, f), "gg": (g, g),
    }
    rows = []
    report = {"theta": theta.value, "theta_stderr": theta.stderr}
    for name, (fa, fb) in sorted(pairs.items()):
        m, e = _field_pair_stats(ensembles, window, theta.value, fa, fb, cfg.q)
        integral = fld.product_integral(fa, fb)
        rows.append((name, float(m), float(e), float(integral)))
        report[name] = {"value": m, "stderr": e, "integral": integral}
    blobs = {
        "field_cov.csv": art.csv_bytes(("pair", "value", "stderr", "integral"), rows),
        "field_report.json": art.json_bytes(report),
    }
    return blobs, report


def _run_norm_scaling(cfg: ExperimentConfig, jobs: int):
    avals = _spacing_scan(cfg)
    rows, per_chain, var_rows = [], [], []
    for a in avals:
        n = _n_from_spacing(a)
        graph, window, ensembles = _padded_ensembles(cfg, jobs, n=n)
        theta = fld.scale_factor(ensembles, window, cfg.method,
                                 placements=cfg.placements)
        rows.append((a, theta.value, theta.stderr))
        per_chain.append([1.0 / math.sqrt(float(np.mean(s)))
                          for s in theta.per_chain_series])
        # held-out check: Theta from the first half of the chains, window
        # variance evaluated on the second half (independent data)
        if len(ensembles) >= 2:
            half = len(ensembles) // 2
            astat = [batch_means(s) for s in theta.per_chain_series[:half]]
            bstat = [batch_means(s) for s in theta.per_chain_series[half:]]
            am, ae = merge_mean_stderr(np.array([s[0] for s in astat]),
                                       np.array([s[1] for s in astat]))
            bm, be = merge_mean_stderr(np.array([s[0] for s in bstat]),
                                       np.array([s[1] for s in bstat]))
            var_cross = bm / am
            var_err = var_cross * math.hypot(ae / am, be / bm)
            var_rows.append((a, var_cross, var_err))
    xs = np.asarray([r[0] for r in rows])
    ys = np.asarray([r[1] for r in rows])
    es = np.asarray([r[2] for r in rows])
    fit = est.fit_power_law(xs, ys, es, per_chain=np.asarray(per_chain).T)
    blobs = {
        "theta_scaling.csv": art.series_csv(xs, ys, es, "a"),
        "fit.json": art.fit_json(fit, {"observable": "normalization"}),
    }
    summary = {"exponent": fit.exponent, "stderr": fit.stderr}
    if var_rows:
        blobs["window_variance.csv"] = art.csv_bytes(
            ("a", "variance", "stderr"), var_rows)
        summary["window_variance"] = [
            {"a": a, "value": v, "stderr": e} for a, v, e in var_rows]
    return blobs, summary


def _run_offcritical(cfg: ExperimentConfig, jobs: int):
    hvals = _parse_list("h_values", cfg.h_values, float)
    if not hvals:
        hvals = np.geomspace(1e-4, 1e-2, 8).tolist()
    curve = est.magnetization_curve(cfg.n, hvals, schedule(cfg))
    fit = est.fit_power_law(curve.scales, curve.values, curve.stderrs,
                            per_chain=curve.per_chain)
    blobs = {
        "magnetization.csv": art.series_csv(curve.scales, curve.values,
                                            curve.stderrs, "h"),
        "fit.json": art.fit_json(fit, {"observable": "magnetization"}),
    }
    summary = {"inv_delta": fit.exponent, "stderr": fit.stderr}
    avals = _parse_list("a_values", cfg.a_values, float)
    if avals:
        fields = est.plateau_fields(avals, cfg.lambda_coeff)
        ms, es = [], []
        for a, h in zip(avals, fields):
            n = _n_from_spacing(a)
            g = lat.build_lattice(lat.LatticeSpec("square", n, "periodic", a))
            m, e, _ = est.magnetization(g, float(h), schedule(cfg))
            ms.append(m)
            es.append(e)
        plateau = est.near_critical_plateau(avals, cfg.lambda_coeff, ms, es)
        blobs["plateau.csv"] = art.series_csv(plateau.scales, plateau.values,
                                              plateau.stderrs, "a")
        finite = plateau.values[np.isfinite(plateau.values)]
        summary["plateau_ratio"] = (float(finite.max() / finite.min())
                                    if finite.size and finite.min() > 0 else float("nan"))
    return blobs, summary


def _run_potts(cfg: ExperimentConfig, jobs: int):
    desc = _graph_desc(cfg)
    coup = coupling_spec(cfg)
    ensembles = sample_ensembles(desc, coup, schedule(cfg), jobs)
    q = cfg.q
    signs = np.stack([potts_signs(q, k) for k in range(q)])
    sum_over_k = signs.sum(axis=0)
    exact = {
        "mean": 0.0,
        "variance": float((signs[0] ** 2).mean()),
        "cross_covariance": (float((signs[0] * signs[1]).mean()) if q >= 2 else 0.0),
    }
    per_chain = {"mean": [], "variance": [], "cross_covariance": []}
    per_chain_err = {"mean": [], "variance": [], "cross_covariance": []}
    max_sum_dev = 0.0
    for ens in ensembles:
        rng = stream(ens.seed, ens.chain, COLOR_STREAM)
        m0 = np.empty(len(ens))
        m2 = np.empty(len(ens))
        mx = np.empty(len(ens))
        for t, labeling in enumerate(ensemble_labelings(ens)):
            spins = color_clusters(labeling, q, rng)
            cc = spins.cluster_colors
            s0 = signs[0][cc]
            m0[t] = s0.mean()
            m2[t] = (s0 ** 2).mean()
            mx[t] = (s0 * signs[1][cc]).mean() if q >= 2 else 0.0
            dev = float(np.abs(sum_over_k[cc]).max()) if cc.size else 0.0
            if dev > max_sum_dev:
                max_sum_dev = dev
        for name, series in (("mean", m0), ("variance", m2),
                             ("cross_covariance", mx)):
            m, e = batch_means(series)
            per_chain[name].append(m)
            per_chain_err[name].append(e)
    report = {"q": q, "max_sign_sum_deviation": max_sum_dev}
    for name in ("mean", "variance", "cross_covariance"):
        m, e = merge_mean_stderr(np.asarray(per_chain[name]),
                                 np.asarray(per_chain_err[name]))
        dev = abs(m - exact[name])
        report[name] = {"value": m, "stderr": e, "exact": exact[name],
                        "sigma": _sigma_dev(dev, e)}
    blobs = {"potts_moments.json": art.json_bytes(report)}
    return blobs, report


def _run_divide_and_color(cfg: ExperimentConfig, jobs: int):
    # white-noise limit: FK at p = 0 makes every site its own cluster
    graph, window, ens0 = _padded_ensembles(cfg, jobs, model="fk", p=0.0)
    theta0 = fld.scale_factor(ens0, window, "cluster-moment")
    f = parse_test_function("f_spec", cfg.f_spec)(window)
    g = parse_test_function("g_spec", cfg.g_spec)(window)
    m, e = _field_pair_stats(ens0, window, theta0.value, f, g, cfg.q)
    integral = fld.product_integral(f, g)
    report = {
        "white_noise": {"value": m, "stderr": e, "integral": integral,
                        "rel_dev": abs(m - integral) / abs(integral)},
    }
    # spin-cluster contrast: site-percolation clusters at p = 1/2 keep
    # macroscopic weight under the beta = 0 normalization 1/sqrt(#window)
    avals = _parse_list("a_values", cfg.a_values, float) or [1.0 / 64, 1.0 / 256]
    eps = _parse_list("epsilons", cfg.epsilons, float)
    eps_fixed = eps[-1] if eps else 0.25
    rows = []
    for a in sorted(avals, reverse=True):
        n = _n_from_spacing(a)
        gph, win, ens = _padded_ensembles(cfg, jobs, n=n,
                                          model="independent-site", p=0.5)
        nwin = gph.window_sites(win).size
        theta = 1.0 / math.sqrt(float(nwin))
        series = est.small_cluster_moment(ens, win, theta, [eps_fixed])
        rows.append((a, float(series.values[0]), float(series.stderrs[0])))
    report["moment_rows"] = [list(r) for r in rows]
    if len(rows) >= 2:
        report["growth_ratio"] = rows[-1][1] / rows[0][1]
    blobs = {
        "dc_moment.csv": art.csv_bytes(("a", "value", "stderr"), rows),
        "dc_report.json": art.json_bytes(report),
    }
    return blobs, report


_PIPELINES = {
    "oracle": _run_oracle,
    "twopoint": _run_twopoint,
    "onearm": _run_onearm,
    "rsw": _run_rsw,
    "crossings": _run_crossings,
    "small-clusters": _run_small_clusters,
    "field": _run_field,
    "norm-scaling": _run_norm_scaling,
    "offcritical": _run_offcritical,
    "potts": _run_potts,
    "divide-and-color": _run_divide_and_color,
}


def run_experiment(cfg: ExperimentConfig, jobs: int = 1,
                   outdir: Optional[str] = None,
                   seed: Optional[int] = None) -> Tuple[art.RunManifest, dict, list]:
    """Dispatch the configured pipeline, write artifacts plus manifest."""
    from . import __version__
    if seed is not None:
        cfg.seed = seed
    out = art.resolve_outdir(cfg.out, outdir)
    t0 = time.perf_counter()
    blobs, summary = _PIPELINES[cfg.kind](cfg, jobs)
    manifest = art.RunManifest(
        config_text=serialize_config(cfg),
        version=__version__,
        seed=cfg.seed,
        chain_streams=[[cfg.seed, c] for c in range(cfg.chains)],
        wall_clock=time.perf_counter() - t0,
    )
    paths = art.write_artifacts(out, blobs, manifest)
    return manifest, summary, paths
