"""Random-cluster samplers and the small-graph exact oracle.

Three model families:

* ``fk``: the q-state random-cluster model, sampled by Swendsen-Wang with an
  optional ghost-site external field (q = 2 only).  One sweep = open bonds
  between equal colors with prob p, relabel, recolor clusters uniformly.
  The ghost cluster keeps color 0 (the favored state).
* ``independent-bond``: bonds i.i.d. open with prob p (no chain needed).
* ``independent-site``: sites i.i.d. occupied with prob p (no chain needed).

Determinism contract: chain c under master seed s draws only from the Philox
stream (s, c).  A sweep consumes exactly E bond uniforms, then N ghost
uniforms when a field is on, then one color integer per non-ghost cluster in
first-visit site order.  Rerunning a config reproduces every artifact byte.

Snapshot files are little-endian, length-prefixed binary: magic ``FKS1``,
u32 header length, UTF-8 JSON header (lattice + coupling + schedule + seed),
then per snapshot a u32 byte count and bit-packed bond occupations (LSB-first
within each byte, edge order as in the graph), plus the same for ghost bonds
when a field is on.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from numba import njit

from . import lattice as lat
from .rng import CHAIN_STREAM, stream
from .stats import integrated_autocorr_time

MODELS = ("fk", "independent-bond", "independent-site")

MAGIC = b"FKS1"

MAX_ORACLE_BONDS = 20


@dataclass(frozen=True)
class CouplingSpec:
    """Model family, cluster weight q, bond/site density p, field h >= 0."""

    model: str = "fk"
    q: int = 2
    p: float = 0.5
    h: float = 0.0
    boundary: str = "periodic"

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.q < 1:
            raise ValueError("q must be a positive integer")
        if not (0.0 <= self.p <= 1.0):
            raise ValueError("p must lie in [0, 1]")
        if self.h < 0:
            raise ValueError("h must be >= 0")
        if self.h > 0 and (self.model != "fk" or self.q != 2):
            raise ValueError("external field is supported for fk with q = 2 only")


@dataclass(frozen=True)
class Schedule:
    """Thermalize `therm` sweeps (-1 = adaptive), then run `sweeps` more,
    keeping every `thinning`-th bond configuration."""

    sweeps: int = 1000
    therm: int = -1
    thinning: int = 1
    seed: int = 0
    chains: int = 1

    def validate(self) -> None:
        if self.sweeps < 1 or self.thinning < 1 or self.chains < 1:
            raise ValueError("sweeps, thinning, chains must be >= 1")
        if self.therm < -1:
            raise ValueError("therm must be >= 0, or -1 for adaptive")


def critical_point(model: str, q: int = 2, kind: str = "square") -> float:
    """Exact critical density for the supported families.

    Square-lattice random cluster: self-dual point sqrt(q)/(1+sqrt(q)).
    Independent bonds on the square lattice: 1/2.  Independent sites on the
    triangular lattice: 1/2."""
    if model == "fk" and kind == "square":
        rq = np.sqrt(float(q))
        return float(rq / (1.0 + rq))
    if model == "independent-bond" and kind == "square":
        return 0.5
    if model == "independent-site" and kind == "triangular":
        return 0.5
    raise ValueError(f"no known critical point for {model} on {kind}")


def beta_from_p(p: float) -> float:
    """Inverse temperature matching bond density p (two-state convention)."""
    if not (0.0 <= p < 1.0):
        raise ValueError("need 0 <= p < 1")
    return -0.5 * np.log1p(-p)


def ghost_probability(p: float, h: float) -> float:
    """Ghost-bond density 1 - exp(-2 beta h) = 1 - (1-p)^h."""
    if h == 0.0:
        return 0.0
    return float(-np.expm1(h * np.log1p(-p)))


def off_critical_p(a: float, slope: float, q: int = 2) -> float:
    """Bond density at temperature T_c + slope * a (documented near-critical
    scaling choice; slope = 0 returns the critical point)."""
    pc = critical_point("fk", q)
    tc = 1.0 / beta_from_p(pc)
    beta = 1.0 / (tc + slope * a)
    return float(-np.expm1(-2.0 * beta))


# ---------------------------------------------------------------------------
# union-find + sweep kernels


@njit(cache=True, inline="always")
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True, inline="always")
def _union(parent, csize, a, b):
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra == rb:
        return
    if csize[ra] < csize[rb]:
        ra, rb = rb, ra
    parent[rb] = ra
    csize[ra] += csize[rb]


@njit(cache=True)
def _sw_sweep_kernel(colors, eu, ev, p, q, ghost_p, premerge,
                     parent, csize, cmap, open_out, ghost_out, rng):
    n = colors.size
    ghost = n
    for i in range(n + 1):
        parent[i] = i
        csize[i] = 1
    csize[ghost] = 0  # ghost carries no area
    for k in range(1, premerge.size):
        _union(parent, csize, premerge[0], premerge[k])
    for e in range(eu.size):
        u = rng.random()  # one draw per bond regardless of colors
        if colors[eu[e]] == colors[ev[e]] and u < p:
            open_out[e] = True
            _union(parent, csize, eu[e], ev[e])
        else:
            open_out[e] = False
    if ghost_p > 0.0:
        for i in range(n):
            u = rng.random()
            if colors[i] == 0 and u < ghost_p:
                ghost_out[i] = True
                _union(parent, csize, i, ghost)
            else:
                ghost_out[i] = False
    groot = _find(parent, ghost) if ghost_p > 0.0 else -1
    for i in range(n + 1):
        cmap[i] = -1
    kclusters = 0
    maxsize = 0
    ghost_size = 0
    for i in range(n):
        r = _find(parent, i)
        if cmap[r] < 0:
            kclusters += 1
            if r == groot:
                cmap[r] = 0
                ghost_size = csize[r]
            else:
                cmap[r] = np.int8(rng.integers(0, q))
            if csize[r] > maxsize:
                maxsize = csize[r]
        colors[i] = cmap[r]
    return kclusters, maxsize, ghost_size


@dataclass
class ChainState:
    """Mutable Markov-chain state for one fk chain."""

    graph: lat.LatticeGraph
    coupling: CouplingSpec
    colors: np.ndarray
    bond_open: np.ndarray
    ghost_open: Optional[np.ndarray]
    rng: np.random.Generator
    sweep: int = 0
    kclusters: int = 0
    largest: int = 0
    ghost_size: int = 0
    scratch: tuple = field(default=None, repr=False)

    def ensure_scratch(self):
        if self.scratch is None:
            n = self.graph.nsites
            self.scratch = (
                np.empty(n + 1, np.int32),
                np.empty(n + 1, np.int32),
                np.empty(n + 1, np.int8),
            )
        return self.scratch


def init_chain(graph: lat.LatticeGraph, coupling: CouplingSpec,
               rng: np.random.Generator) -> ChainState:
    coupling.validate()
    if coupling.model != "fk":
        raise ValueError("chains are defined for the fk model; independent "
                         "models are sampled directly")
    colors = rng.integers(0, coupling.q, size=graph.nsites).astype(np.int8)
    ghost = np.zeros(graph.nsites, bool) if coupling.h > 0 else None
    return ChainState(
        graph=graph, coupling=coupling, colors=colors,
        bond_open=np.zeros(graph.nbonds, bool), ghost_open=ghost, rng=rng,
    )


def sw_sweep(state: ChainState) -> ChainState:
    """One Swendsen-Wang update in place; returns the state for chaining."""
    g, c = state.graph, state.coupling
    parent, csize, cmap = state.ensure_scratch()
    eu, ev = edge_arrays(g)
    gp = ghost_probability(c.p, c.h)
    ghost_out = state.ghost_open if state.ghost_open is not None \
        else np.empty(0, bool)
    k, mx, gs = _sw_sweep_kernel(
        state.colors, eu, ev, c.p, c.q, gp, g.premerge_sites,
        parent, csize, cmap, state.bond_open, ghost_out, state.rng,
    )
    state.sweep += 1
    state.kclusters, state.largest, state.ghost_size = int(k), int(mx), int(gs)
    return state


def edge_arrays(graph: lat.LatticeGraph):
    """Contiguous (eu, ev) int32 views, cached on the graph."""
    cached = getattr(graph, "_edge_arrays", None)
    if cached is None:
        cached = (np.ascontiguousarray(graph.edges[:, 0]),
                  np.ascontiguousarray(graph.edges[:, 1]))
        graph._edge_arrays = cached
    return cached


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class Ensemble:
    """Thinned snapshot collection from one chain (or one i.i.d. sampler)."""

    graph: lat.LatticeGraph
    coupling: CouplingSpec
    seed: int
    chain: int
    therm_used: int
    thinning: int
    bonds_packed: Optional[np.ndarray] = None   # (S, ceil(E/8)) uint8
    ghost_packed: Optional[np.ndarray] = None   # (S, ceil(N/8)) uint8
    sites_packed: Optional[np.ndarray] = None   # (S, ceil(N/8)) uint8, site models
    largest: Optional[np.ndarray] = None        # per-snapshot largest cluster
    kclusters: Optional[np.ndarray] = None
    ghost_size: Optional[np.ndarray] = None

    def __len__(self) -> int:
        arr = self.bonds_packed if self.bonds_packed is not None else self.sites_packed
        return 0 if arr is None else arr.shape[0]

    def bond_config(self, t: int) -> np.ndarray:
        bits = np.unpackbits(self.bonds_packed[t], bitorder="little")
        return bits[: self.graph.nbonds].view(bool)

    def ghost_config(self, t: int) -> Optional[np.ndarray]:
        if self.ghost_packed is None:
            return None
        bits = np.unpackbits(self.ghost_packed[t], bitorder="little")
        return bits[: self.graph.nsites].view(bool)

    def site_config(self, t: int) -> np.ndarray:
        bits = np.unpackbits(self.sites_packed[t], bitorder="little")
        return bits[: self.graph.nsites].view(bool)

    def bond_configs(self):
        for t in range(len(self)):
            yield self.bond_config(t)


def _pack(mask: np.ndarray) -> np.ndarray:
    return np.packbits(mask, bitorder="little")


def run_chain(graph: lat.LatticeGraph, coupling: CouplingSpec,
              schedule: Schedule, chain: int = 0) -> Ensemble:
    """Thermalize and sample one chain; returns the thinned ensemble.

    Adaptive thermalization runs until the warmup length reaches
    max(200, 10 * tau_int) sweeps, with tau_int measured on the
    largest-cluster-size series (capped at 20000 sweeps)."""
    coupling.validate()
    schedule.validate()
    if coupling.model != "fk":
        return _run_independent(graph, coupling, schedule, chain)
    rng = stream(schedule.seed, chain, CHAIN_STREAM)
    state = init_chain(graph, coupling, rng)

    if schedule.therm >= 0:
        for _ in range(schedule.therm):
            sw_sweep(state)
        therm_used = schedule.therm
    else:
        series = []
        while True:
            for _ in range(100):
                sw_sweep(state)
                series.append(state.largest)
            tau = integrated_autocorr_time(np.asarray(series, np.float64))
            target = max(200, int(np.ceil(10.0 * tau)))
            if len(series) >= target or len(series) >= 20000:
                break
        therm_used = len(series)

    nsnap = schedule.sweeps // schedule.thinning
    bonds = np.empty((nsnap, (graph.nbonds + 7) // 8), np.uint8)
    ghost = (np.empty((nsnap, (graph.nsites + 7) // 8), np.uint8)
             if coupling.h > 0 else None)
    largest = np.empty(nsnap, np.int64)
    kcl = np.empty(nsnap, np.int64)
    gsz = np.empty(nsnap, np.int64)
    t = 0
    for s in range(nsnap * schedule.thinning):
        sw_sweep(state)
        if (s + 1) % schedule.thinning == 0:
            bonds[t] = _pack(state.bond_open)
            if ghost is not None:
                ghost[t] = _pack(state.ghost_open)
            largest[t] = state.largest
            kcl[t] = state.kclusters
            gsz[t] = state.ghost_size
            t += 1
    return Ensemble(
        graph=graph, coupling=coupling, seed=schedule.seed, chain=chain,
        therm_used=therm_used, thinning=schedule.thinning,
        bonds_packed=bonds, ghost_packed=ghost,
        largest=largest, kclusters=kcl,
        ghost_size=gsz if coupling.h > 0 else None,
    )


def _run_independent(graph, coupling, schedule, chain):
    """i.i.d. snapshots for the independent-bond / independent-site models."""
    rng = stream(schedule.seed, chain, CHAIN_STREAM)
    nsnap = schedule.sweeps // schedule.thinning
    if coupling.model == "independent-bond":
        rows = np.empty((nsnap, (graph.nbonds + 7) // 8), np.uint8)
        for t in range(nsnap):
            rows[t] = _pack(rng.random(graph.nbonds) < coupling.p)
        return Ensemble(graph=graph, coupling=coupling, seed=schedule.seed,
                        chain=chain, therm_used=0, thinning=schedule.thinning,
                        bonds_packed=rows)
    rows = np.empty((nsnap, (graph.nsites + 7) // 8), np.uint8)
    for t in range(nsnap):
        rows[t] = _pack(rng.random(graph.nsites) < coupling.p)
    return Ensemble(graph=graph, coupling=coupling, seed=schedule.seed,
                    chain=chain, therm_used=0, thinning=schedule.thinning,
                    sites_packed=rows)


def run_chains(graph: lat.LatticeGraph, coupling: CouplingSpec,
               schedule: Schedule) -> list:
    """All chains of a schedule, sequentially (parallel driver lives in the
    experiment layer).  Chain c uses stream (seed, c)."""
    return [run_chain(graph, coupling, schedule, chain=c)
            for c in range(schedule.chains)]


# ---------------------------------------------------------------------------
# snapshot persistence


def save_ensemble(path: str, ens: Ensemble) -> None:
    g = ens.graph
    if g.kind == "square" and g.nx >= 1 and g.ny >= 1:
        kind = "square"
    elif g.kind == "triangular":
        kind = "triangular"
    else:
        raise ValueError("only grid-buildable lattices serialize")
    if g.nx == 0:
        raise ValueError("irregular subgraphs do not serialize")
    header = {
        "kind": kind, "boundary": g.boundary, "nx": g.nx, "ny": g.ny, "a": g.a,
        "model": ens.coupling.model, "q": ens.coupling.q, "p": ens.coupling.p,
        "h": ens.coupling.h, "seed": ens.seed, "chain": ens.chain,
        "therm": ens.therm_used, "thinning": ens.thinning,
        "nsnap": len(ens), "payload": "sites" if ens.sites_packed is not None else "bonds",
        "ghost": ens.ghost_packed is not None,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    rows = ens.sites_packed if ens.sites_packed is not None else ens.bonds_packed
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for t in range(len(ens)):
            row = rows[t].tobytes()
            fh.write(struct.pack("<I", len(row)))
            fh.write(row)
            if ens.ghost_packed is not None:
                grow = ens.ghost_packed[t].tobytes()
                fh.write(struct.pack("<I", len(grow)))
                fh.write(grow)


def load_ensemble(path: str) -> Ensemble:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: not a snapshot file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header["kind"] == "square":
            graph = lat.rect_lattice(header["nx"], header["ny"],
                                     header["boundary"], header["a"])
        else:
            graph = lat.build_lattice(lat.LatticeSpec(
                "triangular", header["nx"], header["boundary"], header["a"]))
        coupling = CouplingSpec(model=header["model"], q=header["q"],
                                p=header["p"], h=header["h"],
                                boundary=header["boundary"])
        rows, ghosts = [], []
        for _ in range(header["nsnap"]):
            (nb,) = struct.unpack("<I", fh.read(4))
            rows.append(np.frombuffer(fh.read(nb), np.uint8))
            if header["ghost"]:
                (ng,) = struct.unpack("<I", fh.read(4))
                ghosts.append(np.frombuffer(fh.read(ng), np.uint8))
    packed = np.vstack(rows) if rows else None
    ens = Ensemble(graph=graph, coupling=coupling, seed=header["seed"],
                   chain=header["chain"], therm_used=header["therm"],
                   thinning=header["thinning"])
    if header["payload"] == "sites":
        ens.sites_packed = packed
    else:
        ens.bonds_packed = packed
    if header["ghost"]:
        ens.ghost_packed = np.vstack(ghosts)
    return ens


# ---------------------------------------------------------------------------
# exact enumeration oracle


@dataclass
class ExactObservables:
    """Closed-form reference values from summing all 2^E bond configurations."""

    graph: lat.LatticeGraph
    coupling: CouplingSpec
    partition: float
    connectivity: np.ndarray        # (N,N) pair-connection probabilities
    sum_sq_sizes: float             # E sum_i |C_i|^2
    cluster_count_probs: np.ndarray  # index k = P(#clusters = k)
    bond_open_prob: np.ndarray      # per-edge stationary open probability
    loop_count_probs: Optional[np.ndarray] = None  # free square patches only


@njit(cache=True)
def _enumerate_kernel(n, eu, ev, premerge, powo, powc, powq,
                      dn, du, dv, with_dual, conn, kprob, lprob, openprob):
    E = eu.size
    parent = np.empty(max(n, dn if with_dual else 1), np.int32)
    csize = np.empty(parent.size, np.int32)
    labels = np.empty(n, np.int32)
    counts = np.empty(n + 1, np.int64)
    z = 0.0
    sumsq = 0.0
    for cfg in range(1 << E):
        for i in range(n):
            parent[i] = i
            csize[i] = 1
        for k in range(1, premerge.size):
            _union(parent, csize, premerge[0], premerge[k])
        nopen = 0
        for e in range(E):
            if (cfg >> e) & 1:
                nopen += 1
                _union(parent, csize, eu[e], ev[e])
        for i in range(n):
            labels[i] = _find(parent, i)
        for i in range(n + 1):
            counts[i] = 0
        k = 0
        for i in range(n):
            r = labels[i]
            if counts[r] == 0:
                k += 1
            counts[r] += 1
        w = powo[nopen] * powc[E - nopen] * powq[k]
        z += w
        ssq = 0.0
        for i in range(n):
            r = labels[i]
            if counts[r] > 0:
                ssq += float(counts[r]) * float(counts[r])
                counts[r] = 0
        sumsq += w * ssq
        for i in range(n):
            for j in range(i, n):
                if labels[i] == labels[j]:
                    conn[i, j] += w
        kprob[k] += w
        for e in range(E):
            if (cfg >> e) & 1:
                openprob[e] += w
        if with_dual:
            for i in range(dn):
                parent[i] = i
                csize[i] = 1
            for e in range(E):
                if not ((cfg >> e) & 1):
                    _union(parent, csize, du[e], dv[e])
            kd = 0
            for i in range(dn):
                if _find(parent, i) == i:
                    kd += 1
            lprob[k + kd - 1] += w
    return z, sumsq


def exact_enumerate(graph: lat.LatticeGraph, coupling: CouplingSpec) -> ExactObservables:
    """Exhaustive reference observables; refuses graphs over 20 bonds or a
    nonzero field (2^E joint configurations would be needed)."""
    coupling.validate()
    if coupling.h != 0:
        raise ValueError("exact enumeration requires h = 0")
    E = graph.nbonds
    if E > MAX_ORACLE_BONDS:
        raise ValueError(f"exact enumeration capped at {MAX_ORACLE_BONDS} bonds, got {E}")
    n = graph.nsites
    p, q = coupling.p, float(coupling.q)
    powo = np.array([p ** i for i in range(E + 1)])
    powc = np.array([(1 - p) ** i for i in range(E + 1)])
    powq = np.array([q ** i for i in range(n + 2)])
    eu, ev = edge_arrays(graph)
    with_dual = graph.dual_edges is not None and graph.boundary == "free"
    if with_dual:
        du = np.ascontiguousarray(graph.dual_edges[:, 0])
        dv = np.ascontiguousarray(graph.dual_edges[:, 1])
        dn = graph.dual_nsites
    else:
        du = dv = np.empty(0, np.int32)
        dn = 0
    conn = np.zeros((n, n))
    kprob = np.zeros(n + 2)
    lprob = np.zeros(E + n + 2)
    openprob = np.zeros(E)
    z, sumsq = _enumerate_kernel(
        n, eu, ev, graph.premerge_sites, powo, powc, powq,
        dn, du, dv, with_dual, conn, kprob, lprob, openprob,
    )
    conn = conn / z
    conn = conn + np.triu(conn, 1).T
    np.fill_diagonal(conn, 1.0)
    return ExactObservables(
        graph=graph, coupling=coupling, partition=float(z),
        connectivity=conn, sum_sq_sizes=float(sumsq / z),
        cluster_count_probs=kprob / z, bond_open_prob=openprob / z,
        loop_count_probs=(lprob / z) if with_dual else None,
    )
