"""Experiment configuration: flat key = value text files.

Syntax: one `key = value` per line, `#` starts a comment, blank lines ignored.
Unknown keys and malformed values are reported with the offending key name.
Numeric sentinels keep the round trip exact: p < 0 means "use the critical
density", a = 0 means "use 1/n", therm < 0 means "adaptive warmup".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields as dc_fields
from typing import List

from . import lattice as lat
from . import sampler as smp
from .artifacts import format_float

KINDS = (
    "oracle", "twopoint", "onearm", "rsw", "crossings", "small-clusters",
    "field", "norm-scaling", "offcritical", "potts", "divide-and-color",
)


class ConfigError(ValueError):
    """Invalid configuration; `key` names the offending field."""

    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


@dataclass
class ExperimentConfig:
    kind: str = "twopoint"
    lattice: str = "square"          # square | triangular
    n: int = 64                      # sites per unit length (a = 1/n)
    nx: int = 0                      # explicit site grid (oracle kind); 0 = n x n
    ny: int = 0
    boundary: str = "periodic"       # free | periodic | wired
    a: float = 0.0                   # lattice spacing; 0 = auto (1/n)
    model: str = "fk"                # fk | independent-bond | independent-site
    q: int = 2
    p: float = -1.0                  # bond/site density; negative = critical
    beta: float = -1.0               # if >= 0 overrides p via p = 1 - exp(-2 beta)
    h: float = 0.0                   # ghost-field strength
    seed: int = 1
    chains: int = 2
    sweeps: int = 400
    therm: int = -1                  # -1 = adaptive
    thinning: int = 2
    out: str = "out"
    # kind-specific knobs (defaults give a runnable experiment for every kind)
    r1: float = 0.125                # inner annulus radius (physical units)
    r2: float = 0.25                 # outer annulus radius (physical units)
    radii: str = ""                  # comma list, lattice units; empty = default ladder
    epsilons: str = ""               # comma list of diameter cutoffs; empty = sqrt2*2^-m
    h_values: str = ""               # comma list of field strengths
    a_values: str = ""               # comma list of spacings for multi-size kinds
    lambda_coeff: float = 1.0        # h = lambda * a^{15/8} for the plateau scan
    method: str = "cluster-moment"   # normalization route
    placements: int = 1              # window copies averaged per snapshot
    observable: int = 0              # color direction for Potts fields
    arm_boundary: str = "bulk"       # bulk | wired | free one-arm mode
    cutoff: float = 0.0              # diameter cutoff for field families; 0 = none
    f_spec: str = "bump:0.35,0.35,0.1"   # test function: bump:cx,cy,sigma | indicator
    g_spec: str = "bump:0.65,0.65,0.1"
    fit_lo: float = 0.0              # fit range override (0,0 = estimator default)
    fit_hi: float = 0.0


_HELP = {
    "kind": "experiment kind: " + " | ".join(KINDS),
    "lattice": "square | triangular",
    "n": "sites per unit length; the unit window spans n+1 sites per side",
    "nx": "explicit grid width in sites (oracle kind); 0 = use n",
    "ny": "explicit grid height in sites (oracle kind); 0 = use n",
    "boundary": "free | periodic | wired",
    "a": "lattice spacing; 0 means 1/n",
    "model": "fk | independent-bond | independent-site",
    "q": "cluster weight (integer >= 1; 2 = Ising)",
    "p": "bond/site density in [0,1]; negative means the critical density",
    "beta": "inverse temperature; if >= 0 it overrides p via p = 1 - exp(-2 beta)",
    "h": "external ghost-field strength (>= 0, fk q=2 only)",
    "seed": "master seed; chain c draws from stream (seed, c)",
    "chains": "independent chains",
    "sweeps": "post-warmup sweeps per chain",
    "therm": "warmup sweeps; -1 = adaptive (10 tau_int, at least 200)",
    "thinning": "keep every thinning-th sweep",
    "out": "output directory (overridden by --out or FKFIELD_OUT)",
    "r1": "inner annulus radius, physical units",
    "r2": "outer annulus radius, physical units",
    "radii": "comma list of radii in lattice units; empty = geometric ladder",
    "epsilons": "comma list of cutoffs; empty = sqrt(2)*2^-m, m=1..6",
    "h_values": "comma list of field strengths for the magnetization curve",
    "a_values": "comma list of spacings for multi-size scans",
    "lambda_coeff": "h = lambda_coeff * a^(15/8) in the plateau scan",
    "method": "normalization route: cluster-moment | two-point-sum",
    "placements": "window copies averaged per snapshot (perfect square)",
    "observable": "Potts color direction k in [0, q)",
    "arm_boundary": "one-arm mode: bulk | wired | free",
    "cutoff": "diameter cutoff for area families; 0 keeps every cluster",
    "f_spec": "test function: bump:cx,cy,sigma or indicator",
    "g_spec": "second test function (field kind)",
    "fit_lo": "fit range lower end (physical units); 0 = estimator default",
    "fit_hi": "fit range upper end; 0 = estimator default",
}


def parse_config(text: str) -> ExperimentConfig:
    cfg = ExperimentConfig()
    types = {f.name: type(getattr(cfg, f.name)) for f in dc_fields(cfg)}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line.split()[0], f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ConfigError(key, f"line {lineno}: unknown key")
        typ = types[key]
        try:
            if typ is int:
                setattr(cfg, key, int(value))
            elif typ is float:
                setattr(cfg, key, float(value))
            else:
                setattr(cfg, key, value)
        except ValueError:
            raise ConfigError(key, f"line {lineno}: cannot parse {value!r} as {typ.__name__}")
    validate_config(cfg)
    return cfg


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in dc_fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, float):
            lines.append(f"{f.name} = {format_float(value)}")
        else:
            lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def _parse_list(key: str, text: str, typ=float) -> List:
    if not text.strip():
        return []
    try:
        return [typ(tok) for tok in text.split(",")]
    except ValueError:
        raise ConfigError(key, f"cannot parse {text!r} as comma-separated {typ.__name__}s")


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.kind not in KINDS:
        raise ConfigError("kind", f"{cfg.kind!r} is not one of {', '.join(KINDS)}")
    if cfg.lattice not in ("square", "triangular"):
        raise ConfigError("lattice", f"{cfg.lattice!r} is not square | triangular")
    if cfg.n < 1:
        raise ConfigError("n", "must be >= 1")
    if cfg.boundary not in ("free", "periodic", "wired"):
        raise ConfigError("boundary", f"{cfg.boundary!r} is not free | periodic | wired")
    if cfg.a < 0:
        raise ConfigError("a", "must be >= 0 (0 = auto)")
    if cfg.model not in smp.MODELS:
        raise ConfigError("model", f"{cfg.model!r} is not one of {', '.join(smp.MODELS)}")
    if cfg.q < 1:
        raise ConfigError("q", "must be >= 1")
    if cfg.p > 1:
        raise ConfigError("p", "must be <= 1")
    if cfg.beta >= 0 and cfg.p >= 0:
        raise ConfigError("beta", "give either p or beta, not both")
    if cfg.h < 0:
        raise ConfigError("h", "must be >= 0")
    if cfg.h > 0 and (cfg.model != "fk" or cfg.q != 2):
        raise ConfigError("h", "ghost field is supported for the fk model at q = 2")
    if cfg.chains < 1:
        raise ConfigError("chains", "must be >= 1")
    if cfg.sweeps < 1:
        raise ConfigError("sweeps", "must be >= 1")
    if cfg.thinning < 1:
        raise ConfigError("thinning", "must be >= 1")
    if cfg.method not in ("cluster-moment", "two-point-sum"):
        raise ConfigError("method", f"{cfg.method!r} is not cluster-moment | two-point-sum")
    k = int(round(math.sqrt(max(cfg.placements, 0))))
    if cfg.placements < 1 or k * k != cfg.placements:
        raise ConfigError("placements", "must be a positive perfect square")
    if cfg.placements > 1 and cfg.method != "cluster-moment":
        raise ConfigError("placements", "averaging needs method=cluster-moment")
    if cfg.arm_boundary not in ("bulk", "wired", "free"):
        raise ConfigError("arm_boundary", f"{cfg.arm_boundary!r} is not bulk | wired | free")
    if cfg.observable < 0 or cfg.observable >= max(cfg.q, 1):
        raise ConfigError("observable", f"must lie in [0, q) = [0, {cfg.q})")
    if cfg.cutoff < 0:
        raise ConfigError("cutoff", "must be >= 0")
    if not 0 < cfg.r1 < cfg.r2:
        raise ConfigError("r1", f"need 0 < r1 < r2, got r1={cfg.r1} r2={cfg.r2}")
    for key, typ in (("radii", int), ("epsilons", float),
                     ("h_values", float), ("a_values", float)):
        vals = _parse_list(key, getattr(cfg, key), typ)
        if vals and any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError(key, "values must be strictly increasing")
        if any(v <= 0 for v in vals):
            raise ConfigError(key, "values must be positive")
    for key in ("f_spec", "g_spec"):
        parse_test_function(key, getattr(cfg, key))
    if cfg.fit_lo < 0 or cfg.fit_hi < 0 or (cfg.fit_hi > 0 and cfg.fit_hi <= cfg.fit_lo):
        raise ConfigError("fit_lo", "need 0 <= fit_lo < fit_hi (or both 0)")
    if cfg.nx < 0 or cfg.ny < 0:
        raise ConfigError("nx", "must be >= 0 (0 = use n)")
    if (cfg.nx > 0) != (cfg.ny > 0):
        raise ConfigError("nx", "give both nx and ny or neither")
    if cfg.kind == "oracle":
        if cfg.h > 0:
            raise ConfigError("h", "the enumeration oracle needs h = 0")
        nb = oracle_graph(cfg).nbonds
        if nb > smp.MAX_ORACLE_BONDS:
            raise ConfigError("n", f"oracle lattice has {nb} bonds, cap is {smp.MAX_ORACLE_BONDS}")


def parse_test_function(key: str, spec: str):
    """Returns a builder for the named test function (validated, not built)."""
    from . import field as fld
    if spec == "indicator":
        return lambda window: fld.indicator(window)
    if spec.startswith("bump:"):
        parts = _parse_list(key, spec[len("bump:"):], float)
        if len(parts) != 3 or parts[2] <= 0:
            raise ConfigError(key, "bump needs cx,cy,sigma with sigma > 0")
        cx, cy, sigma = parts
        # centers are window-relative: (0,0) is the window corner, (1,1) the far one
        return lambda window: fld.gaussian_bump(
            window.x0 + cx * window.side, window.y0 + cy * window.side,
            sigma * window.side)
    raise ConfigError(key, f"{spec!r} is not 'indicator' or 'bump:cx,cy,sigma'")


def spacing(cfg: ExperimentConfig) -> float:
    return cfg.a if cfg.a > 0 else 1.0 / cfg.n


def lattice_spec(cfg: ExperimentConfig) -> lat.LatticeSpec:
    return lat.LatticeSpec(kind=cfg.lattice, n=cfg.n, boundary=cfg.boundary,
                           a=spacing(cfg))


def oracle_graph(cfg: ExperimentConfig) -> lat.LatticeGraph:
    """Small graph for enumeration: nx x ny sites when given, else n x n."""
    if cfg.nx > 0:
        return lat.rect_lattice(cfg.nx, cfg.ny, cfg.boundary, spacing(cfg))
    return lat.rect_lattice(cfg.n, cfg.n, cfg.boundary, spacing(cfg))


def resolved_p(cfg: ExperimentConfig) -> float:
    if cfg.beta >= 0:
        return 1.0 - math.exp(-2.0 * cfg.beta)
    if cfg.p < 0:
        return smp.critical_point(cfg.model, cfg.q, cfg.lattice)
    return cfg.p


def coupling_spec(cfg: ExperimentConfig) -> smp.CouplingSpec:
    return smp.CouplingSpec(model=cfg.model, q=cfg.q, p=resolved_p(cfg),
                            h=cfg.h, boundary=cfg.boundary)


def schedule(cfg: ExperimentConfig) -> smp.Schedule:
    return smp.Schedule(sweeps=cfg.sweeps, therm=cfg.therm,
                        thinning=cfg.thinning, seed=cfg.seed,
                        chains=cfg.chains)


def schema_text() -> str:
    cfg = ExperimentConfig()
    lines = [
        "Configuration schema (flat `key = value` lines; # comments allowed).",
        "",
    ]
    width = max(len(f.name) for f in dc_fields(cfg))
    for f in dc_fields(cfg):
        default = getattr(cfg, f.name)
        if isinstance(default, float):
            default = format_float(default)
        typ = type(getattr(cfg, f.name)).__name__
        lines.append(f"{f.name:<{width}}  {typ:<5} (default {default!r:>10})  {_HELP[f.name]}")
    lines += [
        "",
        "Kind notes:",
        "  oracle          lattice must have at most 20 bonds; h must be 0",
        "  twopoint        padded-torus two-point profile plus power-law fit",
        "  onearm          arm_boundary selects bulk (padded torus) or disc wired/free",
        "  rsw             circuit probability in the (r1, r2) annulus per spacing in a_values (or n)",
        "  crossings       annulus crossing-count tail and geometric-decay fit",
        "  small-clusters  diameter-cutoff second-moment series over epsilons",
        "  field           covariance of the field against f_spec/g_spec test functions",
        "  norm-scaling    normalization constant versus spacing over a_values",
        "  offcritical     magnetization curve over h_values plus plateau over a_values",
        "  potts           color-sign moment report at the configured q",
        "  divide-and-color  independent-site white-noise and spin-cluster contrast",
    ]
    return "\n".join(lines) + "\n"
