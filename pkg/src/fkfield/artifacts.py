"""Bit-stable artifact emission: CSV series, JSON summaries, run manifests.

Determinism contract: identical (config, seed) runs must emit byte-identical
CSV/JSON files, so floats are printed with repr-exact formatting and JSON keys
are sorted.  The manifest records a sha256 digest per emitted file.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence


def format_float(x: float) -> str:
    """17 significant digits round-trips every finite float64."""
    if x != x:
        return "nan"
    return "%.17g" % x


def csv_bytes(header: Sequence[str], rows: Sequence[Sequence]) -> bytes:
    """Comma-separated, '.' decimal, header mandatory, \\n line ends."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, float):
                cells.append(format_float(cell))
            else:
                cells.append(str(cell))
        lines.append(",".join(cells))
    return ("\n".join(lines) + "\n").encode("ascii")


def json_bytes(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2) + "\n").encode("ascii")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass
class RunManifest:
    """Record of one experiment run: config echo, seeds, timing, digests."""

    config_text: str
    version: str
    seed: int
    chain_streams: List[List[int]]
    wall_clock: float
    files: Dict[str, str] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "config": self.config_text,
            "version": self.version,
            "seed": self.seed,
            "chain_streams": self.chain_streams,
            "wall_clock_seconds": self.wall_clock,
            "files": self.files,
        }


def write_artifacts(outdir: str, blobs: Dict[str, bytes],
                    manifest: RunManifest) -> List[str]:
    """Write every blob plus manifest.json; returns the paths written."""
    os.makedirs(outdir, exist_ok=True)
    paths = []
    for name, data in sorted(blobs.items()):
        manifest.files[name] = sha256_hex(data)
        path = os.path.join(outdir, name)
        with open(path, "wb") as fh:
            fh.write(data)
        paths.append(path)
    mpath = os.path.join(outdir, "manifest.json")
    with open(mpath, "wb") as fh:
        fh.write(json_bytes(manifest.to_json()))
    paths.append(mpath)
    return paths


def series_csv(scales, values, stderrs, scale_name: str = "scale") -> bytes:
    rows = [(float(s), float(v), float(e))
            for s, v, e in zip(scales, values, stderrs)]
    return csv_bytes((scale_name, "value", "stderr"), rows)


def fit_json(fit, extra: Optional[dict] = None) -> bytes:
    obj = {
        "exponent": fit.exponent,
        "stderr": fit.stderr,
        "amplitude": fit.amplitude,
        "fit_range": list(fit.fit_range),
        "n_points": fit.n_points,
        "goodness": fit.goodness,
    }
    if extra:
        obj.update(extra)
    return json_bytes(obj)


def resolve_outdir(configured: Optional[str], cli_override: Optional[str]) -> str:
    """Priority: CLI flag, FKFIELD_OUT env var, config value, cwd ./out."""
    if cli_override:
        return cli_override
    env = os.environ.get("FKFIELD_OUT")
    if env:
        return env
    if configured:
        return configured
    return "out"
