"""Collect fitted exponents from run output directories into one table.

Walks the given roots for fit.json files and prints the fitted exponent,
its error, and the fit window next to the nominal value for that
observable (where one is known)."""

import argparse
import json
import sys
from pathlib import Path

NOMINAL = {
    "two-point": -0.25,            # 1/4 decay
    "one-arm": -0.104,             # 5/48 decay
    "normalization": 1.875,        # 15/8
    "magnetization": 0.0667,       # 1/15
    "small-cluster-moment": 1.75,  # 2(1 - 1/8)
}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("roots", nargs="*", default=["out"])
    args = ap.parse_args()

    rows = []
    for root in args.roots:
        for path in sorted(Path(root).rglob("fit.json")):
            with open(path) as fh:
                fit = json.load(fh)
            obs = fit.get("observable", "?")
            rows.append((str(path.parent.name), obs,
                         fit.get("exponent"), fit.get("stderr"),
                         NOMINAL.get(obs)))
    if not rows:
        print("no fit.json found", file=sys.stderr)
        return 1
    for name, obs, expo, err, nom in rows:
        nominal = f"  nominal {nom:+.4f}" if nom is not None else ""
        print(f"{name:<18} {obs:<22} {expo:+.4f} +- {err:.4f}{nominal}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
