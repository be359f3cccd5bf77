"""Run every config under configs/, one after another.

Heavy configs (norm-scaling, small-clusters) are skipped unless --heavy is
given; everything else finishes in minutes on one core."""

import argparse
import sys
import time
from pathlib import Path

from fkfield.cli import main as cli_main

HEAVY = {"norm-scaling.cfg", "small-clusters.cfg"}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--configs", default=None,
                    help="config directory (default: configs/ next to this script)")
    ap.add_argument("--out", default="out", help="output root directory")
    ap.add_argument("--heavy", action="store_true",
                    help="include the long-running configs")
    ap.add_argument("--only", default=None,
                    help="substring filter on config file names")
    args = ap.parse_args()

    cfg_dir = Path(args.configs) if args.configs else \
        Path(__file__).resolve().parent.parent / "configs"
    paths = sorted(cfg_dir.glob("*.cfg"))
    if args.only:
        paths = [p for p in paths if args.only in p.name]
    if not args.heavy:
        paths = [p for p in paths if p.name not in HEAVY]
    if not paths:
        print("no configs matched", file=sys.stderr)
        return 1

    worst = 0
    for path in paths:
        outdir = Path(args.out) / path.stem
        print(f"== {path.name} -> {outdir}")
        t0 = time.perf_counter()
        rc = cli_main(["run", str(path), "--out", str(outdir)])
        print(f"   exit {rc} in {time.perf_counter() - t0:.1f}s")
        worst = max(worst, rc)
    return worst


if __name__ == "__main__":
    sys.exit(main())
