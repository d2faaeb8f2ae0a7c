"""Handover sweep over link delay x fork distances x scheme; writes one CSV.

    python scripts/run_sweep.py --out results/sweep.csv --jobs 4
"""
import argparse
import sys
from pathlib import Path

from mmsim.config import parse_sweep
from mmsim.scenario import metadata, sweep, write_csv

DEFAULT = Path(__file__).resolve().parent.parent / "configs" / "tree_sweep.json"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(DEFAULT))
    ap.add_argument("--out", default="-")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    spec = parse_sweep(Path(args.config).read_text())
    rows = sweep(spec, jobs=args.jobs)
    meta = metadata(spec.base, {"axes": {"link_delays": spec.link_delays,
                                         "hop_pairs": [list(p) for p in spec.hop_pairs],
                                         "schemes": list(spec.schemes)}})
    if args.out == "-":
        write_csv(rows, meta, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            write_csv(rows, meta, fh)
        print(f"{len(rows)} rows -> {args.out}")


if __name__ == "__main__":
    main()
