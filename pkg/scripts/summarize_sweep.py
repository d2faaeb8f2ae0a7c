"""Print per-scheme tables (rows: hop pair, columns: link delay) from a sweep CSV."""
import argparse
import csv
from collections import defaultdict

METRICS = ["handoff_delay_ms", "reorder_depth", "reorder_duration_ms", "duplicates", "routing_efficiency"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("csv")
    args = ap.parse_args()
    with open(args.csv) as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    delays = sorted({r["link_delay_ms"] for r in rows}, key=float, reverse=True)
    table = defaultdict(dict)
    for r in rows:
        table[(r["scheme"], r["old_hops"], r["new_hops"])][r["link_delay_ms"]] = r
    for metric in METRICS:
        print(f"\n== {metric}")
        print(f"{'scheme':8} {'pair':6} " + " ".join(f"{float(d):>8g}ms" for d in delays))
        for (scheme, a, b), by_delay in sorted(table.items()):
            vals = [by_delay.get(d, {}).get(metric, "") for d in delays]
            print(f"{scheme:8} {a + ',' + b:6} " + " ".join(f"{float(v):>10.2f}" for v in vals))


if __name__ == "__main__":
    main()
