"""Per-UE CDFs of the instant latency for every scheme, as CSV files.

    python scripts/export_cdfs.py --blocks 10000 --out cdfs/

Writes ``{scheme}_ue{n}_t{q}.csv`` with columns latency_s, cdf, plus a
quantile table (``quantiles.csv``) that is easy to eyeball.
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from rismp.cli import cdf_filename, write_cdf
from rismp.config import parse_config_text
from rismp.simulator import export_cdf, run_scenario

QUANTILES = (0.1, 0.5, 0.9, 0.99)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--blocks", type=int, default=10_000)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="cdfs")
    ap.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()

    config = parse_config_text("", [f"sim.blocks={args.blocks}", *args.override])
    records, summary, _ = run_scenario(config, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for s in summary.schemes:
        for n in range(1, config.n_ue + 1):
            for q in range(1, len(config.traffic) + 1):
                pts = export_cdf(records, s, n, q)
                write_cdf(out / cdf_filename(s, n, q), pts)
                x = np.array([p[0] for p in pts])
                F = np.array([p[1] for p in pts])
                qs = [x[np.searchsorted(F, level)] * 1e3 for level in QUANTILES]
                rows.append((s, n, q, *(f"{v:.3f}" for v in qs)))
    with (out / "quantiles.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("scheme", "ue", "traffic", *(f"q{int(level * 100)}_ms" for level in QUANTILES)))
        w.writerows(rows)
    for r in rows:
        if r[2] == 1:
            print(*r, sep="\t")


if __name__ == "__main__":
    main()
