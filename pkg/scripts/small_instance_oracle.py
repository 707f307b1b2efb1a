"""Alternating optimization against exhaustive search on tiny instances.

    python scripts/small_instance_oracle.py --instances 50

One UE, two BSs with two antennas each, a 2-element surface. The oracle
searches splits and power shares on a 0.05 grid and 16 phases per element
(matched-filter combining is optimal with a single UE). Prints the ratio
f(AO) / f(grid) per instance.
"""
import argparse
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))
from test_optimizer import grid_oracle, make_problem  # noqa: E402

from rismp.optimizer import ao_solve, evaluate  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=50)
    ap.add_argument("--seed", type=int, default=2026)
    ap.add_argument("--cascade", type=float, default=1.0, help="cascade power relative to the direct link")
    ap.add_argument("--snr-db", type=float, default=10.0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    ratios = []
    for i in range(args.instances):
        pr = make_problem(rng, N=1, M=2, L=2, K=2, cascade=args.cascade, snr_db=args.snr_db)
        pol, trace = ao_solve(pr, rng=np.random.default_rng(i))
        r = evaluate(pr, pol)[1] / grid_oracle(pr)
        ratios.append(r)
        flag = "  <-- above 1.05" if r > 1.05 else ""
        print(f"{i:3d}  ratio {r:.4f}  outer iterations {len(trace.objective) - 1}{flag}")
    ratios = np.array(ratios)
    print(f"within 5%: {np.sum(ratios <= 1.05)} / {len(ratios)}; median {np.median(ratios):.4f}; "
          f"worst {ratios.max():.4f}")


if __name__ == "__main__":
    main()
