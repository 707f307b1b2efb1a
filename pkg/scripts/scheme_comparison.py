"""Average latency of the four schemes on the default scenario.

    python scripts/scheme_comparison.py --blocks 10000 --workers 8

Prints mean latency per traffic type and per UE (ms), the RIS gain of
multi-path splitting and the reduction of MP+RIS relative to the single path.
"""
import argparse
import time

from rismp.config import SCHEMES, parse_config_text
from rismp.simulator import run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--blocks", type=int, default=10_000)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()

    overrides = [f"sim.blocks={args.blocks}", *args.override]
    if args.seed is not None:
        overrides.append(f"sim.seed={args.seed}")
    config = parse_config_text("", overrides)
    t0 = time.perf_counter()
    _, s, _ = run_scenario(config, workers=args.workers)
    elapsed = time.perf_counter() - t0

    Q = len(config.traffic)
    print(f"{config.sim.blocks} blocks, seed {config.sim.seed}, {elapsed:.0f} s")
    print("mean latency (ms)")
    print(f"{'traffic':>8}" + "".join(f"{x:>10}" for x in SCHEMES))
    for q in range(1, Q + 1):
        print(f"{q:>8}" + "".join(f"{s.per_traffic[(x, q)]:>10.3f}" for x in SCHEMES))
    print("per UE (ms)")
    for n in range(1, config.n_ue + 1):
        for q in range(1, Q + 1):
            print(f"  UE{n} T{q}" + "".join(f"{s.per_ue[(x, n, q)]:>10.3f}" for x in SCHEMES))
    print("RIS gain (1 - mp_ris / mp)")
    for q in range(1, Q + 1):
        per_ue = ", ".join(
            f"UE{n} {1 - s.per_ue[('mp_ris', n, q)] / s.per_ue[('mp', n, q)]:.1%}" for n in range(1, config.n_ue + 1)
        )
        print(f"  T{q}: system {1 - s.per_traffic[('mp_ris', q)] / s.per_traffic[('mp', q)]:.1%}; {per_ue}")
    for q in range(1, Q + 1):
        print(f"T{q}: mp_ris / sp = {s.per_traffic[('mp_ris', q)] / s.per_traffic[('sp', q)]:.1%}")


if __name__ == "__main__":
    main()
