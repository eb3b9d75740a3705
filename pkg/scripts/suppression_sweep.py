"""INFORESP count against the number of helpers that could answer.

    python scripts/suppression_sweep.py [--max-n 20] [--seeds 5] [--latency 0]

With zero latency one response covers every request. A positive latency
lets helpers whose waits fall within one propagation delay of each other
both answer; the sweep shows how often that happens.
"""

import argparse
import statistics

from cooproam.sweeps import run_suppression


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--max-n", type=int, default=20)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--latency", type=float, default=0.0, help="one-hop network latency in ms")
    args = p.parse_args()
    print(f"{'N':>3} {'inforesp_mean':>14} {'inforesp_max':>13} {'dup_entries':>12}")
    for n in range(2, args.max_n + 1):
        results = [run_suppression(n, s, net_latency=args.latency) for s in range(args.seeds)]
        counts = [r.inforesp for r in results]
        dups = sum(c - 1 for r in results for c in r.carried.values())
        print(f"{n:3d} {statistics.fmean(counts):14.2f} {max(counts):13d} {dups:12d}")


if __name__ == "__main__":
    main()
