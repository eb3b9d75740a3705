"""Open-network comparison: CR against legacy DHCP roaming on the bundled testbed.

    python scripts/reproduce_open.py [--seed N] [--reps N]
"""

import argparse

from cooproam.cli import bundled
from cooproam.report import compare, summarize
from cooproam.sim import load_config, run

TARGETS = {"l2": 4.2, "l3": 11.4, "total": 15.6, "loss": 1.3}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--reps", type=int, default=1)
    args = p.parse_args()
    cfg = load_config(bundled("paper_open.cfg"))
    seeds = range(args.seed, args.seed + args.reps)
    cr = summarize(run(cfg, s, "cr") for s in seeds)
    legacy = summarize(run(cfg, s, "legacy") for s in seeds)
    print(f"{'metric':<7} {'cr':>9} {'target':>8}")
    for m, want in TARGETS.items():
        print(f"{m:<7} {cr.overall.mean[m]:9.2f} {want:8.1f}")
    print(f"legacy total {legacy.overall.mean['total']:.1f} ms (target 1210)")
    print(f"cr/legacy    {compare(cr, legacy).ratio['total']:.2%} (target 1.3%)")
    if cr.ipreq_mean is not None:
        print(f"ip_req-ip_resp {cr.ipreq_mean:.1f} ms (target 867)")


if __name__ == "__main__":
    main()
