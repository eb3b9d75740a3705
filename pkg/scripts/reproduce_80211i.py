"""802.11i comparison: relayed CR handoffs against full 802.1x re-authentication.

    python scripts/reproduce_80211i.py [--seed N] [--reps N]
"""

import argparse

from cooproam.cli import bundled
from cooproam.report import summarize
from cooproam.sim import load_config, run

TARGETS = {"eap-tls-1024": 1580, "eap-tls-2048": 1669, "peap": 1531}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--reps", type=int, default=1)
    args = p.parse_args()
    cfg = load_config(bundled("paper_80211i.cfg"))
    seeds = range(args.seed, args.seed + args.reps)
    reports = [run(cfg, s, "cr") for s in seeds]
    cr = summarize(reports)
    legacy = summarize(run(cfg, s, "legacy") for s in seeds)
    relayed = sum(r.used_relay for rep in reports for _, r in rep.records)
    print(f"cr total {cr.overall.mean['total']:.2f} ms (target 21), relayed {relayed}/{cr.overall.n}")
    for method, want in TARGETS.items():
        got = legacy.per_mechanism[method].mean["total"]
        print(f"legacy {method:<13} {got:8.1f} ms (target {want})")


if __name__ == "__main__":
    main()
