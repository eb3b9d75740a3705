"""Command-line runner: ``cooproam --config FILE [--seed N] [--reps N] [--mode cr|legacy|both] --out DIR``.

Exit status is 0 on success, 1 for configuration errors and 2 for runtime
failures. Set COOPROAM_LOG (DEBUG, INFO, WARNING, ...) for log output on
stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .report import compare, csv_text, summarize, summary_text
from .sim import ConfigError, load_config
from .sim.core import run

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
log = logging.getLogger("cooproam")


@dataclass
class RunRequest:
    config_path: str
    seed: int = 0
    repetitions: int = 1
    output_dir: str = "out"
    comparison_mode: str = "cr"

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.comparison_mode not in ("cr", "legacy", "both"):
            raise ValueError(f"unknown mode {self.comparison_mode!r}")


def bundled(name: str) -> Path:
    """Path of a scenario shipped with the package, e.g. ``bundled('paper_open.cfg')``."""
    return Path(str(resources.files("cooproam") / "scenarios" / name))


def resolve_config(path: str) -> Path:
    p = Path(path)
    if not p.exists() and not p.is_absolute() and bundled(p.name).exists() and p.parent == Path("."):
        return bundled(p.name)
    return p


def _write_mode(out: Path, reports) -> object:
    out.mkdir(parents=True, exist_ok=True)
    recs = [rec for rep in reports for _, rec in rep.records]
    (out / "handoffs.csv").write_text(csv_text(recs))
    summary = summarize(reports)
    (out / "summary.txt").write_text(summary_text(summary))
    multi = len(reports) > 1

    def joined(pick) -> str:
        parts = []
        for rep in reports:
            if multi:
                parts.append(f"# rep seed={rep.seed}")
            parts.extend(pick(rep))
        return "\n".join(parts) + ("\n" if parts else "")

    (out / "trace.log").write_text(joined(lambda r: r.trace))
    (out / "security.log").write_text(joined(lambda r: r.security_log))
    (out / "relay_audit.log").write_text(joined(lambda r: r.relay_audit))
    (out / "dhcp_leases.txt").write_text(joined(lambda r: r.dhcp_dump.splitlines()))
    return summary


def run_scenario(req: RunRequest) -> int:
    try:
        cfg = load_config(resolve_config(req.config_path))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    modes = ("cr", "legacy") if req.comparison_mode == "both" else (req.comparison_mode,)
    try:
        results = {}
        for mode in modes:
            results[mode] = [run(cfg, req.seed + i, mode) for i in range(req.repetitions)]
            log.info("%s: %d repetitions done", mode, req.repetitions)
        out = Path(req.output_dir)
        if len(modes) == 1:
            summary = _write_mode(out, results[modes[0]])
            print(summary_text(summary), end="")
        else:
            sums = {m: _write_mode(out / m, results[m]) for m in modes}
            table = compare(sums["cr"], sums["legacy"]).text()
            (out / "comparison.txt").write_text(table)
            print(table, end="")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report, do not trace back
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cooproam", description="Run a cooperative roaming scenario.")
    p.add_argument("--config", required=True, help="scenario file (bundled names such as paper_open.cfg work too)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=1, help="repetitions; rep i uses seed+i")
    p.add_argument("--mode", choices=("cr", "legacy", "both"), default="cr")
    p.add_argument("--out", default="out")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("COOPROAM_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = parser().parse_args(argv)
    if args.reps < 1:
        print("config error: --reps must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return run_scenario(RunRequest(args.config, args.seed, args.reps, args.out, args.mode))


if __name__ == "__main__":
    sys.exit(main())
