"""Handoff CSV, summary statistics and CR-versus-legacy comparison."""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .protocol import HandoffRecord
from .wire import MacAddress

CSV_COLUMNS = ("node", "from_ap", "to_ap", "l2_ms", "l3_ms", "auth_ms", "overlapped",
               "lost_pkts", "used_relay", "used_cache")
METRICS = ("l2", "l3", "auth", "total", "loss")


class TopologyMismatch(ValueError):
    pass


def record_to_row(rec: HandoffRecord) -> dict:
    return {
        "node": str(rec.node),
        "from_ap": "" if rec.from_ap is None else str(rec.from_ap),
        "to_ap": str(rec.to_ap),
        "l2_ms": repr(float(rec.l2_time)),
        "l3_ms": repr(float(rec.l3_time)),
        "auth_ms": repr(float(rec.auth_time)),
        "overlapped": str(int(rec.overlapped)),
        "lost_pkts": str(rec.packets_lost),
        "used_relay": str(int(rec.used_relay)),
        "used_cache": str(int(rec.used_cache)),
    }


def row_to_record(row: dict) -> HandoffRecord:
    rec = HandoffRecord(
        MacAddress.parse(row["node"]),
        MacAddress.parse(row["from_ap"]) if row["from_ap"] else None,
        MacAddress.parse(row["to_ap"]),
        l2_time=float(row["l2_ms"]), l3_time=float(row["l3_ms"]), auth_time=float(row["auth_ms"]),
        packets_lost=int(row["lost_pkts"]), used_relay=row["used_relay"] == "1",
        used_cache=row["used_cache"] == "1",
    )
    if int(row["overlapped"]) != int(rec.overlapped):
        raise ValueError(f"overlapped={row['overlapped']} inconsistent with used_relay/auth_ms")
    return rec


def csv_text(records: Iterable[HandoffRecord]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for rec in records:
        w.writerow(record_to_row(rec))
    return buf.getvalue()


def read_csv(text: str) -> list:
    rows = list(csv.DictReader(io.StringIO(text)))
    if rows and tuple(rows[0].keys()) != CSV_COLUMNS:
        raise ValueError(f"unexpected columns {tuple(rows[0].keys())}")
    return [row_to_record(r) for r in rows]


def _metric(rec: HandoffRecord, name: str) -> float:
    return {"l2": rec.l2_time, "l3": rec.l3_time, "auth": rec.auth_time,
            "total": rec.total, "loss": float(rec.packets_lost)}[name]


@dataclass
class Stats:
    n: int
    mean: dict
    median: dict

    @classmethod
    def of(cls, records: list) -> "Stats":
        if not records:
            return cls(0, {m: float("nan") for m in METRICS}, {m: float("nan") for m in METRICS})
        mean = {m: statistics.fmean(_metric(r, m) for r in records) for m in METRICS}
        median = {m: statistics.median(_metric(r, m) for r in records) for m in METRICS}
        return cls(len(records), mean, median)


@dataclass
class SummaryReport:
    scenario: str
    mode: str
    topology: str
    overall: Stats
    per_node: dict = field(default_factory=dict)
    per_mechanism: dict = field(default_factory=dict)
    streams: list = field(default_factory=list)  # (src, dst, sent, received, lost, in_flight)
    ipreq_mean: Optional[float] = None
    marked: dict = field(default_factory=dict)
    failed: int = 0


def mechanism(rec: HandoffRecord, auth_method: str) -> str:
    return auth_method if rec.auth_time > 0 else "open"


def summarize(reports) -> SummaryReport:
    """Aggregate one or more RunReports (repetitions of the same scenario and mode)."""
    reports = list(reports)
    first = reports[0]
    recs, by_node, by_mech = [], {}, {}
    streams: dict = {}
    rtts = []
    marked: dict = {}
    failed = 0
    for rep in reports:
        if rep.topology != first.topology or rep.mode != first.mode:
            raise TopologyMismatch("repetitions disagree on topology or mode")
        for name, rec in rep.records:
            recs.append(rec)
            by_node.setdefault(name, []).append(rec)
            by_mech.setdefault(mechanism(rec, rep.nodes[name]["auth"]), []).append(rec)
        for s in rep.streams:
            key = (s.src, s.dst)
            acc = streams.setdefault(key, [0, 0, 0, 0])
            for i, v in enumerate((s.sent, s.received, s.lost, s.in_flight)):
                acc[i] += v
        rtts.extend(rep.ipreq_rtts)
        for suspect, count in rep.marks.items():
            marked[str(suspect)] = max(marked.get(str(suspect), 0), count)
        failed += len(rep.failed_handoffs)
    return SummaryReport(
        first.scenario, first.mode, first.topology, Stats.of(recs),
        {k: Stats.of(v) for k, v in by_node.items()},
        {k: Stats.of(v) for k, v in sorted(by_mech.items())},
        [(src, dst, *acc) for (src, dst), acc in streams.items()],
        statistics.fmean(rtts) if rtts else None, marked, failed,
    )


def _row(label: str, st: Stats) -> str:
    cells = " ".join(f"{st.mean[m]:12.6f} {st.median[m]:12.6f}" for m in METRICS)
    return f"{label:<16} {st.n:5d} {cells}"


def summary_text(s: SummaryReport) -> str:
    head = "group             n   " + " ".join(f"{m + '_mean':>12} {m + '_median':>12}" for m in METRICS)
    lines = [f"scenario {s.scenario}", f"mode {s.mode}", f"topology {s.topology}", "", head,
             _row("all", s.overall)]
    for name, st in s.per_node.items():
        lines.append(_row(f"node:{name}", st))
    for name, st in s.per_mechanism.items():
        lines.append(_row(f"mech:{name}", st))
    lines.append("")
    for src, dst, sent, rx, lost, fl in s.streams:
        lines.append(f"stream {src}->{dst} sent={sent} received={rx} lost={lost} in_flight={fl}")
    if s.ipreq_mean is not None:
        lines.append(f"ip_req-ip_resp mean {s.ipreq_mean:.6f}")
    for suspect, count in s.marked.items():
        lines.append(f"marked {suspect} by {count} nodes")
    lines.append(f"failed_handoffs {s.failed}")
    return "\n".join(lines) + "\n"


@dataclass
class Comparison:
    a: SummaryReport
    b: SummaryReport
    ratio: dict  # metric -> a.mean / b.mean

    def text(self) -> str:
        lines = [f"scenario {self.a.scenario} topology {self.a.topology}",
                 f"{'metric':<8} {self.a.mode:>14} {self.b.mode:>14} {'ratio':>10}"]
        for m in METRICS:
            r = self.ratio[m]
            lines.append(f"{m:<8} {self.a.overall.mean[m]:14.6f} {self.b.overall.mean[m]:14.6f} {r:10.6f}")
        common = [k for k in self.a.per_mechanism if k in self.b.per_mechanism]
        extra = [k for k in self.b.per_mechanism if k not in common]
        for k in common + extra:
            bt = self.b.per_mechanism[k].mean["total"]
            at = self.a.per_mechanism.get(k, self.a.overall).mean["total"]
            lines.append(f"total[{k}] {at:14.6f} {bt:14.6f} {_ratio(at, bt):10.6f}")
        return "\n".join(lines) + "\n"


def _ratio(x: float, y: float) -> float:
    if x == y:
        return 1.0
    return x / y if y else float("inf")


def compare(a: SummaryReport, b: SummaryReport) -> Comparison:
    if a.topology != b.topology:
        raise TopologyMismatch(f"{a.topology} != {b.topology}")
    return Comparison(a, b, {m: _ratio(a.overall.mean[m], b.overall.mean[m]) for m in METRICS})
