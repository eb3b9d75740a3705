"""Claim verification and the distinct-reporter alert quorum."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

from .cache import Cache
from .wire import CacheEntry, InfoAlert, MacAddress

DEFAULT_THRESHOLD = 5
MIN_THRESHOLD = 2


class SelfReport(ValueError):
    pass


class Verdict(enum.Enum):
    CONSISTENT = "consistent"
    CONTRADICTS = "contradicts"
    UNKNOWN = "unknown"


def verify_claim(my_cache: Cache, claimed: CacheEntry) -> Verdict:
    mine = my_cache.get(claimed.bssid)
    if mine is None:
        return Verdict.UNKNOWN
    if mine.channel != claimed.channel or mine.subnet_id != claimed.subnet_id:
        return Verdict.CONTRADICTS
    return Verdict.CONSISTENT


@dataclass
class SuspicionLedger:
    """Alerts received, per suspect, counted once per reporter.

    A suspect is marked once ``threshold`` distinct reporters have named it.
    Marks are permanent for the lifetime of the ledger.
    """

    threshold: int = DEFAULT_THRESHOLD
    reporters: dict = field(default_factory=dict)
    marked_malicious: set = field(default_factory=set)
    events: list = field(default_factory=list)

    def __post_init__(self):
        if self.threshold < MIN_THRESHOLD:
            raise ValueError(f"alert threshold must be at least {MIN_THRESHOLD}, got {self.threshold}")

    def record_alert(self, suspect: MacAddress, reporter: MacAddress, now: float = 0.0) -> bool:
        """Count one alert; returns True if this alert caused the marking."""
        if suspect == reporter:
            raise SelfReport(f"{reporter} cannot report itself")
        seen = self.reporters.setdefault(suspect, set())
        seen.add(reporter)
        self.events.append((now, "alert", reporter, suspect))
        if suspect not in self.marked_malicious and len(seen) >= self.threshold:
            self.marked_malicious.add(suspect)
            self.events.append((now, "marked", reporter, suspect))
            return True
        return False

    def is_malicious(self, mac: Optional[MacAddress]) -> bool:
        return mac in self.marked_malicious

    def distinct_reporters(self, suspect: MacAddress) -> int:
        return len(self.reporters.get(suspect, ()))


def record_alert(ledger: SuspicionLedger, suspect: MacAddress, reporter: MacAddress,
                 now: float = 0.0) -> SuspicionLedger:
    ledger.record_alert(suspect, reporter, now)
    return ledger


def on_bad_ip(rmn_mac: MacAddress, amn_mac: MacAddress) -> InfoAlert:
    return InfoAlert(sender=rmn_mac, suspect_mac=amn_mac)
