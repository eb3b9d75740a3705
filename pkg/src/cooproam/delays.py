"""Latency components and their sampling distributions (all in ms).

Defaults come from the measured means: per-run L2 figures for the
three scan paths, 867 ms for a DHCP exchange, 11.4 ms of post-handoff L3
work split between signaling and polling, and authentication phases for
the three 802.1x methods.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

DEFAULT_CV = 0.25

# Per-run L2 handoff times (ms), ten runs each plus the mean.
MEASURED_FULL_SCAN = (457.8, 236.8, 434.8, 317.0, 566.7, 321.6, 241.0, 364.0, 216.7, 273.9)
MEASURED_SELECTIVE = (140.3, 101.1, 141.7, 141.9, 141.3, 139.7, 143.4, 94.7, 142.9, 101.5)
MEASURED_CACHE = (2.7, 2.4, 4.2, 3.7, 4.4, 2.6, 2.6, 2.3, 2.7, 2.9)

# Standard-handoff totals measured in 802.11i networks, per method.
AUTH_TOTALS = {"eap-tls-1024": 1580.0, "eap-tls-2048": 1669.0, "peap": 1531.0}
FULL_SCAN_MEAN = 343.0
DHCP_MEAN = 867.0


@dataclass
class Dist:
    """One latency distribution.

    kind is ``truncnorm`` (normal clipped at zero), ``lognormal`` (mean
    preserving), ``fixed`` or ``replay`` (cycle through ``samples``).
    """

    mean: float
    cv: float = DEFAULT_CV
    kind: str = "truncnorm"
    samples: Sequence[float] = ()
    _cycle: Optional[object] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("truncnorm", "lognormal", "fixed", "replay"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.mean < 0 or self.cv < 0:
            raise ValueError("mean and cv must be non-negative")
        if self.kind == "replay":
            if not self.samples:
                raise ValueError("replay distribution needs samples")
            self.samples = tuple(float(s) for s in self.samples)
            self.mean = sum(self.samples) / len(self.samples)

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "replay":
            if self._cycle is None:
                self._cycle = itertools.cycle(self.samples)
            return next(self._cycle)
        if self.kind == "fixed" or self.mean == 0 or self.cv == 0:
            return float(self.mean)
        if self.kind == "lognormal":
            s2 = math.log1p(self.cv ** 2)
            return float(rng.lognormal(math.log(self.mean) - s2 / 2, math.sqrt(s2)))
        sd = self.mean * self.cv
        while True:
            x = rng.normal(self.mean, sd)
            if x >= 0:
                return float(x)

    def reset(self) -> None:
        self._cycle = None


def _auth_phases(total: float, split: float, cv: float) -> tuple:
    """Certificate and key exchange phases for a method's measured total."""
    auth = total - FULL_SCAN_MEAN - DHCP_MEAN
    return Dist(auth * split, cv), Dist(auth * (1 - split), cv)


@dataclass
class DelayModel:
    full_scan: Dist = field(default_factory=lambda: Dist(FULL_SCAN_MEAN))
    selective_scan: Dist = field(default_factory=lambda: Dist(128.9))
    open_auth_assoc: Dist = field(default_factory=lambda: Dist(3.0))
    dhcp_exchange: Dist = field(default_factory=lambda: Dist(DHCP_MEAN, kind="lognormal"))
    l3_signaling: Dist = field(default_factory=lambda: Dist(11.4 * 0.6))
    l3_polling: Dist = field(default_factory=lambda: Dist(11.4 * 0.4))
    bridging: float = 0.0
    first_packet_delay: float = 2.0
    assoc_failure: float = 10.0
    net_latency: float = 1.0
    adhoc_latency: float = 0.5
    auth_split: float = 0.8
    auth: dict = field(default_factory=dict)  # method -> (cert Dist, key Dist)

    def __post_init__(self):
        for method, total in AUTH_TOTALS.items():
            self.auth.setdefault(method, _auth_phases(total, self.auth_split, DEFAULT_CV))

    def set_auth_total(self, method: str, total: float, cv: float = DEFAULT_CV) -> None:
        self.auth[method] = _auth_phases(total, self.auth_split, cv)

    def set_auth_mean(self, method: str, mean: float, cv: float = DEFAULT_CV) -> None:
        self.auth[method] = (Dist(mean * self.auth_split, cv), Dist(mean * (1 - self.auth_split), cv))

    def auth_mean(self, method: str) -> float:
        cert, key = self.auth[method]
        return cert.mean + key.mean

    def sample_auth(self, method: str, rng: np.random.Generator) -> tuple:
        """Returns (certificate phase, key phase) durations."""
        if method not in self.auth:
            raise KeyError(f"unknown authentication method {method!r}")
        cert, key = self.auth[method]
        return cert.sample(rng), key.sample(rng)

    def components(self) -> dict:
        return {
            "full_scan": self.full_scan,
            "selective_scan": self.selective_scan,
            "open_auth_assoc": self.open_auth_assoc,
            "dhcp_exchange": self.dhcp_exchange,
            "l3_signaling": self.l3_signaling,
            "l3_polling": self.l3_polling,
        }


def measured_replay() -> DelayModel:
    """Delay model replaying the per-run L2 measurements verbatim."""
    return DelayModel(
        full_scan=Dist(0, kind="replay", samples=MEASURED_FULL_SCAN),
        selective_scan=Dist(0, kind="replay", samples=MEASURED_SELECTIVE),
        open_auth_assoc=Dist(0, kind="replay", samples=MEASURED_CACHE),
    )
