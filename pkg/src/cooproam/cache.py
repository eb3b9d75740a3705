"""Per-node AP/subnet cache and the lease store for pre-acquired addresses."""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .wire import MAX_ENTRIES, CacheEntry, MacAddress, SubnetId

UNKNOWN_SIGNAL = -100.0


class MissingEntry(KeyError):
    """An AP needed for subnet-change detection is not cached."""


@dataclass
class CachedAP:
    entry: CacheEntry
    signal: float = UNKNOWN_SIGNAL
    updated: float = 0.0
    source: Optional[MacAddress] = None  # who told us; None means own observation


@dataclass(frozen=True)
class Conflict:
    """Incoming entry disagreed with a cached one on channel or subnet."""
    old: CacheEntry
    new: CacheEntry
    source: Optional[MacAddress]


def _bssids(entries: Iterable[CacheEntry]) -> set:
    return {e.bssid for e in entries}


class Cache:
    def __init__(self, max_age: Optional[float] = None):
        self._aps: dict = {}
        self.max_age = max_age

    def __len__(self) -> int:
        return len(self._aps)

    def __contains__(self, bssid) -> bool:
        return bssid in self._aps

    def __eq__(self, other) -> bool:
        if not isinstance(other, Cache):
            return NotImplemented
        return self.entries() == other.entries()

    def __repr__(self) -> str:
        return f"Cache({[str(e.bssid) for e in self.entries()]})"

    def copy(self) -> "Cache":
        c = Cache(self.max_age)
        c._aps = {k: replace(v) for k, v in self._aps.items()}
        return c

    def get(self, bssid: MacAddress) -> Optional[CacheEntry]:
        ap = self._aps.get(bssid)
        return ap.entry if ap else None

    def record(self, bssid: MacAddress) -> Optional[CachedAP]:
        return self._aps.get(bssid)

    def signal(self, bssid: MacAddress) -> float:
        return self._aps[bssid].signal

    def entries(self) -> list:
        """Entries strongest first, ties by BSSID ascending."""
        ranked = sorted(self._aps.values(), key=lambda a: (-a.signal, a.entry.bssid))
        return [a.entry for a in ranked]

    def observe(self, entry: CacheEntry, signal: float, now: float) -> None:
        """Record an AP seen first-hand (scan or association)."""
        self._aps[entry.bssid] = CachedAP(entry, signal, now, None)

    def set_signal(self, bssid: MacAddress, signal: float, now: float) -> None:
        ap = self._aps.get(bssid)
        if ap is not None:
            ap.signal = signal
            ap.updated = now

    def remove(self, bssid: MacAddress) -> None:
        self._aps.pop(bssid, None)

    def purge_source(self, source: MacAddress) -> list:
        gone = [b for b, ap in self._aps.items() if ap.source == source]
        for b in gone:
            del self._aps[b]
        return gone

    def expire(self, now: float) -> list:
        if self.max_age is None:
            return []
        gone = [b for b, ap in self._aps.items() if now - ap.updated > self.max_age]
        for b in gone:
            del self._aps[b]
        return gone

    def merge(self, incoming: Iterable[CacheEntry], now: float,
              source: Optional[MacAddress] = None) -> list:
        """Union by BSSID; the incoming entry wins on conflict.

        Returns the conflicts so the caller can hand them to the security
        layer. Signal annotations survive for entries we already had.
        """
        conflicts = []
        for e in incoming:
            cur = self._aps.get(e.bssid)
            if cur is None:
                self._aps[e.bssid] = CachedAP(e, UNKNOWN_SIGNAL, now, source)
            elif cur.entry != e:
                conflicts.append(Conflict(cur.entry, e, source))
                cur.entry = e
                cur.updated = now
                cur.source = source
        return conflicts

    def subnet_changed(self, old_bssid: MacAddress, new_bssid: MacAddress) -> bool:
        old, new = self.get(old_bssid), self.get(new_bssid)
        if old is None or new is None:
            missing = old_bssid if old is None else new_bssid
            raise MissingEntry(str(missing))
        return subnet_changed(old, new)

    # Snapshot text format: one "bssid channel subnet signal" line per AP.

    def export_text(self) -> str:
        lines = []
        for e in self.entries():
            lines.append(f"{e.bssid} {e.channel} {e.subnet_id} {self._aps[e.bssid].signal:g}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def import_text(cls, text: str, now: float = 0.0, max_age: Optional[float] = None) -> "Cache":
        c = cls(max_age)
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"line {lineno}: expected 'bssid channel subnet signal', got {raw!r}")
            bssid, channel, subnet, signal = parts
            entry = CacheEntry(MacAddress.parse(bssid), int(channel), ipaddress.IPv4Address(subnet))
            c.observe(entry, float(signal), now)
        return c


def should_respond(mine: Cache, theirs: Iterable[CacheEntry]) -> bool:
    """Answer only if we share an AP with the requester and know one it lacks."""
    have = set(mine._aps)
    want = _bssids(theirs)
    return bool(have & want) and bool(have - want)


def response_entries(mine: Cache, theirs: Iterable[CacheEntry]) -> list:
    known = _bssids(theirs)
    return [e for e in mine.entries() if e.bssid not in known][:MAX_ENTRIES]


def merge(mine: Cache, incoming: Iterable[CacheEntry], now: float,
          source: Optional[MacAddress] = None) -> tuple:
    """Functional form of :meth:`Cache.merge`: returns (new cache, conflicts)."""
    out = mine.copy()
    conflicts = out.merge(incoming, now, source)
    return out, conflicts


def subnet_changed(old_ap: CacheEntry, new_ap: CacheEntry) -> bool:
    return old_ap.subnet_id != new_ap.subnet_id


def next_candidates(c: Cache, current_bssid: MacAddress) -> list:
    return [e for e in c.entries() if e.bssid != current_bssid]


@dataclass(frozen=True)
class SubnetLease:
    subnet_id: SubnetId
    router_ip: ipaddress.IPv4Address
    leased_ip: ipaddress.IPv4Address
    expiry: float
    acquired: float = 0.0
    amn_mac: Optional[MacAddress] = None

    def __post_init__(self):
        if self.expiry <= self.acquired:
            raise ValueError("lease must expire after it was acquired")

    def inside(self, prefixlen: int) -> bool:
        net = ipaddress.IPv4Network((int(self.subnet_id), prefixlen), strict=False)
        return self.leased_ip in net and self.leased_ip != net.network_address


@dataclass
class LeaseStore:
    leases: dict = field(default_factory=dict)

    def put(self, lease: SubnetLease) -> None:
        self.leases[lease.subnet_id] = lease

    def get(self, subnet: SubnetId, now: Optional[float] = None) -> Optional[SubnetLease]:
        lease = self.leases.get(subnet)
        if lease is not None and now is not None and lease.expiry <= now:
            return None
        return lease

    def drop(self, subnet: SubnetId) -> None:
        self.leases.pop(subnet, None)

    def expire(self, now: float) -> list:
        gone = [s for s, l in self.leases.items() if l.expiry <= now]
        for s in gone:
            del self.leases[s]
        return gone

    def __len__(self) -> int:
        return len(self.leases)

    def __contains__(self, subnet) -> bool:
        return subnet in self.leases
