"""Scripted misbehaviour for malicious nodes.

A profile replaces part of a node's honest behaviour. The simulator asks it
how to react to protocol traffic (``on_inforeq``, ``on_amn_discover``,
``on_ip_req``) and calls :func:`act` on a timer at ``rate`` events per
simulated second. Everything a profile emits goes through the same medium
as honest traffic.
"""

from __future__ import annotations

import enum
import ipaddress
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .protocol import NodeState
from .wire import (AmnDiscover, AmnResp, CacheEntry, InfoReq, InfoResp, IpReq, IpResp, MacAddress,
                   RelayReq, MAX_ENTRIES, MAX_CHANNEL, MIN_CHANNEL)

# documentation range, never inside a simulated subnet
BOGUS_NET = ipaddress.IPv4Network("192.0.2.0/24")


class Kind(enum.Enum):
    FAKE_AP_LIAR = "fake_ap_liar"
    DOS_REDIRECTOR = "dos_redirector"
    BAD_AMN = "bad_amn"
    RELAY_ABUSER = "relay_abuser"
    SPOOFER = "spoofer"


@dataclass
class MaliciousProfile:
    kind: Kind
    rate: float = 0.0          # act() calls per simulated second
    variant: str = ""          # bad_amn: "outside" (default) or "duplicate"
    open_network: bool = False  # spoofer stays inert unless set
    lies_told: int = 0
    emitted: list = field(default_factory=list)

    @classmethod
    def from_config(cls, kind: str, rate: float = 0.0, variant: str = "", open_network: bool = False):
        return cls(Kind(kind), rate, variant, open_network)

    @property
    def interval(self) -> Optional[float]:
        return 1000.0 / self.rate if self.rate > 0 else None


@dataclass(frozen=True)
class Emission:
    """One message a profile wants sent: multicast when ``dst`` is None."""
    msg: object
    dst: Optional[MacAddress] = None
    ttl: int = 3


def _lie(profile: MaliciousProfile, e: CacheEntry, rng: np.random.Generator) -> CacheEntry:
    if profile.kind is Kind.DOS_REDIRECTOR:
        ch = e.channel % MAX_CHANNEL + 1
        return CacheEntry(e.bssid, ch, e.subnet_id)
    wrong = ipaddress.IPv4Address(int(e.subnet_id) ^ (1 << 12))
    return CacheEntry(e.bssid, e.channel, wrong)


def forged_entries(profile: MaliciousProfile, node: NodeState, rng: np.random.Generator,
                   exclude=()) -> list:
    """Wrong versions of real APs we know; a redirector also invents APs."""
    skip = {e.bssid for e in exclude}
    out = [_lie(profile, e, rng) for e in node.cache.entries() if e.bssid not in skip]
    if profile.kind is Kind.DOS_REDIRECTOR:
        for _ in range(2):
            bssid = MacAddress(bytes([0x02]) + bytes(int(x) for x in rng.integers(0, 256, 5)))
            ch = int(rng.integers(MIN_CHANNEL, MAX_CHANNEL + 1))
            out.append(CacheEntry(bssid, ch, node.subnet))
    return out[:MAX_ENTRIES]


def on_inforeq(profile: MaliciousProfile, node: NodeState, req: InfoReq,
               rng: np.random.Generator) -> list:
    """Liars answer every request at once, ignoring suppression."""
    if profile.kind not in (Kind.FAKE_AP_LIAR, Kind.DOS_REDIRECTOR) or req.sender == node.mac:
        return []
    entries = forged_entries(profile, node, rng, exclude=req.entries)
    if not entries:
        return []
    profile.lies_told += 1
    return [Emission(InfoResp(node.mac, req.sender, tuple(entries)))]


def on_amn_discover(profile: MaliciousProfile, node: NodeState, msg: AmnDiscover) -> list:
    if profile.kind is not Kind.BAD_AMN or msg.sender == node.mac or node.subnet != msg.subnet_id:
        return []
    return [Emission(AmnResp(node.mac, node.ip, node.router_ip, node.current_ap, False), dst=msg.sender)]


def on_ip_req(profile: MaliciousProfile, node: NodeState, req: IpReq,
              taken: Optional[ipaddress.IPv4Address] = None) -> list:
    """Hand out an unusable address: outside the subnet, or one already in use."""
    if profile.kind is not Kind.BAD_AMN:
        return []
    if profile.variant == "duplicate" and taken is not None:
        addr = taken
    else:
        addr = BOGUS_NET.network_address + 1 + profile.lies_told % 200
    profile.lies_told += 1
    return [Emission(IpResp(node.mac, req.rmn_mac, addr, node.router_ip))]


def act(profile: MaliciousProfile, node: NodeState, now: float, rng: np.random.Generator, *,
        targets=(), relay_target: Optional[RelayReq] = None) -> list:
    """Unsolicited misbehaviour for one timer tick.

    ``targets`` are MACs a liar may address forged responses to.
    ``relay_target`` is the RELAY_REQ an abuser or spoofer will (re)send.
    """
    out = []
    if profile.kind in (Kind.FAKE_AP_LIAR, Kind.DOS_REDIRECTOR) and targets:
        victim = targets[int(rng.integers(0, len(targets)))]
        entries = forged_entries(profile, node, rng)
        if entries:
            profile.lies_told += 1
            out.append(Emission(InfoResp(node.mac, victim, tuple(entries))))
    elif profile.kind is Kind.RELAY_ABUSER and relay_target is not None:
        out.append(Emission(relay_target))
    elif profile.kind is Kind.SPOOFER and profile.open_network and relay_target is not None:
        out.append(Emission(relay_target))
    profile.emitted.extend((now, e.msg) for e in out)
    return out
