"""Who hears what: channel-scoped 802.11 frames and TTL-scoped multicast."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

from ..wire import FrameKind, MacAddress, SubnetId, classify_frame

CORE_HOPS = 2  # a wired host sits one router away from every subnet


@dataclass
class Topology:
    """Snapshot of the radio side: AP channels and where each station is."""

    ap_channel: dict = field(default_factory=dict)     # bssid -> channel
    node_ap: dict = field(default_factory=dict)        # station mac -> bssid, None while scanning

    def channel_of(self, mac: MacAddress) -> Optional[int]:
        if mac in self.ap_channel:
            return self.ap_channel[mac]
        ap = self.node_ap.get(mac)
        return None if ap is None else self.ap_channel[ap]


def medium_visibility(frame, topology: Topology) -> set:
    """Receivers of ``frame``: every station on the sender's channel, plus the AP for ToAp frames.

    A ToAp frame is still heard by neighbours on the channel, which is what
    lets a relay node pick up an authenticating station's traffic.
    """
    hdr = frame.header if hasattr(frame, "header") else frame
    sender = hdr.source
    ch = topology.channel_of(sender)
    if ch is None:
        return set()
    out = {m for m, ap in topology.node_ap.items()
           if m != sender and ap is not None and topology.ap_channel[ap] == ch}
    if classify_frame(hdr) is FrameKind.TO_AP and hdr.addr1 in topology.ap_channel:
        out.add(hdr.addr1)
    return out


def subnet_hops(a: Optional[SubnetId], b: Optional[SubnetId], links: Iterable = ()) -> int:
    """Router hops between two subnets: 1 inside a subnet, plus one per link crossed.

    With no explicit links every pair of subnets is adjacent. ``None`` stands
    for the wired core (correspondent hosts).
    """
    if a is None or b is None:
        return CORE_HOPS
    if a == b:
        return 1
    links = list(links)
    if not links:
        return 2
    adj: dict = {}
    for x, y in links:
        adj.setdefault(x, set()).add(y)
        adj.setdefault(y, set()).add(x)
    seen = {a: 0}
    q = deque([a])
    while q:
        cur = q.popleft()
        for nxt in sorted(adj.get(cur, ())):
            if nxt not in seen:
                seen[nxt] = seen[cur] + 1
                if nxt == b:
                    return 1 + seen[nxt]
                q.append(nxt)
    return 10**6


def multicast_scope(sender_subnet, ttl: int, members: dict, links: Iterable = ()) -> list:
    """Group members (mac -> subnet) within ``ttl`` hops, in insertion order."""
    links = list(links)
    return [m for m, s in members.items() if subnet_hops(sender_subnet, s, links) <= ttl]
