"""Per-node cooperative roaming state machine.

Each handler takes the node's state and an incoming message (or timer),
mutates the state and returns whatever the node emits. Scheduling and
delivery belong to the simulator; nothing here reads a clock.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .cache import Cache, LeaseStore, SubnetLease, next_candidates, response_entries, should_respond
from .delays import DelayModel
from .security import SuspicionLedger, Verdict, verify_claim
from .wire import (AmnDiscover, AmnResp, CacheEntry, InfoAlert, InfoReq, InfoResp, IpReq, IpResp,
                   MacAddress, RelayReq, SubnetId, network_of)

INFO = "info"


class NoAssistant(Exception):
    """Every known assisting node for a subnet was tried without success."""


class CacheMiss(LookupError):
    pass


@dataclass
class ProtocolConfig:
    wait_window: float = 50.0
    request_deadline: float = 200.0
    max_ttl: int = 3
    amn_timeout: float = 2000.0
    prepare_threshold: float = -75.0
    harvest_inforeq: bool = False
    assumed_lease: float = 300_000.0
    relay_timeout: float = 10_000.0


@dataclass
class PendingRequest:
    ttl: int
    deadline: float
    message: object
    answered: bool = False


@dataclass
class SuppressionTimer:
    rmn: MacAddress
    fire_at: float
    planned: list


@dataclass(frozen=True)
class AmnInfo:
    amn_mac: MacAddress
    amn_ip: ipaddress.IPv4Address
    router_ip: ipaddress.IPv4Address
    bssid: MacAddress
    can_relay: bool


@dataclass
class IpRequestState:
    amn_mac: MacAddress
    deadline: float
    tried: list = field(default_factory=list)


@dataclass
class HandoffRecord:
    node: MacAddress
    from_ap: Optional[MacAddress]
    to_ap: MacAddress
    start: float = 0.0
    l2_time: float = 0.0
    l3_time: float = 0.0
    auth_time: float = 0.0
    packets_lost: int = 0
    used_relay: bool = False
    used_cache: bool = False
    assoc_time: float = 0.0
    legacy_l3: bool = False
    lease_applied: bool = False

    @property
    def overlapped(self) -> bool:
        return self.used_relay and self.auth_time > 0

    @property
    def total(self) -> float:
        extra = 0.0 if self.used_relay else self.auth_time
        return self.l2_time + self.l3_time + extra


@dataclass
class NodeState:
    mac: MacAddress
    ip: ipaddress.IPv4Address
    current_ap: Optional[MacAddress]
    subnet: Optional[SubnetId]
    router_ip: Optional[ipaddress.IPv4Address] = None
    prefixlen: int = 24
    cr_enabled: bool = True
    can_assist: bool = True
    can_relay: bool = True
    auth_method: str = "eap-tls-1024"
    cache: Cache = field(default_factory=Cache)
    leases: LeaseStore = field(default_factory=LeaseStore)
    ledger: SuspicionLedger = field(default_factory=SuspicionLedger)
    pending_requests: dict = field(default_factory=dict)
    suppression_timers: dict = field(default_factory=dict)
    amn_lists: dict = field(default_factory=dict)
    ip_requests: dict = field(default_factory=dict)
    blacklist: set = field(default_factory=set)
    alerted: set = field(default_factory=set)
    fallback_subnets: set = field(default_factory=set)
    info_exhausted: bool = False

    def ignores(self, mac: MacAddress) -> bool:
        return mac in self.ledger.marked_malicious

    def subnet_of(self, addr: ipaddress.IPv4Address) -> SubnetId:
        return network_of(addr, self.prefixlen)


def needs_info(node: NodeState) -> bool:
    """True when the node knows no AP besides its current one."""
    return node.current_ap is not None and not next_candidates(node.cache, node.current_ap)


# INFOREQ / INFORESP


def request_info(node: NodeState, now: float, cfg: ProtocolConfig = ProtocolConfig()) -> tuple:
    """Emit an INFOREQ carrying the whole cache; returns ``(message, ttl)``."""
    msg = InfoReq(node.mac, tuple(node.cache.entries())[:105])
    node.pending_requests[INFO] = PendingRequest(1, now + cfg.request_deadline, msg)
    node.info_exhausted = False
    return msg, 1


def on_request_deadline(node: NodeState, key, now: float,
                        cfg: ProtocolConfig = ProtocolConfig()) -> Optional[tuple]:
    """Deadline for a pending multicast request: re-emit one hop wider or give up."""
    pending = node.pending_requests.get(key)
    if pending is None or now < pending.deadline:
        return None
    if pending.answered:
        del node.pending_requests[key]
        return None
    if pending.ttl >= cfg.max_ttl:
        del node.pending_requests[key]
        if key == INFO:
            node.info_exhausted = True
        return None
    pending.ttl += 1
    pending.deadline = now + cfg.request_deadline
    return pending.message, pending.ttl


def on_inforeq(node: NodeState, req: InfoReq, now: float, rng: np.random.Generator,
               cfg: ProtocolConfig = ProtocolConfig()) -> Optional[SuppressionTimer]:
    if req.sender == node.mac or node.ignores(req.sender) or not node.cr_enabled:
        return None
    if cfg.harvest_inforeq:
        _merge_checked(node, req.entries, now, req.sender)
    if req.sender in node.suppression_timers:
        return node.suppression_timers[req.sender]
    if not should_respond(node.cache, req.entries):
        return None
    planned = response_entries(node.cache, req.entries)
    timer = SuppressionTimer(req.sender, now + float(rng.uniform(0.0, cfg.wait_window)), planned)
    node.suppression_timers[req.sender] = timer
    return timer


def fire_suppression(node: NodeState, rmn: MacAddress, now: float) -> Optional[InfoResp]:
    timer = node.suppression_timers.get(rmn)
    if timer is None or now < timer.fire_at:
        return None
    del node.suppression_timers[rmn]
    if not timer.planned:
        return None
    return InfoResp(node.mac, rmn, tuple(timer.planned))


def _merge_checked(node: NodeState, entries, now: float, source: MacAddress) -> list:
    """Merge entries that do not contradict our own; return the contradicting ones.

    Only first-hand knowledge counts as evidence. An entry that disagrees
    with something we were merely told replaces it without an accusation.
    """
    bad, good = [], []
    for e in entries:
        rec = node.cache.record(e.bssid)
        firsthand = rec is not None and rec.source is None
        if firsthand and verify_claim(node.cache, e) is Verdict.CONTRADICTS:
            bad.append(e)
        else:
            good.append(e)
    node.cache.merge(good, now, source)
    return bad


def on_inforesp_observed(node: NodeState, resp: InfoResp, now: float) -> list:
    """Suppress, collect and cross-check an INFORESP heard on the group.

    Returns the INFOALERTs to multicast (at most one per suspect).
    """
    if resp.sender == node.mac or node.ignores(resp.sender):
        return []
    if resp.target == node.mac and INFO in node.pending_requests:
        node.pending_requests[INFO].answered = True
    timer = node.suppression_timers.get(resp.target)
    if timer is not None:
        covered = set(resp.entries)
        timer.planned = [e for e in timer.planned if e not in covered]
        if not timer.planned:
            del node.suppression_timers[resp.target]
    bad = _merge_checked(node, resp.entries, now, resp.sender)
    if bad and resp.sender not in node.alerted:
        node.alerted.add(resp.sender)
        return [InfoAlert(node.mac, resp.sender)]
    return []


def on_infoalert(node: NodeState, alert: InfoAlert, now: float) -> bool:
    """Count an alert; on marking, forget everything the suspect told us."""
    if alert.sender == alert.suspect_mac or node.ignores(alert.sender):
        return False
    marked = node.ledger.record_alert(alert.suspect_mac, alert.sender, now)
    if marked:
        forget(node, alert.suspect_mac)
    return marked


def forget(node: NodeState, suspect: MacAddress) -> None:
    node.blacklist.add(suspect)
    node.cache.purge_source(suspect)
    node.suppression_timers.pop(suspect, None)
    for subnet, amns in node.amn_lists.items():
        node.amn_lists[subnet] = [a for a in amns if a.amn_mac != suspect]


# A-MN discovery and proxy address acquisition


def discover_amns(node: NodeState, subnet: SubnetId, now: float,
                  cfg: ProtocolConfig = ProtocolConfig()) -> tuple:
    msg = AmnDiscover(node.mac, subnet)
    node.amn_lists.setdefault(subnet, [])
    node.pending_requests[("amn", subnet)] = PendingRequest(1, now + cfg.request_deadline, msg)
    return msg, 1


def on_amn_discover(node: NodeState, msg: AmnDiscover) -> Optional[AmnResp]:
    if (msg.sender == node.mac or not node.cr_enabled or not node.can_assist
            or node.ignores(msg.sender) or node.subnet != msg.subnet_id
            or node.current_ap is None or node.router_ip is None):
        return None
    return AmnResp(node.mac, node.ip, node.router_ip, node.current_ap, node.can_relay)


def on_amn_resp(node: NodeState, resp: AmnResp) -> Optional[SubnetId]:
    if node.ignores(resp.amn_mac) or resp.amn_mac in node.blacklist:
        return None
    subnet = node.subnet_of(resp.amn_ip)
    info = AmnInfo(resp.amn_mac, resp.amn_ip, resp.router_ip, resp.bssid, resp.can_relay)
    amns = node.amn_lists.setdefault(subnet, [])
    if all(a.amn_mac != info.amn_mac for a in amns):
        amns.append(info)
    pending = node.pending_requests.get(("amn", subnet))
    if pending is not None:
        pending.answered = True
    return subnet


def candidate_subnets(node: NodeState) -> list:
    seen = []
    if node.current_ap is None:
        return seen
    for e in next_candidates(node.cache, node.current_ap):
        if e.subnet_id != node.subnet and e.subnet_id not in seen:
            seen.append(e.subnet_id)
    return seen


def _next_amn(node: NodeState, subnet: SubnetId, tried) -> Optional[AmnInfo]:
    for a in node.amn_lists.get(subnet, []):
        if a.amn_mac not in tried and a.amn_mac not in node.blacklist and not node.ignores(a.amn_mac):
            return a
    return None


def prepare_l3(node: NodeState, now: float, cfg: ProtocolConfig = ProtocolConfig()) -> list:
    """One IP_REQ per candidate subnet lacking a lease; returns ``[(amn_mac, IpReq)]``."""
    out = []
    for subnet in candidate_subnets(node):
        if node.leases.get(subnet, now) is not None or subnet in node.ip_requests:
            continue
        if subnet in node.fallback_subnets:
            continue
        amn = _next_amn(node, subnet, ())
        if amn is None:
            continue
        node.ip_requests[subnet] = IpRequestState(amn.amn_mac, now + cfg.amn_timeout, [amn.amn_mac])
        out.append((amn.amn_mac, IpReq(node.mac)))
    return out


def on_ip_timeout(node: NodeState, subnet: SubnetId, now: float,
                  cfg: ProtocolConfig = ProtocolConfig()) -> Optional[tuple]:
    """Fail over to the next assisting node; raises NoAssistant when none is left."""
    state = node.ip_requests.get(subnet)
    if state is None or now < state.deadline:
        return None
    amn = _next_amn(node, subnet, state.tried)
    if amn is None:
        del node.ip_requests[subnet]
        raise NoAssistant(str(subnet))
    state.amn_mac = amn.amn_mac
    state.tried.append(amn.amn_mac)
    state.deadline = now + cfg.amn_timeout
    return amn.amn_mac, IpReq(node.mac)


def on_ip_resp(node: NodeState, resp: IpResp, now: float,
               cfg: ProtocolConfig = ProtocolConfig()) -> Optional[InfoAlert]:
    """Store a lease addressed to us; alert on an address outside the subnet asked for."""
    if resp.rmn_mac != node.mac or node.ignores(resp.sender):
        return None
    subnet = next((s for s, st in node.ip_requests.items() if st.amn_mac == resp.sender), None)
    if subnet is None:
        return None
    del node.ip_requests[subnet]
    lease = SubnetLease(subnet, resp.router_ip, resp.new_ip, now + cfg.assumed_lease, now, resp.sender)
    if not lease.inside(node.prefixlen):
        return reject_lease(node, lease)
    node.leases.put(lease)
    return None


def reject_lease(node: NodeState, lease: SubnetLease) -> Optional[InfoAlert]:
    """Drop a bad lease, stop using its A-MN and fall back to plain DHCP there."""
    node.leases.drop(lease.subnet_id)
    node.fallback_subnets.add(lease.subnet_id)
    if lease.amn_mac is None:
        return None
    node.blacklist.add(lease.amn_mac)
    if lease.amn_mac in node.alerted:
        return None
    node.alerted.add(lease.amn_mac)
    return InfoAlert(node.mac, lease.amn_mac)


# relay selection


def select_rn(node: NodeState, target: CacheEntry) -> Optional[AmnInfo]:
    for a in node.amn_lists.get(target.subnet_id, []):
        if a.can_relay and a.bssid == target.bssid and a.amn_mac not in node.blacklist \
                and not node.ignores(a.amn_mac):
            return a
    return None


def relay_request(node: NodeState, rn: AmnInfo, cn_ip: ipaddress.IPv4Address) -> RelayReq:
    return RelayReq(node.mac, node.ip, cn_ip, rn.amn_mac, rn.amn_ip)


# handoff


@dataclass(frozen=True)
class TargetAP:
    """Ground truth about the AP being joined, as the radio will find it."""
    bssid: MacAddress
    channel: int
    subnet_id: SubnetId
    router_ip: ipaddress.IPv4Address
    requires_8021x: bool = False

    @property
    def entry(self) -> CacheEntry:
        return CacheEntry(self.bssid, self.channel, self.subnet_id)


@dataclass
class HandoffOutcome:
    record: HandoffRecord
    lease: Optional[SubnetLease] = None
    bad_entry_source: Optional[MacAddress] = None
    alert: Optional[InfoAlert] = None
    cert_ms: float = 0.0
    key_ms: float = 0.0


def perform_handoff(node: NodeState, target: TargetAP, now: float, delays: DelayModel,
                    rng: np.random.Generator, *, relay_arranged: bool = False,
                    lease_ok: Optional[Callable[[SubnetLease], bool]] = None,
                    signal: float = -50.0) -> HandoffOutcome:
    """Time one L2 (+L3) handoff and move the node onto ``target``.

    Cache hits skip scanning; a held lease for a new subnet leaves only
    signaling and polling work at L3. With a relay arranged, 802.1x runs
    alongside relayed traffic instead of adding to the interruption.
    """
    rec = HandoffRecord(node.mac, node.current_ap, target.bssid, start=now)
    out = HandoffOutcome(rec)
    cached = node.cache.get(target.bssid) if node.cr_enabled else None

    if not node.cr_enabled:
        rec.l2_time = delays.full_scan.sample(rng)
    elif cached is None:
        scan = delays.selective_scan if node.info_exhausted else delays.full_scan
        rec.l2_time = scan.sample(rng)
    elif cached.channel != target.channel:
        rec.l2_time = delays.assoc_failure + delays.full_scan.sample(rng)
        out.bad_entry_source = node.cache.record(target.bssid).source
    else:
        rec.l2_time = delays.open_auth_assoc.sample(rng)
        rec.used_cache = True
    rec.assoc_time = rec.l2_time

    if target.requires_8021x:
        out.cert_ms, out.key_ms = delays.sample_auth(node.auth_method, rng)
        rec.auth_time = out.cert_ms + out.key_ms
        if relay_arranged and node.cr_enabled:
            rec.used_relay = True
            rec.l2_time += delays.first_packet_delay

    if cached is not None and cached.subnet_id != target.subnet_id and out.bad_entry_source is None:
        out.bad_entry_source = node.cache.record(target.bssid).source

    if target.subnet_id != node.subnet:
        detected = cached is not None and cached.subnet_id == target.subnet_id
        lease = node.leases.get(target.subnet_id, now) if detected else None
        if lease is not None and lease_ok is not None and not lease_ok(lease):
            out.alert = reject_lease(node, lease)
            lease = None
        if lease is not None:
            rec.l3_time = delays.l3_signaling.sample(rng) + delays.l3_polling.sample(rng)
            rec.lease_applied = True
            out.lease = lease
        else:
            rec.l3_time = delays.dhcp_exchange.sample(rng)
            rec.legacy_l3 = True

    node.cache.observe(target.entry, signal, now)
    node.current_ap = target.bssid
    if target.subnet_id != node.subnet:
        node.subnet = target.subnet_id
        node.router_ip = target.router_ip
        node.fallback_subnets.discard(target.subnet_id)
        if out.lease is not None:
            node.ip = out.lease.leased_ip
    return out
