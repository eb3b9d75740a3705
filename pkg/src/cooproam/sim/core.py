"""The discrete-event simulation of one scenario run."""

from __future__ import annotations

import bisect
import copy
import logging
import math
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import adversary
from ..cache import Cache, SubnetLease, next_candidates
from ..dhcp import DhcpError, DhcpServer, LeaseUnknown, Pool, amn_acquire, direct_acquire, renew
from ..protocol import (INFO, HandoffRecord, NodeState, NoAssistant, TargetAP, candidate_subnets,
                        discover_amns, fire_suppression, needs_info, on_amn_discover, on_amn_resp,
                        on_infoalert, on_inforeq, on_inforesp_observed, on_ip_resp, on_ip_timeout,
                        on_request_deadline, perform_handoff, prepare_l3, relay_request, request_info,
                        select_rn)
from ..relay import (AuthFailed, AuthPhase, AuthSession, Authenticator, Dropped, Frame, Packet,
                     GATEWAY_MAC, RelayAgent, RefusedCooldown, RelayRefused, auth_progress)
from ..security import SuspicionLedger
from ..wire import (AmnDiscover, AmnResp, CacheEntry, FrameHeader, InfoAlert, InfoReq, InfoResp, IpReq,
                    IpResp, MacAddress, RelayReq, decode, encode)
from .config import ConfigError, ScenarioConfig
from .events import EventQueue
from .medium import Topology, medium_visibility, subnet_hops

log = logging.getLogger("cooproam.sim")

INF = float("inf")
MODES = ("cr", "legacy")


class UnknownStream(KeyError):
    pass


@dataclass
class APRuntime:
    name: str
    bssid: MacAddress
    channel: int
    subnet_id: object
    router_ip: object
    requires_8021x: bool
    bridging: float
    authenticator: Authenticator

    def target(self) -> TargetAP:
        return TargetAP(self.bssid, self.channel, self.subnet_id, self.router_ip, self.requires_8021x)


@dataclass
class Reach:
    """When a station can send and receive after its latest handoff."""
    down_from: float = -INF
    assoc_done: float = -INF
    direct_resume: float = -INF
    relay_from: float = INF

    def associated(self, t: float) -> bool:
        return not (self.down_from <= t < self.assoc_done)

    def direct(self, t: float) -> bool:
        return not (self.down_from <= t < self.direct_resume)

    def relayed(self, t: float) -> bool:
        return t >= self.relay_from and self.associated(t)


@dataclass
class SimNode:
    name: str
    state: NodeState
    ap: APRuntime
    profile: Optional[adversary.MaliciousProfile] = None
    agent: Optional[RelayAgent] = None
    mobile: bool = False
    reach: Reach = field(default_factory=Reach)
    records: list = field(default_factory=list)
    record_windows: list = field(default_factory=list)  # starts, for loss attribution
    failed: list = field(default_factory=list)
    move_times: list = field(default_factory=list)
    resp_ttl: dict = field(default_factory=dict)
    ipreq_sent: dict = field(default_factory=dict)
    discovered: set = field(default_factory=set)
    relay_rn: Optional[MacAddress] = None
    last_relay_req: Optional[RelayReq] = None

    @property
    def mac(self) -> MacAddress:
        return self.state.mac

    @property
    def honest(self) -> bool:
        return self.profile is None


@dataclass
class CorrespondentNode:
    name: str
    ip: object
    cooperative: bool
    seen: set = field(default_factory=set)  # (stream, seq) received


@dataclass
class Stream:
    index: int
    src: str
    dst: str
    interval: float
    size: int
    start: float
    stop: float
    downlink: bool
    sent: int = 0
    received: int = 0
    lost: int = 0
    mismatched: int = 0

    @property
    def in_flight(self) -> int:
        return self.sent - self.received - self.lost


@dataclass
class _PacketFate:
    stream: Stream
    packet: Packet
    arrival: float
    copies: int = 0
    done: bool = False


@dataclass
class RunReport:
    scenario: str
    seed: int
    mode: str
    topology: str
    records: list           # (node name, HandoffRecord) in start order
    streams: list
    nodes: dict             # name -> {"mac", "auth", "role"}
    trace: list
    security_log: list
    relay_audit: list
    dhcp_dump: str
    ipreq_rtts: list
    proxy_exchanges: list
    failed_handoffs: list
    scripted_moves: dict    # node name -> count
    forwarded_during_eapol: int
    stray_relays: int       # relayed frames at or past registration expiry
    marks: dict             # suspect mac -> number of nodes that marked it


class Simulator:
    def __init__(self, scenario: ScenarioConfig, seed: int = 0, mode: str = "cr"):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.cfg = copy.deepcopy(scenario)
        self.seed = seed
        self.mode = mode
        self.delays = self.cfg.delays
        self.pcfg = self.cfg.protocol
        ss = np.random.SeedSequence(seed)
        self.rng_delay, self.rng_wait, self.rng_adv, self.rng_stream = (np.random.default_rng(s) for s in ss.spawn(4))
        self.q = EventQueue()
        self.trace: list = []
        self.security_log: list = []
        self.ipreq_rtts: list = []
        self.proxy_exchanges: list = []
        self.end = self.cfg.end_time()
        self.sessions: dict = {}  # (cn name, mn mac) -> list of ("direct"|"relay", mac)
        self._build()

    # setup

    def _build(self) -> None:
        cfg = self.cfg
        routers = {s.subnet_id: s.router_ip for s in cfg.subnets}
        self.server = DhcpServer([Pool(s.subnet_id, cfg.prefixlen, s.router_ip, s.pool_first, s.pool_last, s.lease_s)
                                  for s in cfg.subnets])
        self.aps: dict = {}
        for a in cfg.aps:
            bridging = a.bridging if a.bridging is not None else self.delays.bridging
            self.aps[a.name] = APRuntime(a.name, a.bssid, a.channel, a.subnet_id, routers[a.subnet_id],
                                         a.requires_8021x, bridging, Authenticator(a.bssid, a.requires_8021x))
        self.ap_by_bssid = {a.bssid: a for a in self.aps.values()}
        mobile = {m.node for m in cfg.moves}
        self.nodes: dict = {}
        for n in cfg.nodes:
            ap = self.aps[cfg.ap(n.ap).name]
            lease = direct_acquire(self.server, n.mac, ap.subnet_id, 0.0)
            st = NodeState(n.mac, lease.leased_ip, ap.bssid, ap.subnet_id, ap.router_ip, cfg.prefixlen,
                           cr_enabled=n.cr and self.mode == "cr", can_assist=n.assist, can_relay=n.relay,
                           auth_method=n.auth, cache=Cache(), ledger=SuspicionLedger(cfg.threshold))
            st.leases.put(lease)
            st.cache.observe(CacheEntry(ap.bssid, ap.channel, ap.subnet_id), cfg.strong, 0.0)
            profile = None
            if n.malicious is not None:
                profile = adversary.MaliciousProfile.from_config(n.malicious.kind, n.malicious.rate,
                                                                 n.malicious.variant, cfg.spoofing)
            node = SimNode(n.name, st, ap, profile, mobile=n.name in mobile or str(n.mac) in mobile)
            if st.cr_enabled and n.relay:
                node.agent = RelayAgent(n.mac, st.ip, cfg.relay_timeout, cfg.relay_cooldown)
            if ap.requires_8021x:
                ap.authenticator.sessions[n.mac] = AuthSession(n.mac, n.auth, 0.0, 0.0, 0.0,
                                                               phase=AuthPhase.AUTHENTICATED)
            self.nodes[n.name] = node
        self.by_mac = {n.mac: n for n in self.nodes.values()}
        for seed in cfg.caches:
            node = self._node(seed.node)
            if seed.channel is not None:
                entry = CacheEntry(MacAddress.parse(seed.ap), seed.channel, seed.subnet_id)
            else:
                a = self.aps[cfg.ap(seed.ap).name]
                entry = CacheEntry(a.bssid, a.channel, a.subnet_id)
            node.state.cache.observe(entry, seed.signal, 0.0)
        self.cns = {c.name: CorrespondentNode(c.name, c.ip, c.cooperative) for c in cfg.cns}
        self.streams = []
        for i, s in enumerate(cfg.streams):
            if s.src in self.cns and s.dst not in self.cns:
                downlink = True
                self.sessions[(s.src, self._node(s.dst).mac)] = [("direct", self._node(s.dst).mac)]
            elif s.dst in self.cns and s.src not in self.cns:
                downlink = False
            else:
                raise ConfigError(f"stream {s.src}->{s.dst} must run between a CN and a node")
            stop = s.stop if s.stop is not None else self.end
            self.streams.append(Stream(i, s.src, s.dst, s.interval, s.size, s.start, stop, downlink))
        self.moves = sorted(cfg.moves, key=lambda m: m.t)
        for m in self.moves:
            self._node(m.node).move_times.append(m.t)
        self.signal_points: dict = {}
        for p in sorted(cfg.signals, key=lambda p: p.t):
            key = (self._node(p.node).name, self.aps[cfg.ap(p.ap).name].bssid)
            self.signal_points.setdefault(key, []).append((p.t, p.dbm))

    def _node(self, key: str) -> SimNode:
        n = self.cfg.node(key)
        return self.nodes[n.name]

    # logging

    def note(self, who: str, event: str, detail: str = "") -> None:
        line = f"{self.q.now:.3f} {who} {event}" + (f" {detail}" if detail else "")
        self.trace.append(line)
        log.debug(line)

    # medium

    def topology(self) -> Topology:
        t = self.q.now
        return Topology({a.bssid: a.channel for a in self.aps.values()},
                        {n.mac: (n.ap.bssid if n.reach.associated(t) else None) for n in self.nodes.values()})

    def _hops(self, a, b) -> int:
        return subnet_hops(a, b, self.cfg.links)

    def multicast(self, sender, msg, ttl: int) -> None:
        """Send ``msg`` to every group member within ``ttl`` subnet hops."""
        now = self.q.now
        data = encode(msg)
        if isinstance(sender, SimNode):
            if not sender.reach.direct(now):
                self.note(sender.name, "drop-tx", type(msg).__name__)
                return
            src_subnet, name, bssid = sender.state.subnet, sender.name, sender.ap.bssid
        else:
            src_subnet, name, bssid = None, sender.name, None
        self.note(name, "tx", f"{type(msg).__name__} ttl={ttl} bytes={len(data)}")
        for r in self.nodes.values():
            if r is sender or not r.state.cr_enabled:
                continue
            hops = self._hops(src_subnet, r.state.subnet)
            if hops <= ttl:
                self.q.schedule(now + self.delays.net_latency * hops, self._deliver, r, data, ttl, bssid)
        if isinstance(msg, RelayReq):
            for cn in self.cns.values():
                if cn is not sender and cn.cooperative and self._hops(src_subnet, None) <= ttl:
                    self.q.schedule(now + self.delays.net_latency * 2, self._cn_relay_req, cn, msg)

    def unicast(self, sender: SimNode, dst: MacAddress, msg, delay: Optional[float] = None) -> None:
        now = self.q.now
        r = self.by_mac.get(dst)
        if r is None or not sender.reach.direct(now):
            return
        data = encode(msg)
        if delay is None:
            delay = self.delays.net_latency * self._hops(sender.state.subnet, r.state.subnet)
        self.q.schedule(now + delay, self._deliver, r, data, 1, sender.ap.bssid)

    def _deliver(self, r: SimNode, data: bytes, ttl: int, sender_bssid) -> None:
        if not r.reach.direct(self.q.now):
            return
        msg = decode(data)
        handler = {
            InfoReq: self._rx_inforeq, InfoResp: self._rx_inforesp, InfoAlert: self._rx_alert,
            AmnDiscover: self._rx_amn_discover, AmnResp: self._rx_amn_resp, IpReq: self._rx_ip_req,
            IpResp: self._rx_ip_resp, RelayReq: self._rx_relay_req,
        }[type(msg)]
        handler(r, msg, ttl, sender_bssid)

    def _emit(self, node: SimNode, emissions) -> None:
        for e in emissions:
            if e.dst is None:
                self.multicast(node, e.msg, e.ttl if e.ttl else self.pcfg.max_ttl)
            else:
                self.unicast(node, e.dst, e.msg, delay=0.0 if node.profile else None)

    # cache information exchange

    def _rx_inforeq(self, r: SimNode, req: InfoReq, ttl, _b) -> None:
        if r.profile is not None:
            self._emit(r, [adversary.Emission(x.msg, x.dst, self.pcfg.max_ttl)
                           for x in adversary.on_inforeq(r.profile, r.state, req, self.rng_adv)])
            return
        existed = req.sender in r.state.suppression_timers
        timer = on_inforeq(r.state, req, self.q.now, self.rng_wait, self.pcfg)
        if timer is not None and not existed:
            r.resp_ttl[req.sender] = ttl
            self.q.schedule(timer.fire_at, self._fire_suppression, r, req.sender)

    def _fire_suppression(self, r: SimNode, rmn: MacAddress) -> None:
        resp = fire_suppression(r.state, rmn, self.q.now)
        if resp is not None:
            self.multicast(r, resp, r.resp_ttl.get(rmn, self.pcfg.max_ttl))
        else:
            self.note(r.name, "suppressed", str(rmn))

    def _rx_inforesp(self, r: SimNode, resp: InfoResp, _ttl, _b) -> None:
        if r.profile is not None and r.profile.kind in (adversary.Kind.FAKE_AP_LIAR, adversary.Kind.DOS_REDIRECTOR):
            return
        for alert in on_inforesp_observed(r.state, resp, self.q.now):
            self.security_log.append(f"{self.q.now:.3f} {r.name} alert suspect={alert.suspect_mac} reason=contradiction")
            self._raise_alert(r, alert)

    def _raise_alert(self, r: SimNode, alert: InfoAlert) -> None:
        self._count_alert(r, alert)
        self.multicast(r, alert, self.pcfg.max_ttl)

    def _rx_alert(self, r: SimNode, alert: InfoAlert, _ttl, _b) -> None:
        self._count_alert(r, alert)

    def _count_alert(self, r: SimNode, alert: InfoAlert) -> None:
        if on_infoalert(r.state, alert, self.q.now):
            self.security_log.append(f"{self.q.now:.3f} {r.name} marked suspect={alert.suspect_mac} "
                                     f"reporters={r.state.ledger.distinct_reporters(alert.suspect_mac)}")
            if r.relay_rn == alert.suspect_mac:
                r.relay_rn = None

    # assisting nodes and addresses

    def _rx_amn_discover(self, r: SimNode, msg: AmnDiscover, _ttl, _b) -> None:
        if r.profile is not None:
            self._emit(r, adversary.on_amn_discover(r.profile, r.state, msg))
            return
        resp = on_amn_discover(r.state, msg)
        if resp is not None:
            self.unicast(r, msg.sender, resp)

    def _rx_amn_resp(self, r: SimNode, resp: AmnResp, _ttl, _b) -> None:
        subnet = on_amn_resp(r.state, resp)
        if subnet is not None:
            self.note(r.name, "amn", f"{resp.amn_mac} subnet={subnet}")
            if self._weak(r):
                self._prepare(r)

    def _rx_ip_req(self, r: SimNode, req: IpReq, _ttl, _b) -> None:
        if r.profile is not None:
            taken = self._taken_address(r)
            self._emit(r, [adversary.Emission(x.msg, None, self.pcfg.max_ttl)
                           for x in adversary.on_ip_req(r.profile, r.state, req, taken)])
            return
        if not r.state.can_assist or r.state.ignores(req.rmn_mac):
            return
        d = self.delays.dhcp_exchange.sample(self.rng_delay)
        self.note(r.name, "proxy-dhcp-start", f"for={req.rmn_mac} subnet={r.state.subnet} duration={d:.3f}")
        self.q.schedule(self.q.now + d, self._proxy_done, r, req.rmn_mac, r.state.subnet, d)

    def _taken_address(self, r: SimNode):
        for n in self.nodes.values():
            if n is not r and n.state.subnet == r.state.subnet and n.honest:
                return n.state.ip
        return None

    def _proxy_done(self, r: SimNode, rmn: MacAddress, subnet, duration: float) -> None:
        if r.state.subnet != subnet or not r.reach.direct(self.q.now):
            self.note(r.name, "proxy-dhcp-abandoned", str(rmn))
            return
        try:
            lease, ex = amn_acquire(self.server, r.mac, subnet, rmn, subnet, self.q.now)
        except DhcpError as exc:
            self.note(r.name, "proxy-dhcp-failed", f"{rmn} {exc}")
            return
        self.proxy_exchanges.append((ex, duration))
        self.multicast(r, IpResp(r.mac, rmn, lease.leased_ip, lease.router_ip), self.pcfg.max_ttl)

    def _rx_ip_resp(self, r: SimNode, resp: IpResp, _ttl, _b) -> None:
        if resp.rmn_mac != r.mac:
            return
        subnet = next((s for s, st in r.state.ip_requests.items() if st.amn_mac == resp.sender), None)
        alert = on_ip_resp(r.state, resp, self.q.now, self.pcfg)
        if subnet is not None and r.state.leases.get(subnet, self.q.now) is not None:
            rtt = self.q.now - r.ipreq_sent.pop(subnet, self.q.now)
            self.ipreq_rtts.append(rtt)
            self.note(r.name, "lease", f"{resp.new_ip} via={resp.sender} ip_req-ip_resp={rtt:.3f}")
        if alert is not None:
            self.security_log.append(f"{self.q.now:.3f} {r.name} alert suspect={alert.suspect_mac} reason=bad-address")
            self._raise_alert(r, alert)

    def _ip_timeout(self, r: SimNode, subnet) -> None:
        try:
            nxt = on_ip_timeout(r.state, subnet, self.q.now, self.pcfg)
        except NoAssistant:
            r.state.fallback_subnets.add(subnet)
            self.note(r.name, "no-assistant", str(subnet))
            return
        if nxt is not None:
            amn, req = nxt
            r.ipreq_sent[subnet] = self.q.now
            self.unicast(r, amn, req)
            self.q.schedule(r.state.ip_requests[subnet].deadline, self._ip_timeout, r, subnet)

    # per-node polling: cache refresh and pre-handoff preparation

    def signal(self, node: SimNode, t: float) -> float:
        pts = self.signal_points.get((node.name, node.ap.bssid))
        if pts:
            times = [p[0] for p in pts]
            i = bisect.bisect_right(times, t)
            if i == 0:
                return pts[0][1]
            if i == len(pts):
                return pts[-1][1]
            (t0, s0), (t1, s1) = pts[i - 1], pts[i]
            return s0 + (s1 - s0) * (t - t0) / (t1 - t0)
        i = bisect.bisect_right(node.move_times, t)
        if i == len(node.move_times):
            return self.cfg.strong
        left = node.move_times[i] - t
        if left >= self.cfg.fade:
            return self.cfg.strong
        frac = 1.0 - left / self.cfg.fade if self.cfg.fade else 1.0
        return self.cfg.strong + (self.cfg.weak - self.cfg.strong) * frac

    def _weak(self, node: SimNode) -> bool:
        return self.signal(node, self.q.now) < self.pcfg.prepare_threshold

    def _poll(self, node: SimNode) -> None:
        now = self.q.now
        nxt = now + self.cfg.poll
        if nxt <= self.end:
            self.q.schedule(nxt, self._poll, node)
        st = node.state
        if not node.reach.direct(now):
            return
        if needs_info(st) and INFO not in st.pending_requests and not st.info_exhausted:
            msg, ttl = request_info(st, now, self.pcfg)
            self.multicast(node, msg, ttl)
            self.q.schedule(st.pending_requests[INFO].deadline, self._deadline, node, INFO)
        if self._weak(node):
            self._prepare(node)

    def _deadline(self, node: SimNode, key) -> None:
        out = on_request_deadline(node.state, key, self.q.now, self.pcfg)
        if out is not None:
            msg, ttl = out
            self.multicast(node, msg, ttl)
            self.q.schedule(node.state.pending_requests[key].deadline, self._deadline, node, key)
        elif key == INFO and node.state.info_exhausted:
            self.note(node.name, "info-exhausted")

    def _prepare(self, node: SimNode) -> None:
        st, now = node.state, self.q.now
        if st.current_ap is None:
            return
        wanted = []
        for e in next_candidates(st.cache, st.current_ap):
            if e.subnet_id not in wanted:
                wanted.append(e.subnet_id)
        for subnet in wanted:
            if st.amn_lists.get(subnet) or subnet in node.discovered or ("amn", subnet) in st.pending_requests:
                continue
            node.discovered.add(subnet)
            msg, ttl = discover_amns(st, subnet, now, self.pcfg)
            self.multicast(node, msg, ttl)
            self.q.schedule(st.pending_requests[("amn", subnet)].deadline, self._deadline, node, ("amn", subnet))
        for amn, req in prepare_l3(st, now, self.pcfg):
            subnet = next(s for s, x in st.ip_requests.items() if x.amn_mac == amn and s not in node.ipreq_sent)
            node.ipreq_sent[subnet] = now
            self.note(node.name, "ip_req", f"to={amn} subnet={subnet}")
            self.unicast(node, amn, req)
            self.q.schedule(st.ip_requests[subnet].deadline, self._ip_timeout, node, subnet)

    # relay

    def _rx_relay_req(self, r: SimNode, req: RelayReq, _ttl, sender_bssid) -> None:
        if req.rn_mac != r.mac or r.agent is None:
            return
        now = self.q.now
        r.agent.rn_ip = r.state.ip
        try:
            reg = r.agent.on_relay_req(req, now, sender_bssid, r.state.ignores(req.mn_mac))
        except RelayRefused as exc:
            self.note(r.name, "relay-refused", f"mn={req.mn_mac} reason={exc.reason}")
            if isinstance(exc, RefusedCooldown) and req.mn_mac not in r.state.alerted:
                r.state.alerted.add(req.mn_mac)
                self.security_log.append(f"{now:.3f} {r.name} alert suspect={req.mn_mac} reason=relay-cooldown")
                self._raise_alert(r, InfoAlert(r.mac, req.mn_mac))
            return
        self.note(r.name, "relay-registered", f"mn={req.mn_mac} expires={reg.expires_at:.3f}")
        self.q.schedule(reg.expires_at, self._relay_expiry, r)

    def _relay_expiry(self, r: SimNode) -> None:
        for reg in r.agent.expire(self.q.now):
            self.note(r.name, "relay-expired", f"mn={reg.mn_mac} authenticated={reg.mn_authenticated}")

    def _relay_idle(self, r: SimNode, mn: MacAddress) -> None:
        reg = r.agent.registrations.get(mn)
        if reg is None or not reg.live(self.q.now):
            return
        idle_for = self.q.now - reg.last_activity
        if idle_for >= self.cfg.relay_idle:
            r.agent.deactivate(mn, self.q.now, "idle")
            self.note(r.name, "relay-idle", f"mn={mn}")
        else:
            self.q.schedule(self.q.now + self.cfg.relay_idle - idle_for, self._relay_idle, r, mn)

    def _cn_relay_req(self, cn: CorrespondentNode, req: RelayReq) -> None:
        if (cn.name, req.mn_mac) not in self.sessions:
            return
        self.q.schedule(self.q.now + self.cfg.redirect_latency, self._redirect, cn.name, req.mn_mac,
                        [("direct", req.mn_mac), ("relay", req.rn_mac)])

    def _redirect(self, cn: str, mn: MacAddress, targets) -> None:
        session_redirect(self, cn, mn, targets)

    # handoff

    def _move(self, node: SimNode, ap_name: str) -> None:
        now = self.q.now
        target_ap = self.aps[ap_name]
        st = node.state
        if target_ap.bssid == st.current_ap:
            self.note(node.name, "move-skipped", f"already on {ap_name}")
            return
        old_ap = node.ap
        relay_arranged = False
        cn = self._session_cn(node)
        if st.cr_enabled and target_ap.requires_8021x and node.reach.direct(now) and cn is not None:
            entry = st.cache.get(target_ap.bssid)
            rn = select_rn(st, entry) if entry is not None else None
            if rn is not None:
                lease = st.leases.get(entry.subnet_id, now)
                req = relay_request(st, rn, self.cns[cn].ip)
                if lease is not None and entry.subnet_id != st.subnet:
                    req = RelayReq(req.mn_mac, lease.leased_ip, req.cn_ip, req.rn_mac, req.rn_ip)
                node.last_relay_req = req
                node.relay_rn = rn.amn_mac
                self.multicast(node, req, self.pcfg.max_ttl)
                relay_arranged = True

        def lease_ok(lease: SubnetLease) -> bool:
            owner = self.server.owner(lease.leased_ip, now)
            return lease.inside(st.prefixlen) and owner in (None, st.mac)

        will_fail = node.profile is not None and node.profile.kind is adversary.Kind.RELAY_ABUSER
        out = perform_handoff(st, target_ap.target(), now, self.delays, self.rng_delay,
                              relay_arranged=relay_arranged, lease_ok=lease_ok, signal=self.cfg.strong)
        rec = out.record
        old_ap.authenticator.sessions.pop(st.mac, None)
        node.ap = target_ap
        if node.agent is not None:
            node.agent.rn_ip = st.ip
        st.info_exhausted = False
        node.discovered.clear()

        r = node.reach
        r.down_from = now
        r.assoc_done = now + rec.assoc_time
        l3_done = now + rec.total
        if rec.used_relay:
            l3_done = now + rec.l2_time + rec.l3_time
            r.relay_from = l3_done
        else:
            r.relay_from = INF
        auth_done = r.assoc_done + rec.auth_time
        if target_ap.requires_8021x:
            target_ap.authenticator.sessions[st.mac] = AuthSession(st.mac, st.auth_method, r.assoc_done,
                                                                   out.cert_ms, out.key_ms, will_fail)
            self.q.schedule(r.assoc_done, self._eapol_start, node, target_ap)
            self.q.schedule(auth_done, self._auth_done, node, target_ap)
        if rec.used_relay:
            r.direct_resume = INF if will_fail else max(auth_done, l3_done) + target_ap.bridging
        else:
            r.direct_resume = INF if will_fail and target_ap.requires_8021x else l3_done + target_ap.bridging
        if out.lease is not None:
            self.q.schedule(l3_done, self._renew, node, out.lease)
        elif rec.legacy_l3:
            self.q.schedule(l3_done, self._legacy_dhcp, node, target_ap.subnet_id)
        if out.alert is not None:
            self.security_log.append(f"{now:.3f} {node.name} alert suspect={out.alert.suspect_mac} reason=duplicate-address")
            self.q.schedule(r.direct_resume if math.isfinite(r.direct_resume) else now, self._late_alert, node, out.alert)
        src = out.bad_entry_source
        if src is not None and src not in st.alerted and not st.ignores(src):
            st.alerted.add(src)
            alert = InfoAlert(st.mac, src)
            self.security_log.append(f"{now:.3f} {node.name} alert suspect={src} reason=wrong-entry")
            if math.isfinite(r.direct_resume):
                self.q.schedule(r.direct_resume, self._late_alert, node, alert)
        node.records.append(rec)
        node.record_windows.append(now)
        if not math.isfinite(r.direct_resume):
            node.failed.append(rec)
        self.note(node.name, "handoff",
                  f"{old_ap.name}->{target_ap.name} l2={rec.l2_time:.3f} l3={rec.l3_time:.3f} "
                  f"auth={rec.auth_time:.3f} relay={int(rec.used_relay)} cache={int(rec.used_cache)}")

    def _late_alert(self, node: SimNode, alert: InfoAlert) -> None:
        self._raise_alert(node, alert)

    def _session_cn(self, node: SimNode) -> Optional[str]:
        for (cn, mn) in self.sessions:
            if mn == node.mac:
                return cn
        return None

    def _eapol_start(self, node: SimNode, ap: APRuntime) -> None:
        eapol = Frame(FrameHeader.to_ap(ap.bssid, node.mac, ap.bssid), Packet(node.state.ip, node.state.ip, b"EAPOL"),
                      eapol=True)
        ap.authenticator.admit(eapol, self.q.now)

    def _auth_done(self, node: SimNode, ap: APRuntime) -> None:
        s = ap.authenticator.sessions.get(node.mac)
        if s is None:
            return
        try:
            auth_progress(s, self.q.now)
        except AuthFailed:
            self.note(node.name, "auth-failed", ap.name)
            return
        self.note(node.name, "authenticated", ap.name)
        rn = self.by_mac.get(node.relay_rn) if node.relay_rn is not None else None
        if node.records and node.records[-1].used_relay and rn is not None and rn.agent is not None:
            rn.agent.mark_authenticated(node.mac)
            cn = self._session_cn(node)
            at = node.reach.direct_resume + self.cfg.redirect_latency
            if cn is not None and math.isfinite(at):
                self.q.schedule(at, self._redirect, cn, node.mac, [("direct", node.mac)])
                self.q.schedule(at + self.cfg.relay_idle, self._relay_idle, rn, node.mac)

    def _renew(self, node: SimNode, lease: SubnetLease) -> None:
        st = node.state
        try:
            fresh = renew(self.server, st.mac, lease, self.q.now)
        except LeaseUnknown as exc:
            self.note(node.name, "renew-failed", str(exc))
            self._legacy_dhcp(node, lease.subnet_id)
            return
        st.leases.put(fresh)

    def _legacy_dhcp(self, node: SimNode, subnet) -> None:
        st = node.state
        try:
            lease = direct_acquire(self.server, st.mac, subnet, self.q.now)
        except DhcpError as exc:
            self.note(node.name, "dhcp-failed", str(exc))
            return
        st.leases.put(lease)
        st.ip = lease.leased_ip
        if node.agent is not None:
            node.agent.rn_ip = st.ip

    # adversary timers

    def _act(self, node: SimNode) -> None:
        p = node.profile
        nxt = self.q.now + p.interval
        if nxt <= self.end:
            self.q.schedule(nxt, self._act, node)
        targets = [n.mac for n in self.nodes.values() if n is not node and n.honest and n.state.cr_enabled]
        relay_target = None
        if p.kind is adversary.Kind.RELAY_ABUSER:
            relay_target = node.last_relay_req
            if relay_target is not None:
                self._abuse_relay(node, relay_target)
                return
        elif p.kind is adversary.Kind.SPOOFER and node.ap.requires_8021x is False:
            relay_target = self._spoofed_req(node)
        if not node.state.cr_enabled:
            return
        self._emit(node, [adversary.Emission(e.msg, e.dst, self.pcfg.max_ttl)
                          for e in adversary.act(p, node.state, self.q.now, self.rng_adv,
                                                 targets=targets, relay_target=relay_target)])

    def _abuse_relay(self, node: SimNode, req: RelayReq) -> None:
        """The abuser keeps asking its relay node over the ad-hoc link, associated or not."""
        rn = self.by_mac.get(req.rn_mac)
        adversary.act(node.profile, node.state, self.q.now, self.rng_adv, relay_target=req)
        if rn is None or not node.reach.associated(self.q.now) or rn.ap.channel != node.ap.channel:
            return
        self.note(node.name, "tx", "RelayReq (repeat)")
        self.q.schedule(self.q.now + self.delays.adhoc_latency, self._deliver, rn, encode(req), 1, node.ap.bssid)

    def _spoofed_req(self, node: SimNode) -> Optional[RelayReq]:
        victim = next((n for n in self.nodes.values() if n.honest and n.mobile), None)
        rn = next((n for n in self.nodes.values() if n.agent is not None and n is not node
                   and n is not victim and n.honest), None)
        if victim is None or rn is None:
            return None
        cn = next(iter(self.cns.values()), None)
        if cn is None:
            return None
        return RelayReq(victim.mac, victim.state.ip, cn.ip, rn.mac, rn.state.ip)

    # voice traffic

    def _send(self, stream: Stream, k: int, offset: float) -> None:
        now = self.q.now
        t_next = stream.start + offset + (k + 1) * stream.interval
        if t_next < min(stream.stop, self.end):
            self.q.schedule(t_next, self._send, stream, k + 1, offset)
        stream.sent += 1
        if stream.downlink:
            self._send_down(stream, k)
        else:
            self._send_up(stream, k)

    def _payload(self, stream: Stream, seq: int) -> bytes:
        head = struct.pack(">HI", stream.index, seq)
        return head + bytes((seq + i) & 0xFF for i in range(stream.size - len(head)))

    def _send_down(self, stream: Stream, seq: int) -> None:
        cn = self.cns[stream.src]
        mn = self._node(stream.dst)
        now = self.q.now
        pkt = Packet(cn.ip, mn.state.ip, self._payload(stream, seq), seq, stream.index)
        fate = _PacketFate(stream, pkt, now + self.delays.net_latency)
        targets = self.sessions.get((cn.name, mn.mac), [("direct", mn.mac)])
        for kind, mac in targets:
            fate.copies += 1
            if kind == "direct":
                self.q.schedule(now + self.delays.net_latency, self._arrive_direct, fate, mn)
            else:
                self.q.schedule(now + self.delays.net_latency, self._arrive_rn, fate, mn, self.by_mac[mac])

    def _arrive_direct(self, fate: _PacketFate, mn: SimNode) -> None:
        ok = mn.reach.direct(self.q.now) and fate.packet.dst_ip == mn.state.ip
        self._resolve(fate, mn, ok, fate.packet)

    def _arrive_rn(self, fate: _PacketFate, mn: SimNode, rn: SimNode) -> None:
        now = self.q.now
        if not rn.reach.direct(now) or rn.agent is None:
            self._resolve(fate, mn, False)
            return
        try:
            frame = rn.agent.relay_downlink(fate.packet, now, rn.ap.bssid)
        except Dropped:
            self._resolve(fate, mn, False)
            return
        self.q.schedule(now + self.delays.adhoc_latency, self._arrive_adhoc, fate, mn, frame)

    def _arrive_adhoc(self, fate: _PacketFate, mn: SimNode, frame: Frame) -> None:
        heard = mn.mac in medium_visibility(frame, self.topology())
        ok = heard and mn.reach.relayed(self.q.now) and frame.header.destination == mn.mac
        self._resolve(fate, mn, ok, frame.packet)

    def _resolve(self, fate: _PacketFate, mn: Optional[SimNode], ok: bool, packet: Optional[Packet] = None) -> None:
        fate.copies -= 1
        if fate.done:
            return
        s = fate.stream
        if ok:
            fate.done = True
            s.received += 1
            if packet is not None and packet.payload != fate.packet.payload:
                s.mismatched += 1
        elif fate.copies == 0:
            fate.done = True
            s.lost += 1
            if mn is not None and s.downlink:
                self._attribute_loss(mn, fate.arrival)

    def _attribute_loss(self, mn: SimNode, t: float) -> None:
        i = bisect.bisect_right(mn.record_windows, t) - 1
        if i >= 0:
            mn.records[i].packets_lost += 1

    def _send_up(self, stream: Stream, seq: int) -> None:
        mn = self._node(stream.src)
        cn = self.cns[stream.dst]
        now = self.q.now
        pkt = Packet(mn.state.ip, cn.ip, self._payload(stream, seq), seq, stream.index)
        fate = _PacketFate(stream, pkt, now, copies=1)
        reg_rn = self.by_mac.get(mn.relay_rn) if mn.relay_rn is not None else None
        if mn.reach.direct(now):
            frame = Frame(FrameHeader.to_ap(mn.ap.bssid, mn.mac, GATEWAY_MAC), pkt)
            ok = mn.ap.authenticator.admit(frame, now)
            self.q.schedule(now + self.delays.net_latency, self._arrive_cn, fate, cn, ok, pkt)
        elif mn.reach.relayed(now) and reg_rn is not None and reg_rn.agent is not None:
            frame = Frame(FrameHeader.adhoc(reg_rn.mac, mn.mac, mn.ap.bssid), pkt)
            self.q.schedule(now + self.delays.adhoc_latency, self._uplink_rn, fate, cn, frame, reg_rn)
        elif mn.reach.associated(now):
            # associated but not admitted: the authenticator drops data frames
            frame = Frame(FrameHeader.to_ap(mn.ap.bssid, mn.mac, GATEWAY_MAC), pkt)
            mn.ap.authenticator.admit(frame, now)
            self._resolve(fate, None, False)
        else:
            self._resolve(fate, None, False)

    def _uplink_rn(self, fate: _PacketFate, cn: CorrespondentNode, frame: Frame, rn: SimNode) -> None:
        now = self.q.now
        if rn.mac not in medium_visibility(frame, self.topology()) or not rn.reach.direct(now):
            self._resolve(fate, None, False)
            return
        try:
            out = rn.agent.relay_uplink(frame, now, rn.ap.bssid)
        except Dropped as exc:
            self.note(rn.name, "relay-drop", f"mn={frame.header.source} reason={exc.reason}")
            self._resolve(fate, None, False)
            return
        ok = rn.ap.authenticator.admit(out, now)
        self.q.schedule(now + self.delays.net_latency, self._arrive_cn, fate, cn, ok, out.packet)

    def _arrive_cn(self, fate: _PacketFate, cn: CorrespondentNode, ok: bool, packet: Packet) -> None:
        key = (fate.stream.index, packet.seq)
        if ok and key not in cn.seen:
            cn.seen.add(key)
            self._resolve(fate, None, True, packet)
        else:
            self._resolve(fate, None, False)

    # run

    def run(self) -> RunReport:
        for n in self.nodes.values():
            if n.mobile and n.state.cr_enabled:
                self.q.schedule(self.cfg.poll, self._poll, n)
            if n.profile is not None and n.profile.interval is not None:
                self.q.schedule(n.profile.interval, self._act, n)
        for m in self.moves:
            if m.t <= self.end:
                self.q.schedule(m.t, self._move_event, m.node, self.cfg.ap(m.ap).name)
        for s in self.streams:
            offset = float(self.rng_stream.uniform(0.0, s.interval))
            if s.start + offset < min(s.stop, self.end):
                self.q.schedule(s.start + offset, self._send, s, 0, offset)
        self.q.run(self.end)
        return self._report()

    def _move_event(self, node_key: str, ap_name: str) -> None:
        self._move(self._node(node_key), ap_name)

    def _report(self) -> RunReport:
        rows = []
        for n in self.nodes.values():
            for rec in n.records:
                rows.append((rec.start, list(self.nodes).index(n.name), n.name, rec))
        rows.sort(key=lambda r: (r[0], r[1]))
        eapol_leaks = 0
        for ap in self.aps.values():
            for (t, sa, phase, is_eapol) in ap.authenticator.forwarded:
                if phase is AuthPhase.EAPOL_IN_PROGRESS and not is_eapol:
                    eapol_leaks += 1
        stray = 0
        audit = []
        marks: dict = {}
        for n in self.nodes.values():
            if n.agent is not None:
                stray += sum(1 for (t, _d, _m, exp) in n.agent.relayed if t >= exp)
                audit.extend(n.agent.audit_lines())
            for s in sorted(n.state.ledger.marked_malicious):
                marks[s] = marks.get(s, 0) + 1
        nodes = {}
        for n in self.nodes.values():
            role = n.profile.kind.value if n.profile else ("mobile" if n.mobile else "static")
            nodes[n.name] = {"mac": str(n.mac), "auth": n.state.auth_method, "role": role}
        scripted = {}
        for m in self.moves:
            if m.t <= self.end:
                name = self._node(m.node).name
                scripted[name] = scripted.get(name, 0) + 1
        failed = [(n.name, rec) for n in self.nodes.values() for rec in n.failed]
        return RunReport(self.cfg.name, self.seed, self.mode, self.cfg.topology_digest(),
                         [(name, rec) for _, _, name, rec in rows], self.streams, nodes, self.trace,
                         self.security_log, audit, self.server.dump(), self.ipreq_rtts,
                         self.proxy_exchanges, failed, scripted, eapol_leaks, stray, marks)


def session_redirect(sim: Simulator, cn: str, mn: MacAddress, targets) -> list:
    """Point the CN's downlink for ``mn`` at ``targets`` (direct and/or relay endpoints)."""
    key = (cn, mn)
    if key not in sim.sessions:
        raise UnknownStream(f"{cn} has no stream to {mn}")
    sim.sessions[key] = list(targets)
    sim.note(cn, "redirect", f"mn={mn} targets=" + ",".join(f"{k}:{m}" for k, m in targets))
    return sim.sessions[key]


def run(scenario: ScenarioConfig, seed: int = 0, mode: str = "cr") -> RunReport:
    return Simulator(scenario, seed, mode).run()
