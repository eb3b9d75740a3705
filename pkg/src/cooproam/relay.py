"""Relaying an authenticating node's traffic through an already-admitted peer.

The relay node (RN) learns about the mobile node from a RELAY_REQ sent
while the mobile node was still on its old AP. During 802.1x on the new
AP the mobile node exchanges ad-hoc addressed frames (ToDS=FromDS=0) with
the RN, which forwards them under its own association. Registrations are
time-limited and a mobile node that never finishes authenticating cannot
register again inside the cooldown.
"""

from __future__ import annotations

import enum
import ipaddress
from dataclasses import dataclass, field
from typing import Optional

from .wire import FrameHeader, FrameKind, MacAddress, RelayReq, classify_frame

DEFAULT_TIMEOUT_MS = 10_000.0
DEFAULT_COOLDOWN_MS = 60_000.0
GATEWAY_MAC = MacAddress(b"\x00\x00\x5e\x00\x01\x01")


class RelayRefused(Exception):
    reason = "refused"


class RefusedUnassociated(RelayRefused):
    reason = "unassociated"


class RefusedMalicious(RelayRefused):
    reason = "malicious"


class RefusedCooldown(RelayRefused):
    reason = "cooldown"


class Dropped(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class AuthFailed(Exception):
    pass


@dataclass(frozen=True)
class Packet:
    src_ip: ipaddress.IPv4Address
    dst_ip: ipaddress.IPv4Address
    payload: bytes
    seq: int = -1
    stream: int = -1


@dataclass(frozen=True)
class Frame:
    header: FrameHeader
    packet: Packet
    eapol: bool = False

    @property
    def kind(self) -> FrameKind:
        return classify_frame(self.header)


@dataclass
class RelayRegistration:
    mn_mac: MacAddress
    mn_ip: ipaddress.IPv4Address
    cn_ip: ipaddress.IPv4Address
    rn_mac: MacAddress
    rn_ip: ipaddress.IPv4Address
    created: float
    expires_at: float
    registered_while_mn_at: MacAddress
    active: bool = True
    mn_authenticated: bool = False
    ended_at: Optional[float] = None
    end_reason: str = ""
    frames_up: int = 0
    frames_down: int = 0
    last_activity: float = 0.0

    def live(self, now: float) -> bool:
        return self.active and now < self.expires_at


class RelayAgent:
    """Relay-side state for one RN."""

    def __init__(self, rn_mac: MacAddress, rn_ip: ipaddress.IPv4Address,
                 timeout: float = DEFAULT_TIMEOUT_MS, cooldown: float = DEFAULT_COOLDOWN_MS):
        self.rn_mac = rn_mac
        self.rn_ip = rn_ip
        self.timeout = timeout
        self.cooldown = cooldown
        self.registrations: dict = {}
        self.history: list = []
        self.relayed: list = []  # (time, direction, mn_mac, expires_at)

    def on_relay_req(self, req: RelayReq, now: float, mn_bssid: Optional[MacAddress],
                     mn_malicious: bool = False) -> RelayRegistration:
        """Register ``req.mn_mac``; ``mn_bssid`` is the AP it was on when sending."""
        if req.rn_mac != self.rn_mac:
            raise ValueError("RELAY_REQ names a different relay node")
        if mn_malicious:
            raise RefusedMalicious(str(req.mn_mac))
        if mn_bssid is None:
            raise RefusedUnassociated(str(req.mn_mac))
        prev = self.registrations.get(req.mn_mac)
        if prev is not None:
            self._expire(prev, now)
            if prev.active:
                raise RefusedCooldown(f"{req.mn_mac} already has an active registration")
            if not prev.mn_authenticated and now - prev.created < self.cooldown:
                raise RefusedCooldown(f"{req.mn_mac} never authenticated after its last relay")
        reg = RelayRegistration(req.mn_mac, req.mn_ip, req.cn_ip, self.rn_mac, self.rn_ip,
                                now, now + self.timeout, mn_bssid, last_activity=now)
        self.registrations[req.mn_mac] = reg
        self.history.append(reg)
        return reg

    def _expire(self, reg: RelayRegistration, now: float) -> None:
        if reg.active and now >= reg.expires_at:
            reg.active = False
            reg.ended_at = reg.expires_at
            reg.end_reason = "expired"

    def expire(self, now: float) -> list:
        ended = []
        for reg in self.registrations.values():
            was = reg.active
            self._expire(reg, now)
            if was and not reg.active:
                ended.append(reg)
        return ended

    def deactivate(self, mn_mac: MacAddress, now: float, reason: str = "idle") -> None:
        reg = self.registrations.get(mn_mac)
        if reg is not None and reg.active:
            self._expire(reg, now)
            if reg.active:
                reg.active = False
                reg.ended_at = now
                reg.end_reason = reason

    def mark_authenticated(self, mn_mac: MacAddress) -> None:
        reg = self.registrations.get(mn_mac)
        if reg is not None:
            reg.mn_authenticated = True

    def _live(self, mn_mac: MacAddress, now: float) -> RelayRegistration:
        reg = self.registrations.get(mn_mac)
        if reg is None:
            raise Dropped("unregistered")
        self._expire(reg, now)
        if not reg.active:
            raise Dropped("expired")
        return reg

    def relay_uplink(self, frame: Frame, now: float, bssid: MacAddress) -> Frame:
        """Forward an ad-hoc frame from the MN to the AP under the RN's association."""
        if frame.kind is not FrameKind.DIRECT_ADHOC:
            raise Dropped("wrong-class")
        reg = self._live(frame.header.source, now)
        if frame.packet.dst_ip != reg.cn_ip:
            raise Dropped("unregistered")
        reg.frames_up += 1
        reg.last_activity = now
        self.relayed.append((now, "up", reg.mn_mac, reg.expires_at))
        return Frame(FrameHeader.to_ap(bssid, self.rn_mac, GATEWAY_MAC), frame.packet)

    def relay_downlink(self, packet: Packet, now: float, bssid: MacAddress) -> Frame:
        """Re-emit a CN packet to the MN as an ad-hoc frame on the shared channel."""
        for reg in self.registrations.values():
            if reg.mn_ip == packet.dst_ip and reg.cn_ip == packet.src_ip:
                break
        else:
            raise Dropped("unregistered")
        reg = self._live(reg.mn_mac, now)
        reg.frames_down += 1
        reg.last_activity = now
        self.relayed.append((now, "down", reg.mn_mac, reg.expires_at))
        return Frame(FrameHeader.adhoc(reg.mn_mac, self.rn_mac, bssid), packet)

    def audit_lines(self) -> list:
        lines = []
        for reg in self.history:
            end = f"{reg.ended_at:.3f}" if reg.ended_at is not None else "-"
            lines.append(
                f"rn={self.rn_mac} mn={reg.mn_mac} created={reg.created:.3f} "
                f"expires={reg.expires_at:.3f} ended={end} reason={reg.end_reason or 'open'} "
                f"frames_up={reg.frames_up} frames_down={reg.frames_down}"
            )
        return lines


class AuthPhase(enum.Enum):
    IDLE = "idle"
    EAPOL_IN_PROGRESS = "eapol_in_progress"
    AUTHENTICATED = "authenticated"
    FAILED = "failed"


@dataclass
class AuthSession:
    mn_mac: MacAddress
    method: str
    started: float
    cert_ms: float
    key_ms: float
    will_fail: bool = False
    phase: AuthPhase = AuthPhase.EAPOL_IN_PROGRESS

    @property
    def duration(self) -> float:
        return self.cert_ms + self.key_ms

    @property
    def done_at(self) -> float:
        return self.started + self.duration


def auth_progress(session: AuthSession, now: float) -> AuthPhase:
    """Advance ``session`` to ``now``; raises AuthFailed at the end of a failing run."""
    if session.phase is AuthPhase.EAPOL_IN_PROGRESS and now >= session.done_at:
        if session.will_fail:
            session.phase = AuthPhase.FAILED
            raise AuthFailed(str(session.mn_mac))
        session.phase = AuthPhase.AUTHENTICATED
    return session.phase


@dataclass
class Authenticator:
    """The AP's 802.1x port gate: only EAPOL passes for an authenticating MN."""

    bssid: MacAddress
    requires_8021x: bool = False
    sessions: dict = field(default_factory=dict)
    forwarded: list = field(default_factory=list)  # (time, sa, phase) of forwarded data frames
    dropped: int = 0

    def phase(self, mn_mac: MacAddress) -> AuthPhase:
        s = self.sessions.get(mn_mac)
        return s.phase if s is not None else AuthPhase.IDLE

    def admit(self, frame: Frame, now: float) -> bool:
        if frame.kind is not FrameKind.TO_AP:
            return False
        sa = frame.header.source
        s = self.sessions.get(sa)
        if s is not None:
            try:
                auth_progress(s, now)
            except AuthFailed:
                pass
        if self.requires_8021x and not frame.eapol:
            if s is None or s.phase is not AuthPhase.AUTHENTICATED:
                self.dropped += 1
                return False
        self.forwarded.append((now, sa, s.phase if s else AuthPhase.IDLE, frame.eapol))
        return True
