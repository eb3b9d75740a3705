"""Byte layout of cooperative-roaming messages and 802.11 address roles.

Every message starts with the same 9-byte header::

    | offset | size | field                                  |
    |--------|------|----------------------------------------|
    | 0      | 1    | tag (message kind)                     |
    | 1      | 6    | sender MAC                             |
    | 7      | 2    | entry count (uint16 BE, 0 if no list)  |

followed by the kind-specific fields in declaration order, big-endian.
Cache entries are 14 bytes each: BSSID (6), channel (uint32), subnet (4).

The entry section of INFOREQ/INFORESP is bounded by the UDP payload left
in a 1500-byte MTU after 28 bytes of IP+UDP header: 1472 bytes, i.e. at
most 105 entries. See docs/wire_format.md for the full table.
"""

from __future__ import annotations

import enum
import ipaddress
import struct
from dataclasses import dataclass, field
from typing import Optional, Union

MTU = 1500
IP_UDP_HEADER = 28
MAX_PAYLOAD = MTU - IP_UDP_HEADER  # 1472
ENTRY_SIZE = 14
MAX_ENTRIES = MAX_PAYLOAD // ENTRY_SIZE  # 105
HEADER_SIZE = 9
MIN_CHANNEL = 1
MAX_CHANNEL = 14

_HEADER = struct.Struct(">B6sH")
_ENTRY = struct.Struct(">6sI4s")


class WireError(ValueError):
    pass


class CapacityExceeded(WireError):
    pass


class InvalidField(WireError):
    pass


class Truncated(WireError):
    pass


class UnknownTag(WireError):
    pass


@dataclass(frozen=True, order=True)
class MacAddress:
    octets: bytes

    def __post_init__(self):
        if not isinstance(self.octets, (bytes, bytearray)) or len(self.octets) != 6:
            raise InvalidField(f"MAC address needs 6 octets, got {self.octets!r}")
        object.__setattr__(self, "octets", bytes(self.octets))

    @classmethod
    def parse(cls, text: str) -> "MacAddress":
        parts = text.replace("-", ":").split(":")
        if len(parts) != 6:
            raise InvalidField(f"bad MAC address {text!r}")
        try:
            return cls(bytes(int(p, 16) for p in parts))
        except ValueError as exc:
            raise InvalidField(f"bad MAC address {text!r}") from exc

    @classmethod
    def from_int(cls, value: int) -> "MacAddress":
        return cls(value.to_bytes(6, "big"))

    @property
    def is_multicast(self) -> bool:
        return bool(self.octets[0] & 0x01)

    def __str__(self) -> str:
        return ":".join(f"{b:02x}" for b in self.octets)

    def __repr__(self) -> str:
        return f"MacAddress('{self}')"


def mac(text: str) -> MacAddress:
    return MacAddress.parse(text)


SubnetId = ipaddress.IPv4Address
"""A subnet is identified by its IPv4 network address."""


def subnet_id(text: str) -> SubnetId:
    return ipaddress.IPv4Address(text)


def network_of(addr: ipaddress.IPv4Address, prefixlen: int) -> SubnetId:
    return ipaddress.IPv4Network((int(addr), prefixlen), strict=False).network_address


def _check_ip(value, name: str) -> ipaddress.IPv4Address:
    if not isinstance(value, ipaddress.IPv4Address):
        raise InvalidField(f"{name} must be an IPv4Address, got {value!r}")
    return value


def _check_mac(value, name: str) -> MacAddress:
    if not isinstance(value, MacAddress):
        raise InvalidField(f"{name} must be a MacAddress, got {value!r}")
    return value


@dataclass(frozen=True)
class CacheEntry:
    bssid: MacAddress
    channel: int
    subnet_id: SubnetId

    def __post_init__(self):
        _check_mac(self.bssid, "bssid")
        _check_ip(self.subnet_id, "subnet_id")
        if not MIN_CHANNEL <= self.channel <= MAX_CHANNEL:
            raise InvalidField(f"channel {self.channel} outside {MIN_CHANNEL}..{MAX_CHANNEL}")

    def pack(self) -> bytes:
        return _ENTRY.pack(self.bssid.octets, self.channel, self.subnet_id.packed)

    @classmethod
    def unpack(cls, raw: bytes) -> "CacheEntry":
        bssid, channel, net = _ENTRY.unpack(raw)
        return cls(MacAddress(bssid), channel, ipaddress.IPv4Address(net))


class Tag(enum.IntEnum):
    INFOREQ = 1
    INFORESP = 2
    AMN_DISCOVER = 3
    AMN_RESP = 4
    IP_REQ = 5
    IP_RESP = 6
    RELAY_REQ = 7
    INFOALERT = 8


@dataclass(frozen=True)
class InfoReq:
    sender: MacAddress
    entries: tuple = ()

    tag = Tag.INFOREQ

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))


@dataclass(frozen=True)
class InfoResp:
    sender: MacAddress
    target: MacAddress
    entries: tuple = ()

    tag = Tag.INFORESP

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))


@dataclass(frozen=True)
class AmnDiscover:
    sender: MacAddress
    subnet_id: SubnetId

    tag = Tag.AMN_DISCOVER


@dataclass(frozen=True)
class AmnResp:
    amn_mac: MacAddress
    amn_ip: ipaddress.IPv4Address
    router_ip: ipaddress.IPv4Address
    bssid: MacAddress = field(default_factory=lambda: MacAddress(bytes(6)))
    can_relay: bool = False

    tag = Tag.AMN_RESP

    @property
    def sender(self) -> MacAddress:
        return self.amn_mac


@dataclass(frozen=True)
class IpReq:
    rmn_mac: MacAddress

    tag = Tag.IP_REQ

    @property
    def sender(self) -> MacAddress:
        return self.rmn_mac


@dataclass(frozen=True)
class IpResp:
    sender: MacAddress
    rmn_mac: MacAddress
    new_ip: ipaddress.IPv4Address
    router_ip: ipaddress.IPv4Address

    tag = Tag.IP_RESP


@dataclass(frozen=True)
class RelayReq:
    mn_mac: MacAddress
    mn_ip: ipaddress.IPv4Address
    cn_ip: ipaddress.IPv4Address
    rn_mac: MacAddress
    rn_ip: ipaddress.IPv4Address

    tag = Tag.RELAY_REQ

    @property
    def sender(self) -> MacAddress:
        return self.mn_mac


@dataclass(frozen=True)
class InfoAlert:
    sender: MacAddress
    suspect_mac: MacAddress

    tag = Tag.INFOALERT


Message = Union[InfoReq, InfoResp, AmnDiscover, AmnResp, IpReq, IpResp, RelayReq, InfoAlert]


def _entries(msg) -> tuple:
    entries = tuple(msg.entries)
    if len(entries) > MAX_ENTRIES:
        raise CapacityExceeded(f"{len(entries)} entries, at most {MAX_ENTRIES} fit in {MAX_PAYLOAD} bytes")
    for e in entries:
        if not isinstance(e, CacheEntry):
            raise InvalidField(f"entry {e!r} is not a CacheEntry")
    return entries


def encode(msg: Message) -> bytes:
    """Serialize ``msg``; raises CapacityExceeded past 105 entries."""
    sender = _check_mac(msg.sender, "sender")
    entries = _entries(msg) if isinstance(msg, (InfoReq, InfoResp)) else ()
    out = bytearray(_HEADER.pack(int(msg.tag), sender.octets, len(entries)))
    if isinstance(msg, InfoResp):
        out += _check_mac(msg.target, "target").octets
    elif isinstance(msg, AmnDiscover):
        out += _check_ip(msg.subnet_id, "subnet_id").packed
    elif isinstance(msg, AmnResp):
        out += _check_ip(msg.amn_ip, "amn_ip").packed
        out += _check_ip(msg.router_ip, "router_ip").packed
        out += _check_mac(msg.bssid, "bssid").octets
        out.append(1 if msg.can_relay else 0)
    elif isinstance(msg, IpResp):
        out += _check_mac(msg.rmn_mac, "rmn_mac").octets
        out += _check_ip(msg.new_ip, "new_ip").packed
        out += _check_ip(msg.router_ip, "router_ip").packed
    elif isinstance(msg, RelayReq):
        out += _check_ip(msg.mn_ip, "mn_ip").packed
        out += _check_ip(msg.cn_ip, "cn_ip").packed
        out += _check_mac(msg.rn_mac, "rn_mac").octets
        out += _check_ip(msg.rn_ip, "rn_ip").packed
    elif isinstance(msg, InfoAlert):
        out += _check_mac(msg.suspect_mac, "suspect_mac").octets
    elif not isinstance(msg, (InfoReq, IpReq)):
        raise InvalidField(f"not a message: {msg!r}")
    for e in entries:
        out += e.pack()
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes, offset: int):
        self.data = data
        self.pos = offset

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise Truncated(f"need {n} bytes at offset {self.pos}, have {len(self.data) - self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def mac(self) -> MacAddress:
        return MacAddress(self.take(6))

    def ip(self) -> ipaddress.IPv4Address:
        return ipaddress.IPv4Address(self.take(4))


def decode(data: bytes) -> Message:
    if len(data) < HEADER_SIZE:
        raise Truncated(f"header needs {HEADER_SIZE} bytes, got {len(data)}")
    raw_tag, sender_raw, count = _HEADER.unpack_from(data)
    try:
        tag = Tag(raw_tag)
    except ValueError:
        raise UnknownTag(f"unknown message tag {raw_tag}") from None
    if count > MAX_ENTRIES:
        raise CapacityExceeded(f"header claims {count} entries")
    if count and tag not in (Tag.INFOREQ, Tag.INFORESP):
        raise InvalidField(f"{tag.name} cannot carry entries")
    r = _Reader(data, HEADER_SIZE)
    sender = MacAddress(sender_raw)
    if tag is Tag.INFOREQ:
        msg = InfoReq(sender, _read_entries(r, count))
    elif tag is Tag.INFORESP:
        target = r.mac()
        msg = InfoResp(sender, target, _read_entries(r, count))
    elif tag is Tag.AMN_DISCOVER:
        msg = AmnDiscover(sender, r.ip())
    elif tag is Tag.AMN_RESP:
        amn_ip, router_ip, bssid = r.ip(), r.ip(), r.mac()
        flag = r.take(1)[0]
        if flag > 1:
            raise InvalidField(f"can_relay flag must be 0 or 1, got {flag}")
        msg = AmnResp(sender, amn_ip, router_ip, bssid, bool(flag))
    elif tag is Tag.IP_REQ:
        msg = IpReq(sender)
    elif tag is Tag.IP_RESP:
        msg = IpResp(sender, r.mac(), r.ip(), r.ip())
    elif tag is Tag.RELAY_REQ:
        mn_ip, cn_ip, rn_mac, rn_ip = r.ip(), r.ip(), r.mac(), r.ip()
        msg = RelayReq(sender, mn_ip, cn_ip, rn_mac, rn_ip)
    else:
        msg = InfoAlert(sender, r.mac())
    if r.pos != len(data):
        raise InvalidField(f"{len(data) - r.pos} trailing bytes after {tag.name}")
    return msg


def _read_entries(r: _Reader, count: int) -> tuple:
    return tuple(CacheEntry.unpack(r.take(ENTRY_SIZE)) for _ in range(count))


def entry_payload_size(msg: Message) -> int:
    """Bytes occupied by cache entries; this is what the 1472-byte bound limits."""
    return ENTRY_SIZE * len(getattr(msg, "entries", ()))


# 802.11 frame control address roles


class FrameKind(enum.Enum):
    DIRECT_ADHOC = "DirectAdHoc"
    TO_AP = "ToAp"
    FROM_AP = "FromAp"
    AP_TO_AP = "ApToAp"


_ROLES = {
    (0, 0): ("DA", "SA", "BSSID", None),
    (0, 1): ("DA", "BSSID", "SA", None),
    (1, 0): ("BSSID", "SA", "DA", None),
    (1, 1): ("RA", "TA", "DA", "SA"),
}

_KINDS = {
    (0, 0): FrameKind.DIRECT_ADHOC,
    (0, 1): FrameKind.FROM_AP,
    (1, 0): FrameKind.TO_AP,
    (1, 1): FrameKind.AP_TO_AP,
}


@dataclass(frozen=True)
class FrameHeader:
    to_ds: int
    from_ds: int
    addr1: Optional[MacAddress] = None
    addr2: Optional[MacAddress] = None
    addr3: Optional[MacAddress] = None
    addr4: Optional[MacAddress] = None

    def __post_init__(self):
        if self.to_ds not in (0, 1) or self.from_ds not in (0, 1):
            raise InvalidField("to_ds/from_ds are single bits")
        if self.addr4 is not None and not (self.to_ds and self.from_ds):
            raise InvalidField("addr4 is only present in AP-to-AP frames")

    @classmethod
    def adhoc(cls, da, sa, bssid) -> "FrameHeader":
        return cls(0, 0, da, sa, bssid)

    @classmethod
    def to_ap(cls, bssid, sa, da) -> "FrameHeader":
        return cls(1, 0, bssid, sa, da)

    @classmethod
    def from_ap(cls, da, bssid, sa) -> "FrameHeader":
        return cls(0, 1, da, bssid, sa)

    @classmethod
    def wds(cls, ra, ta, da, sa) -> "FrameHeader":
        return cls(1, 1, ra, ta, da, sa)

    def roles(self) -> dict:
        """Map each address role (DA, SA, BSSID, RA, TA) to its field value."""
        names = _ROLES[(self.to_ds, self.from_ds)]
        values = (self.addr1, self.addr2, self.addr3, self.addr4)
        return {n: v for n, v in zip(names, values) if n is not None}

    @property
    def source(self):
        return self.roles().get("SA")

    @property
    def destination(self):
        return self.roles().get("DA")


def classify_frame(hdr: FrameHeader) -> FrameKind:
    return _KINDS[(hdr.to_ds, hdr.from_ds)]


def address_roles(to_ds: int, from_ds: int) -> tuple:
    """Role names of addr1..addr4 for a ToDS/FromDS combination (None = absent)."""
    return _ROLES[(to_ds, from_ds)]
