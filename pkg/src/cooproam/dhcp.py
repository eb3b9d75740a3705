"""Simulated DHCP server and the assisting node's proxy acquisition.

Messages are modelled at the field level the proxy procedure depends on
(chaddr, broadcast flag, yiaddr, router option); the RFC 2131 byte layout
is not reproduced.
"""

from __future__ import annotations

import enum
import ipaddress
from dataclasses import dataclass, field
from typing import Optional

from .cache import SubnetLease
from .wire import MacAddress, SubnetId

DEFAULT_LEASE_S = 300.0


class DhcpError(Exception):
    pass


class PoolExhausted(DhcpError):
    pass


class ServerTimeout(DhcpError):
    pass


class LeaseUnknown(DhcpError):
    pass


class DhcpOp(enum.Enum):
    DISCOVER = "DISCOVER"
    OFFER = "OFFER"
    REQUEST = "REQUEST"
    ACK = "ACK"


@dataclass(frozen=True)
class DhcpMessage:
    op: DhcpOp
    chaddr: MacAddress
    broadcast: bool
    yiaddr: Optional[ipaddress.IPv4Address] = None
    router: Optional[ipaddress.IPv4Address] = None


@dataclass
class Pool:
    subnet_id: SubnetId
    prefixlen: int
    router_ip: ipaddress.IPv4Address
    first: ipaddress.IPv4Address
    last: ipaddress.IPv4Address
    lease_duration: float = DEFAULT_LEASE_S  # seconds

    def __post_init__(self):
        net = self.network
        if self.first not in net or self.last not in net or self.first > self.last:
            raise ValueError(f"pool {self.first}-{self.last} not inside {net}")

    @property
    def network(self) -> ipaddress.IPv4Network:
        return ipaddress.IPv4Network((int(self.subnet_id), self.prefixlen))

    def addresses(self):
        for n in range(int(self.first), int(self.last) + 1):
            yield ipaddress.IPv4Address(n)

    @property
    def size(self) -> int:
        return int(self.last) - int(self.first) + 1


@dataclass
class ActiveLease:
    chaddr: MacAddress
    expiry: float  # ms


@dataclass
class DhcpExchange:
    chaddr: MacAddress
    broadcast: bool
    requesting_node: MacAddress
    subnet: SubnetId
    messages: list = field(default_factory=list)

    def __post_init__(self):
        if self.requesting_node != self.chaddr and not self.broadcast:
            raise ValueError("a proxy exchange must set the broadcast bit")


class DhcpServer:
    """One logical server holding a pool per subnet (times in ms)."""

    def __init__(self, pools=(), reachable: bool = True):
        self.pools: dict = {}
        self.active_leases: dict = {}
        self.bindings: dict = {}  # last address handed to each chaddr, per subnet
        self.reachable = reachable
        self.log: list = []
        for p in pools:
            self.add_pool(p)

    def add_pool(self, pool: Pool) -> None:
        self.pools[pool.subnet_id] = pool

    def pool_for(self, addr: ipaddress.IPv4Address) -> Optional[Pool]:
        for p in self.pools.values():
            if addr in p.network:
                return p
        return None

    def _is_free(self, addr, now: float) -> bool:
        lease = self.active_leases.get(addr)
        return lease is None or lease.expiry <= now

    def owner(self, addr: ipaddress.IPv4Address, now: float) -> Optional[MacAddress]:
        lease = self.active_leases.get(addr)
        if lease is None or lease.expiry <= now:
            return None
        return lease.chaddr

    def _pick(self, pool: Pool, chaddr: MacAddress, now: float):
        for addr, lease in self.active_leases.items():
            if lease.chaddr == chaddr and lease.expiry > now and addr in pool.network:
                return addr
        prev = self.bindings.get((pool.subnet_id, chaddr))
        if prev is not None and self._is_free(prev, now):
            return prev
        for addr in pool.addresses():
            if self._is_free(addr, now):
                return addr
        raise PoolExhausted(f"no free address in {pool.network}")

    def allocate(self, chaddr: MacAddress, subnet: SubnetId, now: float,
                 broadcast: bool = False, requesting_node: Optional[MacAddress] = None) -> DhcpExchange:
        """Run discover/offer/request/ack at ``now`` and bind the address to chaddr."""
        if not self.reachable:
            raise ServerTimeout("DHCP server did not answer")
        pool = self.pools.get(subnet)
        if pool is None:
            raise PoolExhausted(f"no pool for subnet {subnet}")
        ex = DhcpExchange(chaddr, broadcast, requesting_node or chaddr, subnet)
        ex.messages.append(DhcpMessage(DhcpOp.DISCOVER, chaddr, broadcast))
        addr = self._pick(pool, chaddr, now)
        ex.messages.append(DhcpMessage(DhcpOp.OFFER, chaddr, broadcast, addr, pool.router_ip))
        ex.messages.append(DhcpMessage(DhcpOp.REQUEST, chaddr, broadcast, addr))
        expiry = now + pool.lease_duration * 1000.0
        self.active_leases[addr] = ActiveLease(chaddr, expiry)
        self.bindings[(subnet, chaddr)] = addr
        ex.messages.append(DhcpMessage(DhcpOp.ACK, chaddr, broadcast, addr, pool.router_ip))
        self.log.append((now, "ack", addr, chaddr, expiry))
        return ex

    def lease_for(self, ex: DhcpExchange, now: float, amn_mac: Optional[MacAddress] = None) -> SubnetLease:
        ack = ex.messages[-1]
        pool = self.pools[ex.subnet]
        return SubnetLease(ex.subnet, pool.router_ip, ack.yiaddr,
                           self.active_leases[ack.yiaddr].expiry, now, amn_mac)

    def renew(self, chaddr: MacAddress, addr: ipaddress.IPv4Address, now: float) -> float:
        holder = self.owner(addr, now)
        if holder is not None and holder != chaddr:
            raise LeaseUnknown(f"{addr} was reallocated to {holder}")
        pool = self.pool_for(addr)
        if pool is None:
            raise LeaseUnknown(f"{addr} belongs to no pool")
        expiry = now + pool.lease_duration * 1000.0
        self.active_leases[addr] = ActiveLease(chaddr, expiry)
        self.bindings[(pool.subnet_id, chaddr)] = addr
        self.log.append((now, "renew", addr, chaddr, expiry))
        return expiry

    def release(self, addr: ipaddress.IPv4Address) -> None:
        self.active_leases.pop(addr, None)

    def lease_table(self, now: Optional[float] = None) -> list:
        rows = []
        for addr in sorted(self.active_leases):
            lease = self.active_leases[addr]
            if now is None or lease.expiry > now:
                rows.append((addr, lease.chaddr, lease.expiry))
        return rows

    def dump(self, now: Optional[float] = None) -> str:
        """Lease table as ``ip chaddr expiry`` lines."""
        return "".join(f"{a} {c} {e:.3f}\n" for a, c, e in self.lease_table(now))


def direct_acquire(server: DhcpServer, node_mac: MacAddress, subnet: SubnetId, now: float) -> SubnetLease:
    ex = server.allocate(node_mac, subnet, now, broadcast=False)
    return server.lease_for(ex, now)


def amn_acquire(server: DhcpServer, amn_mac: MacAddress, amn_subnet: SubnetId,
                rmn_mac: MacAddress, subnet: SubnetId, now: float) -> tuple:
    """Acquire an address for ``rmn_mac`` from inside ``subnet``.

    The assisting node puts the requester's MAC in chaddr and sets the
    broadcast bit so it still receives the offer and ack. Returns
    ``(lease, exchange)``; the caller accounts for exchange duration.
    """
    if amn_subnet != subnet:
        raise ValueError(f"assisting node is in {amn_subnet}, not {subnet}")
    ex = server.allocate(rmn_mac, subnet, now, broadcast=True, requesting_node=amn_mac)
    return server.lease_for(ex, now, amn_mac), ex


def renew(server: DhcpServer, node_mac: MacAddress, lease: SubnetLease, now: float) -> SubnetLease:
    expiry = server.renew(node_mac, lease.leased_ip, now)
    return SubnetLease(lease.subnet_id, lease.router_ip, lease.leased_ip, expiry, now, lease.amn_mac)
