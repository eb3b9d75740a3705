import ipaddress

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cooproam.delays import DelayModel
from cooproam.dhcp import (DhcpOp, DhcpServer, LeaseUnknown, Pool, PoolExhausted, ServerTimeout,
                           amn_acquire, direct_acquire, renew)
from cooproam.wire import MacAddress, mac

ip = ipaddress.IPv4Address
NET = ip("10.2.0.0")
AMN = mac("02:00:00:00:0b:01")


def server(first="10.2.0.100", last="10.2.0.199"):
    return DhcpServer([Pool(NET, 24, ip("10.2.0.1"), ip(first), ip(last), 300)])


@given(st.lists(st.integers(1, 2**40), min_size=1, max_size=30, unique=True), st.floats(0, 1e6))
def test_proxy_lease_table_matches_direct(mac_ints, now):
    rmns = [MacAddress.from_int(i) for i in mac_ints]
    proxy, direct = server(), server()
    for m in rmns:
        lease, ex = amn_acquire(proxy, AMN, NET, m, NET, now)
        assert ex.broadcast and all(msg.broadcast for msg in ex.messages)
        assert all(msg.chaddr == m for msg in ex.messages)
        assert [msg.op for msg in ex.messages] == [DhcpOp.DISCOVER, DhcpOp.OFFER, DhcpOp.REQUEST, DhcpOp.ACK]
        assert lease.amn_mac == AMN
        d = direct_acquire(direct, m, NET, now)
        assert (d.leased_ip, d.expiry) == (lease.leased_ip, lease.expiry)
    assert proxy.lease_table() == direct.lease_table()
    assert proxy.dump() == direct.dump()


def test_exchange_invariant():
    s = server()
    with pytest.raises(ValueError):
        s.allocate(mac("02:00:00:00:01:01"), NET, 0, broadcast=False, requesting_node=AMN)
    with pytest.raises(ValueError):
        amn_acquire(s, AMN, ip("10.1.0.0"), mac("02:00:00:00:01:01"), NET, 0)


def test_reacquire_same_address_and_renew():
    s = server()
    m = mac("02:00:00:00:01:01")
    a = direct_acquire(s, m, NET, 0)
    b = direct_acquire(s, m, NET, 10)
    assert a.leased_ip == b.leased_ip
    r = renew(s, m, a, 200_000)
    assert r.expiry == 200_000 + 300_000
    other = mac("02:00:00:00:01:02")
    with pytest.raises(LeaseUnknown):
        s.renew(other, a.leased_ip, 200_001)


def test_expired_address_is_reused_and_old_renew_fails():
    s = server("10.2.0.100", "10.2.0.100")
    m1, m2 = mac("02:00:00:00:01:01"), mac("02:00:00:00:01:02")
    a = direct_acquire(s, m1, NET, 0)
    with pytest.raises(PoolExhausted):
        direct_acquire(s, m2, NET, 1)
    b = direct_acquire(s, m2, NET, 300_001)
    assert b.leased_ip == a.leased_ip
    with pytest.raises(LeaseUnknown):
        renew(s, m1, a, 300_002)


def test_unreachable_server():
    s = server()
    s.reachable = False
    with pytest.raises(ServerTimeout):
        direct_acquire(s, mac("02:00:00:00:01:01"), NET, 0)


def test_exchange_duration_mean():
    rng = np.random.default_rng(7)
    d = DelayModel().dhcp_exchange
    xs = [d.sample(rng) for _ in range(10_000)]
    assert abs(np.mean(xs) / 867 - 1) < 0.02
    assert min(xs) > 0
