import heapq
import ipaddress

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cooproam.cache import SubnetLease
from cooproam.delays import DelayModel, Dist
from cooproam.protocol import (INFO, NodeState, NoAssistant, ProtocolConfig, TargetAP, discover_amns,
                               fire_suppression, needs_info, on_amn_discover, on_amn_resp, on_inforeq,
                               on_inforesp_observed, on_ip_resp, on_ip_timeout, on_request_deadline,
                               perform_handoff, prepare_l3, relay_request, request_info, select_rn)
from cooproam.wire import AmnResp, CacheEntry, InfoResp, IpResp, MacAddress, mac

ip = ipaddress.IPv4Address
NET_A, NET_B = ip("10.1.0.0"), ip("10.2.0.0")
AP_A = CacheEntry(mac("00:0c:41:00:00:0a"), 1, NET_A)
AP_B = CacheEntry(mac("00:0c:41:00:00:0b"), 11, NET_B)
CFG = ProtocolConfig()


def node(i, entries=(AP_A,), subnet=NET_A, **kw):
    n = NodeState(MacAddress.from_int(0x020000000000 + i), ip(f"10.1.0.{10 + i}"), entries[0].bssid, subnet,
                  ip("10.1.0.1"), **kw)
    for k, e in enumerate(entries):
        n.cache.observe(e, -50 - k, 0.0)
    return n


def extra_aps(k):
    return [CacheEntry(MacAddress.from_int(0x000C41000100 + j), 6, NET_B) for j in range(k)]


def exchange(rmn, helpers, seed):
    """Deliver one INFOREQ to every helper and play out the wait timers with zero latency."""
    rng = np.random.default_rng(seed)
    req, _ = request_info(rmn, 0.0)
    heap = []
    for h in helpers:
        t = on_inforeq(h, req, 0.0, rng)
        if t is not None:
            heapq.heappush(heap, (t.fire_at, h.mac.octets, h))
    sent = []
    while heap:
        at, _, h = heapq.heappop(heap)
        resp = fire_suppression(h, rmn.mac, at)
        if resp is None:
            continue
        sent.append(resp)
        for other in [rmn, *helpers]:
            if other is not h:
                on_inforesp_observed(other, resp, at)
    return sent


@settings(max_examples=200)
@given(st.integers(2, 20), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_suppression_one_response_per_request(n, missing, seed):
    known = [AP_A, *extra_aps(missing)]
    rmn = node(0)
    helpers = [node(i + 1, known) for i in range(n)]
    sent = exchange(rmn, helpers, seed)
    assert len(sent) == 1
    carried = [e for r in sent for e in r.entries]
    assert sorted(carried, key=lambda e: e.bssid) == sorted(known[1:], key=lambda e: e.bssid)
    assert all(rmn.cache.get(e.bssid) == e for e in known)
    assert not any(h.suppression_timers for h in helpers)


@settings(max_examples=200)
@given(st.integers(2, 20), st.integers(0, 2**32 - 1), st.data())
def test_each_entry_carried_once_with_partial_knowledge(n, seed, data):
    pool = extra_aps(8)
    helpers = []
    for i in range(n):
        have = data.draw(st.lists(st.sampled_from(pool), unique=True, max_size=8))
        helpers.append(node(i + 1, [AP_A, *have]))
    rmn = node(0)
    sent = exchange(rmn, helpers, seed)
    carried = [e.bssid for r in sent for e in r.entries]
    assert len(carried) == len(set(carried))
    union = {e.bssid for h in helpers for e in h.cache.entries()} - {AP_A.bssid}
    assert set(carried) == union


def test_no_response_without_overlap_or_news():
    rng = np.random.default_rng(0)
    req, _ = request_info(node(0, (AP_A, AP_B)), 0)
    assert on_inforeq(node(1, (AP_A, AP_B)), req, 0, rng) is None
    stranger = node(2, (AP_B,), subnet=NET_B)
    req2, _ = request_info(node(3), 0)
    assert on_inforeq(stranger, req2, 0, rng) is None
    h = node(4, (AP_A, AP_B))
    t1 = on_inforeq(h, req2, 0, rng)
    assert on_inforeq(h, req2, 10, rng) is t1


def test_ttl_escalation_and_give_up():
    n = node(0)
    assert needs_info(n)
    _, ttl = request_info(n, 0)
    assert ttl == 1
    seen = []
    t = 0.0
    while True:
        t = n.pending_requests[INFO].deadline
        out = on_request_deadline(n, INFO, t)
        if out is None:
            break
        seen.append(out[1])
    assert seen == [2, 3]
    assert n.info_exhausted and INFO not in n.pending_requests


def test_answered_request_stops_escalating():
    n = node(0)
    request_info(n, 0)
    on_inforesp_observed(n, InfoResp(mac("02:00:00:00:00:99"), n.mac, (AP_B,)), 5)
    assert on_request_deadline(n, INFO, CFG.request_deadline) is None
    assert not needs_info(n)


def test_contradiction_alerts_once_and_only_firsthand():
    v = node(1, (AP_A, AP_B))
    liar = mac("02:00:00:00:66:01")
    lie = CacheEntry(AP_B.bssid, 11, ip("10.3.0.0"))
    alerts = on_inforesp_observed(v, InfoResp(liar, mac("02:00:00:00:00:05"), (lie,)), 1)
    assert [a.suspect_mac for a in alerts] == [liar]
    assert v.cache.get(AP_B.bssid) == AP_B
    assert on_inforesp_observed(v, InfoResp(liar, mac("02:00:00:00:00:05"), (lie,)), 2) == []
    # second-hand knowledge is replaced, not defended
    r = node(2)
    on_inforesp_observed(r, InfoResp(liar, r.mac, (lie,)), 1)
    assert on_inforesp_observed(r, InfoResp(mac("02:00:00:00:00:07"), r.mac, (AP_B,)), 2) == []
    assert r.cache.get(AP_B.bssid) == AP_B


def amn_resp(i, relay=True, bssid=AP_B.bssid):
    return AmnResp(MacAddress.from_int(0x02000000B000 + i), ip(f"10.2.0.{100 + i}"), ip("10.2.0.1"), bssid, relay)


def test_amn_discovery_prepare_and_failover():
    r = node(0, (AP_A, AP_B))
    msg, ttl = discover_amns(r, NET_B, 0)
    assert ttl == 1 and msg.subnet_id == NET_B
    helper_b = node(9, (AP_B,), subnet=NET_B)
    helper_b.ip = ip("10.2.0.9")
    assert on_amn_discover(helper_b, msg) is not None
    assert on_amn_discover(node(8), msg) is None  # wrong subnet
    assert on_amn_resp(r, amn_resp(1)) == NET_B
    assert on_amn_resp(r, amn_resp(2)) == NET_B
    out = prepare_l3(r, 10)
    assert [a for a, _ in out] == [amn_resp(1).amn_mac]
    assert prepare_l3(r, 11) == []
    assert on_ip_timeout(r, NET_B, 10 + CFG.amn_timeout)[0] == amn_resp(2).amn_mac
    with pytest.raises(NoAssistant):
        on_ip_timeout(r, NET_B, 10 + 2 * CFG.amn_timeout)


def test_ip_resp_outside_subnet_falls_back():
    r = node(0, (AP_A, AP_B))
    on_amn_resp(r, amn_resp(1))
    prepare_l3(r, 0)
    alert = on_ip_resp(r, IpResp(amn_resp(1).amn_mac, r.mac, ip("192.0.2.5"), ip("10.2.0.1")), 5)
    assert alert is not None and alert.suspect_mac == amn_resp(1).amn_mac
    assert NET_B in r.fallback_subnets and amn_resp(1).amn_mac in r.blacklist
    assert prepare_l3(r, 6) == []


def test_good_ip_resp_stores_lease():
    r = node(0, (AP_A, AP_B))
    on_amn_resp(r, amn_resp(1))
    prepare_l3(r, 0)
    assert on_ip_resp(r, IpResp(amn_resp(1).amn_mac, r.mac, ip("10.2.0.150"), ip("10.2.0.1")), 5) is None
    assert r.leases.get(NET_B, 6).leased_ip == ip("10.2.0.150")


def test_select_rn_requires_matching_bssid_and_relay():
    r = node(0, (AP_A, AP_B))
    on_amn_resp(r, amn_resp(1, relay=False))
    on_amn_resp(r, amn_resp(2, bssid=mac("00:0c:41:00:00:ff")))
    assert select_rn(r, AP_B) is None
    on_amn_resp(r, amn_resp(3))
    rn = select_rn(r, AP_B)
    assert rn.amn_mac == amn_resp(3).amn_mac
    req = relay_request(r, rn, ip("10.9.0.10"))
    assert (req.mn_mac, req.rn_mac) == (r.mac, rn.amn_mac)


FIXED = DelayModel(full_scan=Dist(343, kind="fixed"), selective_scan=Dist(128.9, kind="fixed"),
                   open_auth_assoc=Dist(4.2, kind="fixed"), dhcp_exchange=Dist(867, kind="fixed"),
                   l3_signaling=Dist(6.84, kind="fixed"), l3_polling=Dist(4.56, kind="fixed"),
                   first_packet_delay=5.4)
FIXED.set_auth_mean("peap", 321, cv=0)
TARGET_B = TargetAP(AP_B.bssid, AP_B.channel, NET_B, ip("10.2.0.1"))
RNG = np.random.default_rng(0)


def lease_b():
    return SubnetLease(NET_B, ip("10.2.0.1"), ip("10.2.0.150"), expiry=1e9)


def test_handoff_legacy():
    n = node(0, (AP_A, AP_B), cr_enabled=False)
    rec = perform_handoff(n, TARGET_B, 0, FIXED, RNG).record
    assert (rec.l2_time, rec.l3_time, rec.used_cache, rec.legacy_l3) == (343, 867, False, True)
    assert rec.total == 1210


def test_handoff_cache_hit_with_lease():
    n = node(0, (AP_A, AP_B))
    n.leases.put(lease_b())
    out = perform_handoff(n, TARGET_B, 0, FIXED, RNG)
    rec = out.record
    assert rec.used_cache and rec.lease_applied and not rec.legacy_l3
    assert rec.l2_time == pytest.approx(4.2) and rec.l3_time == pytest.approx(11.4)
    assert (n.current_ap, n.subnet, n.ip) == (AP_B.bssid, NET_B, ip("10.2.0.150"))


def test_handoff_cache_miss_scans():
    n = node(0)
    assert perform_handoff(n, TARGET_B, 0, FIXED, RNG).record.l2_time == 343
    m = node(1)
    m.info_exhausted = True
    assert perform_handoff(m, TARGET_B, 0, FIXED, RNG).record.l2_time == pytest.approx(128.9)


def test_handoff_wrong_channel_and_wrong_subnet_blame_source():
    liar = mac("02:00:00:00:66:01")
    n = node(0)
    n.cache.merge([CacheEntry(AP_B.bssid, 6, NET_B)], 0, liar)
    out = perform_handoff(n, TARGET_B, 0, FIXED, RNG)
    assert out.record.l2_time == 10 + 343 and out.bad_entry_source == liar
    m = node(1)
    m.cache.merge([CacheEntry(AP_B.bssid, 11, ip("10.3.0.0"))], 0, liar)
    m.leases.put(SubnetLease(ip("10.3.0.0"), ip("10.3.0.1"), ip("10.3.0.5"), expiry=1e9))
    out = perform_handoff(m, TARGET_B, 0, FIXED, RNG)
    assert out.bad_entry_source == liar and out.record.legacy_l3 and out.record.l3_time == 867
    assert n.cache.get(AP_B.bssid) == AP_B


def test_handoff_duplicate_lease_rejected():
    n = node(0, (AP_A, AP_B))
    n.leases.put(SubnetLease(NET_B, ip("10.2.0.1"), ip("10.2.0.150"), expiry=1e9, amn_mac=amn_resp(1).amn_mac))
    out = perform_handoff(n, TARGET_B, 0, FIXED, RNG, lease_ok=lambda lease: False)
    assert out.record.legacy_l3 and out.alert.suspect_mac == amn_resp(1).amn_mac


def test_handoff_with_relay_overlaps_auth():
    n = node(0, (AP_A, AP_B), auth_method="peap")
    n.leases.put(lease_b())
    target = TargetAP(AP_B.bssid, 11, NET_B, ip("10.2.0.1"), requires_8021x=True)
    rec = perform_handoff(n, target, 0, FIXED, RNG, relay_arranged=True).record
    assert rec.used_relay and rec.overlapped
    assert rec.l2_time == pytest.approx(4.2 + 5.4)
    assert rec.total == pytest.approx(21.0)
    assert rec.auth_time == pytest.approx(321)
    legacy = node(1, (AP_A, AP_B), cr_enabled=False, auth_method="peap")
    assert perform_handoff(legacy, target, 0, FIXED, RNG).record.total == pytest.approx(1531)
