"""Alert quorum against a brute-force oracle over small alert multisets."""

import itertools
import ipaddress

import numpy as np
import pytest

from cooproam.protocol import (NodeState, ProtocolConfig, on_amn_discover, on_amn_resp, on_infoalert,
                               on_inforeq, on_inforesp_observed, on_ip_resp)
from cooproam.cache import Cache
from cooproam.security import SelfReport, SuspicionLedger, Verdict, on_bad_ip, record_alert, verify_claim
from cooproam.wire import (AmnDiscover, AmnResp, CacheEntry, InfoAlert, InfoReq, InfoResp, IpResp,
                           MacAddress, mac)

SUSPECT = MacAddress.from_int(0xEE)
REPORTERS = [MacAddress.from_int(i) for i in range(1, 8)]


def oracle(alerts, threshold):
    """Index of the alert that marks the suspect, or None."""
    seen = set()
    for i, r in enumerate(alerts):
        seen.add(r)
        if len(seen) >= threshold:
            return i
    return None


def replay(alerts, threshold):
    led = SuspicionLedger(threshold)
    hits = [i for i, r in enumerate(alerts) if led.record_alert(SUSPECT, r, float(i))]
    return led, hits


@pytest.mark.parametrize("threshold", range(2, 7))
def test_multisets_match_oracle(threshold):
    for k in range(0, 8):
        for ms in itertools.combinations_with_replacement(REPORTERS, k):
            led, hits = replay(ms, threshold)
            want = oracle(ms, threshold)
            assert led.is_malicious(SUSPECT) == (want is not None) == (len(set(ms)) >= threshold)
            assert hits == ([] if want is None else [want])


@pytest.mark.parametrize("threshold", range(2, 5))
def test_every_ordering_matches_oracle(threshold):
    pool = REPORTERS[:4]
    for k in range(1, 7):
        for seq in itertools.product(pool, repeat=k):
            _, hits = replay(seq, threshold)
            want = oracle(seq, threshold)
            assert hits == ([] if want is None else [want])


def test_duplicates_never_mark():
    led = SuspicionLedger(2)
    for i in range(50):
        assert not led.record_alert(SUSPECT, REPORTERS[0], i)
    assert led.distinct_reporters(SUSPECT) == 1


def test_threshold_floor_and_self_report():
    with pytest.raises(ValueError):
        SuspicionLedger(1)
    with pytest.raises(SelfReport):
        SuspicionLedger().record_alert(SUSPECT, SUSPECT)
    led = record_alert(SuspicionLedger(2), SUSPECT, REPORTERS[0])
    assert led.distinct_reporters(SUSPECT) == 1


def test_verify_claim():
    c = Cache()
    e = CacheEntry(mac("00:0c:41:00:00:0a"), 1, ipaddress.IPv4Address("10.1.0.0"))
    c.observe(e, -50, 0)
    assert verify_claim(c, e) is Verdict.CONSISTENT
    assert verify_claim(c, CacheEntry(e.bssid, 6, e.subnet_id)) is Verdict.CONTRADICTS
    assert verify_claim(c, CacheEntry(mac("00:0c:41:00:00:0b"), 6, e.subnet_id)) is Verdict.UNKNOWN
    assert on_bad_ip(REPORTERS[0], SUSPECT) == InfoAlert(REPORTERS[0], SUSPECT)


def test_marked_node_is_ignored_everywhere():
    ip = ipaddress.IPv4Address
    ap = mac("00:0c:41:00:00:0a")
    node = NodeState(mac("02:00:00:00:00:01"), ip("10.1.0.50"), ap, ip("10.1.0.0"), ip("10.1.0.1"),
                     ledger=SuspicionLedger(2))
    node.cache.observe(CacheEntry(ap, 1, ip("10.1.0.0")), -50, 0)
    node.cache.observe(CacheEntry(mac("00:0c:41:00:00:0b"), 11, ip("10.2.0.0")), -70, 0)
    on_infoalert(node, InfoAlert(REPORTERS[0], SUSPECT), 1)
    assert on_infoalert(node, InfoAlert(REPORTERS[1], SUSPECT), 2)
    rng = np.random.default_rng(0)
    before = node.cache.entries()
    assert on_inforeq(node, InfoReq(SUSPECT, (CacheEntry(ap, 1, ip("10.1.0.0")),)), 3, rng) is None
    assert on_inforesp_observed(node, InfoResp(SUSPECT, node.mac, (CacheEntry(ap, 9, ip("10.7.0.0")),)), 3) == []
    assert node.cache.entries() == before
    assert on_amn_discover(node, AmnDiscover(SUSPECT, ip("10.1.0.0"))) is None
    assert on_amn_resp(node, AmnResp(SUSPECT, ip("10.2.0.9"), ip("10.2.0.1"))) is None
    assert on_ip_resp(node, IpResp(SUSPECT, node.mac, ip("10.2.0.9"), ip("10.2.0.1")), 3) is None
    assert not on_infoalert(node, InfoAlert(SUSPECT, REPORTERS[2]), 4)
    assert node.ledger.distinct_reporters(REPORTERS[2]) == 0
