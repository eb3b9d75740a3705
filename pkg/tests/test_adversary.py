import ipaddress

import numpy as np
import pytest

from cooproam import adversary
from cooproam.adversary import Kind, MaliciousProfile
from cooproam.cli import bundled
from cooproam.protocol import NodeState
from cooproam.sim import load_config, parse_config, run
from cooproam.wire import MAX_CHANNEL, MIN_CHANNEL, AmnDiscover, CacheEntry, InfoReq, IpReq, RelayReq, mac

ip = ipaddress.IPv4Address
SCENARIOS = ["adv_fake_ap_liar.cfg", "adv_dos_redirector.cfg", "adv_bad_amn.cfg", "adv_relay_abuser.cfg",
             "adv_spoofer.cfg"]
AP_B = CacheEntry(mac("00:0c:41:00:00:0b"), 11, ip("10.2.0.0"))


def honest_outcome(rep):
    """(scripted, completed, failed) counts over honest stations."""
    honest = {n for n, info in rep.nodes.items() if info["role"] in ("mobile", "static")}
    scripted = sum(c for n, c in rep.scripted_moves.items() if n in honest)
    done = sum(1 for n, _ in rep.records if n in honest)
    failed = sum(1 for n, _ in rep.failed_handoffs if n in honest)
    return scripted, done, failed


def worst_total(rep):
    return max(r.total for n, r in rep.records if rep.nodes[n]["role"] == "mobile")


@pytest.mark.parametrize("name", SCENARIOS)
@pytest.mark.parametrize("seed", [0, 7])
def test_honest_handoffs_complete(name, seed):
    cfg = load_config(bundled(name))
    rep = run(cfg, seed)
    scripted, done, failed = honest_outcome(rep)
    assert scripted > 0 and done == scripted and failed == 0
    assert worst_total(rep) <= 1.1 * worst_total(run(cfg, seed, "legacy"))
    assert rep.stray_relays == 0 and rep.forwarded_during_eapol == 0


@pytest.mark.parametrize("name, suspect", [("adv_fake_ap_liar.cfg", "02:00:00:00:66:01"),
                                           ("adv_dos_redirector.cfg", "02:00:00:00:66:02")])
def test_liars_get_marked(name, suspect):
    rep = run(load_config(bundled(name)), 0)
    assert rep.marks.get(mac(suspect), 0) >= 5


def test_bad_amn_costs_one_legacy_l3():
    rep = run(load_config(bundled("adv_bad_amn.cfg")), 0)
    l3 = [r.l3_time for n, r in rep.records if n == "mn"]
    slow = [x for x in l3 if x > 100]
    assert len(slow) == 1 and 600 < slow[0] < 1200
    assert any("reason=" in line for line in rep.security_log)


def test_relay_abuser_is_refused_and_cannot_leak():
    rep = run(load_config(bundled("adv_relay_abuser.cfg")), 0)
    assert [n for n, _ in rep.failed_handoffs] == ["abuser"]
    assert any("relay-cooldown" in line for line in rep.security_log)
    assert rep.stray_relays == 0 and rep.forwarded_during_eapol == 0


def test_spoofer_inert_without_spoofing():
    text = bundled("adv_spoofer.cfg").read_text()
    on = run(parse_config(text), 0)
    off = run(parse_config(text.replace("spoofing=true", "spoofing=false")), 0)
    assert any("relay-cooldown" in line for line in on.security_log)
    assert off.security_log == []


VICTIM = """\
[scenario] name=victim mask=24 fade=8000
[delays] open_auth_assoc=4.2 bridging=10.4
[subnet] id=10.1.0.0 router=10.1.0.1 pool=10.1.0.100-10.1.0.199
[subnet] id=10.2.0.0 router=10.2.0.1 pool=10.2.0.100-10.2.0.199
[subnet] id=10.3.0.0 router=10.3.0.1 pool=10.3.0.100-10.3.0.199
[ap] name=ap_a bssid=00:0c:41:00:00:0a channel=1 subnet=10.1.0.0
[ap] name=ap_b bssid=00:0c:41:00:00:0b channel=11 subnet=10.2.0.0
[node] name=mn mac=02:00:00:00:01:01 ap=ap_a relay=false
[node] name=liar mac=02:00:00:00:66:01 ap=ap_a malicious=fake_ap_liar
[cache] node=liar ap=ap_b
[cn] name=cn ip=10.9.0.10
[stream] src=cn dst=mn interval=20
[mobility] node=mn t=5000 ap=ap_b
"""


def test_victim_of_lie_falls_back_to_legacy_timing():
    rep = run(parse_config(VICTIM), 2)
    (_, rec), = rep.records
    assert rec.legacy_l3 and rec.l3_time > 500
    assert rec.total < 1.1 * 1210
    assert rep.failed_handoffs == []
    assert any("wrong-entry" in line for line in rep.security_log)


def profile_node():
    return NodeState(mac("02:00:00:00:66:09"), ip("10.1.0.50"), mac("00:0c:41:00:00:0a"), ip("10.1.0.0"),
                     ip("10.1.0.1"))


def test_forged_entries_are_wrong_but_well_formed():
    rng = np.random.default_rng(0)
    n = profile_node()
    n.cache.observe(AP_B, -60, 0)
    liar = adversary.forged_entries(MaliciousProfile(Kind.FAKE_AP_LIAR), n, rng)
    assert [e.bssid for e in liar] == [AP_B.bssid] and liar[0].subnet_id != AP_B.subnet_id
    forged = adversary.forged_entries(MaliciousProfile(Kind.DOS_REDIRECTOR), n, rng)
    assert forged[0].channel != AP_B.channel and len(forged) == 3
    assert all(MIN_CHANNEL <= e.channel <= MAX_CHANNEL for e in forged)


def test_profiles_only_react_to_their_triggers():
    rng = np.random.default_rng(0)
    n = profile_node()
    n.cache.observe(AP_B, -60, 0)
    req = InfoReq(mac("02:00:00:00:01:01"), ())
    assert adversary.on_inforeq(MaliciousProfile(Kind.BAD_AMN), n, req, rng) == []
    assert len(adversary.on_inforeq(MaliciousProfile(Kind.FAKE_AP_LIAR), n, req, rng)) == 1
    disc = AmnDiscover(mac("02:00:00:00:01:01"), ip("10.1.0.0"))
    assert len(adversary.on_amn_discover(MaliciousProfile(Kind.BAD_AMN), n, disc)) == 1
    ipreq = IpReq(mac("02:00:00:00:01:01"))
    out, = adversary.on_ip_req(MaliciousProfile(Kind.BAD_AMN), n, ipreq)
    assert out.msg.new_ip in adversary.BOGUS_NET
    dup, = adversary.on_ip_req(MaliciousProfile(Kind.BAD_AMN, variant="duplicate"), n, ipreq, taken=ip("10.1.0.7"))
    assert dup.msg.new_ip == ip("10.1.0.7")
    relay = RelayReq(mac("02:00:00:00:01:01"), ip("10.1.0.9"), ip("10.9.0.10"), n.mac, n.ip)
    spoofer = MaliciousProfile(Kind.SPOOFER, rate=1)
    assert adversary.act(spoofer, n, 0, rng, relay_target=relay) == []
    spoofer.open_network = True
    assert len(adversary.act(spoofer, n, 0, rng, relay_target=relay)) == 1
    assert MaliciousProfile(Kind.SPOOFER).interval is None
