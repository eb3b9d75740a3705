"""Regenerate tests/data/golden_vectors.json (one fixed instance per message kind)."""

import ipaddress
import json
from pathlib import Path

from cooproam.wire import (AmnDiscover, AmnResp, CacheEntry, InfoAlert, InfoReq, InfoResp, IpReq, IpResp,
                           RelayReq, encode, mac)

ip = ipaddress.IPv4Address
MN, HELPER, AP_A, AP_B = (mac(x) for x in ("02:00:00:00:01:01", "02:00:00:00:0b:01",
                                           "00:0c:41:00:00:0a", "00:0c:41:00:00:0b"))
E_A = CacheEntry(AP_A, 1, ip("10.1.0.0"))
E_B = CacheEntry(AP_B, 11, ip("10.2.0.0"))

SAMPLES = [
    InfoReq(MN, (E_A,)),
    InfoResp(HELPER, MN, (E_B, E_A)),
    AmnDiscover(MN, ip("10.2.0.0")),
    AmnResp(HELPER, ip("10.2.0.100"), ip("10.2.0.1"), AP_B, True),
    IpReq(MN),
    IpResp(HELPER, MN, ip("10.2.0.101"), ip("10.2.0.1")),
    RelayReq(MN, ip("10.2.0.101"), ip("10.9.0.10"), HELPER, ip("10.2.0.100")),
    InfoAlert(HELPER, mac("02:00:00:00:66:01")),
]

if __name__ == "__main__":
    out = [{"tag": m.tag.name, "hex": encode(m).hex(), "repr": repr(m)} for m in SAMPLES]
    path = Path(__file__).resolve().parent.parent / "tests" / "data" / "golden_vectors.json"
    path.write_text(json.dumps(out, indent=1) + "\n")
    print(f"wrote {len(out)} vectors to {path}")
