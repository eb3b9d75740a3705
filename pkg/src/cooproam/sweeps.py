"""Generated scenarios for parameter sweeps.

``suppression_scenario`` builds a subnet with one roaming station and ``n``
helpers that all know the APs the roamer is missing. With zero network
latency every multicast arrives at once, so the only thing separating the
helpers is their random wait.
"""

from __future__ import annotations

from dataclasses import dataclass

from .sim import Simulator, parse_config
from .wire import InfoResp, MacAddress

AP_A = "00:0c:41:00:00:0a"
AP_B = "00:0c:41:00:00:0b"


def extra_bssid(j: int) -> str:
    return str(MacAddress.from_int(0x000C41000100 + j))


def suppression_scenario(n: int, extra: int = 4, net_latency: float = 0.0) -> str:
    lines = [
        f"[scenario] name=suppression_n{n} mask=24 fade=1000",
        f"[delays] net_latency={net_latency} open_auth_assoc=4.2",
        "[subnet] id=10.1.0.0 router=10.1.0.1 pool=10.1.0.100-10.1.0.199",
        "[subnet] id=10.2.0.0 router=10.2.0.1 pool=10.2.0.100-10.2.0.199",
        f"[ap] name=ap_a bssid={AP_A} channel=1 subnet=10.1.0.0",
        f"[ap] name=ap_b bssid={AP_B} channel=11 subnet=10.2.0.0",
        "[node] name=mn mac=02:00:00:00:01:01 ap=ap_a relay=false",
    ]
    for i in range(n):
        name = f"h{i}"
        lines.append(f"[node] name={name} mac={MacAddress.from_int(0x020000000A00 + i)} ap=ap_a")
        lines.append(f"[cache] node={name} ap=ap_b signal=-70")
        for j in range(extra):
            lines.append(f"[cache] node={name} ap={extra_bssid(j)} channel=6 subnet=10.2.0.0 signal=-80")
    lines.append("[mobility] node=mn t=3000 ap=ap_b")
    return "\n".join(lines) + "\n"


@dataclass
class SuppressionResult:
    n: int
    inforeq: int
    inforesp: int
    carried: dict        # bssid -> number of INFORESPs that carried it
    missing: set         # bssids the roamer lacked
    learned: set         # bssids the roamer holds after the run


def run_suppression(n: int, seed: int = 0, extra: int = 4, net_latency: float = 0.0) -> SuppressionResult:
    sim = Simulator(parse_config(suppression_scenario(n, extra, net_latency)), seed)
    carried: dict = {}
    inner = sim.multicast

    def watch(sender, msg, ttl):
        if isinstance(msg, InfoResp):
            for e in msg.entries:
                carried[str(e.bssid)] = carried.get(str(e.bssid), 0) + 1
        return inner(sender, msg, ttl)

    sim.multicast = watch
    report = sim.run()
    req = sum(1 for line in report.trace if line.split()[1:3] == ["mn", "tx"] and "InfoReq" in line)
    resp = sum(1 for line in report.trace if " tx InfoResp" in line)
    missing = {AP_B, *(extra_bssid(j) for j in range(extra))}
    learned = {str(e.bssid) for e in sim.nodes["mn"].state.cache.entries()}
    return SuppressionResult(n, req, resp, carried, missing, learned)
