"""Scenario files: one ``[section] key=value ...`` record per line.

Sections: scenario, delays, protocol, security, relay, subnet, link, ap,
node, cache, cn, stream, mobility, signal. Times are milliseconds unless
the key says otherwise (``lease`` is in seconds). See docs/scenario_format.md.
"""

from __future__ import annotations

import hashlib
import ipaddress
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..delays import DEFAULT_CV, DelayModel, Dist
from ..protocol import ProtocolConfig
from ..relay import DEFAULT_COOLDOWN_MS, DEFAULT_TIMEOUT_MS
from ..security import DEFAULT_THRESHOLD, MIN_THRESHOLD
from ..wire import MAX_CHANNEL, MIN_CHANNEL, MacAddress, InvalidField

AUTH_METHODS = ("eap-tls-1024", "eap-tls-2048", "peap")
PROFILE_KINDS = ("fake_ap_liar", "dos_redirector", "bad_amn", "relay_abuser", "spoofer")


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, fieldname: Optional[str] = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if fieldname:
            where.append(f"field '{fieldname}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.field = fieldname


@dataclass
class SubnetCfg:
    subnet_id: ipaddress.IPv4Address
    router_ip: ipaddress.IPv4Address
    pool_first: ipaddress.IPv4Address
    pool_last: ipaddress.IPv4Address
    lease_s: float = 300.0


@dataclass
class APCfg:
    name: str
    bssid: MacAddress
    channel: int
    subnet_id: ipaddress.IPv4Address
    requires_8021x: bool = False
    bridging: Optional[float] = None


@dataclass
class ProfileCfg:
    kind: str
    rate: float = 0.0
    variant: str = ""


@dataclass
class NodeCfg:
    name: str
    mac: MacAddress
    ap: str
    cr: bool = True
    assist: bool = True
    relay: bool = True
    auth: str = "eap-tls-1024"
    malicious: Optional[ProfileCfg] = None


@dataclass
class CacheSeed:
    node: str
    ap: str
    signal: float
    channel: Optional[int] = None
    subnet_id: Optional[ipaddress.IPv4Address] = None


@dataclass
class CNCfg:
    name: str
    ip: ipaddress.IPv4Address
    cooperative: bool = True


@dataclass
class StreamCfg:
    src: str
    dst: str
    interval: float = 20.0
    size: int = 160
    start: float = 0.0
    stop: Optional[float] = None


@dataclass
class MoveCfg:
    t: float
    node: str
    ap: str


@dataclass
class SignalPoint:
    t: float
    node: str
    ap: str
    dbm: float


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    prefixlen: int = 24
    duration: Optional[float] = None
    poll: float = 100.0
    fade: float = 3000.0
    strong: float = -50.0
    weak: float = -85.0
    redirect_latency: float = 0.0
    relay_idle: float = 500.0
    spoofing: bool = False
    threshold: int = DEFAULT_THRESHOLD
    relay_timeout: float = DEFAULT_TIMEOUT_MS
    relay_cooldown: float = DEFAULT_COOLDOWN_MS
    delays: DelayModel = field(default_factory=DelayModel)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    subnets: list = field(default_factory=list)
    links: list = field(default_factory=list)
    aps: list = field(default_factory=list)
    nodes: list = field(default_factory=list)
    caches: list = field(default_factory=list)
    cns: list = field(default_factory=list)
    streams: list = field(default_factory=list)
    moves: list = field(default_factory=list)
    signals: list = field(default_factory=list)

    def ap(self, key: str) -> APCfg:
        for a in self.aps:
            if a.name == key or str(a.bssid) == key:
                return a
        raise KeyError(key)

    def node(self, key: str) -> NodeCfg:
        for n in self.nodes:
            if n.name == key or str(n.mac) == key:
                return n
        raise KeyError(key)

    def end_time(self) -> float:
        if self.duration is not None:
            return self.duration
        last = max((m.t for m in self.moves), default=0.0)
        return last + 3000.0

    def topology_digest(self) -> str:
        """Hash of subnets, APs and node identities; equal for CR and legacy runs."""
        parts = [f"mask {self.prefixlen}"]
        parts += [f"subnet {s.subnet_id} {s.router_ip}" for s in self.subnets]
        parts += [f"ap {a.name} {a.bssid} {a.channel} {a.subnet_id} {int(a.requires_8021x)}" for a in self.aps]
        parts += [f"node {n.name} {n.mac} {n.ap}" for n in self.nodes]
        parts += [f"move {m.t!r} {m.node} {m.ap}" for m in self.moves]
        return hashlib.sha256("\n".join(parts).encode()).hexdigest()[:16]


_LINE = re.compile(r"^\[(\w+)\]\s*(.*)$")


class _Fields:
    def __init__(self, pairs: dict, line: int):
        self.pairs = dict(pairs)
        self.line = line

    def error(self, key: str, msg: str) -> ConfigError:
        return ConfigError(msg, self.line, key)

    def has(self, key: str) -> bool:
        return key in self.pairs

    def raw(self, key: str, default=None, required: bool = False) -> Optional[str]:
        if key not in self.pairs:
            if required:
                raise self.error(key, "missing required field")
            return default
        return self.pairs.pop(key)

    def str(self, key, default=None, required=False):
        return self.raw(key, default, required)

    def float(self, key, default=None, required=False, minimum=None):
        v = self.raw(key, None, required)
        if v is None:
            return default
        try:
            x = float(v)
        except ValueError:
            raise self.error(key, f"expected a number, got {v!r}") from None
        if minimum is not None and x < minimum:
            raise self.error(key, f"must be >= {minimum}, got {x}")
        return x

    def int(self, key, default=None, required=False, minimum=None, maximum=None):
        v = self.raw(key, None, required)
        if v is None:
            return default
        try:
            x = int(v)
        except ValueError:
            raise self.error(key, f"expected an integer, got {v!r}") from None
        if minimum is not None and x < minimum or maximum is not None and x > maximum:
            raise self.error(key, f"must be within {minimum}..{maximum}, got {x}")
        return x

    def bool(self, key, default=None, required=False):
        v = self.raw(key, None, required)
        if v is None:
            return default
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise self.error(key, f"expected true/false, got {v!r}")

    def ip(self, key, default=None, required=False):
        v = self.raw(key, None, required)
        if v is None:
            return default
        try:
            return ipaddress.IPv4Address(v)
        except ValueError:
            raise self.error(key, f"bad IPv4 address {v!r}") from None

    def mac(self, key, required=False):
        v = self.raw(key, None, required)
        if v is None:
            return None
        try:
            return MacAddress.parse(v)
        except InvalidField:
            raise self.error(key, f"bad MAC address {v!r}") from None

    def done(self) -> None:
        if self.pairs:
            key = next(iter(self.pairs))
            raise self.error(key, "unknown field")


def _split(body: str, line: int) -> dict:
    pairs = {}
    for tok in body.split():
        if "=" not in tok:
            raise ConfigError(f"expected key=value, got {tok!r}", line)
        k, v = tok.split("=", 1)
        if not k:
            raise ConfigError(f"empty key in {tok!r}", line)
        if k in pairs:
            raise ConfigError("duplicate field", line, k)
        pairs[k] = v
    return pairs


_DIST_KEYS = ("full_scan", "selective_scan", "open_auth_assoc", "dhcp_exchange", "l3_signaling", "l3_polling")


def _delays(cfg: ScenarioConfig, f: _Fields) -> None:
    d = cfg.delays
    cv = f.float("cv", None, minimum=0)
    for name in _DIST_KEYS:
        cur: Dist = getattr(d, name)
        mean = f.float(name, cur.mean, minimum=0)
        kind = f.str(f"{name}.dist", cur.kind)
        samples = f.str(f"{name}.samples")
        this_cv = f.float(f"{name}.cv", cv if cv is not None else cur.cv, minimum=0)
        try:
            if samples is not None:
                vals = [float(x) for x in samples.split(",") if x]
                setattr(d, name, Dist(0.0, this_cv, "replay", vals))
            else:
                setattr(d, name, Dist(mean, this_cv, kind))
        except ValueError as exc:
            raise f.error(name, str(exc)) from None
    for name in ("bridging", "first_packet_delay", "assoc_failure", "net_latency", "adhoc_latency"):
        setattr(d, name, f.float(name, getattr(d, name), minimum=0))
    split = f.float("auth_split", d.auth_split, minimum=0)
    if not 0 <= split <= 1:
        raise f.error("auth_split", "must lie in [0, 1]")
    d.auth_split = split
    auth_cv = cv if cv is not None else DEFAULT_CV
    for method in AUTH_METHODS:
        mean = f.float(f"auth.{method}", None, minimum=0)
        total = f.float(f"auth_total.{method}", None, minimum=0)
        if mean is not None:
            d.set_auth_mean(method, mean, auth_cv)
        elif total is not None:
            d.set_auth_total(method, total, auth_cv)
        elif cv is not None:
            d.set_auth_mean(method, d.auth_mean(method), auth_cv)


def parse_config(text: str, base_dir: Optional[Path] = None) -> ScenarioConfig:
    cfg = ScenarioConfig()
    cache_files = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if not m:
            raise ConfigError(f"expected '[section] key=value ...', got {raw.strip()!r}", lineno)
        section, body = m.group(1), m.group(2)
        f = _Fields(_split(body, lineno), lineno)
        if section == "scenario":
            cfg.name = f.str("name", cfg.name)
            cfg.prefixlen = f.int("mask", cfg.prefixlen, minimum=8, maximum=30)
            cfg.duration = f.float("duration", cfg.duration, minimum=0)
            cfg.poll = f.float("poll", cfg.poll, minimum=1)
            cfg.fade = f.float("fade", cfg.fade, minimum=0)
            cfg.strong = f.float("strong", cfg.strong)
            cfg.weak = f.float("weak", cfg.weak)
            cfg.redirect_latency = f.float("redirect_latency", cfg.redirect_latency, minimum=0)
            cfg.spoofing = f.bool("spoofing", cfg.spoofing)
        elif section == "delays":
            _delays(cfg, f)
        elif section == "protocol":
            p = cfg.protocol
            p.wait_window = f.float("wait_window", p.wait_window, minimum=0)
            p.request_deadline = f.float("request_deadline", p.request_deadline, minimum=0)
            p.max_ttl = f.int("max_ttl", p.max_ttl, minimum=1, maximum=255)
            p.amn_timeout = f.float("amn_timeout", p.amn_timeout, minimum=0)
            p.prepare_threshold = f.float("prepare_threshold", p.prepare_threshold)
            p.harvest_inforeq = f.bool("harvest", p.harvest_inforeq)
            p.assumed_lease = f.float("assumed_lease", p.assumed_lease, minimum=1)
        elif section == "security":
            cfg.threshold = f.int("threshold", cfg.threshold, minimum=MIN_THRESHOLD)
        elif section == "relay":
            cfg.relay_timeout = f.float("timeout", cfg.relay_timeout, minimum=0)
            cfg.relay_cooldown = f.float("cooldown", cfg.relay_cooldown, minimum=0)
            cfg.relay_idle = f.float("idle", cfg.relay_idle, minimum=0)
            cfg.protocol.relay_timeout = cfg.relay_timeout
        elif section == "subnet":
            sid = f.ip("id", required=True)
            pool = f.str("pool", required=True)
            try:
                first, last = (ipaddress.IPv4Address(x) for x in pool.split("-"))
            except ValueError:
                raise f.error("pool", f"expected first-last, got {pool!r}") from None
            cfg.subnets.append(SubnetCfg(sid, f.ip("router", required=True), first, last,
                                         f.float("lease", 300.0, minimum=1)))
        elif section == "link":
            cfg.links.append((f.ip("a", required=True), f.ip("b", required=True)))
        elif section == "ap":
            auth = f.str("auth", "open")
            if auth not in ("open", "8021x"):
                raise f.error("auth", f"expected open or 8021x, got {auth!r}")
            cfg.aps.append(APCfg(f.str("name", required=True), f.mac("bssid", required=True),
                                 f.int("channel", required=True, minimum=MIN_CHANNEL, maximum=MAX_CHANNEL),
                                 f.ip("subnet", required=True), auth == "8021x",
                                 f.float("bridging", None, minimum=0)))
        elif section == "node":
            kind = f.str("malicious")
            profile = None
            if kind is not None:
                if kind not in PROFILE_KINDS:
                    raise f.error("malicious", f"unknown profile {kind!r}")
                profile = ProfileCfg(kind, f.float("rate", 0.0, minimum=0), f.str("variant", ""))
            auth = f.str("auth", "eap-tls-1024")
            if auth not in AUTH_METHODS:
                raise f.error("auth", f"unknown method {auth!r}")
            cfg.nodes.append(NodeCfg(f.str("name", required=True), f.mac("mac", required=True),
                                     f.str("ap", required=True), f.bool("cr", True), f.bool("assist", True),
                                     f.bool("relay", True), auth, profile))
        elif section == "cache":
            node = f.str("node", required=True)
            path = f.str("file")
            if path is not None:
                cache_files.append((node, path, lineno))
            else:
                cfg.caches.append(CacheSeed(node, f.str("ap", required=True), f.float("signal", -70.0),
                                            f.int("channel", None, minimum=MIN_CHANNEL, maximum=MAX_CHANNEL),
                                            f.ip("subnet")))
        elif section == "cn":
            cfg.cns.append(CNCfg(f.str("name", required=True), f.ip("ip", required=True),
                                 f.bool("cooperative", True)))
        elif section == "stream":
            cfg.streams.append(StreamCfg(f.str("src", required=True), f.str("dst", required=True),
                                         f.float("interval", 20.0, minimum=0.001), f.int("size", 160, minimum=1),
                                         f.float("start", 0.0, minimum=0), f.float("stop", None, minimum=0)))
        elif section == "mobility":
            node = f.str("node", required=True)
            if f.has("aps"):
                aps = f.str("aps").split(",")
                start = f.float("start", required=True, minimum=0)
                every = f.float("every", required=True, minimum=1)
                count = f.int("count", required=True, minimum=0)
                for i in range(count):
                    cfg.moves.append(MoveCfg(start + i * every, node, aps[i % len(aps)]))
            else:
                cfg.moves.append(MoveCfg(f.float("t", required=True, minimum=0), node, f.str("ap", required=True)))
        elif section == "signal":
            cfg.signals.append(SignalPoint(f.float("t", required=True, minimum=0), f.str("node", required=True),
                                           f.str("ap", required=True), f.float("dbm", required=True)))
        else:
            raise ConfigError(f"unknown section [{section}]", lineno)
        f.done()
    for node, path, lineno in cache_files:
        _load_cache_file(cfg, node, path, base_dir, lineno)
    validate(cfg)
    return cfg


def _load_cache_file(cfg, node, path, base_dir, lineno):
    p = Path(path)
    if not p.is_absolute() and base_dir is not None:
        p = base_dir / p
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read cache file {p}: {exc}", lineno, "file") from None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        if len(line) != 4:
            raise ConfigError(f"{p}:{n}: expected 'bssid channel subnet signal'", lineno, "file")
        bssid, ch, sub, sig = line
        cfg.caches.append(CacheSeed(node, bssid, float(sig), int(ch), ipaddress.IPv4Address(sub)))


def validate(cfg: ScenarioConfig) -> None:
    subnets = {s.subnet_id for s in cfg.subnets}
    for s in cfg.subnets:
        net = ipaddress.IPv4Network((int(s.subnet_id), cfg.prefixlen), strict=False)
        if net.network_address != s.subnet_id:
            raise ConfigError(f"subnet {s.subnet_id} has host bits set under /{cfg.prefixlen}")
        for addr in (s.router_ip, s.pool_first, s.pool_last):
            if addr not in net:
                raise ConfigError(f"{addr} is outside subnet {net}")
    names = set()
    for a in cfg.aps:
        if a.subnet_id not in subnets:
            raise ConfigError(f"AP {a.name} refers to unknown subnet {a.subnet_id}")
        if a.name in names:
            raise ConfigError(f"duplicate AP name {a.name}")
        names.add(a.name)
    macs = set()
    for n in cfg.nodes:
        if n.mac in macs or n.name in names:
            raise ConfigError(f"duplicate node identity {n.name} / {n.mac}")
        macs.add(n.mac)
        names.add(n.name)
        try:
            cfg.ap(n.ap)
        except KeyError:
            raise ConfigError(f"node {n.name} starts on unknown AP {n.ap}") from None
    for c in cfg.cns:
        if c.name in names:
            raise ConfigError(f"duplicate name {c.name}")
        names.add(c.name)
    for c in cfg.caches:
        if not _has_node(cfg, c.node):
            _fail(f"cache seed for unknown node {c.node}")
        if c.channel is None:
            try:
                cfg.ap(c.ap)
            except KeyError:
                _fail(f"cache seed for unknown AP {c.ap}")
    for m in cfg.moves:
        if not _has_node(cfg, m.node):
            _fail(f"mobility for unknown node {m.node}")
        try:
            cfg.ap(m.ap)
        except KeyError:
            _fail(f"mobility to unknown AP {m.ap}")
    for s in cfg.streams:
        for end in (s.src, s.dst):
            if not _has_node(cfg, end) and all(c.name != end for c in cfg.cns):
                _fail(f"stream endpoint {end} is neither a node nor a CN")
    for a, b in cfg.links:
        if a not in subnets or b not in subnets:
            _fail(f"link {a}-{b} refers to an unknown subnet")


def _has_node(cfg, key) -> bool:
    try:
        cfg.node(key)
        return True
    except KeyError:
        return False


def _fail(msg):
    raise ConfigError(msg)


def load_config(path) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from None
    return parse_config(text, p.parent)
