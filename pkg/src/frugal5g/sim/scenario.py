"""Scenario files: TOML in, validated :class:`Scenario` out.

The schema is documented in ``docs/scenario-schema.md``. Every rejection is
a :class:`SchemaError` naming the offending field and, where the source text
is available, its line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..errors import SchemaError
from ..interworking import NetworkMode
from .engine import ms

NODE_KINDS = ("PoP", "MacroEnb", "MiddleMileNode", "WlanAp", "Ue", "CnNode", "GatewayNode")
SERVICE_CLASSES = ("voice", "interactive", "background")
TRAFFIC_KINDS = ("CBR", "Poisson")
EVENT_ACTIONS = ("revoke", "sleep", "wake", "power")
EXTERNAL = "external"
MIN_PACKET = 32
MAX_PACKET = 2304
_ID_RE = re.compile(r"^[A-Za-z0-9_.-]+$")


@dataclass(frozen=True)
class RadioConfig:
    beacon_period_us: int = ms(102.4)
    mcch_period_us: int = ms(100)
    mrb: bool = True
    beacon_window_periods: int = 3
    mrb_capacity_bps: int = 2_000_000
    mrb_latency_us: int = ms(5)


@dataclass(frozen=True)
class ControllerConfig:
    cadence_us: int = ms(1000)
    report_delta: float = 0.10
    sync_period_us: int = ms(5000)
    selection_margin: float = 0.8
    mobility_tick_us: int = ms(100)
    energy: bool = False


@dataclass(frozen=True)
class NodeSpec:
    id: str
    kind: str
    pos: tuple[float, float] = (0.0, 0.0)
    range_m: float = 0.0
    capacity_bps: int = 0
    ul_bps: int = 10_000_000
    dl_bps: int = 20_000_000
    link_bps: int = 54_000_000
    latency_us: int = ms(5)
    ssid: str = "frugal5g"
    service_class: str = "background"
    credential: str | None = None
    waypoints: tuple[tuple[int, float, float], ...] = ()
    power_on_us: int = 0


@dataclass(frozen=True)
class LinkSpec:
    a: str
    b: str
    capacity_bps: int
    latency_us: int


@dataclass(frozen=True)
class TrafficSpec:
    id: str
    ue: str
    dst: str
    direction: str
    service_class: str
    kind: str
    rate: float           # packets per second
    packet_size: int      # bytes
    start_us: int
    stop_us: int

    @property
    def local(self) -> bool:
        return self.dst != EXTERNAL

    @property
    def demand_bps(self) -> int:
        return max(1, round(self.rate * self.packet_size * 8))


@dataclass(frozen=True)
class EventSpec:
    at_us: int
    action: str
    target: str
    state: str | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    duration_us: int
    mode: NetworkMode
    radio: RadioConfig = RadioConfig()
    controller: ControllerConfig = ControllerConfig()
    nodes: tuple[NodeSpec, ...] = ()
    links: tuple[LinkSpec, ...] = ()
    flows: tuple[TrafficSpec, ...] = ()
    events: tuple[EventSpec, ...] = ()
    registry: dict[str, str] = field(default_factory=dict)

    def node(self, node_id: str) -> NodeSpec:
        return next(n for n in self.nodes if n.id == node_id)

    def of_kind(self, kind: str) -> list[NodeSpec]:
        return [n for n in self.nodes if n.kind == kind]


# -- source locations ------------------------------------------------------------

class _Locator:
    """Maps (table, index, key) to a 1-based line number in the TOML text."""

    _HEADER = re.compile(r"^\s*(\[\[?)\s*([A-Za-z0-9_.-]+)\s*\]\]?")
    _KEY = re.compile(r"^\s*([A-Za-z0-9_-]+)\s*=")

    def __init__(self, text: str | None):
        self.lines: dict[tuple, int] = {}
        if text is None:
            return
        table, index, counts = "", None, {}
        for no, line in enumerate(text.splitlines(), 1):
            m = self._HEADER.match(line)
            if m:
                table = m.group(2)
                if m.group(1) == "[[":
                    index = counts.get(table, 0)
                    counts[table] = index + 1
                else:
                    index = None
                self.lines.setdefault((table, index, None), no)
                continue
            m = self._KEY.match(line)
            if m:
                self.lines.setdefault((table, index, m.group(1)), no)

    def line(self, table: str, index: int | None = None, key: str | None = None) -> int | None:
        return self.lines.get((table, index, key)) or self.lines.get((table, index, None))


class _Checker:
    def __init__(self, path: str, locator: _Locator):
        self.path = path
        self.loc = locator

    def fail(self, message: str, table: str = "", index: int | None = None, key: str | None = None):
        where = table if index is None else f"{table}[{index}]"
        if key:
            where = f"{where}.{key}" if where else key
        raise SchemaError(f"{where}: {message}" if where else message, self.path,
                          self.loc.line(table, index, key))

    def table(self, doc: dict, name: str, allowed, index: int | None = None) -> None:
        for key in doc:
            if key not in allowed:
                self.fail(f"unknown field {key!r}", name, index, key)

    def get(self, doc: dict, key: str, kind, default=..., *, table: str, index: int | None = None):
        if key not in doc:
            if default is ...:
                self.fail("missing required field", table, index, key)
            return default
        value = doc[key]
        ok = {
            "int": isinstance(value, int) and not isinstance(value, bool),
            "num": isinstance(value, (int, float)) and not isinstance(value, bool),
            "str": isinstance(value, str),
            "bool": isinstance(value, bool),
            "list": isinstance(value, list),
        }[kind]
        if not ok:
            self.fail(f"expected {kind}, got {type(value).__name__}", table, index, key)
        return value

    def positive(self, value, table, index, key):
        if value <= 0:
            self.fail("must be positive", table, index, key)
        return value

    def non_negative(self, value, table, index, key):
        if value < 0:
            self.fail("must not be negative", table, index, key)
        return value


_TOP = {"scenario", "radio", "controller", "registry", "node", "link", "flow", "event"}
_SCENARIO_KEYS = {"name", "seed", "duration_ms", "mode"}
_RADIO_KEYS = {"beacon_period_ms", "mcch_period_ms", "mrb", "beacon_window_periods",
               "mrb_capacity_mbps", "mrb_latency_ms"}
_CONTROLLER_KEYS = {"cadence_ms", "report_delta", "sync_period_ms", "selection_margin",
                    "mobility_tick_ms", "energy"}
_NODE_KEYS = {
    "PoP": set(),
    "MacroEnb": {"range_m", "capacity_mbps", "ul_mbps", "dl_mbps", "latency_ms", "ssid"},
    "MiddleMileNode": set(),
    "WlanAp": {"range_m", "capacity_mbps", "link_mbps", "latency_ms", "ssid"},
    "Ue": {"service_class", "credential", "waypoints", "power_on_ms"},
    "CnNode": set(),
    "GatewayNode": set(),
}
_LINK_KEYS = {"a", "b", "capacity_mbps", "latency_ms"}
_FLOW_KEYS = {"id", "ue", "dst", "direction", "service_class", "kind", "rate_pps", "packet_size",
              "start_ms", "stop_ms"}
_EVENT_KEYS = {"at_ms", "action", "target", "state"}


def _mbps(value: float) -> int:
    return round(value * 1_000_000)


def load_scenario(text: str, path: str = "<scenario>") -> Scenario:
    loc = _Locator(text)
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise SchemaError(f"not valid TOML: {exc}", path, int(m.group(1)) if m else None) from exc
    return scenario_from_dict(doc, path, loc)


def scenario_from_dict(doc: dict, path: str = "<scenario>", loc: _Locator | None = None) -> Scenario:
    c = _Checker(path, loc or _Locator(None))
    for key in doc:
        if key not in _TOP:
            c.fail(f"unknown table {key!r}", key)
    head = doc.get("scenario")
    if not isinstance(head, dict):
        c.fail("missing [scenario] table", "scenario")
    c.table(head, "scenario", _SCENARIO_KEYS)
    name = c.get(head, "name", "str", table="scenario")
    seed = c.get(head, "seed", "int", 0, table="scenario")
    duration = ms(c.positive(c.get(head, "duration_ms", "num", table="scenario"), "scenario", None, "duration_ms"))
    mode_name = c.get(head, "mode", "str", table="scenario")
    try:
        mode = NetworkMode(mode_name)
    except ValueError:
        c.fail(f"unknown mode {mode_name!r}; expected one of {[m.value for m in NetworkMode]}",
               "scenario", None, "mode")

    radio = _radio(c, doc.get("radio", {}))
    controller = _controller(c, doc.get("controller", {}))
    nodes = _nodes(c, doc.get("node", []))
    ids = {n.id: n for n in nodes}
    links = _links(c, doc.get("link", []), ids)
    _topology_rules(c, nodes, links, mode)
    flows = _flows(c, doc.get("flow", []), ids, duration)
    events = _events(c, doc.get("event", []), ids)
    registry = doc.get("registry", {})
    if not isinstance(registry, dict):
        c.fail("must be a table of UE id = credential", "registry")
    for ue, cred in registry.items():
        if ids.get(ue) is None or ids[ue].kind != "Ue":
            c.fail(f"{ue!r} is not a UE", "registry", None, ue)
        if not isinstance(cred, str):
            c.fail("credential must be a string", "registry", None, ue)
    return Scenario(name, seed, duration, mode, radio, controller, tuple(nodes), tuple(links),
                    tuple(flows), tuple(events), dict(registry))


def _radio(c: _Checker, doc) -> RadioConfig:
    if not isinstance(doc, dict):
        c.fail("must be a table", "radio")
    c.table(doc, "radio", _RADIO_KEYS)
    d = RadioConfig()
    g = lambda k, kind, default: c.get(doc, k, kind, default, table="radio")
    beacon = ms(c.positive(g("beacon_period_ms", "num", d.beacon_period_us / 1000), "radio", None, "beacon_period_ms"))
    mcch = ms(c.positive(g("mcch_period_ms", "num", d.mcch_period_us / 1000), "radio", None, "mcch_period_ms"))
    window = c.positive(g("beacon_window_periods", "int", d.beacon_window_periods), "radio", None,
                        "beacon_window_periods")
    cap = _mbps(c.positive(g("mrb_capacity_mbps", "num", d.mrb_capacity_bps / 1e6), "radio", None,
                           "mrb_capacity_mbps"))
    lat = ms(c.non_negative(g("mrb_latency_ms", "num", d.mrb_latency_us / 1000), "radio", None, "mrb_latency_ms"))
    return RadioConfig(beacon, mcch, g("mrb", "bool", True), window, cap, lat)


def _controller(c: _Checker, doc) -> ControllerConfig:
    if not isinstance(doc, dict):
        c.fail("must be a table", "controller")
    c.table(doc, "controller", _CONTROLLER_KEYS)
    d = ControllerConfig()
    t = "controller"
    g = lambda k, kind, default: c.get(doc, k, kind, default, table=t)
    cadence = ms(c.positive(g("cadence_ms", "num", d.cadence_us / 1000), t, None, "cadence_ms"))
    delta = g("report_delta", "num", d.report_delta)
    if not 0 < delta <= 1:
        c.fail("must lie in (0, 1]", t, None, "report_delta")
    sync = ms(c.positive(g("sync_period_ms", "num", d.sync_period_us / 1000), t, None, "sync_period_ms"))
    margin = g("selection_margin", "num", d.selection_margin)
    if not 0 < margin <= 1:
        c.fail("must lie in (0, 1]", t, None, "selection_margin")
    tick = ms(c.positive(g("mobility_tick_ms", "num", d.mobility_tick_us / 1000), t, None, "mobility_tick_ms"))
    return ControllerConfig(cadence, float(delta), sync, float(margin), tick, g("energy", "bool", False))


def _pair(c: _Checker, value, table, index, key) -> tuple[float, float]:
    if (not isinstance(value, list) or len(value) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
        c.fail("expected [x, y]", table, index, key)
    return (float(value[0]), float(value[1]))


def _nodes(c: _Checker, docs) -> list[NodeSpec]:
    if not isinstance(docs, list):
        c.fail("use [[node]] array tables", "node")
    nodes, seen = [], set()
    for i, doc in enumerate(docs):
        t = "node"
        node_id = c.get(doc, "id", "str", table=t, index=i)
        if not _ID_RE.match(node_id) or node_id in ("broadcast", EXTERNAL):
            c.fail(f"invalid node id {node_id!r}", t, i, "id")
        if node_id in seen:
            c.fail(f"duplicate node id {node_id!r}", t, i, "id")
        seen.add(node_id)
        kind = c.get(doc, "kind", "str", table=t, index=i)
        if kind not in NODE_KINDS:
            c.fail(f"unknown node kind {kind!r}; expected one of {list(NODE_KINDS)}", t, i, "kind")
        c.table(doc, t, {"id", "kind", "pos"} | _NODE_KEYS[kind], i)
        pos = _pair(c, doc["pos"], t, i, "pos") if "pos" in doc else (0.0, 0.0)
        g = lambda k, kind_, default: c.get(doc, k, kind_, default, table=t, index=i)
        fields: dict = {"id": node_id, "kind": kind, "pos": pos}
        if kind in ("MacroEnb", "WlanAp"):
            fields["range_m"] = float(c.positive(g("range_m", "num", ...), t, i, "range_m"))
            fields["capacity_bps"] = _mbps(c.positive(g("capacity_mbps", "num", ...), t, i, "capacity_mbps"))
            default_latency = 5 if kind == "MacroEnb" else 1
            fields["latency_us"] = ms(c.non_negative(g("latency_ms", "num", default_latency), t, i, "latency_ms"))
            ssid = g("ssid", "str", "frugal5g")
            if not 0 < len(ssid.encode()) <= 32 or "\t" in ssid:
                c.fail("SSID must be 1..32 bytes", t, i, "ssid")
            fields["ssid"] = ssid
        if kind == "MacroEnb":
            fields["ul_bps"] = _mbps(c.positive(g("ul_mbps", "num", 10), t, i, "ul_mbps"))
            fields["dl_bps"] = _mbps(c.positive(g("dl_mbps", "num", 20), t, i, "dl_mbps"))
        if kind == "WlanAp":
            fields["link_bps"] = _mbps(c.positive(g("link_mbps", "num", 54), t, i, "link_mbps"))
        if kind == "Ue":
            sc = g("service_class", "str", "background")
            if sc not in SERVICE_CLASSES:
                c.fail(f"unknown service class {sc!r}", t, i, "service_class")
            fields["service_class"] = sc
            fields["credential"] = g("credential", "str", None)
            fields["power_on_us"] = ms(c.non_negative(g("power_on_ms", "num", 0), t, i, "power_on_ms"))
            wps = []
            for w in g("waypoints", "list", []):
                if (not isinstance(w, list) or len(w) != 3
                        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in w)):
                    c.fail("each waypoint is [t_ms, x, y]", t, i, "waypoints")
                wps.append((ms(w[0]), float(w[1]), float(w[2])))
            if any(b[0] <= a[0] for a, b in zip(wps, wps[1:])) or any(w[0] < 0 for w in wps):
                c.fail("waypoint times must be non-negative and strictly increasing", t, i, "waypoints")
            fields["waypoints"] = tuple(wps)
        nodes.append(NodeSpec(**fields))
    return nodes


def _links(c: _Checker, docs, ids: dict[str, NodeSpec]) -> list[LinkSpec]:
    if not isinstance(docs, list):
        c.fail("use [[link]] array tables", "link")
    links, seen = [], set()
    for i, doc in enumerate(docs):
        t = "link"
        c.table(doc, t, _LINK_KEYS, i)
        a = c.get(doc, "a", "str", table=t, index=i)
        b = c.get(doc, "b", "str", table=t, index=i)
        for key, end in (("a", a), ("b", b)):
            if end not in ids:
                c.fail(f"unknown node {end!r}", t, i, key)
            if ids[end].kind == "Ue":
                c.fail("UEs attach over radio, not links", t, i, key)
        if a == b:
            c.fail("a link needs two distinct endpoints", t, i, "b")
        pair = tuple(sorted((a, b)))
        if pair in seen:
            c.fail(f"duplicate link {a}-{b}", t, i)
        seen.add(pair)
        cap = _mbps(c.positive(c.get(doc, "capacity_mbps", "num", table=t, index=i), t, i, "capacity_mbps"))
        lat = ms(c.non_negative(c.get(doc, "latency_ms", "num", 1, table=t, index=i), t, i, "latency_ms"))
        links.append(LinkSpec(a, b, cap, lat))
    return links


def _topology_rules(c: _Checker, nodes: list[NodeSpec], links: list[LinkSpec], mode: NetworkMode) -> None:
    kinds = {n.id: n.kind for n in nodes}
    pops = [n.id for n in nodes if n.kind == "PoP"]
    macros = [n.id for n in nodes if n.kind == "MacroEnb"]
    needs_pop = links or any(k in ("WlanAp", "MiddleMileNode", "CnNode", "GatewayNode") for k in kinds.values())
    if len(pops) > 1:
        c.fail(f"exactly one PoP allowed, found {pops}", "node")
    if needs_pop and not pops:
        c.fail("this topology needs a PoP node", "node")
    if len(macros) > 1:
        c.fail(f"at most one macro eNB per scenario, found {macros}", "node")
    adj: dict[str, set[str]] = {n: set() for n in kinds}
    for i, l in enumerate(links):
        adj[l.a].add(l.b)
        adj[l.b].add(l.a)
        ka, kb = kinds[l.a], kinds[l.b]
        if {ka, kb} == {"WlanAp", "PoP"}:
            c.fail("a WLAN AP must reach the PoP through the middle mile, not a direct link", "link", i)
        for end, kind, other in ((l.a, ka, kb), (l.b, kb, ka)):
            if kind in ("CnNode", "GatewayNode") and other != "PoP":
                c.fail(f"{end} ({kind}) may only link to the PoP", "link", i)
            if kind == "MacroEnb" and other != "PoP":
                c.fail(f"{end} (MacroEnb) connects directly to the PoP only", "link", i)
    for m in macros:
        if pops and pops[0] not in adj[m]:
            c.fail(f"macro eNB {m} must link directly to the PoP", "node")
    for n, kind in kinds.items():
        if kind == "WlanAp" and not any(kinds[m] == "MiddleMileNode" for m in adj[n]):
            c.fail(f"WLAN AP {n} must link to a middle-mile node", "node")
    cns = [n for n, k in kinds.items() if k == "CnNode"]
    gws = [n for n, k in kinds.items() if k == "GatewayNode"]
    if mode is NetworkMode.FIVE_G_CORE and len(cns) != 1:
        c.fail("FiveGCore mode needs exactly one CnNode", "scenario", None, "mode")
    if mode is NetworkMode.FIXED_BROADBAND and len(gws) != 1:
        c.fail("FixedBroadband mode needs exactly one GatewayNode", "scenario", None, "mode")
    if mode is NetworkMode.STANDALONE and (cns or gws):
        c.fail("Standalone mode has no external network nodes", "scenario", None, "mode")
    for n in cns + gws:
        if not pops or pops[0] not in adj[n]:
            c.fail(f"{n} must link to the PoP", "node")


def _flows(c: _Checker, docs, ids: dict[str, NodeSpec], duration: int) -> list[TrafficSpec]:
    if not isinstance(docs, list):
        c.fail("use [[flow]] array tables", "flow")
    flows, seen = [], set()
    for i, doc in enumerate(docs):
        t = "flow"
        c.table(doc, t, _FLOW_KEYS, i)
        g = lambda k, kind, default=...: c.get(doc, k, kind, default, table=t, index=i)
        fid = g("id", "str")
        if not _ID_RE.match(fid) or fid in seen:
            c.fail(f"flow id {fid!r} is invalid or repeated", t, i, "id")
        seen.add(fid)
        ue = g("ue", "str")
        if ue not in ids or ids[ue].kind != "Ue":
            c.fail(f"{ue!r} is not a UE", t, i, "ue")
        dst = g("dst", "str", EXTERNAL)
        if dst != EXTERNAL and (dst not in ids or ids[dst].kind != "Ue" or dst == ue):
            c.fail(f"dst must be {EXTERNAL!r} or another UE, got {dst!r}", t, i, "dst")
        direction = g("direction", "str", "uplink")
        if direction not in ("uplink", "downlink"):
            c.fail("direction is 'uplink' or 'downlink'", t, i, "direction")
        if dst != EXTERNAL and direction != "uplink":
            c.fail("UE-to-UE flows are declared from the sending UE (direction = 'uplink')", t, i, "direction")
        sc = g("service_class", "str", ids[ue].service_class)
        if sc not in SERVICE_CLASSES:
            c.fail(f"unknown service class {sc!r}", t, i, "service_class")
        kind = g("kind", "str", "CBR")
        if kind not in TRAFFIC_KINDS:
            c.fail(f"traffic kind must be one of {list(TRAFFIC_KINDS)}", t, i, "kind")
        rate = float(c.positive(g("rate_pps", "num"), t, i, "rate_pps"))
        size = g("packet_size", "int", 200)
        if not MIN_PACKET <= size <= MAX_PACKET:
            c.fail(f"packet_size must lie in {MIN_PACKET}..{MAX_PACKET}", t, i, "packet_size")
        start = ms(c.non_negative(g("start_ms", "num", 0), t, i, "start_ms"))
        stop = ms(g("stop_ms", "num", duration / 1000))
        if start >= stop:
            c.fail("start_ms must be before stop_ms", t, i, "stop_ms")
        flows.append(TrafficSpec(fid, ue, dst, direction, sc, kind, rate, size, start, stop))
    return flows


def _events(c: _Checker, docs, ids: dict[str, NodeSpec]) -> list[EventSpec]:
    if not isinstance(docs, list):
        c.fail("use [[event]] array tables", "event")
    out = []
    for i, doc in enumerate(docs):
        t = "event"
        c.table(doc, t, _EVENT_KEYS, i)
        at = ms(c.non_negative(c.get(doc, "at_ms", "num", table=t, index=i), t, i, "at_ms"))
        action = c.get(doc, "action", "str", table=t, index=i)
        if action not in EVENT_ACTIONS:
            c.fail(f"action must be one of {list(EVENT_ACTIONS)}", t, i, "action")
        target = c.get(doc, "target", "str", table=t, index=i)
        want = {"revoke": ("Ue",), "sleep": ("Ue",), "wake": ("Ue",),
                "power": ("WlanAp", "MiddleMileNode")}[action]
        if target not in ids or ids[target].kind not in want:
            c.fail(f"{action} needs a {' or '.join(want)} target, got {target!r}", t, i, "target")
        state = c.get(doc, "state", "str", None, table=t, index=i)
        if action == "power" and state not in ("Awake", "Asleep"):
            c.fail("power events need state = 'Awake' or 'Asleep'", t, i, "state")
        if action != "power" and state is not None:
            c.fail("only power events take a state", t, i, "state")
        out.append(EventSpec(at, action, target, state))
    return sorted(out, key=lambda e: e.at_us)


# -- bundled scenarios ------------------------------------------------------------

def bundled_names() -> list[str]:
    pkg = resources.files("frugal5g.scenarios")
    return sorted(p.name[:-5] for p in pkg.iterdir() if p.name.endswith(".toml"))


def bundled_text(name: str) -> str:
    return resources.files("frugal5g.scenarios").joinpath(f"{name}.toml").read_text()


def read_scenario(ref: str) -> Scenario:
    """Load a scenario by file path or by bundled name."""
    p = Path(ref)
    if p.is_file():
        return load_scenario(p.read_text(), str(p))
    if ref in bundled_names():
        return load_scenario(bundled_text(ref), f"{ref}.toml")
    raise SchemaError(f"no scenario file or bundled scenario named {ref!r}", ref)
