"""RAT-agnostic decisions of the fog controller.

Everything here is a pure function of a :class:`RanView` (plus a request),
so replaying a view reproduces the decision exactly. The runtime that feeds
reports in and executes decisions lives in :mod:`frugal5g.sim.network`.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping

from .errors import Disconnected, InvariantViolation, NoCapacity, NotAssociated, StaleReport, Unreachable
from .wlan import ApDescriptor, ApKind

SERVICE_CLASSES = ("voice", "interactive", "background")
SLEEPABLE_KINDS = ("WlanAp", "MiddleMileNode")
EXTERNAL_KINDS = ("CnNode", "GatewayNode")
KIND_RANK = {ApKind.NATIVE_WIFI: 0, ApKind.LTE_EMULATED: 1}


@dataclass(frozen=True)
class FlowSpec:
    flow_id: str
    ue_id: str
    service_class: str
    demand: int
    assigned_ap: str | None = None
    path: tuple[str, ...] | None = None
    dst: str | None = None  # peer UE for local flows; None means "beyond the PoP"

    def __post_init__(self):
        if self.demand <= 0:
            raise InvariantViolation(f"flow {self.flow_id}: demand must be positive")
        if self.service_class not in SERVICE_CLASSES:
            raise InvariantViolation(f"flow {self.flow_id}: unknown service class {self.service_class!r}")
        if self.path is not None:
            if self.assigned_ap is None or len(self.path) < 2:
                raise InvariantViolation(f"flow {self.flow_id}: a path needs an assigned AP")
            if self.path[0] != self.ue_id or self.path[1] != self.assigned_ap:
                raise InvariantViolation(f"flow {self.flow_id}: path must start at UE then its AP")
            if self.dst is not None and self.path[-1] != self.dst:
                raise InvariantViolation(f"flow {self.flow_id}: local path must end at {self.dst}")

    @property
    def local(self) -> bool:
        return self.dst is not None


@dataclass(frozen=True)
class Topology:
    """Infrastructure graph. UEs are not nodes; their radio edges live in the view."""

    nodes: Mapping[str, str]                       # node id -> kind
    links: Mapping[tuple[str, str], int] = field(default_factory=dict)  # sorted pair -> bits/s

    def __post_init__(self):
        for a, b in self.links:
            if a not in self.nodes or b not in self.nodes:
                raise InvariantViolation(f"link {a}-{b} names an unknown node")
            if a >= b:
                raise InvariantViolation(f"link key {a}-{b} must be a sorted pair")

    @property
    def pop(self) -> str | None:
        return next((n for n in sorted(self.nodes) if self.nodes[n] == "PoP"), None)

    def neighbors(self, node: str) -> list[str]:
        out = [b if a == node else a for a, b in self.links if node in (a, b)]
        return sorted(out)

    def capacity(self, a: str, b: str) -> int:
        return self.links[(a, b) if a < b else (b, a)]

    def without(self, removed) -> "Topology":
        removed = set(removed)
        return Topology({n: k for n, k in self.nodes.items() if n not in removed},
                        {l: c for l, c in self.links.items() if not removed.intersection(l)})

    def access_only(self) -> "Topology":
        return self.without(n for n, k in self.nodes.items() if k in EXTERNAL_KINDS)


@dataclass(frozen=True)
class RanView:
    aps: Mapping[str, ApDescriptor]
    reachability: Mapping[str, frozenset[str]]
    flows: Mapping[str, FlowSpec]
    topology: Topology
    associations: Mapping[str, frozenset[str]] = field(default_factory=dict)

    def check(self) -> None:
        for f in self.flows.values():
            if f.assigned_ap is None:
                continue
            ap = self.aps.get(f.assigned_ap)
            if ap is None or not ap.awake or f.assigned_ap not in self.reachability.get(f.ue_id, ()):
                raise InvariantViolation(f"flow {f.flow_id} sits on an unusable AP {f.assigned_ap}")


# -- actions returned by handover --------------------------------------------

@dataclass(frozen=True)
class Associate:
    ue_id: str
    ap_id: str


@dataclass(frozen=True)
class Reroute:
    flow_id: str
    ap_id: str
    path: tuple[str, ...]


@dataclass(frozen=True)
class Deauth:
    ue_id: str
    ap_id: str


def view_digest(view: RanView) -> str:
    """Short stable digest of everything a decision may read."""
    doc = {
        "aps": {k: [a.kind.value, a.capacity, a.current_load, a.station_count, a.power_state.value,
                    a.timestamp] for k, a in sorted(view.aps.items())},
        "reach": {k: sorted(v) for k, v in sorted(view.reachability.items())},
        "assoc": {k: sorted(v) for k, v in sorted(view.associations.items())},
        "flows": {k: [f.ue_id, f.service_class, f.demand, f.assigned_ap, list(f.path or ()), f.dst]
                  for k, f in sorted(view.flows.items())},
        "nodes": sorted(view.topology.nodes.items()),
        "links": sorted([a, b, c] for (a, b), c in view.topology.links.items()),
    }
    raw = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(raw.encode()).hexdigest()[:16]


def ingest_report(view: RanView, report: ApDescriptor) -> RanView:
    old = view.aps.get(report.ap_id)
    if old is not None and report.timestamp < old.timestamp:
        raise StaleReport(f"{report.ap_id}: report at {report.timestamp} is older than {old.timestamp}")
    aps = dict(view.aps)
    aps[report.ap_id] = report
    return replace(view, aps=aps)


def utilization_after(ap: ApDescriptor, demand: int) -> Fraction:
    return Fraction(ap.current_load + demand, ap.capacity)


def select_rat(view: RanView, flow: FlowSpec) -> str:
    """Reachable awake AP with the lowest utilization once the flow is added.

    Ties go to native Wi-Fi, then to the smaller AP id.
    """
    best = None
    for ap_id in sorted(view.reachability.get(flow.ue_id, ())):
        ap = view.aps.get(ap_id)
        if ap is None or not ap.awake or ap.capacity - ap.current_load < flow.demand:
            continue
        key = (utilization_after(ap, flow.demand), KIND_RANK[ap.kind], ap_id)
        if best is None or key < best:
            best = key
    if best is None:
        raise NoCapacity(f"no reachable awake AP has {flow.demand} b/s spare for {flow.flow_id}")
    return best[2]


def _hops_to(topology: Topology, target: str) -> dict[str, int]:
    dist = {target: 0}
    queue = deque([target])
    while queue:
        n = queue.popleft()
        for m in topology.neighbors(n):
            if m not in dist:
                dist[m] = dist[n] + 1
                queue.append(m)
    return dist


def compute_path(topology: Topology, src: str, dst: str) -> list[str]:
    """Fewest hops; among equals the lexicographically smallest id sequence."""
    for n in (src, dst):
        if n not in topology.nodes:
            raise InvariantViolation(f"unknown node {n!r}")
    dist = _hops_to(topology, dst)
    if src not in dist:
        raise Disconnected(f"no path from {src} to {dst}")
    # Walking greedily to the smallest neighbour that is one hop closer yields
    # the lexicographic minimum: every such neighbour can still finish optimally.
    path = [src]
    while path[-1] != dst:
        here = path[-1]
        path.append(min(m for m in topology.neighbors(here) if dist.get(m) == dist[here] - 1))
    return path


def serving_ap(view: RanView, ue_id: str) -> str | None:
    """Where traffic for ``ue_id`` currently lands."""
    own = sorted((f.flow_id, f.assigned_ap) for f in view.flows.values()
                 if f.ue_id == ue_id and f.assigned_ap is not None)
    if own:
        return own[0][1]
    assoc = [a for a in view.associations.get(ue_id, ()) if a in view.aps and view.aps[a].awake]
    if not assoc:
        return None
    return min(assoc, key=lambda a: (KIND_RANK[view.aps[a].kind], a))


def flow_path(view: RanView, flow: FlowSpec, ap_id: str) -> tuple[str, ...]:
    """Route for ``flow`` when its UE sits on ``ap_id``."""
    if flow.local:
        peer_ap = serving_ap(view, flow.dst)
        if peer_ap is None:
            raise NotAssociated(f"{flow.dst} is not associated anywhere")
        return (flow.ue_id, *compute_path(view.topology.access_only(), ap_id, peer_ap), flow.dst)
    pop = view.topology.pop
    if pop is None:
        raise Disconnected("topology has no PoP")
    return (flow.ue_id, *compute_path(view.topology, ap_id, pop))


def handover(view: RanView, ue_id: str, to_ap: str) -> list:
    """Make-before-break: associate on target, move flows, then leave sources."""
    ap = view.aps.get(to_ap)
    if ap is None or not ap.awake or to_ap not in view.reachability.get(ue_id, ()):
        raise Unreachable(f"{to_ap} is not an awake AP within reach of {ue_id}")
    moving = sorted((f for f in view.flows.values() if f.ue_id == ue_id and f.assigned_ap != to_ap),
                    key=lambda f: f.flow_id)
    associated = to_ap in view.associations.get(ue_id, ())
    if not moving:
        return [] if associated or not any(f.ue_id == ue_id for f in view.flows.values()) else [
            Associate(ue_id, to_ap)]
    need = sum(f.demand for f in moving)
    if ap.capacity - ap.current_load < need:
        raise NoCapacity(f"{to_ap} lacks {need} b/s spare for {ue_id}")
    sources = sorted({f.assigned_ap for f in moving if f.assigned_ap is not None})
    # The moved UE's own flows now land on to_ap, so peers reach it there too.
    moved = dict(view.flows)
    for f in moving:
        moved[f.flow_id] = replace(f, assigned_ap=to_ap, path=None)
    after = replace(view, flows=moved)
    actions: list = [] if associated else [Associate(ue_id, to_ap)]
    for f in moving:
        actions.append(Reroute(f.flow_id, to_ap, flow_path(after, f, to_ap)))
    for f in sorted(view.flows.values(), key=lambda f: f.flow_id):
        if f.dst == ue_id and f.assigned_ap is not None and f.ue_id != ue_id:
            actions.append(Reroute(f.flow_id, f.assigned_ap, flow_path(after, f, f.assigned_ap)))
    actions.extend(Deauth(ue_id, s) for s in sources)
    return actions


def setup_local_path(view: RanView, ue_a: str, ue_b: str) -> list[str]:
    """UE-to-UE route that never leaves the access network."""
    ap_a, ap_b = serving_ap(view, ue_a), serving_ap(view, ue_b)
    for ue, ap in ((ue_a, ap_a), (ue_b, ap_b)):
        if ap is None:
            raise NotAssociated(f"{ue} is not associated anywhere")
    return [ue_a, *compute_path(view.topology.access_only(), ap_a, ap_b), ue_b]


# -- energy planning -----------------------------------------------------------

def _node_utilization(view: RanView, node: str) -> Fraction:
    ap = view.aps.get(node)
    if ap is not None:
        return Fraction(ap.current_load, ap.capacity)
    through = sum(f.demand for f in view.flows.values() if f.path and node in f.path)
    caps = [view.topology.capacity(node, m) for m in view.topology.neighbors(node)]
    return Fraction(through, max(caps)) if caps else Fraction(0)


def _egress(view: RanView, flow: FlowSpec, awake: Topology, sleeping) -> str | None:
    """Where a flow leaves the radio side when ``sleeping`` nodes are off."""
    if not flow.local:
        return awake.pop
    peer_ap = serving_ap(view, flow.dst)
    if peer_ap is not None and peer_ap not in sleeping:
        return peer_ap
    options = sorted(a for a in view.reachability.get(flow.dst, ()) if a in awake.nodes and a in view.aps)
    return options[0] if options else None


def plan_is_feasible(view: RanView, sleeping, demand: Mapping[str, int]) -> bool:
    """Greedy witness that the network still works with ``sleeping`` nodes off."""
    sleeping = frozenset(sleeping)
    awake = view.topology.without(sleeping)
    pop = awake.pop
    if pop is None:
        return not any(view.associations.values())
    connected = set(_hops_to(awake, pop))

    def usable(ap_id: str) -> bool:
        return ap_id in view.aps and ap_id in connected

    for ue in sorted(view.associations):
        if view.associations[ue] and not any(usable(a) for a in view.reachability.get(ue, ())):
            return False

    # the active flows are the load, so plan against full capacity
    ap_left = {a: d.capacity for a, d in view.aps.items()}
    link_left = dict(awake.links)
    flows = sorted((f for f in view.flows.values() if demand.get(f.flow_id, 0) > 0),
                   key=lambda f: (-demand[f.flow_id], f.flow_id))
    for f in flows:
        need = demand[f.flow_id]
        egress = _egress(view, f, awake, sleeping)
        if egress is None:
            return False
        best = None
        for ap_id in sorted(view.reachability.get(f.ue_id, ())):
            if not usable(ap_id) or ap_left[ap_id] < need:
                continue
            topo = awake if not f.local else awake.access_only()
            try:
                route = compute_path(topo, ap_id, egress)
            except (Disconnected, InvariantViolation):
                continue
            hops = [tuple(sorted(p)) for p in zip(route, route[1:])]
            if any(link_left[h] < need for h in hops):
                continue
            cap = view.aps[ap_id].capacity
            key = (Fraction(cap - ap_left[ap_id] + need, cap), KIND_RANK[view.aps[ap_id].kind], ap_id)
            if best is None or key < best[0]:
                best = (key, ap_id, hops)
        if best is None:
            return False
        _, ap_id, hops = best
        ap_left[ap_id] -= need
        for h in hops:
            link_left[h] -= need
    return True


def energy_plan(view: RanView, horizon_demand: Mapping[str, int] | None = None) -> frozenset[str]:
    """Greedy sleep set over WLAN APs and middle-mile nodes; the macro always stays up.

    ``horizon_demand`` overrides per-flow demand for the planning horizon;
    flows mapped to 0 are treated as idle.
    """
    demand = {fid: f.demand for fid, f in view.flows.items()}
    if horizon_demand:
        demand.update(horizon_demand)
    candidates = sorted(n for n, k in view.topology.nodes.items() if k in SLEEPABLE_KINDS)
    order = sorted(candidates, key=lambda n: (_node_utilization(view, n), n))
    asleep: set[str] = set()
    progress = True
    while progress:
        progress = False
        for node in order:
            if node not in asleep and plan_is_feasible(view, asleep | {node}, demand):
                asleep.add(node)
                progress = True
                break
    return frozenset(asleep)
