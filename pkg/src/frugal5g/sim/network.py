"""A scenario brought to life: radios, backhaul, the PoP-side IWF and the fog controller.

:class:`Network` owns every simulated object of one run. It wires callbacks
between the radio models, forwards SDUs hop by hop over the middle mile,
runs the authentication exchange, and executes controller decisions.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import replace

from .. import controller as ctl
from ..emulation import EmulatedAp, EmulatedUe
from ..emulation.state import UePhase
from ..errors import (
    ApAsleep,
    AssocIdExhausted,
    Disconnected,
    NoCapacity,
    NoExternalNetwork,
    NotAssociated,
    NotAuthenticated,
    Unreachable,
)
from ..frames import FrameType, MacAddress, decode_frame, peek_type
from ..interworking import (
    BROADBAND_TAG,
    NON_3GPP_TAG,
    AuthState,
    Authenticator,
    EapMessage,
    NetworkMode,
    SessionSummary,
    Target,
    forward_uplink,
    supplicant_reply,
    sync_cn,
)
from ..lte import QUEUE_CAP, Direction, LinkModel, LinkParams, LteCell
from ..wlan import ApKind, PowerState, Station, WifiAp, sta_associate, wifi_send
from .engine import Engine
from .metrics import Metrics
from .packets import AppPacket, encode_app, encode_eap, decode_sdu
from .scenario import NodeSpec, Scenario, TrafficSpec
from .trace import POP_EXTERNAL, Trace
from .traffic import flow_rngs, send_times

BACKHAUL = "BH"


def position(node: NodeSpec, t: int) -> tuple[float, float]:
    """Piecewise-linear walk through the waypoints; parked before and after."""
    wps = node.waypoints
    if not wps:
        return node.pos
    if t <= wps[0][0]:
        return wps[0][1], wps[0][2]
    for (t0, x0, y0), (t1, x1, y1) in zip(wps, wps[1:]):
        if t <= t1:
            f = (t - t0) / (t1 - t0)
            return x0 + f * (x1 - x0), y0 + f * (y1 - y0)
    return wps[-1][1], wps[-1][2]


class UeNode:
    def __init__(self, spec: NodeSpec, mac: MacAddress, credential: str):
        self.id = spec.id
        self.spec = spec
        self.mac = mac
        self.credential = credential
        self.emu: EmulatedUe | None = None
        self.sta: Station | None = None
        self.queues: dict[str, deque[bytes]] = {}
        self.powered = False


class Network:
    def __init__(self, scenario: Scenario, seed: int | None = None):
        self.sc = scenario
        self.seed = scenario.seed if seed is None else seed
        self.mode = scenario.mode
        self.engine = Engine()
        self.trace = Trace(lambda: self.engine.now)
        self.metrics = Metrics()
        kinds = {n.id: n.kind for n in scenario.nodes}
        self.kinds = kinds
        self.specs = {n.id: n for n in scenario.nodes}
        self.pop = next((n.id for n in scenario.nodes if n.kind == "PoP"), None)
        self.macro = next((n.id for n in scenario.nodes if n.kind == "MacroEnb"), None)
        self.external = next((n.id for n in scenario.nodes if n.kind in ("CnNode", "GatewayNode")), None)
        self.fog = self.pop or self.macro
        self.topology = ctl.Topology(
            {n: k for n, k in kinds.items() if k != "Ue"},
            {tuple(sorted((l.a, l.b))): l.capacity_bps for l in scenario.links},
        )
        self.bh: dict[tuple[str, str], LinkModel] = {}
        for l in scenario.links:
            params = LinkParams(l.capacity_bps, l.latency_us)
            self.bh[(l.a, l.b)] = LinkModel(params, QUEUE_CAP)
            self.bh[(l.b, l.a)] = LinkModel(params, QUEUE_CAP)
        self.asleep: set[str] = set()
        self._topo_version = 0
        self._routes: dict = {}

        self.aps: dict[str, EmulatedAp | WifiAp] = {}
        self.ues: dict[str, UeNode] = {}
        self.cell: LteCell | None = None
        macs = {n.id: MacAddress.local(i + 1) for i, n in enumerate(scenario.nodes)}
        for n in scenario.nodes:
            if n.kind == "Ue":
                cred = n.credential if n.credential is not None else scenario.registry.get(n.id, "")
                self.ues[n.id] = UeNode(n, macs[n.id], cred)
        self._build_macro(macs)
        self._build_wlans(macs)
        self._build_ues()

        # interworking state
        self.auth = Authenticator(scenario.registry, self.mode)
        self.auth_ap: dict[str, str] = {}
        self.held: dict[str, deque] = {}
        self.epoch = 0
        self.cn_state = {ue: SessionSummary(ue, True, False, AuthState.IDLE.value)
                         for ue in sorted(scenario.registry)}

        # controller state
        self.flows = {f.id: f for f in scenario.flows}
        self.flow_specs: dict[str, ctl.FlowSpec] = {}
        self.dl_wait: dict[str, deque] = {f.id: deque() for f in scenario.flows}
        self.reports = {ap_id: ap.report() for ap_id, ap in sorted(self.aps.items())}
        self.assoc: dict[str, set[str]] = {ue: set() for ue in self.ues}
        self.reach: dict[str, frozenset[str]] = {ue: frozenset() for ue in self.ues}
        self.inflight: dict[tuple[str, str], int] = {}
        self.pending_deauth: set[tuple[str, str]] = set()
        self.pending_ho: dict[str, tuple[str, list]] = {}
        self._stopped: set[str] = set()

    # -- construction ------------------------------------------------------------

    def _build_macro(self, macs) -> None:
        if self.macro is None:
            return
        spec = self.specs[self.macro]
        radio = self.sc.radio
        self.cell = LteCell(
            self.engine, self.trace, spec.id,
            reachable=lambda ue: self.in_range(ue, spec.id),
            in_range_ues=lambda: [u for u in self.ues if self.in_range(u, spec.id)],
            uplink=LinkParams(spec.ul_bps, spec.latency_us),
            downlink=LinkParams(spec.dl_bps, spec.latency_us),
            mrb=LinkParams(radio.mrb_capacity_bps, radio.mrb_latency_us),
        )
        self.cell.on_drop = lambda ue, pdu, reason: self._radio_drop(self.macro, ue, _body(pdu), reason)
        self.aps[spec.id] = EmulatedAp(
            self.engine, self.trace, spec.id, self.cell, bssid=macs[spec.id], ssid=spec.ssid,
            capacity_bps=spec.capacity_bps,
            beacon_interval_tu=max(1, round(radio.beacon_period_us / 1024)),
            on_uplink=self._on_uplink,
            on_notify=self._enb_notify,
            on_drop=lambda ap, ue, body, reason: self._drop(body, reason, ap, ue=ue, ap=ap),
        )

    def _build_wlans(self, macs) -> None:
        for spec in self.sc.nodes:
            if spec.kind != "WlanAp":
                continue
            ap_id = spec.id
            self.aps[ap_id] = WifiAp(
                self.engine, self.trace, ap_id, macs[ap_id], spec.ssid,
                capacity_bps=spec.capacity_bps, link=LinkParams(spec.link_bps, spec.latency_us),
                beacon_period=self.sc.radio.beacon_period_us,
                in_range=lambda ue, a=ap_id: self.in_range(ue, a),
                on_uplink=self._on_uplink,
                on_drop=lambda ap, ue, body, reason: self._radio_drop(ap, ue, body, reason),
            )

    def _build_ues(self) -> None:
        window = self.sc.radio.beacon_period_us * self.sc.radio.beacon_window_periods
        for ue in self.ues.values():
            if self.cell is not None:
                ue.emu = EmulatedUe(
                    self.engine, self.trace, ue.id, ue.mac, self.cell,
                    service_class=ue.spec.service_class, beacon_window=window,
                    on_deliver=lambda sdu, u=ue.id: self._ue_receive(u, self.macro, sdu),
                    on_notify=lambda event, detail, u=ue.id: self._ue_emu_notify(u, event),
                    on_drop=lambda pdu, u=ue.id: self._drop(_body(pdu), "bearer-released", u,
                                                            ue=u, ap=self.macro),
                )
            ue.sta = Station(
                ue.id, ue.mac,
                on_deliver=lambda ap, sdu, u=ue.id: self._ue_receive(u, ap, sdu),
                on_associated=lambda assoc, u=ue.id: self._associated(u, assoc.ap.ap_id),
                on_lost=lambda assoc, reason, u=ue.id: self._assoc_lost(u, assoc.ap.ap_id),
            )

    # -- radio geometry ----------------------------------------------------------

    def in_range(self, ue_id: str, ap_id: str, margin: float = 1.0) -> bool:
        ue = self.ues.get(ue_id)
        if ue is None or not ue.powered:
            return False
        ap = self.specs[ap_id]
        x, y = position(ue.spec, self.engine.now)
        return math.hypot(x - ap.pos[0], y - ap.pos[1]) <= ap.range_m * margin

    def _awake_topology(self) -> ctl.Topology:
        key = ("topo", self._topo_version)
        topo = self._routes.get(key)
        if topo is None:
            topo = self.topology.without(self.asleep)
            self._routes[key] = topo
        return topo

    def route(self, a: str, b: str, access_only: bool = False) -> list[str] | None:
        key = (a, b, access_only, self._topo_version)
        if key not in self._routes:
            topo = self._awake_topology()
            if access_only:
                topo = topo.access_only()
            try:
                self._routes[key] = ctl.compute_path(topo, a, b)
            except (Disconnected, ValueError):
                self._routes[key] = None
        return self._routes[key]

    def _backhauled(self, ap_id: str) -> bool:
        return ap_id == self.fog or self.fog is None or self.route(ap_id, self.fog) is not None

    def selection_reach(self, ue_id: str, radio_only: bool = False) -> frozenset[str]:
        out = set()
        margin = self.sc.controller.selection_margin
        for ap_id, ap in self.aps.items():
            if ap.kind is ApKind.LTE_EMULATED:
                if ap_id in self.assoc[ue_id] and (radio_only or ap.power is PowerState.AWAKE):
                    out.add(ap_id)
            elif self.in_range(ue_id, ap_id, margin):
                if radio_only or (ap.power is PowerState.AWAKE and ap_id not in self.asleep
                                  and self._backhauled(ap_id)):
                    out.add(ap_id)
        return frozenset(out)

    # -- run -------------------------------------------------------------------------

    def start(self) -> None:
        sc = self.sc
        if self.cell is not None and sc.radio.mrb:
            self.cell.setup_mrb(sc.radio.mcch_period_us, sc.radio.beacon_period_us, start=0)
        for ap_id, ap in sorted(self.aps.items()):
            if isinstance(ap, WifiAp):
                ap.start(at=0)
        for ue in sorted(self.ues.values(), key=lambda u: u.id):
            self.engine.at(ue.spec.power_on_us, self._power_on, ue.id, target=ue.id)
        rngs = flow_rngs(self.seed, len(sc.flows))
        for spec, rng in zip(sc.flows, rngs):
            self.metrics.add_flow(spec.id, spec.start_us, spec.stop_us)
            self.engine.at(spec.start_us, self._flow_start, spec.id, target=self.fog or "")
            self.engine.at(spec.stop_us, self._flow_stop, spec.id, target=self.fog or "")
            times = send_times(spec, rng)
            first = next(times, None)
            if first is not None:
                self.engine.at(first, self._generate, spec, times, 0, target=spec.ue)
        for ev in sc.events:
            self.engine.at(ev.at_us, self._scenario_event, ev, target=ev.target)
        if self.aps:
            self.engine.at(0, self._tick, target=self.fog or "")
            self.engine.at(sc.controller.cadence_us, self._cadence, target=self.fog or "")
        if self.mode is NetworkMode.FIVE_G_CORE:
            self.engine.at(sc.controller.sync_period_us, self._sync, target=self.external)

    def run(self) -> dict:
        self.start()
        self.engine.run(until=self.sc.duration_us)
        for ue in sorted(self.ues.values(), key=lambda u: u.id):
            if ue.emu is not None and ue.emu.mode is not None:
                self.metrics.modes[ue.id] = ue.emu.mode.value
        return self.metrics.report(self.sc.name, self.seed, self.sc.duration_us)

    def _power_on(self, ue_id: str) -> None:
        ue = self.ues[ue_id]
        ue.powered = True
        if ue.emu is not None:
            ue.emu.power_on()
        else:
            self.trace.emit(ue_id, "ctrl", msg="PowerOn")

    # -- traffic -------------------------------------------------------------------

    def _generate(self, spec: TrafficSpec, times, pseq: int) -> None:
        now = self.engine.now
        sdu = encode_app(AppPacket(spec.id, pseq, now, spec.packet_size))
        self.metrics.sent(spec.id, pseq)
        if spec.direction == "uplink":
            q = self.ues[spec.ue].queues.setdefault(spec.id, deque())
            if len(q) >= QUEUE_CAP:
                self._drop(sdu, "ue-queue-overflow", spec.ue)
            else:
                q.append(sdu)
                self._flush_ue(spec.ue, spec.id)
        else:
            self._downlink_source(spec, sdu, pseq)
        nxt = next(times, None)
        if nxt is not None:
            self.engine.at(nxt, self._generate, spec, times, pseq + 1, target=spec.ue)

    def _downlink_source(self, spec: TrafficSpec, sdu: bytes, pseq: int) -> None:
        if self.mode is NetworkMode.STANDALONE or self.external is None:
            self._drop(sdu, "no-external-network", self.fog or spec.ue)
            return
        self.trace.emit(self.external, "boundary", msg="Data", flow=spec.id, pseq=pseq, ue=spec.ue,
                        dir="DL", tag=_tag(self.mode), boundary=POP_EXTERNAL)
        self._backhaul([self.external, self.pop], sdu, lambda: self._at_pop_downlink(spec.id, sdu),
                       ue=spec.ue, ap=None)

    def _at_pop_downlink(self, flow_id: str, sdu: bytes) -> None:
        ue = self.flows[flow_id].ue
        session = self.auth.sessions.get(ue)
        if session is not None and session.state is AuthState.FAILED:
            self._drop(sdu, "not-authenticated", self.fog, ue=ue)
            return
        q = self.dl_wait[flow_id]
        if len(q) >= QUEUE_CAP:
            self._drop(sdu, "pop-queue-overflow", self.fog, ue=ue)
            return
        q.append(sdu)
        self._dispatch_downlink(flow_id)

    def _dispatch_downlink(self, flow_id: str) -> None:
        ue = self.flows[flow_id].ue
        spec = self.flow_specs.get(flow_id)
        session = self.auth.sessions.get(ue)
        q = self.dl_wait[flow_id]
        if not q or spec is None or spec.assigned_ap is None or session is None or not session.authenticated:
            return
        ap = spec.assigned_ap
        if ap not in self.assoc[ue]:
            return
        path = self.route(self.pop, ap)
        if path is None:
            return
        while q:
            sdu = q.popleft()
            self._count(ue, ap, +1)
            self._backhaul(path, sdu, lambda s=sdu: self._deliver_down(ap, ue, s), ue=ue, ap=ap)

    def _flow_start(self, flow_id: str) -> None:
        spec = self.flows[flow_id]
        self.flow_specs[flow_id] = ctl.FlowSpec(flow_id, spec.ue, spec.service_class, spec.demand_bps,
                                                dst=spec.dst if spec.local else None)
        self._place(flow_id)

    def _flow_stop(self, flow_id: str) -> None:
        # keep the placement until queued packets drain; the flow no longer counts as demand
        spec = self.flow_specs.get(flow_id)
        if spec is not None:
            self.trace.emit(self.fog, "ctrl", msg="FlowStop", flow=flow_id)
            self._stopped.add(flow_id)

    # -- access side -------------------------------------------------------------------

    def _send_via(self, ue_id: str, ap_id: str, sdu: bytes) -> bool:
        # count before sending: an overflow is reported from inside the send
        self._count(ue_id, ap_id, +1)
        if not self._send_raw(ue_id, ap_id, sdu):
            self._count(ue_id, ap_id, -1)
            return False
        return True

    def _flush_ue(self, ue_id: str, flow_id: str) -> None:
        spec = self.flow_specs.get(flow_id)
        q = self.ues[ue_id].queues.get(flow_id)
        if not q or spec is None or spec.assigned_ap is None:
            return
        ap = spec.assigned_ap
        if ap not in self.assoc[ue_id]:
            return
        while q:
            if not self._send_via(ue_id, ap, q[0]):
                return
            q.popleft()

    def _flush_all(self, ue_id: str) -> None:
        for flow_id in sorted(self.ues[ue_id].queues):
            self._flush_ue(ue_id, flow_id)
        for flow_id in sorted(self.flows):
            if self.flows[flow_id].ue == ue_id and self.flows[flow_id].direction == "downlink":
                self._dispatch_downlink(flow_id)

    def _on_uplink(self, ap_id: str, ue_id: str, sdu: bytes) -> None:
        msg = decode_sdu(sdu)
        if isinstance(msg, EapMessage):
            self._backhaul(self._fog_path(ap_id), sdu, lambda: self._iwf_receive(msg), ue=ue_id, ap=None)
            return
        if isinstance(msg, AppPacket):
            self._count(ue_id, ap_id, -1)
        session = self.auth.sessions.get(ue_id)
        if session is None or session.state in (AuthState.IDLE, AuthState.CHALLENGED):
            held = self.held.setdefault(ue_id, deque())
            if len(held) >= QUEUE_CAP:
                self._drop(sdu, "auth-queue-overflow", ap_id, ue=ue_id)
            else:
                held.append((ap_id, sdu))
            return
        self._forward_up(ap_id, ue_id, sdu)

    def _forward_up(self, ap_id: str, ue_id: str, sdu: bytes) -> None:
        pkt = decode_sdu(sdu)
        if not isinstance(pkt, AppPacket):
            return
        flow = self.flows[pkt.flow]
        try:
            fwd = forward_uplink(self.auth.sessions.get(ue_id), self.mode, local=flow.local)
        except NotAuthenticated:
            self._drop(sdu, "not-authenticated", ap_id, ue=ue_id)
            return
        except NoExternalNetwork:
            self._drop(sdu, "no-external-network", ap_id, ue=ue_id)
            return
        if fwd.target is Target.LOCAL:
            peer = flow.dst
            peer_ap = self._delivery_ap(peer)
            path = None if peer_ap is None else self.route(ap_id, peer_ap, access_only=True)
            if path is None:
                self._drop(sdu, "not-associated" if peer_ap is None else "disconnected", ap_id, ue=peer)
                return
            self._count(peer, peer_ap, +1)
            self._backhaul(path, sdu, lambda: self._deliver_down(peer_ap, peer, sdu), ue=peer, ap=peer_ap)
            return
        path = self.route(ap_id, self.pop) if self.pop is not None else None
        if path is None:
            self._drop(sdu, "disconnected", ap_id, ue=ue_id)
            return
        self._backhaul(path + [self.external], sdu, lambda: self._at_external(ue_id, sdu, fwd.tag),
                       ue=ue_id, ap=None)

    def _at_external(self, ue_id: str, sdu: bytes, tag: str | None) -> None:
        pkt = decode_sdu(sdu)
        self.trace.emit(self.external, "boundary", msg="Data", flow=pkt.flow, pseq=pkt.pseq, ue=ue_id,
                        dir="UL", tag=tag, boundary=POP_EXTERNAL)
        self.metrics.delivered(pkt.flow, pkt.pseq, self.engine.now - pkt.sent_at, pkt.size)

    def _deliver_down(self, ap_id: str, ue_id: str, sdu: bytes) -> None:
        ap = self.aps[ap_id]
        try:
            ap.deliver_downlink(ue_id, sdu)
        except NotAssociated:
            self._drop(sdu, "not-associated", ap_id, ue=ue_id, ap=ap_id)

    def _ue_receive(self, ue_id: str, ap_id: str, sdu: bytes) -> None:
        msg = decode_sdu(sdu)
        if isinstance(msg, EapMessage):
            self._supplicant(ue_id, ap_id, msg)
        elif isinstance(msg, AppPacket):
            self._count(ue_id, ap_id, -1)
            self.metrics.delivered(msg.flow, msg.pseq, self.engine.now - msg.sent_at, msg.size)

    def _delivery_ap(self, ue_id: str) -> str | None:
        own = sorted((f.flow_id, f.assigned_ap) for f in self.flow_specs.values()
                     if f.ue_id == ue_id and f.assigned_ap in self.assoc[ue_id])
        if own:
            return own[0][1]
        options = [a for a in self.assoc[ue_id] if self.aps[a].power is PowerState.AWAKE]
        return min(options, key=lambda a: (ctl.KIND_RANK[self.aps[a].kind], a)) if options else None

    # -- backhaul ---------------------------------------------------------------------

    def _fog_path(self, ap_id: str) -> list[str]:
        if ap_id == self.fog:
            return [ap_id]
        return self.route(ap_id, self.fog) or [ap_id]

    def _backhaul(self, path: list[str], sdu: bytes, done, *, ue: str | None, ap: str | None, hop: int = 0) -> None:
        if hop >= len(path) - 1:
            done()
            return
        a, b = path[hop], path[hop + 1]
        if b in self.asleep or a in self.asleep:
            self._drop(sdu, "node-asleep", a, ue=ue, ap=ap)
            return
        deliver_at = self.bh[(a, b)].offer(self.engine.now, len(sdu), BACKHAUL)
        if deliver_at is None:
            self._drop(sdu, "queue-overflow", a, ue=ue, ap=ap)
            return
        self.engine.at(deliver_at, self._hop, path, sdu, done, ue, ap, hop + 1, target=b)

    def _hop(self, path, sdu, done, ue, ap, hop) -> None:
        self._backhaul(path, sdu, done, ue=ue, ap=ap, hop=hop)

    # -- drops and drain accounting ------------------------------------------------------

    def _count(self, ue_id: str, ap_id: str | None, delta: int) -> None:
        if ap_id is None:
            return
        key = (ue_id, ap_id)
        n = self.inflight.get(key, 0) + delta
        self.inflight[key] = n
        if n == 0 and key in self.pending_deauth:
            self._do_deauth(ue_id, ap_id)

    def _radio_drop(self, ap_id: str, ue_id: str, body: bytes, reason: str) -> None:
        """A drop the radio model already traced."""
        pkt = decode_sdu(body)
        if isinstance(pkt, AppPacket):
            self.metrics.dropped(pkt.flow, pkt.pseq, reason)
            self._count(ue_id, ap_id, -1)

    def _drop(self, sdu: bytes, reason: str, node: str, *, ue: str | None = None, ap: str | None = None) -> None:
        pkt = decode_sdu(sdu)
        if isinstance(pkt, AppPacket):
            self.trace.emit(node, "drop", msg="Data", flow=pkt.flow, pseq=pkt.pseq, reason=reason)
            self.metrics.dropped(pkt.flow, pkt.pseq, reason)
            if ue is not None:
                self._count(ue, ap, -1)
        elif isinstance(pkt, EapMessage):
            self.trace.emit(node, "drop", msg=pkt.kind.value, ue=pkt.ue_id, reason=reason)

    # -- association bookkeeping -----------------------------------------------------------

    def _ue_emu_notify(self, ue_id: str, event: str) -> None:
        if event == "Associated":
            self._associated(ue_id, self.macro)
        elif event in ("Deauthenticated", "RrcReleased", "AssociationRefused"):
            self._assoc_lost(ue_id, self.macro)

    def _enb_notify(self, ap_id: str, event: str, ue_id: str | None) -> None:
        if event == "Disassociated" and ue_id is not None:
            self._assoc_lost(ue_id, ap_id)

    def _associated(self, ue_id: str, ap_id: str) -> None:
        self.assoc[ue_id].add(ap_id)
        self._refresh_reach(ue_id)
        self._start_auth(ue_id, ap_id)
        pending = self.pending_ho.get(ue_id)
        if pending is not None and pending[0] == ap_id:
            self._complete_handover(ue_id)
        self._flush_all(ue_id)

    def _assoc_lost(self, ue_id: str, ap_id: str) -> None:
        if ap_id not in self.assoc[ue_id]:
            return
        self.assoc[ue_id].discard(ap_id)
        self.pending_deauth.discard((ue_id, ap_id))
        self._refresh_reach(ue_id)
        pending = self.pending_ho.get(ue_id)
        if pending is not None and pending[0] == ap_id:
            del self.pending_ho[ue_id]
        if self.auth_ap.get(ue_id) == ap_id:
            session = self.auth.sessions.get(ue_id)
            if session is not None and session.state in (AuthState.IDLE, AuthState.CHALLENGED):
                del self.auth.sessions[ue_id]
            del self.auth_ap[ue_id]
        for fid in sorted(self.flow_specs):
            f = self.flow_specs[fid]
            if f.ue_id == ue_id and f.assigned_ap == ap_id:
                self.flow_specs[fid] = replace(f, assigned_ap=None, path=None)
                self._decision("unassign", fid, out="AssociationLost")
                self._place(fid)
        if self.assoc[ue_id]:
            other = sorted(self.assoc[ue_id])[0]
            if ue_id not in self.auth.sessions:
                self._start_auth(ue_id, other)

    def _refresh_reach(self, ue_id: str) -> None:
        self.reach[ue_id] = self.selection_reach(ue_id)

    # -- authentication ------------------------------------------------------------------

    def _start_auth(self, ue_id: str, ap_id: str) -> None:
        if ue_id in self.auth.sessions:
            return
        self.auth_ap[ue_id] = ap_id
        msg = self.auth.start(ue_id)
        self.trace.emit(self.fog, "auth", msg=msg.kind.value, ue=ue_id, src=self.fog, dst=ue_id)
        self._eap_down(ue_id, msg)

    def _eap_down(self, ue_id: str, msg: EapMessage) -> None:
        ap_id = self.auth_ap.get(ue_id)
        if ap_id is None:
            return
        sdu = encode_eap(msg)
        path = list(reversed(self._fog_path(ap_id)))
        self._backhaul(path, sdu, lambda: self._eap_deliver(ap_id, ue_id, sdu), ue=ue_id, ap=None)

    def _eap_deliver(self, ap_id: str, ue_id: str, sdu: bytes) -> None:
        try:
            self.aps[ap_id].deliver_downlink(ue_id, sdu)
        except NotAssociated:
            self._drop(sdu, "not-associated", ap_id)

    def _supplicant(self, ue_id: str, ap_id: str, msg: EapMessage) -> None:
        reply = supplicant_reply(msg, self.ues[ue_id].credential)
        if reply is None:
            return
        self.trace.emit(ue_id, "auth", msg=reply.kind.value, ue=ue_id, src=ue_id, dst=self.fog)
        if not self._send_raw(ue_id, ap_id, encode_eap(reply)):
            self.trace.emit(ue_id, "drop", msg=reply.kind.value, ue=ue_id, reason="not-associated")

    def _send_raw(self, ue_id: str, ap_id: str, sdu: bytes) -> bool:
        ue = self.ues[ue_id]
        try:
            if ap_id == self.macro:
                ue.emu.send(sdu)
            else:
                assoc = ue.sta.associations.get(ap_id)
                if assoc is None:
                    return False
                wifi_send(assoc, sdu, Direction.UL)
        except NotAssociated:
            return False
        return True

    def _iwf_receive(self, msg: EapMessage) -> None:
        ue_id = msg.ue_id
        before = self.auth.sessions.get(ue_id)
        reply = self.auth.receive(msg)
        if reply is not None:
            self.trace.emit(self.fog, "auth", msg=reply.kind.value, ue=ue_id, src=self.fog, dst=ue_id)
            self._eap_down(ue_id, reply)
        after = self.auth.sessions.get(ue_id)
        if after is None or before is None or after.state is before.state:
            return
        if after.state in (AuthState.AUTHENTICATED, AuthState.FAILED):
            self.trace.emit(self.fog, "auth", msg="AuthResult", ue=ue_id, result=after.state.value,
                            method=after.method.value)
            if after.state is AuthState.AUTHENTICATED and self.mode is NetworkMode.FIVE_G_CORE:
                self._auth_notify(ue_id, after)
            held = self.held.pop(ue_id, deque())
            for ap_id, sdu in held:
                self._forward_up(ap_id, ue_id, sdu)
            self._flush_all(ue_id)

    def _auth_notify(self, ue_id: str, session) -> None:
        def arrive():
            self.trace.emit(self.external, "boundary", msg="AuthNotify", ue=ue_id, method=session.method.value,
                            nas_stub=session.nas_stub, tag=NON_3GPP_TAG, boundary=POP_EXTERNAL)
        self._backhaul([self.pop, self.external], b"", arrive, ue=None, ap=None)

    # -- AN/CN sync -------------------------------------------------------------------------

    def _sync(self) -> None:
        an = {}
        for ue in sorted(set(self.cn_state) | set(self.auth.sessions)):
            session = self.auth.sessions.get(ue)
            cached = self.cn_state.get(ue)
            an[ue] = SessionSummary(ue, cached.subscribed if cached else False, bool(self.assoc.get(ue)),
                                    session.state.value if session else AuthState.IDLE.value)
        self.epoch += 1
        rec = sync_cn(an, self.cn_state, self.epoch, self.mode, self.epoch - 1)
        for ue, summary in sorted(rec.reconciled.items()):
            session = self.auth.sessions.get(ue)
            if summary.auth_state == AuthState.FAILED.value and session is not None \
                    and session.state is not AuthState.FAILED:
                self.auth.revoke(ue)
                self.trace.emit(self.fog, "auth", msg="AuthResult", ue=ue, result=AuthState.FAILED.value,
                                method=session.method.value, cause="revoked")
                for ap_id, sdu in self.held.pop(ue, deque()):
                    self._drop(sdu, "not-authenticated", ap_id, ue=ue)
        self.cn_state = rec.reconciled
        self.trace.emit(self.external, "sync", msg="Sync", epoch=rec.epoch, an_digest=rec.an_digest,
                        cn_digest=rec.cn_digest, ues=len(rec.reconciled), boundary=POP_EXTERNAL)
        self.engine.after(self.sc.controller.sync_period_us, self._sync, target=self.external)

    # -- scenario events ----------------------------------------------------------------------

    def _scenario_event(self, ev) -> None:
        if ev.action == "revoke":
            cur = self.cn_state.get(ev.target, SessionSummary(ev.target))
            self.cn_state = dict(self.cn_state)
            self.cn_state[ev.target] = replace(cur, subscribed=False)
            self.trace.emit(self.external or self.fog, "ctrl", msg="Revoke", ue=ev.target)
        elif ev.action in ("sleep", "wake"):
            emu = self.ues[ev.target].emu
            if emu is not None and emu.associated:
                emu.sleep() if ev.action == "sleep" else emu.wake()
        elif ev.action == "power":
            if ev.state == "Asleep":
                self._sleep_node(ev.target)
            else:
                self._wake_node(ev.target)

    # -- controller runtime --------------------------------------------------------------------

    def view(self, *, planning: bool = False) -> ctl.RanView:
        aps = {}
        for ap_id, rep in sorted(self.reports.items()):
            committed = sum(f.demand for fid, f in self.flow_specs.items()
                            if f.assigned_ap == ap_id and fid not in self._stopped)
            load = min(rep.capacity, max(rep.current_load, committed))
            power = self.aps[ap_id].power if ap_id not in self.asleep else PowerState.ASLEEP
            aps[ap_id] = replace(rep, current_load=load, power_state=power,
                                 station_count=rep.station_count if power is PowerState.AWAKE else 0)
        flows = {fid: f for fid, f in sorted(self.flow_specs.items()) if fid not in self._stopped}
        reach = {ue: self.selection_reach(ue, radio_only=planning) for ue in sorted(self.ues)}
        assoc = {ue: frozenset(a) for ue, a in sorted(self.assoc.items())}
        topo = self.topology if planning else self._awake_topology()
        return ctl.RanView(aps, reach, flows, topo, assoc)

    def _decision(self, op: str, subject: str, view: ctl.RanView | None = None, **out) -> None:
        rec = self.trace.emit(self.fog, "ctrl", msg="Decision", op=op, subject=subject,
                              view=ctl.view_digest(view) if view is not None else None, **out)
        self.metrics.decision(rec.line())

    def _place(self, flow_id: str) -> None:
        f = self.flow_specs.get(flow_id)
        if f is None or f.assigned_ap is not None or flow_id in self._stopped:
            return
        v = self.view()
        try:
            ap_id = ctl.select_rat(v, f)
            path = ctl.flow_path(v, f, ap_id)
        except (NoCapacity, NotAssociated, Disconnected) as exc:
            self._decision("select_rat", flow_id, v, out=type(exc).__name__)
            return
        self._decision("select_rat", flow_id, v, out=ap_id, path=list(path))
        self.flow_specs[flow_id] = replace(f, assigned_ap=ap_id, path=path)
        if ap_id not in self.assoc[f.ue_id]:
            self._associate(f.ue_id, ap_id)
        self._flush_all(f.ue_id)

    def _associate(self, ue_id: str, ap_id: str) -> bool:
        if ap_id in self.assoc[ue_id]:
            return True
        ap = self.aps[ap_id]
        if isinstance(ap, WifiAp):
            try:
                sta_associate(self.ues[ue_id].sta, ap)
            except (ApAsleep, Unreachable, AssocIdExhausted) as exc:
                self.trace.emit(self.fog, "ctrl", msg="Diagnostic", ue=ue_id, ap=ap_id, detail=type(exc).__name__)
                return False
            return True
        return False

    def _tick(self) -> None:
        for ap_id, ap in sorted(self.aps.items()):
            rep = ap.report()
            prev = self.reports[ap_id]
            self.reports[ap_id] = rep
            if abs(rep.current_load - prev.current_load) > self.sc.controller.report_delta * rep.capacity:
                self._decision("report", ap_id, out="delta", load=rep.current_load)
                self._evaluate()
        for ue_id in sorted(self.ues):
            self._refresh_reach(ue_id)
            self._check_coverage(ue_id)
        self.engine.after(self.sc.controller.mobility_tick_us, self._tick, target=self.fog or "")

    def _check_coverage(self, ue_id: str) -> None:
        if ue_id in self.pending_ho:
            return
        mine = [f for f in self.flow_specs.values() if f.ue_id == ue_id and f.assigned_ap is not None
                and f.flow_id not in self._stopped]
        lost = sorted({f.assigned_ap for f in mine} - self.reach[ue_id])
        if lost:
            self._handover(ue_id, exclude=set(lost))

    def _handover(self, ue_id: str, exclude: set[str]) -> bool:
        v = self.view()
        mine = [f for f in v.flows.values() if f.ue_id == ue_id]
        if not mine:
            return False
        # choose the target as if the UE's flows were not yet placed
        flows = dict(v.flows)
        aps = dict(v.aps)
        for f in mine:
            flows[f.flow_id] = replace(f, assigned_ap=None, path=None)
        for ap_id, ap in aps.items():
            freed = sum(f.demand for f in mine if f.assigned_ap == ap_id)
            if freed:
                aps[ap_id] = replace(ap, current_load=max(0, ap.current_load - freed))
        reach = dict(v.reachability)
        reach[ue_id] = frozenset(reach.get(ue_id, frozenset()) - exclude)
        combined = ctl.FlowSpec(f"{ue_id}*", ue_id, "background", sum(f.demand for f in mine))
        probe = replace(v, aps=aps, flows=flows, reachability=reach)
        try:
            target = ctl.select_rat(probe, combined)
            actions = ctl.handover(replace(v, reachability=reach), ue_id, target)
        except (NoCapacity, Unreachable, NotAssociated, Disconnected) as exc:
            self._decision("handover", ue_id, v, out=type(exc).__name__)
            return False
        self._decision("handover", ue_id, v, out=target, actions=[_action_label(a) for a in actions])
        if not actions:
            return False
        self.pending_ho[ue_id] = (target, actions)
        if any(isinstance(a, ctl.Associate) for a in actions):
            self._associate(ue_id, target)
        else:
            self._complete_handover(ue_id)
        return True

    def _complete_handover(self, ue_id: str) -> None:
        target, actions = self.pending_ho.pop(ue_id)
        self.metrics.handovers += 1
        for a in actions:
            if isinstance(a, ctl.Reroute):
                f = self.flow_specs.get(a.flow_id)
                if f is None:
                    continue
                self.flow_specs[a.flow_id] = replace(f, assigned_ap=a.ap_id, path=a.path)
                self.trace.emit(self.fog, "ctrl", msg="Reroute", flow=a.flow_id, ap=a.ap_id, path=list(a.path))
            elif isinstance(a, ctl.Deauth):
                self.pending_deauth.add((a.ue_id, a.ap_id))
                if self.inflight.get((a.ue_id, a.ap_id), 0) == 0:
                    self._do_deauth(a.ue_id, a.ap_id)
        self._flush_all(ue_id)

    def _do_deauth(self, ue_id: str, ap_id: str) -> None:
        self.pending_deauth.discard((ue_id, ap_id))
        self.trace.emit(self.fog, "ctrl", msg="Deauth", ue=ue_id, ap=ap_id)
        self.aps[ap_id].deauthenticate(ue_id)
        self._assoc_lost(ue_id, ap_id)

    def _cadence(self) -> None:
        for ap_id, ap in sorted(self.aps.items()):
            rep = self.reports[ap_id]
            self.metrics.ap_sample(ap_id, self.engine.now, rep.current_load, rep.capacity)
        self._evaluate()
        self.engine.after(self.sc.controller.cadence_us, self._cadence, target=self.fog or "")

    def _evaluate(self) -> None:
        for fid in sorted(self.flow_specs):
            self._place(fid)
        if self.sc.controller.energy:
            self._energy()

    # -- energy -------------------------------------------------------------------------------

    def _energy(self) -> None:
        v = self.view(planning=True)
        plan = ctl.energy_plan(v)
        self._decision("energy_plan", self.fog, v, out=sorted(plan))
        busy = set()
        for fid, f in self.flow_specs.items():
            if fid in self._stopped:
                continue
            busy.update(f.path or ())
            if f.assigned_ap:
                busy.add(f.assigned_ap)
        for node in sorted(n for n, k in self.kinds.items() if k in ctl.SLEEPABLE_KINDS):
            asleep = node in self.asleep
            if node in plan and not asleep:
                if node in busy:
                    for ue_id in sorted({f.ue_id for f in self.flow_specs.values() if f.assigned_ap == node}):
                        if ue_id not in self.pending_ho:
                            self._handover(ue_id, exclude={node})
                elif not any(ap == node for (_, ap) in self.pending_deauth):
                    self._sleep_node(node)
            elif node not in plan and asleep:
                self._wake_node(node)

    def _sleep_node(self, node: str) -> None:
        if node in self.asleep:
            return
        ap = self.aps.get(node)
        if ap is not None:
            for ue_id in ap.stations():
                self._assoc_lost(ue_id, node)
            ap.set_power(PowerState.ASLEEP)
        else:
            self.trace.emit(node, "ctrl", msg="Power", state=PowerState.ASLEEP.value)
        self.asleep.add(node)
        self._topo_version += 1
        self.metrics.sleep(node, self.engine.now)

    def _wake_node(self, node: str) -> None:
        if node not in self.asleep:
            return
        self.asleep.discard(node)
        self._topo_version += 1
        ap = self.aps.get(node)
        if ap is not None:
            ap.set_power(PowerState.AWAKE)
        else:
            self.trace.emit(node, "ctrl", msg="Power", state=PowerState.AWAKE.value)
        self.metrics.wake(node, self.engine.now)


def _body(pdu: bytes) -> bytes:
    if peek_type(pdu) is not FrameType.DATA:
        return b""
    return decode_frame(pdu).body


def _tag(mode: NetworkMode) -> str:
    return NON_3GPP_TAG if mode is NetworkMode.FIVE_G_CORE else BROADBAND_TAG


def _action_label(a) -> str:
    if isinstance(a, ctl.Associate):
        return f"associate:{a.ap_id}"
    if isinstance(a, ctl.Reroute):
        return f"reroute:{a.flow_id}:{a.ap_id}"
    return f"deauth:{a.ap_id}"
