"""Engine-side drivers that run the emulation machines over an :class:`LteCell`."""

from __future__ import annotations

from typing import Callable

from ..errors import AlreadyConnected, BearerNotActive, NotAssociated, Unreachable
from ..frames import FrameType, MacAddress, decode_frame, peek_type
from ..lte import Connection, Direction, LteCell
from ..sim.engine import Engine, Event
from ..sim.trace import Trace
from ..wlan import ApDescriptor, ApKind, LoadMeter, PowerState
from . import state as st


class EmulatedUe:
    """UE-side emulation layer sitting where NAS would be."""

    def __init__(self, engine: Engine, trace: Trace, ue_id: str, mac: MacAddress, cell: LteCell, *,
                 service_class: str = "background",
                 beacon_window: int = st.DEFAULT_BEACON_WINDOW_US,
                 on_deliver: Callable[[bytes], None] | None = None,
                 on_notify: Callable[[str, str], None] | None = None,
                 on_drop: Callable[[bytes], None] | None = None):
        self.engine = engine
        self.trace = trace
        self.ue_id = ue_id
        self.mac = mac
        self.cell = cell
        self.service_class = service_class
        self.beacon_window = beacon_window
        self.on_deliver = on_deliver
        self.on_notify = on_notify
        self.on_drop = on_drop
        self.state: st.UeEmuState | None = None
        self.conn: Connection | None = None
        self.mode: st.Mode | None = None
        self._timers: dict[str, Event] = {}
        cell.register_ue(ue_id, self)

    @property
    def phase(self) -> st.UePhase | None:
        return None if self.state is None else self.state.phase

    @property
    def associated(self) -> bool:
        return self.phase in (st.UePhase.ASSOCIATED, st.UePhase.SLEEPING)

    def power_on(self) -> None:
        self.trace.emit(self.ue_id, "ctrl", msg="PowerOn", window=self.beacon_window)
        self._apply(*st.ue_emu_start(self.mac, self.beacon_window))

    def step(self, event) -> None:
        if self.state is None:
            return
        self._apply(*st.ue_emu_step(self.state, event))

    # -- application side ----------------------------------------------------

    def send(self, sdu: bytes) -> None:
        if self.phase is st.UePhase.SLEEPING:
            self.step(st.WakeRequest())
        if self.phase is not st.UePhase.ASSOCIATED:
            raise NotAssociated(f"{self.ue_id} has no emulated association")
        self.step(st.AppData(sdu))

    def sleep(self) -> None:
        self.step(st.SleepRequest())

    def wake(self) -> None:
        self.step(st.WakeRequest())

    # -- LteCell UE handler --------------------------------------------------

    def mrb_pdu(self, pdu: bytes) -> None:
        self.step(st.BeaconReceived(pdu, self.engine.now))

    def rrc_connected(self, conn: Connection) -> None:
        if conn is self.conn:
            self.step(st.RrcConnected())

    def srb_pdu(self, pdu: bytes) -> None:
        self.step(st.PduFromSrb(pdu))

    def drb_activated(self, drb: int, pdu: bytes | None) -> None:
        self.step(st.DrbActivated(drb, pdu))

    def drb_pdu(self, drb: int, pdu: bytes) -> None:
        self.step(st.PduFromDrb(drb, pdu))

    def rrc_released(self, conn: Connection) -> None:
        if conn is self.conn:
            self.conn = None
            self.step(st.RrcReleased())

    # -- action execution ----------------------------------------------------

    def _apply(self, new_state: st.UeEmuState, actions: list) -> None:
        self.state = new_state
        for action in actions:
            self._execute(action)

    def _execute(self, action) -> None:
        if isinstance(action, st.RequestRrcConnect):
            try:
                self.conn = self.cell.rrc_connect(self.ue_id, self.service_class)
            except (Unreachable, AlreadyConnected) as exc:
                self.trace.emit(self.ue_id, "ctrl", msg="Diagnostic", detail=type(exc).__name__)
                self.step(st.RrcReleased())
        elif isinstance(action, st.SendOnSrb):
            self.cell.send_srb(self.conn, action.pdu, Direction.UL)
        elif isinstance(action, st.SendOnDrb):
            # overflow is reported by the cell itself
            try:
                if self.conn is None:
                    raise BearerNotActive(f"{self.ue_id} has no RRC connection")
                self.cell.send_drb(self.conn, action.drb, action.pdu, Direction.UL)
            except BearerNotActive:
                if self.on_drop is not None:
                    self.on_drop(action.pdu)
        elif isinstance(action, st.ReleaseRrc):
            if self.conn is not None:
                self.conn = None
                self.cell.release(self.ue_id)
        elif isinstance(action, st.DeliverUp):
            if self.on_deliver is not None:
                self.on_deliver(action.sdu)
        elif isinstance(action, st.EnterMode):
            self.mode = action.mode
            self.trace.emit(self.ue_id, "ctrl", msg="Mode", mode=action.mode.value)
        elif isinstance(action, st.StartTimer):
            self.engine.cancel(self._timers.get(action.name))
            self._timers[action.name] = self.engine.after(action.duration, self._timeout,
                                                          target=self.ue_id)
        elif isinstance(action, st.Notify):
            msg = "Diagnostic" if action.event == "UnexpectedEvent" else action.event
            self.trace.emit(self.ue_id, "ctrl", msg=msg, detail=action.detail or None)
            if self.on_notify is not None:
                self.on_notify(action.event, action.detail)

    def _timeout(self) -> None:
        self.step(st.BeaconTimeout(self.engine.now))


class EmulatedAp:
    """The eNB seen through the AP contract: an LTE cell that looks like Wi-Fi."""

    kind = ApKind.LTE_EMULATED

    def __init__(self, engine: Engine, trace: Trace, ap_id: str, cell: LteCell, *,
                 bssid: MacAddress, ssid: str, capacity_bps: int,
                 beacon_interval_tu: int = st.BEACON_INTERVAL_TU,
                 on_uplink: Callable[[str, str, bytes], None] | None = None,
                 on_notify: Callable[[str, str, str], None] | None = None,
                 on_drop: Callable[[str, str, bytes, str], None] | None = None):
        self.engine = engine
        self.trace = trace
        self.ap_id = ap_id
        self.cell = cell
        self.bssid = bssid
        self.ssid = ssid
        self.capacity = capacity_bps
        self.on_uplink = on_uplink
        self.on_notify = on_notify
        self.on_drop = on_drop
        self.ctx = st.EnbEmuContext(bssid, ssid, beacon_interval_tu)
        self.power = PowerState.AWAKE
        self.meter = LoadMeter()
        cell.enb_handler = self
        cell.on_beacon_slot = self._beacon_tick

    # -- abstract AP interface -----------------------------------------------

    def report(self) -> ApDescriptor:
        now = self.engine.now
        return ApDescriptor(self.ap_id, self.bssid, self.ssid, self.kind, self.capacity,
                            min(self.meter.rate(now), self.capacity), len(self.stations()),
                            self.power, now)

    def stations(self) -> list[str]:
        return self.ctx.associated()

    def deliver_downlink(self, ue_id: str, sdu: bytes) -> int | None:
        if self.power is PowerState.ASLEEP:
            raise NotAssociated(f"{ue_id} is not associated with {self.ap_id}")
        self.step(st.DownlinkData(ue_id, sdu))
        return None

    def set_power(self, state: PowerState) -> None:
        if state is self.power:
            return
        if state is PowerState.ASLEEP:
            for ue_id in sorted(self.ctx.connected):
                self.deauthenticate(ue_id)
        self.power = state
        self.step(st.SetBeaconing(state is PowerState.AWAKE))
        self.trace.emit(self.ap_id, "ctrl", msg="Power", state=state.value)

    def deauthenticate(self, ue_id: str) -> None:
        if ue_id in self.ctx.connected:
            self.step(st.Deauthenticate(ue_id))

    def sleeping(self, ue_id: str) -> bool:
        entry = self.ctx.ues.get(ue_id)
        return entry is not None and entry.sleeping

    # -- LteCell eNB handler -------------------------------------------------

    def ue_connected(self, ue_id: str, service_class: str) -> None:
        self.step(st.UeConnected(ue_id, service_class))

    def srb_pdu(self, ue_id: str, pdu: bytes) -> None:
        self.step(st.PduFromSrb(pdu, ue_id))

    def reconfig_complete(self, ue_id: str, drb: int) -> None:
        self.step(st.ReconfigComplete(ue_id, drb))

    def drb_pdu(self, ue_id: str, drb: int, pdu: bytes) -> None:
        self.step(st.PduFromDrb(drb, pdu, ue_id))

    def ue_released(self, ue_id: str) -> None:
        if ue_id in self.ctx.connected:
            was_associated = ue_id in self.ctx.associated()
            self.step(st.UeReleased(ue_id))
            if was_associated and self.on_notify is not None:
                self.on_notify(self.ap_id, "Disassociated", ue_id)

    def _beacon_tick(self) -> None:
        self.step(st.BeaconTick())

    # -- action execution ----------------------------------------------------

    def step(self, event) -> None:
        self.ctx, actions = st.enb_emu_step(self.ctx, event)
        for action in actions:
            self._execute(action)

    def _execute(self, action) -> None:
        if isinstance(action, st.BroadcastOnMrb):
            self.cell.broadcast_on_mrb(action.pdu)
        elif isinstance(action, st.RequestReconfigure):
            self.cell.reconfigure(self.cell.connection(action.ue), action.drb_config, action.pdu)
        elif isinstance(action, st.SendOnDrb):
            conn = self.cell.connection(action.ue)
            try:
                if conn is None:
                    raise BearerNotActive(f"{action.ue} has no RRC connection")
                sent = self.cell.send_drb(conn, action.drb, action.pdu, Direction.DL)
            except BearerNotActive:
                body = _data_body(action.pdu)
                if body and self.on_drop is not None:
                    self.on_drop(self.ap_id, action.ue, body, "bearer-released")
                return
            body = _data_body(action.pdu)
            if sent is not None and body:
                self.meter.add(sent, len(body))
        elif isinstance(action, st.SendOnSrb):
            conn = self.cell.connection(action.ue)
            if conn is not None:
                self.cell.send_srb(conn, action.pdu, Direction.DL)
        elif isinstance(action, st.ReleaseRrc):
            self.cell.release(action.ue)
        elif isinstance(action, st.DeliverUp):
            self.meter.add(self.engine.now, len(action.sdu))
            if self.on_uplink is not None:
                self.on_uplink(self.ap_id, action.ue, action.sdu)
        elif isinstance(action, st.Notify):
            msg = "Diagnostic" if action.event == "UnexpectedEvent" else action.event
            self.trace.emit(self.ap_id, "ctrl", msg=msg, ue=action.ue, detail=action.detail or None)
            if self.on_notify is not None:
                self.on_notify(self.ap_id, action.event, action.ue)


def _data_body(pdu: bytes) -> bytes:
    if peek_type(pdu) is not FrameType.DATA:
        return b""
    return decode_frame(pdu).body
