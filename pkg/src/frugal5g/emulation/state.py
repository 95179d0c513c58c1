"""Pure UE-side and eNB-side Wi-Fi emulation state machines.

Each step function maps ``(state, event)`` to ``(state', actions)`` and has
no other effect. Drivers in :mod:`frugal5g.emulation.drivers` execute the
actions against the LTE cell. An event with no edge from the current phase
leaves the state untouched and yields a single diagnostic ``Notify``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

from .. import frames
from ..errors import (
    AssocIdExhausted,
    FrameError,
    InvariantViolation,
    NotAssociated,
    NotData,
    TooLarge,
    UnknownUe,
)
from ..frames import FrameType, MacAddress
from ..lte import DEFAULT_BEACON_PERIOD_US, qci_for

BEACON_INTERVAL_TU = 100
DEFAULT_BEACON_WINDOW_US = 3 * DEFAULT_BEACON_PERIOD_US
EMULATION_DRB = 1
STATUS_SUCCESS = 0
STATUS_REFUSED = 1
REASON_LEAVING = 3


class Mode(enum.Enum):
    EMULATION = "Emulation"
    STANDARD_NAS = "StandardNas"


class UePhase(enum.Enum):
    SCANNING = "Scanning"
    RRC_CONNECTING = "RrcConnecting"
    PROBING = "Probing"
    AWAIT_DRB = "AwaitDrb"
    ASSOCIATING = "Associating"
    ASSOCIATED = "Associated"
    SLEEPING = "Sleeping"
    NAS_FALLBACK = "NasFallback"


class EnbPhase(enum.Enum):
    PROBE_SEEN = "ProbeSeen"
    DRB_OFFERED = "DrbOffered"
    ASSOCIATED = "Associated"


# -- events -----------------------------------------------------------------
# ``ue`` is only read by the eNB machine.

@dataclass(frozen=True)
class BeaconReceived:
    pdu: bytes
    at: int


@dataclass(frozen=True)
class BeaconTimeout:
    at: int


@dataclass(frozen=True)
class RrcConnected:
    pass


@dataclass(frozen=True)
class RrcReleased:
    pass


@dataclass(frozen=True)
class PduFromSrb:
    pdu: bytes
    ue: str | None = None


@dataclass(frozen=True)
class DrbActivated:
    drb: int
    embedded_pdu: bytes | None = None


@dataclass(frozen=True)
class PduFromDrb:
    drb: int
    pdu: bytes
    ue: str | None = None


@dataclass(frozen=True)
class AppData:
    sdu: bytes


@dataclass(frozen=True)
class SleepRequest:
    pass


@dataclass(frozen=True)
class WakeRequest:
    pass


@dataclass(frozen=True)
class UeConnected:
    ue: str
    service_class: str = "background"


@dataclass(frozen=True)
class ReconfigComplete:
    ue: str
    drb: int = EMULATION_DRB


@dataclass(frozen=True)
class DownlinkData:
    ue: str
    sdu: bytes


@dataclass(frozen=True)
class BeaconTick:
    pass


@dataclass(frozen=True)
class Deauthenticate:
    ue: str
    reason: int = REASON_LEAVING


@dataclass(frozen=True)
class UeReleased:
    ue: str


@dataclass(frozen=True)
class SetBeaconing:
    enabled: bool


# -- actions ----------------------------------------------------------------

@dataclass(frozen=True)
class RequestRrcConnect:
    pass


@dataclass(frozen=True)
class SendOnSrb:
    pdu: bytes
    ue: str | None = None


@dataclass(frozen=True)
class SendOnDrb:
    drb: int
    pdu: bytes
    ue: str | None = None


@dataclass(frozen=True)
class RequestReconfigure:
    drb_config: tuple[int, int]
    pdu: bytes | None
    ue: str | None = None


@dataclass(frozen=True)
class BroadcastOnMrb:
    pdu: bytes


@dataclass(frozen=True)
class ReleaseRrc:
    ue: str | None = None


@dataclass(frozen=True)
class DeliverUp:
    sdu: bytes
    ue: str | None = None


@dataclass(frozen=True)
class EnterMode:
    mode: Mode


@dataclass(frozen=True)
class StartTimer:
    name: str
    duration: int


@dataclass(frozen=True)
class Notify:
    event: str
    detail: str = ""
    ue: str | None = None


EmuAction = (RequestRrcConnect | SendOnSrb | SendOnDrb | RequestReconfigure | BroadcastOnMrb
             | ReleaseRrc | DeliverUp | EnterMode | StartTimer | Notify)

BEACON_TIMER = "beacon-timeout"


def _unexpected(phase, event, ue=None) -> Notify:
    return Notify("UnexpectedEvent", f"{type(event).__name__} in {phase.value}", ue)


def _decode(pdu: bytes | None) -> frames.MacFrame | None:
    if pdu is None:
        return None
    try:
        return frames.decode_frame(pdu)
    except (FrameError, InvariantViolation):
        return None


def _mgmt_status(frame: frames.MacFrame) -> frames.MgmtBody | None:
    try:
        return frames.decode_mgmt_body(frame.body)
    except (FrameError, InvariantViolation):
        return None


# -- UE side ----------------------------------------------------------------

@dataclass(frozen=True)
class UeEmuState:
    mac: MacAddress
    phase: UePhase = UePhase.SCANNING
    assoc_id: int | None = None
    drb_id: int | None = None
    last_beacon_at: int | None = None
    bssid: MacAddress | None = None
    ssid: str = ""
    seq: int = 0
    beacon_window: int = DEFAULT_BEACON_WINDOW_US

    def __post_init__(self):
        if self.phase in (UePhase.ASSOCIATED, UePhase.SLEEPING):
            if self.assoc_id is None or self.drb_id is None:
                raise InvariantViolation(f"{self.phase.value} requires assoc_id and drb_id")
        if self.assoc_id is not None and not 1 <= self.assoc_id <= frames.MAX_AID:
            raise InvariantViolation(f"association ID {self.assoc_id} outside 1..255")

    @property
    def mode(self) -> Mode | None:
        if self.phase is UePhase.NAS_FALLBACK:
            return Mode.STANDARD_NAS
        if self.phase is UePhase.SCANNING:
            return None
        return Mode.EMULATION


def ue_emu_start(mac: MacAddress, beacon_window: int = DEFAULT_BEACON_WINDOW_US):
    """Power-on state plus the beacon-detection timer it needs."""
    if beacon_window <= 0:
        raise InvariantViolation("beacon window must be positive")
    state = UeEmuState(mac, beacon_window=beacon_window)
    return state, [StartTimer(BEACON_TIMER, beacon_window)]


def _uplink_frame(state: UeEmuState, ft: FrameType, **body) -> tuple[UeEmuState, bytes]:
    frame = frames.build_mgmt(
        ft, state.mac,
        frames.BROADCAST if ft is FrameType.PROBE_REQUEST else state.bssid,
        state.bssid if state.bssid is not None else frames.BROADCAST,
        state.seq, **body,
    )
    return replace(state, seq=frames.next_seq(state.seq)), frames.encode_frame(frame)


def _uplink_data(state: UeEmuState, sdu: bytes, power_mgmt: bool = False) -> tuple[UeEmuState, bytes]:
    frame = encapsulate(sdu, state.mac, state.bssid, state.bssid, state.seq, power_mgmt=power_mgmt)
    return replace(state, seq=frames.next_seq(state.seq)), frames.encode_frame(frame)


def _rescan(state: UeEmuState, reason: str) -> tuple[UeEmuState, list]:
    state = replace(state, phase=UePhase.SCANNING, assoc_id=None, drb_id=None)
    return state, [Notify(reason), StartTimer(BEACON_TIMER, state.beacon_window)]


def ue_emu_step(state: UeEmuState, event) -> tuple[UeEmuState, list]:
    phase = state.phase
    if phase is UePhase.NAS_FALLBACK:
        return state, []

    if isinstance(event, BeaconReceived):
        return _ue_beacon(state, event)
    if isinstance(event, BeaconTimeout):
        if phase is not UePhase.SCANNING:
            return state, []  # timer outlived the scan it guarded
        log = [] if state.last_beacon_at is None else [state.last_beacon_at]
        if detect_mode(log, event.at, state.beacon_window) is Mode.EMULATION:
            return state, [StartTimer(BEACON_TIMER, state.beacon_window)]
        return replace(state, phase=UePhase.NAS_FALLBACK), [EnterMode(Mode.STANDARD_NAS)]
    if isinstance(event, RrcReleased):
        if phase is UePhase.SCANNING:
            return state, []
        return _rescan(state, "RrcReleased")

    if phase is UePhase.RRC_CONNECTING and isinstance(event, RrcConnected):
        state, pdu = _uplink_frame(replace(state, phase=UePhase.PROBING), FrameType.PROBE_REQUEST,
                                   ssid=state.ssid)
        return state, [SendOnSrb(pdu)]

    if phase is UePhase.PROBING and isinstance(event, PduFromSrb):
        frame = _decode(event.pdu)
        if frame is not None and frame.frame_type is FrameType.PROBE_RESPONSE:
            body = _mgmt_status(frame)
            if body is not None and body.status == STATUS_SUCCESS:
                return replace(state, phase=UePhase.AWAIT_DRB), []
            return _probe_refused(state)

    if phase in (UePhase.PROBING, UePhase.AWAIT_DRB) and isinstance(event, DrbActivated):
        if phase is UePhase.PROBING:
            frame = _decode(event.embedded_pdu)
            if frame is None or frame.frame_type is not FrameType.PROBE_RESPONSE:
                return state, [_unexpected(phase, event)]
            body = _mgmt_status(frame)
            if body is None or body.status != STATUS_SUCCESS:
                return _probe_refused(state)
        elif event.embedded_pdu is not None:
            return state, [_unexpected(phase, event)]
        state = replace(state, phase=UePhase.ASSOCIATING, drb_id=event.drb)
        state, pdu = _uplink_frame(state, FrameType.ASSOCIATION_REQUEST, ssid=state.ssid)
        return state, [SendOnDrb(event.drb, pdu)]

    if isinstance(event, PduFromDrb) and phase in (
        UePhase.ASSOCIATING, UePhase.ASSOCIATED, UePhase.SLEEPING
    ):
        frame = _decode(event.pdu)
        if frame is None:
            return state, [Notify("MalformedPdu", f"on DRB{event.drb}")]
        if frame.frame_type is FrameType.DEAUTHENTICATION:
            return _rescan(state, "Deauthenticated")
        if phase is UePhase.ASSOCIATING and frame.frame_type is FrameType.ASSOCIATION_RESPONSE:
            body = _mgmt_status(frame)
            if body is None or body.status != STATUS_SUCCESS or not 1 <= body.aid <= frames.MAX_AID:
                return _probe_refused(state)
            state = replace(state, phase=UePhase.ASSOCIATED, assoc_id=body.aid)
            return state, [Notify("Associated", f"aid={body.aid}")]
        if phase is not UePhase.ASSOCIATING and frame.frame_type is FrameType.DATA:
            return state, ([DeliverUp(frame.body)] if frame.body else [])

    if phase is UePhase.ASSOCIATED:
        if isinstance(event, AppData):
            state, pdu = _uplink_data(state, event.sdu)
            return state, [SendOnDrb(state.drb_id, pdu)]
        if isinstance(event, SleepRequest):
            state, pdu = _uplink_data(replace(state, phase=UePhase.SLEEPING), b"", power_mgmt=True)
            return state, [SendOnDrb(state.drb_id, pdu)]

    if phase is UePhase.SLEEPING and isinstance(event, WakeRequest):
        return _wake(state, "WakeRequest")

    return state, [_unexpected(phase, event)]


def _probe_refused(state: UeEmuState):
    state = replace(state, phase=UePhase.SCANNING, assoc_id=None, drb_id=None)
    return state, [Notify("AssociationRefused"), ReleaseRrc(), StartTimer(BEACON_TIMER, state.beacon_window)]


def _wake(state: UeEmuState, cause: str):
    state, pdu = _uplink_data(replace(state, phase=UePhase.ASSOCIATED), b"", power_mgmt=False)
    return state, [SendOnDrb(state.drb_id, pdu), Notify("Awake", cause)]


def _ue_beacon(state: UeEmuState, event: BeaconReceived):
    frame = _decode(event.pdu)
    if frame is None or frame.frame_type is not FrameType.BEACON:
        return state, [Notify("MalformedBeacon")]
    try:
        body = frames.decode_beacon_body(frame.body)
    except (FrameError, InvariantViolation):
        return state, [Notify("MalformedBeacon")]
    phase = state.phase
    if phase is UePhase.SCANNING:
        state = replace(state, phase=UePhase.RRC_CONNECTING, last_beacon_at=event.at,
                        bssid=frame.bssid, ssid=body.ssid)
        return state, [EnterMode(Mode.EMULATION), RequestRrcConnect()]
    if state.bssid is not None and frame.bssid != state.bssid:
        return state, []
    state = replace(state, last_beacon_at=event.at)
    if phase is UePhase.SLEEPING and state.assoc_id in body.tim:
        return _wake(state, "Tim")
    return state, []


# -- eNB side ---------------------------------------------------------------

@dataclass(frozen=True)
class EnbUeEntry:
    mac: MacAddress
    phase: EnbPhase
    drb_id: int
    assoc_id: int
    service_class: str = "background"
    sleeping: bool = False
    pending: tuple[bytes, ...] = ()


@dataclass(frozen=True)
class EnbEmuContext:
    bssid: MacAddress
    ssid: str
    beacon_interval_tu: int = BEACON_INTERVAL_TU
    connected: dict[str, str] = field(default_factory=dict)
    ues: dict[str, EnbUeEntry] = field(default_factory=dict)
    next_assoc_id: int = 1
    seq: int = 0
    beaconing: bool = True

    def __post_init__(self):
        aids = [e.assoc_id for e in self.ues.values()]
        if len(aids) != len(set(aids)) or any(not 1 <= a <= frames.MAX_AID for a in aids):
            raise InvariantViolation("association IDs must be unique and within 1..255")

    def associated(self) -> list[str]:
        return sorted(u for u, e in self.ues.items() if e.phase is EnbPhase.ASSOCIATED)


def _with_entry(ctx: EnbEmuContext, ue: str, entry: EnbUeEntry | None, **changes) -> EnbEmuContext:
    ues = dict(ctx.ues)
    if entry is None:
        ues.pop(ue, None)
    else:
        ues[ue] = entry
    return replace(ctx, ues=ues, **changes)


def _downlink(ctx: EnbEmuContext, ft: FrameType, dst: MacAddress, **body) -> tuple[EnbEmuContext, bytes]:
    frame = frames.build_mgmt(ft, ctx.bssid, dst, ctx.bssid, ctx.seq, ssid=ctx.ssid, **body)
    return replace(ctx, seq=frames.next_seq(ctx.seq)), frames.encode_frame(frame)


def _downlink_data(ctx: EnbEmuContext, dst: MacAddress, sdu: bytes) -> tuple[EnbEmuContext, bytes]:
    frame = encapsulate(sdu, ctx.bssid, dst, ctx.bssid, ctx.seq)
    return replace(ctx, seq=frames.next_seq(ctx.seq)), frames.encode_frame(frame)


def _free_assoc_id(ctx: EnbEmuContext) -> int:
    used = {e.assoc_id for e in ctx.ues.values()}
    for i in range(frames.MAX_AID):
        aid = (ctx.next_assoc_id - 1 + i) % frames.MAX_AID + 1
        if aid not in used:
            return aid
    raise AssocIdExhausted("all 255 association IDs are in use")


def enb_emu_step(ctx: EnbEmuContext, event) -> tuple[EnbEmuContext, list]:
    if isinstance(event, BeaconTick):
        if not ctx.beaconing:
            return ctx, []
        sleeping = [u for u, e in sorted(ctx.ues.items()) if e.sleeping and e.pending]
        tim = page_via_tim(ctx, sleeping)
        frame = frames.build_beacon(ctx.ssid, ctx.beacon_interval_tu, tim, bssid=ctx.bssid, seq=ctx.seq)
        ctx = replace(ctx, seq=frames.next_seq(ctx.seq))
        return ctx, [BroadcastOnMrb(frames.encode_frame(frame))]

    if isinstance(event, SetBeaconing):
        return replace(ctx, beaconing=event.enabled), []

    if isinstance(event, UeConnected):
        connected = dict(ctx.connected)
        connected[event.ue] = event.service_class
        return _with_entry(ctx, event.ue, None, connected=connected), []

    if isinstance(event, UeReleased):
        connected = dict(ctx.connected)
        connected.pop(event.ue, None)
        return _with_entry(ctx, event.ue, None, connected=connected), []

    if isinstance(event, DownlinkData):
        entry = ctx.ues.get(event.ue)
        if entry is None or entry.phase is not EnbPhase.ASSOCIATED:
            raise NotAssociated(f"{event.ue} is not associated with {ctx.ssid}")
        if entry.sleeping:
            entry = replace(entry, pending=entry.pending + (event.sdu,))
            return _with_entry(ctx, event.ue, entry), []
        ctx, pdu = _downlink_data(ctx, entry.mac, event.sdu)
        return ctx, [SendOnDrb(entry.drb_id, pdu, event.ue)]

    ue = getattr(event, "ue", None)
    if ue is None or ue not in ctx.connected:
        raise UnknownUe(f"{ue!r} has no RRC connection")
    service_class = ctx.connected[ue]
    entry = ctx.ues.get(ue)

    if isinstance(event, Deauthenticate):
        actions = []
        if entry is not None and entry.phase is not EnbPhase.PROBE_SEEN:
            ctx, pdu = _downlink(ctx, FrameType.DEAUTHENTICATION, entry.mac, status=event.reason)
            actions.append(SendOnDrb(entry.drb_id, pdu, ue))
        connected = dict(ctx.connected)
        connected.pop(ue)
        ctx = _with_entry(ctx, ue, None, connected=connected)
        return ctx, actions + [ReleaseRrc(ue), Notify("Disassociated", ue=ue)]

    if isinstance(event, PduFromSrb):
        frame = _decode(event.pdu)
        if frame is None or frame.frame_type is not FrameType.PROBE_REQUEST or entry is not None:
            return ctx, [_unexpected(entry.phase if entry else EnbPhase.PROBE_SEEN, event, ue)]
        aid = _free_assoc_id(ctx)
        entry = EnbUeEntry(frame.src, EnbPhase.PROBE_SEEN, EMULATION_DRB, aid, service_class)
        ctx = _with_entry(ctx, ue, entry, next_assoc_id=aid % frames.MAX_AID + 1)
        ctx, pdu = _downlink(ctx, FrameType.PROBE_RESPONSE, frame.src, status=STATUS_SUCCESS)
        return ctx, [RequestReconfigure((EMULATION_DRB, qci_for(service_class)), pdu, ue)]

    if isinstance(event, ReconfigComplete):
        if entry is None or entry.phase is not EnbPhase.PROBE_SEEN or event.drb != entry.drb_id:
            return ctx, [_unexpected(entry.phase if entry else EnbPhase.PROBE_SEEN, event, ue)]
        return _with_entry(ctx, ue, replace(entry, phase=EnbPhase.DRB_OFFERED)), []

    if isinstance(event, PduFromDrb):
        frame = _decode(event.pdu)
        phase = entry.phase if entry else EnbPhase.PROBE_SEEN
        if frame is None or entry is None or event.drb != entry.drb_id:
            return ctx, [_unexpected(phase, event, ue)]
        if frame.frame_type is FrameType.ASSOCIATION_REQUEST and phase is EnbPhase.DRB_OFFERED:
            entry = replace(entry, phase=EnbPhase.ASSOCIATED)
            ctx = _with_entry(ctx, ue, entry)
            ctx, pdu = _downlink(ctx, FrameType.ASSOCIATION_RESPONSE, entry.mac,
                                 status=STATUS_SUCCESS, aid=entry.assoc_id)
            return ctx, [SendOnDrb(entry.drb_id, pdu, ue), Notify("Associated", f"aid={entry.assoc_id}", ue)]
        if frame.frame_type is FrameType.DATA and phase is EnbPhase.ASSOCIATED:
            actions = [DeliverUp(frame.body, ue)] if frame.body else []
            if frame.power_mgmt != entry.sleeping:
                entry = replace(entry, sleeping=frame.power_mgmt)
                if not entry.sleeping and entry.pending:
                    pending, entry = entry.pending, replace(entry, pending=())
                    ctx = _with_entry(ctx, ue, entry)
                    for sdu in pending:
                        ctx, pdu = _downlink_data(ctx, entry.mac, sdu)
                        actions.append(SendOnDrb(entry.drb_id, pdu, ue))
                    return ctx, actions
                ctx = _with_entry(ctx, ue, entry)
            return ctx, actions
        return ctx, [_unexpected(phase, event, ue)]

    return ctx, [_unexpected(entry.phase if entry else EnbPhase.PROBE_SEEN, event, ue)]


# -- data plane helpers ------------------------------------------------------

def encapsulate(sdu: bytes, src: MacAddress, dst: MacAddress, bssid: MacAddress, seq: int,
                *, power_mgmt: bool = False) -> frames.MacFrame:
    """Wrap a higher-layer SDU in a Data frame."""
    if len(sdu) > frames.MAX_BODY:
        raise TooLarge(f"SDU of {len(sdu)} bytes exceeds {frames.MAX_BODY}")
    frame = frames.MacFrame(FrameType.DATA, dst, src, bssid, seq % frames.SEQ_MODULO, bytes(sdu), power_mgmt)
    frames.check_frame(frame)
    return frame


def decapsulate(frame: frames.MacFrame) -> bytes:
    if frame.frame_type is not FrameType.DATA:
        raise NotData(f"{frame.frame_type} frame carries no SDU")
    return frame.body


def detect_mode(beacon_log, now: int, window: int) -> Mode:
    """Emulation iff some beacon time lies in the closed interval [now - window, now]."""
    if window <= 0:
        raise InvariantViolation("detection window must be positive")
    lo = now - window
    return Mode.EMULATION if any(lo <= t <= now for t in beacon_log) else Mode.STANDARD_NAS


def page_via_tim(ctx: EnbEmuContext, sleeping_ues_with_pending) -> frozenset[int]:
    """Association IDs to flag in the next beacon's TIM."""
    aids = set()
    for ue in sleeping_ues_with_pending:
        entry = ctx.ues.get(ue)
        if entry is None or entry.phase is not EnbPhase.ASSOCIATED:
            raise NotAssociated(f"{ue} is not associated; cannot page it")
        if not entry.sleeping:
            raise InvariantViolation(f"{ue} is awake; paging is for sleeping stations")
        aids.add(entry.assoc_id)
    return frozenset(aids)
