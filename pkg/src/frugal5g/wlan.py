"""Native Wi-Fi APs and stations, plus the AP contract shared with the eNB.

Both AP kinds expose the same small surface (``report``, ``stations``,
``deliver_downlink``, ``set_power`` and ``deauthenticate``) so the fog
controller can drive them without knowing which radio is underneath.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import Callable

from . import frames
from .errors import (
    ApAsleep,
    AssocIdExhausted,
    FrameError,
    InvariantViolation,
    NotAssociated,
    Unreachable,
)
from .frames import FrameType, MacAddress
from .lte import DEFAULT_BEACON_PERIOD_US, QUEUE_CAP, Direction, LinkModel, LinkParams, pdu_label
from .sim.engine import US_PER_S, Engine, ms
from .sim.trace import Trace

LOAD_WINDOW_US = US_PER_S
WLAN_VIA = "WLAN"


class ApKind(enum.Enum):
    NATIVE_WIFI = "NativeWifi"
    LTE_EMULATED = "LteEmulated"


class PowerState(enum.Enum):
    AWAKE = "Awake"
    ASLEEP = "Asleep"


@dataclass(frozen=True)
class ApDescriptor:
    ap_id: str
    bssid: MacAddress
    ssid: str
    kind: ApKind
    capacity: int
    current_load: int = 0
    station_count: int = 0
    power_state: PowerState = PowerState.AWAKE
    timestamp: int = 0

    def __post_init__(self):
        if self.capacity <= 0:
            raise InvariantViolation(f"{self.ap_id}: capacity must be positive")
        if not 0 <= self.current_load <= self.capacity:
            raise InvariantViolation(f"{self.ap_id}: load {self.current_load} outside 0..{self.capacity}")
        if self.power_state is PowerState.ASLEEP and self.station_count:
            raise InvariantViolation(f"{self.ap_id}: an asleep AP cannot hold stations")

    @property
    def awake(self) -> bool:
        return self.power_state is PowerState.AWAKE


class LoadMeter:
    """Bytes delivered per sliding window, reported in bits/s."""

    def __init__(self, window: int = LOAD_WINDOW_US):
        self.window = window
        self._samples: deque[tuple[int, int]] = deque()

    def add(self, t: int, nbytes: int) -> None:
        self._samples.append((t, nbytes))

    def rate(self, now: int) -> int:
        lo = now - self.window
        while self._samples and self._samples[0][0] <= lo - self.window:
            self._samples.popleft()
        total = sum(n for t, n in self._samples if lo < t <= now)
        return total * 8 * US_PER_S // self.window


# -- native Wi-Fi -------------------------------------------------------------

class AssocState(enum.Enum):
    PROBING = "Probing"
    ASSOCIATING = "Associating"
    ASSOCIATED = "Associated"
    GONE = "Gone"


class Association:
    """One STA-AP pairing and the two directed links it rides on."""

    def __init__(self, sta: "Station", ap: "WifiAp"):
        self.sta = sta
        self.ap = ap
        self.state = AssocState.PROBING
        self.aid: int | None = None
        self.ul = LinkModel(ap.link, ap.queue_cap)
        self.dl = LinkModel(ap.link, ap.queue_cap)

    @property
    def active(self) -> bool:
        return self.state is AssocState.ASSOCIATED

    def __repr__(self) -> str:
        return f"Association({self.sta.ue_id}->{self.ap.ap_id}, {self.state.value}, aid={self.aid})"


class Station:
    """UE-side native Wi-Fi radio.

    A station may hold associations with several APs at once; the controller
    relies on this to associate with a handover target before leaving the
    source.
    """

    def __init__(self, ue_id: str, mac: MacAddress, *,
                 on_deliver: Callable[[str, bytes], None] | None = None,
                 on_associated: Callable[[Association], None] | None = None,
                 on_lost: Callable[[Association, str], None] | None = None):
        self.ue_id = ue_id
        self.mac = mac
        self.seq = 0
        self.associations: dict[str, Association] = {}
        self.on_deliver = on_deliver
        self.on_associated = on_associated
        self.on_lost = on_lost

    def next_seq(self) -> int:
        seq, self.seq = self.seq, frames.next_seq(self.seq)
        return seq

    def _frame_from_ap(self, assoc: Association, frame: frames.MacFrame) -> None:
        if self.associations.get(assoc.ap.ap_id) is not assoc:
            return
        ft = frame.frame_type
        if ft is FrameType.PROBE_RESPONSE and assoc.state is AssocState.PROBING:
            assoc.state = AssocState.ASSOCIATING
            req = frames.build_mgmt(FrameType.ASSOCIATION_REQUEST, self.mac, assoc.ap.bssid,
                                    assoc.ap.bssid, self.next_seq(), ssid=assoc.ap.ssid)
            assoc.ap._air(assoc, Direction.UL, req)
        elif ft is FrameType.ASSOCIATION_RESPONSE and assoc.state is AssocState.ASSOCIATING:
            body = frames.decode_mgmt_body(frame.body)
            if body.status == 0:
                assoc.state = AssocState.ASSOCIATED
                assoc.aid = body.aid
                if self.on_associated is not None:
                    self.on_associated(assoc)
            else:
                self._lose(assoc, "refused")
        elif ft is FrameType.DEAUTHENTICATION:
            self._lose(assoc, "deauthenticated")
        elif ft is FrameType.DATA and assoc.active and frame.body:
            if self.on_deliver is not None:
                self.on_deliver(assoc.ap.ap_id, frame.body)

    def _lose(self, assoc: Association, reason: str) -> None:
        assoc.state = AssocState.GONE
        if self.associations.get(assoc.ap.ap_id) is assoc:
            del self.associations[assoc.ap.ap_id]
        if self.on_lost is not None:
            self.on_lost(assoc, reason)


class WifiAp:
    kind = ApKind.NATIVE_WIFI

    def __init__(self, engine: Engine, trace: Trace, ap_id: str, bssid: MacAddress, ssid: str, *,
                 capacity_bps: int, link: LinkParams = LinkParams(54_000_000, ms(1)),
                 beacon_period: int = DEFAULT_BEACON_PERIOD_US,
                 in_range: Callable[[str], bool] = lambda ue: True,
                 on_uplink: Callable[[str, str, bytes], None] | None = None,
                 on_drop: Callable[[str, str, bytes, str], None] | None = None,
                 queue_cap: int = QUEUE_CAP):
        self.engine = engine
        self.trace = trace
        self.ap_id = ap_id
        self.bssid = bssid
        self.ssid = ssid
        self.capacity = capacity_bps
        self.link = link
        self.beacon_period = beacon_period
        self.in_range = in_range
        self.on_uplink = on_uplink
        self.on_drop = on_drop
        self.queue_cap = queue_cap
        self.power = PowerState.AWAKE
        self.meter = LoadMeter()
        self.seq = 0
        self._stations: dict[str, Association] = {}
        self._beacon_ev = None

    # -- abstract AP interface ---------------------------------------------------

    def report(self) -> ApDescriptor:
        now = self.engine.now
        return ApDescriptor(self.ap_id, self.bssid, self.ssid, self.kind, self.capacity,
                            min(self.meter.rate(now), self.capacity), len(self.stations()),
                            self.power, now)

    def stations(self) -> list[str]:
        return sorted(u for u, a in self._stations.items() if a.active)

    def deliver_downlink(self, ue_id: str, sdu: bytes) -> int | None:
        assoc = self._stations.get(ue_id)
        if assoc is None or not assoc.active:
            raise NotAssociated(f"{ue_id} is not associated with {self.ap_id}")
        return wifi_send(assoc, sdu, Direction.DL)

    def set_power(self, state: PowerState) -> None:
        if state is self.power:
            return
        if state is PowerState.ASLEEP:
            for ue_id in sorted(self._stations):
                self.deauthenticate(ue_id)
            self.power = PowerState.ASLEEP
            self.engine.cancel(self._beacon_ev)
            self._beacon_ev = None
            self.trace.emit(self.ap_id, "ctrl", msg="Power", state=state.value)
        else:
            self.power = PowerState.AWAKE
            self.trace.emit(self.ap_id, "ctrl", msg="Power", state=state.value)
            self.start()

    def deauthenticate(self, ue_id: str) -> None:
        assoc = self._stations.pop(ue_id, None)
        if assoc is None:
            return
        frame = frames.build_mgmt(FrameType.DEAUTHENTICATION, self.bssid, assoc.sta.mac, self.bssid,
                                  self._next_seq(), ssid=self.ssid, status=3)
        self._air(assoc, Direction.DL, frame, force=True)
        if assoc.state is not AssocState.GONE and assoc.state is not AssocState.ASSOCIATED:
            assoc.state = AssocState.GONE

    # -- beaconing ---------------------------------------------------------------

    def start(self, at: int | None = None) -> None:
        if self.power is PowerState.AWAKE and self._beacon_ev is None:
            self._beacon_ev = self.engine.at(self.engine.now if at is None else at, self._beacon,
                                             target=self.ap_id)

    def _beacon(self) -> None:
        frame = frames.build_beacon(self.ssid, interval_tu(self.beacon_period), (),
                                    bssid=self.bssid, seq=self._next_seq())
        pdu = frames.encode_frame(frame)
        self.trace.emit(self.ap_id, "mgmt", msg=FrameType.BEACON.value, src=self.ap_id,
                        dst="broadcast", via=WLAN_VIA, len=len(pdu))
        self._beacon_ev = self.engine.after(self.beacon_period, self._beacon, target=self.ap_id)

    # -- air interface -----------------------------------------------------------

    def _next_seq(self) -> int:
        seq, self.seq = self.seq, frames.next_seq(self.seq)
        return seq

    def _air(self, assoc: Association, direction: Direction, frame: frames.MacFrame,
             force: bool = False) -> int | None:
        """Put one frame on the STA<->AP link and schedule its arrival."""
        pdu = frames.encode_frame(frame)
        link = assoc.ul if direction is Direction.UL else assoc.dl
        ue = assoc.sta.ue_id
        src, dst = (ue, self.ap_id) if direction is Direction.UL else (self.ap_id, ue)
        kind, name = pdu_label(pdu)
        now = self.engine.now
        deliver_at = link.offer(now, len(pdu), WLAN_VIA)
        if deliver_at is None and force:
            deliver_at = now + link.params.latency_us
        if deliver_at is None:
            self.trace.emit(src, "drop", msg=name, src=src, dst=dst, via=WLAN_VIA, reason="queue-overflow")
            return None
        self.trace.emit(src, kind, msg=name, src=src, dst=dst, via=WLAN_VIA, dlv=deliver_at)
        if direction is Direction.DL and kind == "data":
            self.meter.add(deliver_at, len(frame.body))
        self.engine.at(deliver_at, self._arrive, assoc, direction, pdu, target=dst)
        return deliver_at

    def _arrive(self, assoc: Association, direction: Direction, pdu: bytes) -> None:
        ue = assoc.sta.ue_id
        src, dst = (ue, self.ap_id) if direction is Direction.UL else (self.ap_id, ue)
        frame = frames.decode_frame(pdu)
        reason = None
        if not self.in_range(ue):
            reason = "out-of-range"
        elif direction is Direction.UL and self.power is PowerState.ASLEEP:
            reason = "ap-asleep"
        elif direction is Direction.UL and frame.frame_type is FrameType.DATA and not (
            self._stations.get(ue) is assoc and assoc.active
        ):
            reason = "not-associated"
        if reason is not None:
            self.trace.emit(dst, "drop", msg=frame.frame_type.value, src=src, dst=dst, via=WLAN_VIA,
                            reason=reason)
            if frame.frame_type is FrameType.DATA and frame.body and self.on_drop is not None:
                self.on_drop(self.ap_id, ue, frame.body, reason)
            if reason == "out-of-range" and assoc.active:
                self._stations.pop(ue, None)
                assoc.sta._lose(assoc, "out-of-range")
            return
        if direction is Direction.DL:
            assoc.sta._frame_from_ap(assoc, frame)
            return
        ft = frame.frame_type
        if ft is FrameType.PROBE_REQUEST:
            rsp = frames.build_mgmt(FrameType.PROBE_RESPONSE, self.bssid, frame.src, self.bssid,
                                    self._next_seq(), ssid=self.ssid)
            self._air(assoc, Direction.DL, rsp)
        elif ft is FrameType.ASSOCIATION_REQUEST:
            aid = self._free_aid()
            status = 0 if aid is not None else 17
            if aid is not None:
                assoc.aid = aid
                self._stations[ue] = assoc
            rsp = frames.build_mgmt(FrameType.ASSOCIATION_RESPONSE, self.bssid, frame.src, self.bssid,
                                    self._next_seq(), ssid=self.ssid, status=status, aid=aid or 0)
            self._air(assoc, Direction.DL, rsp)
            if aid is not None:
                # the AP side counts the station once the response is on the air
                assoc.state = AssocState.ASSOCIATING
        elif ft is FrameType.DATA and frame.body:
            self.meter.add(self.engine.now, len(frame.body))
            if self.on_uplink is not None:
                self.on_uplink(self.ap_id, ue, frame.body)

    def _free_aid(self) -> int | None:
        used = {a.aid for a in self._stations.values()}
        return next((i for i in range(1, frames.MAX_AID + 1) if i not in used), None)


def interval_tu(period_us: int) -> int:
    """Beacon period in 802.11 time units (1 TU = 1024 us), at least 1."""
    return max(1, round(period_us / 1024))


def sta_associate(sta: Station, ap: WifiAp) -> Association:
    """Start the native probe/associate exchange; completes asynchronously."""
    if ap.power is PowerState.ASLEEP:
        raise ApAsleep(f"{ap.ap_id} is asleep")
    if not ap.in_range(sta.ue_id):
        raise Unreachable(f"{sta.ue_id} is out of range of {ap.ap_id}")
    if ap._free_aid() is None:
        raise AssocIdExhausted(f"{ap.ap_id} has no free association ID")
    current = sta.associations.get(ap.ap_id)
    if current is not None and current.state is not AssocState.GONE:
        return current
    assoc = Association(sta, ap)
    sta.associations[ap.ap_id] = assoc
    probe = frames.build_mgmt(FrameType.PROBE_REQUEST, sta.mac, frames.BROADCAST, ap.bssid,
                              sta.next_seq(), ssid=ap.ssid)
    ap._air(assoc, Direction.UL, probe)
    return assoc


def wifi_send(assoc: Association, sdu: bytes, direction: Direction) -> int | None:
    """Send one SDU as a Data frame; returns delivery time or None on overflow."""
    from .emulation.state import encapsulate  # the emulation package imports this module

    if not assoc.active or assoc.ap._stations.get(assoc.sta.ue_id) is not assoc:
        raise NotAssociated(f"{assoc.sta.ue_id} is not associated with {assoc.ap.ap_id}")
    ap, sta = assoc.ap, assoc.sta
    if direction is Direction.UL:
        frame = encapsulate(sdu, sta.mac, ap.bssid, ap.bssid, sta.next_seq())
    else:
        frame = encapsulate(sdu, ap.bssid, sta.mac, ap.bssid, ap._next_seq())
    deliver_at = ap._air(assoc, direction, frame)
    if deliver_at is None and ap.on_drop is not None:
        ap.on_drop(ap.ap_id, sta.ue_id, sdu, "queue-overflow")
    return deliver_at
