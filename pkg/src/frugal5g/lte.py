"""LTE radio legs under the emulation layer.

An :class:`LteCell` owns the RRC connections of one macro eNB. It runs the
connection-establishment and reconfiguration exchanges, carries opaque PDUs
over SRB1 and DRBs, and broadcasts on the MRB once SIB13 and the first MCCH
have gone out. The eNB has no S1 or X2 side: every message it emits is one of
the RRC/MBMS kinds below or a MAC frame riding a bearer.

Upper layers plug in through two duck-typed handlers:

* the eNB handler (``LteCell.enb_handler``) receives ``ue_connected``,
  ``srb_pdu``, ``reconfig_complete``, ``drb_pdu`` and ``ue_released``;
* each UE handler (``LteCell.register_ue``) receives ``rrc_connected``,
  ``srb_pdu``, ``drb_activated``, ``drb_pdu``, ``mrb_pdu`` and
  ``rrc_released``.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from . import frames
from .errors import (
    AlreadyConnected,
    BearerNotActive,
    DuplicateDrb,
    InvariantViolation,
    MrbNotReady,
    Unreachable,
)
from .sim.engine import Engine, ms
from .sim.trace import Trace

QUEUE_CAP = 256
RRC_CONTROL_BYTES = 16
MAX_DRB = 32

DEFAULT_MCCH_PERIOD_US = ms(100)
DEFAULT_BEACON_PERIOD_US = ms(102.4)
# one LTE subframe; the finest grain at which the radio schedules anything
SCHEDULING_QUANTUM_US = 1000

# Service class -> QCI. 1 = conversational voice (GBR), 8/9 = non-GBR TCP-based
# services, 8 for interactive and 9 for best-effort background traffic.
QCI_TABLE = {"voice": 1, "interactive": 8, "background": 9}
DEFAULT_QCI = 9


def qci_for(service_class: str) -> int:
    return QCI_TABLE.get(service_class, DEFAULT_QCI)


class Direction(enum.Enum):
    UL = "UL"
    DL = "DL"


class BearerKind(enum.Enum):
    SRB = "SRB"
    DRB = "DRB"
    MRB = "MRB"


class BearerState(enum.Enum):
    PENDING = "Pending"
    ACTIVE = "Active"
    RELEASED = "Released"


@dataclass
class RadioBearer:
    kind: BearerKind
    index: int
    qci: int = DEFAULT_QCI
    state: BearerState = BearerState.PENDING
    owner: str | None = None

    def __post_init__(self):
        if not 1 <= self.qci <= 9:
            raise InvariantViolation(f"QCI {self.qci} outside 1..9")
        limit = MAX_DRB if self.kind is BearerKind.DRB else 1
        if not 1 <= self.index <= limit:
            raise InvariantViolation(f"{self.kind.value} id {self.index} outside 1..{limit}")
        if (self.kind is BearerKind.MRB) != (self.owner is None):
            raise InvariantViolation("MRB has no owner; SRB/DRB must have one")

    @property
    def name(self) -> str:
        return f"{self.kind.value}{self.index}"

    @property
    def active(self) -> bool:
        return self.state is BearerState.ACTIVE


class RrcKind(enum.Enum):
    CONNECTION_REQUEST = "ConnectionRequest"
    CONNECTION_SETUP = "ConnectionSetup"
    SETUP_COMPLETE = "SetupComplete"
    DL_INFORMATION_TRANSFER = "DlInformationTransfer"
    UL_INFORMATION_TRANSFER = "UlInformationTransfer"
    CONNECTION_RECONFIGURATION = "ConnectionReconfiguration"
    RECONFIGURATION_COMPLETE = "ReconfigurationComplete"
    CONNECTION_RELEASE = "ConnectionRelease"
    SIB13 = "Sib13"
    MCCH = "Mcch"


RRC_KINDS = frozenset(k.value for k in RrcKind if k not in (RrcKind.SIB13, RrcKind.MCCH))
MRB_KINDS = frozenset({RrcKind.SIB13.value, RrcKind.MCCH.value})


@dataclass(frozen=True)
class RrcMessage:
    kind: RrcKind
    embedded_pdu: bytes | None = None
    drb_config: tuple[int, int] | None = None  # (drb id, qci)

    def __post_init__(self):
        reconf = self.kind is RrcKind.CONNECTION_RECONFIGURATION
        if reconf and self.drb_config is None:
            raise InvariantViolation("ConnectionReconfiguration must carry a DRB config")
        if not reconf and self.drb_config is not None:
            raise InvariantViolation(f"{self.kind.value} cannot carry a DRB config")
        transfer = self.kind in (RrcKind.UL_INFORMATION_TRANSFER, RrcKind.DL_INFORMATION_TRANSFER)
        if transfer and self.embedded_pdu is None:
            raise InvariantViolation(f"{self.kind.value} must carry a PDU")
        if not (transfer or reconf) and self.embedded_pdu is not None:
            raise InvariantViolation(f"{self.kind.value} cannot carry a PDU")

    @property
    def size(self) -> int:
        return len(self.embedded_pdu) if self.embedded_pdu is not None else RRC_CONTROL_BYTES


@dataclass(frozen=True)
class LinkParams:
    capacity_bps: int
    latency_us: int

    def __post_init__(self):
        if self.capacity_bps <= 0 or self.latency_us < 0:
            raise InvariantViolation("link capacity must be positive and latency non-negative")


class LinkModel:
    """One transmitter with FIFO service and a per-bearer queue cap.

    A PDU offered at ``now`` starts serialising when the transmitter frees up,
    so delivery = now + backlog + own serialisation + base latency. Bearers
    share the transmitter; service is in offer order, which keeps every
    bearer FIFO.
    """

    def __init__(self, params: LinkParams, queue_cap: int = QUEUE_CAP):
        self.params = params
        self.queue_cap = queue_cap
        self.busy_until = 0
        self._queues: dict[str, deque[int]] = {}

    def serialization_us(self, nbytes: int) -> int:
        return -(-nbytes * 8 * 1_000_000 // self.params.capacity_bps)

    def queued(self, bearer: str, now: int) -> int:
        q = self._queues.get(bearer)
        if not q:
            return 0
        while q and q[0] <= now:
            q.popleft()
        return len(q)

    def offer(self, now: int, nbytes: int, bearer: str = "default") -> int | None:
        """Return the delivery time, or None when the bearer's queue is full."""
        if self.queued(bearer, now) >= self.queue_cap:
            return None
        finish = max(now, self.busy_until) + self.serialization_us(nbytes)
        self.busy_until = finish
        self._queues.setdefault(bearer, deque()).append(finish)
        return finish + self.params.latency_us


@dataclass
class MrbSchedule:
    mcch_period: int
    beacon_period: int
    next_mcch_at: int
    next_beacon_at: int | None = None
    first_mcch_at: int | None = None
    sib13_sent: bool = False

    @property
    def active(self) -> bool:
        return self.sib13_sent and self.first_mcch_at is not None


@dataclass
class Connection:
    ue_id: str
    enb_id: str
    service_class: str
    ul: LinkModel
    dl: LinkModel
    bearers: dict[str, RadioBearer] = field(default_factory=dict)
    ue_configured: set[int] = field(default_factory=set)
    released: bool = False

    @property
    def srb1(self) -> RadioBearer:
        return self.bearers["SRB1"]

    def drb(self, drb_id: int) -> RadioBearer | None:
        return self.bearers.get(f"DRB{drb_id}")


def pdu_label(pdu: bytes) -> tuple[str, str]:
    """(trace kind, message name) for a PDU riding a bearer."""
    ft = frames.peek_type(pdu)
    if ft is None:
        return "data", "opaque"
    return ("data" if ft is frames.FrameType.DATA else "mgmt"), ft.value


class LteCell:
    def __init__(self, engine: Engine, trace: Trace, enb_id: str, *,
                 reachable: Callable[[str], bool],
                 in_range_ues: Callable[[], list[str]],
                 uplink: LinkParams = LinkParams(10_000_000, ms(5)),
                 downlink: LinkParams = LinkParams(20_000_000, ms(5)),
                 mrb: LinkParams = LinkParams(2_000_000, ms(5)),
                 queue_cap: int = QUEUE_CAP):
        self.engine = engine
        self.trace = trace
        self.enb_id = enb_id
        self.reachable = reachable
        self.in_range_ues = in_range_ues
        self.uplink = uplink
        self.downlink = downlink
        self.queue_cap = queue_cap
        self.mrb_link = LinkModel(mrb, queue_cap)
        self.mrb_bearer = RadioBearer(BearerKind.MRB, 1, DEFAULT_QCI)
        self.mrb_schedule: MrbSchedule | None = None
        self.on_beacon_slot: Callable[[], None] | None = None
        self.connections: dict[str, Connection] = {}
        self.enb_handler = None
        self.on_drop: Callable[[str, bytes, str], None] | None = None  # (ue, pdu, reason)
        self._ue_handlers: dict[str, object] = {}

    def register_ue(self, ue_id: str, handler) -> None:
        self._ue_handlers[ue_id] = handler

    # -- connection management ----------------------------------------------

    def rrc_connect(self, ue_id: str, service_class: str = "background") -> Connection:
        conn = self.connections.get(ue_id)
        if conn is not None and not conn.released:
            raise AlreadyConnected(f"{ue_id} already has an RRC connection to {self.enb_id}")
        if not self.reachable(ue_id):
            raise Unreachable(f"{ue_id} is out of range of {self.enb_id}")
        conn = Connection(
            ue_id, self.enb_id, service_class,
            LinkModel(self.uplink, self.queue_cap), LinkModel(self.downlink, self.queue_cap),
        )
        conn.bearers["SRB1"] = RadioBearer(BearerKind.SRB, 1, 5, owner=ue_id)
        self.connections[ue_id] = conn
        self._transmit(conn, Direction.UL, "SRB0", RrcMessage(RrcKind.CONNECTION_REQUEST))
        return conn

    def release(self, ue_id: str) -> None:
        conn = self.connections.get(ue_id)
        if conn is None or conn.released:
            return
        self._transmit(conn, Direction.DL, "SRB1", RrcMessage(RrcKind.CONNECTION_RELEASE), force=True)
        conn.released = True
        for bearer in conn.bearers.values():
            bearer.state = BearerState.RELEASED
        if self.enb_handler is not None:
            self.enb_handler.ue_released(ue_id)

    def connection(self, ue_id: str) -> Connection | None:
        conn = self.connections.get(ue_id)
        return None if conn is None or conn.released else conn

    # -- bearers ------------------------------------------------------------

    def send_srb(self, conn: Connection, pdu: bytes, direction: Direction) -> int | None:
        if conn.released or not conn.srb1.active:
            raise BearerNotActive(f"SRB1 of {conn.ue_id} is not active")
        kind = RrcKind.UL_INFORMATION_TRANSFER if direction is Direction.UL else RrcKind.DL_INFORMATION_TRANSFER
        return self._transmit(conn, direction, "SRB1", RrcMessage(kind, embedded_pdu=pdu))

    def reconfigure(self, conn: Connection, drb_config: tuple[int, int],
                    embedded_pdu: bytes | None = None) -> RadioBearer:
        if conn.released or not conn.srb1.active:
            raise BearerNotActive(f"SRB1 of {conn.ue_id} is not active")
        drb_id, qci = drb_config
        existing = conn.drb(drb_id)
        if existing is not None and existing.state is not BearerState.RELEASED:
            raise DuplicateDrb(f"DRB{drb_id} already configured for {conn.ue_id}")
        bearer = RadioBearer(BearerKind.DRB, drb_id, qci, owner=conn.ue_id)
        conn.bearers[bearer.name] = bearer
        msg = RrcMessage(RrcKind.CONNECTION_RECONFIGURATION, embedded_pdu, (drb_id, qci))
        self._transmit(conn, Direction.DL, "SRB1", msg)
        return bearer

    def send_drb(self, conn: Connection, drb_id: int, pdu: bytes, direction: Direction) -> int | None:
        bearer = conn.drb(drb_id)
        if conn.released or bearer is None or bearer.state is BearerState.RELEASED:
            raise BearerNotActive(f"DRB{drb_id} of {conn.ue_id} is not active")
        if direction is Direction.UL and drb_id not in conn.ue_configured:
            raise BearerNotActive(f"{conn.ue_id} has not applied DRB{drb_id} yet")
        if direction is Direction.DL and not bearer.active:
            raise BearerNotActive(f"DRB{drb_id} of {conn.ue_id} is still {bearer.state.value}")
        return self._transmit(conn, direction, bearer.name, pdu)

    # -- MBMS -----------------------------------------------------------------

    def setup_mrb(self, mcch_period: int = DEFAULT_MCCH_PERIOD_US,
                  beacon_period: int = DEFAULT_BEACON_PERIOD_US,
                  start: int | None = None) -> MrbSchedule:
        start = self.engine.now if start is None else start
        sched = MrbSchedule(mcch_period, beacon_period, next_mcch_at=start + mcch_period)
        self.mrb_schedule = sched
        self.engine.at(start, self._mbms_control, start, target=self.enb_id)
        return sched

    def _mbms_control(self, slot: int) -> None:
        sched = self.mrb_schedule
        self.trace.emit(self.enb_id, "mrb", msg=RrcKind.SIB13.value, via="BCCH")
        sched.sib13_sent = True
        if slot == sched.next_mcch_at:
            self.trace.emit(self.enb_id, "mrb", msg=RrcKind.MCCH.value, via="MCCH")
            if sched.first_mcch_at is None:
                sched.first_mcch_at = slot
                self.mrb_bearer.state = BearerState.ACTIVE
                sched.next_beacon_at = slot + sched.beacon_period
                self.engine.at(sched.next_beacon_at, self._beacon_slot, target=self.enb_id)
            sched.next_mcch_at = slot + sched.mcch_period
        self.engine.at(slot + sched.mcch_period, self._mbms_control, slot + sched.mcch_period,
                       target=self.enb_id)

    def _beacon_slot(self) -> None:
        sched = self.mrb_schedule
        if self.on_beacon_slot is not None:
            self.on_beacon_slot()
        sched.next_beacon_at += sched.beacon_period
        self.engine.at(sched.next_beacon_at, self._beacon_slot, target=self.enb_id)

    def broadcast_on_mrb(self, pdu: bytes) -> int | None:
        if not self.mrb_bearer.active:
            raise MrbNotReady(f"MRB of {self.enb_id} is not established")
        now = self.engine.now
        receivers = sorted(self.in_range_ues())
        kind, name = pdu_label(pdu)
        deliver_at = self.mrb_link.offer(now, len(pdu), "MRB1")
        if deliver_at is None:
            self.trace.emit(self.enb_id, "drop", msg=name, via="MRB1", reason="queue-overflow")
            return None
        self.trace.emit(self.enb_id, kind, msg=name, src=self.enb_id, dst="broadcast", via="MRB1",
                        dlv=deliver_at, rx=len(receivers))
        for ue_id in receivers:
            self.engine.at(deliver_at, self._deliver_mrb, ue_id, pdu, target=ue_id)
        return deliver_at

    def _deliver_mrb(self, ue_id: str, pdu: bytes) -> None:
        handler = self._ue_handlers.get(ue_id)
        if handler is not None:
            handler.mrb_pdu(pdu)

    # -- transport ------------------------------------------------------------

    def _transmit(self, conn: Connection, direction: Direction, bearer: str,
                  payload: RrcMessage | bytes, force: bool = False) -> int | None:
        link = conn.ul if direction is Direction.UL else conn.dl
        src, dst = (conn.ue_id, self.enb_id) if direction is Direction.UL else (self.enb_id, conn.ue_id)
        now = self.engine.now
        size = payload.size if isinstance(payload, RrcMessage) else len(payload)
        deliver_at = link.offer(now, size, bearer)
        if deliver_at is None and force:
            deliver_at = now + link.params.latency_us
        if isinstance(payload, RrcMessage):
            fields = {"msg": payload.kind.value, "src": src, "dst": dst, "via": bearer}
            if payload.embedded_pdu is not None:
                fields["pdu"] = pdu_label(payload.embedded_pdu)[1]
            if payload.drb_config is not None:
                fields["drb"], fields["qci"] = payload.drb_config
            kind = "rrc"
        else:
            kind, name = pdu_label(payload)
            fields = {"msg": name, "src": src, "dst": dst, "via": bearer}
        if deliver_at is None:
            self.trace.emit(src, "drop", reason="queue-overflow", **fields)
            if self.on_drop is not None and not isinstance(payload, RrcMessage):
                self.on_drop(conn.ue_id, payload, "queue-overflow")
            return None
        self.trace.emit(src, kind, **fields, dlv=deliver_at)
        self.engine.at(deliver_at, self._deliver, conn, direction, bearer, payload,
                       target=dst)
        return deliver_at

    def _deliver(self, conn: Connection, direction: Direction, bearer: str, payload) -> None:
        if direction is Direction.UL:
            self._at_enb(conn, bearer, payload)
        else:
            self._at_ue(conn, bearer, payload)

    def _drop_on_arrival(self, src: str, dst: str, bearer: str, pdu: bytes) -> None:
        self.trace.emit(dst, "drop", msg=pdu_label(pdu)[1], src=src, dst=dst, via=bearer,
                        reason="bearer-released")
        if self.on_drop is not None:
            self.on_drop(src if dst == self.enb_id else dst, pdu, "bearer-released")

    def _at_enb(self, conn: Connection, bearer: str, payload) -> None:
        enb = self.enb_handler
        if not isinstance(payload, RrcMessage):
            if enb is None or conn.released:
                self._drop_on_arrival(conn.ue_id, self.enb_id, bearer, payload)
            else:
                enb.drb_pdu(conn.ue_id, int(bearer[3:]), payload)
            return
        kind = payload.kind
        if conn.released:
            return
        if kind is RrcKind.CONNECTION_REQUEST:
            self._transmit(conn, Direction.DL, "SRB0", RrcMessage(RrcKind.CONNECTION_SETUP))
        elif kind is RrcKind.SETUP_COMPLETE:
            if enb is not None:
                enb.ue_connected(conn.ue_id, conn.service_class)
        elif kind is RrcKind.UL_INFORMATION_TRANSFER:
            if enb is not None:
                enb.srb_pdu(conn.ue_id, payload.embedded_pdu)
        elif kind is RrcKind.RECONFIGURATION_COMPLETE:
            for b in conn.bearers.values():
                if b.kind is BearerKind.DRB and b.state is BearerState.PENDING and b.index in conn.ue_configured:
                    b.state = BearerState.ACTIVE
                    if enb is not None:
                        enb.reconfig_complete(conn.ue_id, b.index)

    def _at_ue(self, conn: Connection, bearer: str, payload) -> None:
        ue = self._ue_handlers.get(conn.ue_id)
        if not isinstance(payload, RrcMessage):
            if ue is None or conn.released:
                self._drop_on_arrival(self.enb_id, conn.ue_id, bearer, payload)
            else:
                ue.drb_pdu(int(bearer[3:]), payload)
            return
        kind = payload.kind
        if kind is RrcKind.CONNECTION_RELEASE:
            conn.ue_configured.clear()
            if ue is not None:
                ue.rrc_released(conn)
            return
        if conn.released:
            return
        if kind is RrcKind.CONNECTION_SETUP:
            conn.srb1.state = BearerState.ACTIVE
            self._transmit(conn, Direction.UL, "SRB1", RrcMessage(RrcKind.SETUP_COMPLETE))
            if ue is not None:
                ue.rrc_connected(conn)
        elif kind is RrcKind.DL_INFORMATION_TRANSFER:
            if ue is not None:
                ue.srb_pdu(payload.embedded_pdu)
        elif kind is RrcKind.CONNECTION_RECONFIGURATION:
            drb_id, _ = payload.drb_config
            conn.ue_configured.add(drb_id)
            self._transmit(conn, Direction.UL, "SRB1", RrcMessage(RrcKind.RECONFIGURATION_COMPLETE))
            if ue is not None:
                ue.drb_activated(drb_id, payload.embedded_pdu)
