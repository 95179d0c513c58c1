"""Simplified 802.11-style MAC frames carried by both RATs.

Wire layout (little-endian)::

    byte0      (subtype << 4) | (type << 2) | version
    byte1      flags; only PWR_MGT (0x10) is defined, and only on Data frames
    addr1      destination (6)
    addr2      source (6)
    addr3      BSSID (6)
    seq_ctrl   seq << 4 (2)
    body_len   (2)
    body       body_len bytes, at most 2304

The header is 24 bytes. Encoding is canonical: every field has exactly one
accepted representation, so ``encode_frame`` is injective and
``decode_frame`` rejects anything that is not in its image.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

from .errors import InvariantViolation, Truncated, UnknownType

MAX_BODY = 2304
HEADER_LEN = 24
SEQ_MODULO = 4096
PWR_MGT = 0x10
MAX_AID = 255
MAX_SSID = 32

_HEADER = struct.Struct("<BB6s6s6sHH")
assert _HEADER.size == HEADER_LEN


class MacAddress(bytes):
    """Six-octet MAC address; a ``bytes`` subclass so it hashes and packs cheaply."""

    def __new__(cls, octets: bytes | bytearray | str = b"\x00" * 6):
        if isinstance(octets, str):
            parts = octets.split(":")
            if len(parts) != 6:
                raise InvariantViolation(f"bad MAC address {octets!r}")
            octets = bytes(int(p, 16) for p in parts)
        if len(octets) != 6:
            raise InvariantViolation(f"MAC address needs 6 octets, got {len(octets)}")
        return super().__new__(cls, octets)

    @classmethod
    def local(cls, index: int) -> "MacAddress":
        """Locally administered unicast address 02:00:xx:xx:xx:xx for node ``index``."""
        if not 0 <= index < 1 << 32:
            raise InvariantViolation(f"node index out of range: {index}")
        return cls(b"\x02\x00" + index.to_bytes(4, "big"))

    @property
    def is_broadcast(self) -> bool:
        return self == BROADCAST

    @property
    def is_group(self) -> bool:
        return bool(self[0] & 0x01)

    @property
    def is_unicast(self) -> bool:
        return not self[0] & 0x01

    @property
    def is_local(self) -> bool:
        return bool(self[0] & 0x02)

    def __str__(self) -> str:
        return ":".join(f"{b:02x}" for b in self)

    def __repr__(self) -> str:
        return f"MacAddress('{self}')"


BROADCAST = MacAddress(b"\xff" * 6)


class FrameType(enum.Enum):
    ASSOCIATION_REQUEST = "AssociationRequest"
    ASSOCIATION_RESPONSE = "AssociationResponse"
    PROBE_REQUEST = "ProbeRequest"
    PROBE_RESPONSE = "ProbeResponse"
    BEACON = "Beacon"
    DEAUTHENTICATION = "Deauthentication"
    DATA = "Data"

    @property
    def is_management(self) -> bool:
        return self is not FrameType.DATA

    def __str__(self) -> str:
        return self.value


# (type, subtype) per frame type; type 0 = management, 2 = data
_TYPE_BITS = {
    FrameType.ASSOCIATION_REQUEST: (0, 0b0000),
    FrameType.ASSOCIATION_RESPONSE: (0, 0b0001),
    FrameType.PROBE_REQUEST: (0, 0b0100),
    FrameType.PROBE_RESPONSE: (0, 0b0101),
    FrameType.BEACON: (0, 0b1000),
    FrameType.DEAUTHENTICATION: (0, 0b1100),
    FrameType.DATA: (2, 0b0000),
}
_FC_BYTE = {ft: (sub << 4) | (typ << 2) for ft, (typ, sub) in _TYPE_BITS.items()}
_FROM_FC_BYTE = {v: k for k, v in _FC_BYTE.items()}


@dataclass(frozen=True, slots=True)
class MacFrame:
    frame_type: FrameType
    dst: MacAddress
    src: MacAddress
    bssid: MacAddress
    seq: int = 0
    body: bytes = b""
    power_mgmt: bool = False


def check_frame(frame: MacFrame) -> None:
    """Raise InvariantViolation unless ``frame`` obeys the MacFrame rules."""
    if not 0 <= frame.seq < SEQ_MODULO:
        raise InvariantViolation(f"seq {frame.seq} outside 0..4095")
    if len(frame.body) > MAX_BODY:
        raise InvariantViolation(f"body of {len(frame.body)} bytes exceeds {MAX_BODY}")
    for addr in (frame.dst, frame.src, frame.bssid):
        if not isinstance(addr, bytes) or len(addr) != 6:
            raise InvariantViolation(f"{addr!r} is not a 6-octet address")
    if frame.src[0] & 0x01:
        raise InvariantViolation("source address must be unicast")
    ft = frame.frame_type
    if ft in (FrameType.BEACON, FrameType.PROBE_REQUEST) and frame.dst != BROADCAST:
        raise InvariantViolation(f"{ft} must be sent to the broadcast address")
    if ft is FrameType.DATA:
        if frame.dst[0] & 0x01:
            raise InvariantViolation("Data frame destination must be unicast")
    elif frame.power_mgmt:
        raise InvariantViolation("power-management flag is only defined on Data frames")


def encode_frame(frame: MacFrame) -> bytes:
    check_frame(frame)
    header = _HEADER.pack(
        _FC_BYTE[frame.frame_type],
        PWR_MGT if frame.power_mgmt else 0,
        frame.dst,
        frame.src,
        frame.bssid,
        frame.seq << 4,
        len(frame.body),
    )
    return header + frame.body


def decode_frame(data: bytes) -> MacFrame:
    """Decode one frame; the buffer must hold exactly one encoded frame."""
    if len(data) < HEADER_LEN:
        raise Truncated(f"{len(data)} bytes is shorter than the {HEADER_LEN}-byte header")
    fc, flags, dst, src, bssid, seq_ctrl, body_len = _HEADER.unpack_from(data)
    frame_type = _FROM_FC_BYTE.get(fc)
    if frame_type is None:
        raise UnknownType(f"unassigned frame control byte 0x{fc:02x}")
    if body_len > MAX_BODY:
        raise InvariantViolation(f"declared body length {body_len} exceeds {MAX_BODY}")
    end = HEADER_LEN + body_len
    if len(data) < end:
        raise Truncated(f"declared body of {body_len} bytes, only {len(data) - HEADER_LEN} present")
    if len(data) > end:
        raise InvariantViolation(f"{len(data) - end} trailing bytes after body")
    if flags & ~PWR_MGT:
        raise InvariantViolation(f"undefined flag bits 0x{flags:02x}")
    if seq_ctrl & 0x000F:
        raise InvariantViolation("fragment number must be zero")
    mk = bytes.__new__  # unpacked fields are already exactly 6 octets
    frame = MacFrame(
        frame_type,
        mk(MacAddress, dst),
        mk(MacAddress, src),
        mk(MacAddress, bssid),
        seq_ctrl >> 4,
        bytes(data[HEADER_LEN:end]),
        bool(flags & PWR_MGT),
    )
    check_frame(frame)
    return frame


def next_seq(seq: int) -> int:
    return (seq + 1) % SEQ_MODULO


# -- management bodies -------------------------------------------------------

@dataclass(frozen=True)
class BeaconBody:
    ssid: str
    beacon_interval: int
    capabilities: int = 0x0001  # ESS
    tim: frozenset[int] = field(default_factory=frozenset)


def _check_ssid(ssid: str, allow_empty: bool) -> bytes:
    raw = ssid.encode("utf-8")
    if not raw and not allow_empty:
        raise InvariantViolation("SSID must be non-empty")
    if len(raw) > MAX_SSID:
        raise InvariantViolation(f"SSID longer than {MAX_SSID} bytes")
    return raw


def encode_tim(aids) -> bytes:
    """Bitmap where bit ``a % 8`` of byte ``a // 8`` flags association ID ``a``."""
    aids = sorted(set(aids))
    if not aids:
        return b""
    if aids[0] < 1 or aids[-1] > MAX_AID:
        raise InvariantViolation(f"association IDs must lie in 1..{MAX_AID}")
    bitmap = bytearray(aids[-1] // 8 + 1)
    for aid in aids:
        bitmap[aid // 8] |= 1 << (aid % 8)
    return bytes(bitmap)


def decode_tim(bitmap: bytes) -> frozenset[int]:
    if bitmap and bitmap[-1] == 0:
        raise InvariantViolation("TIM bitmap has a trailing zero byte")
    if bitmap and bitmap[0] & 0x01:
        raise InvariantViolation("TIM bit for association ID 0 is set")
    return frozenset(
        i * 8 + bit for i, byte in enumerate(bitmap) for bit in range(8) if byte >> bit & 1
    )


def encode_beacon_body(body: BeaconBody) -> bytes:
    ssid = _check_ssid(body.ssid, allow_empty=False)
    if not 0 < body.beacon_interval <= 0xFFFF:
        raise InvariantViolation(f"beacon interval {body.beacon_interval} TU is not in 1..65535")
    if not 0 <= body.capabilities <= 0xFFFF:
        raise InvariantViolation("capabilities must fit in 16 bits")
    tim = encode_tim(body.tim)
    return (
        bytes([len(ssid)]) + ssid
        + struct.pack("<HH", body.beacon_interval, body.capabilities)
        + bytes([len(tim)]) + tim
    )


def decode_beacon_body(raw: bytes) -> BeaconBody:
    if not raw:
        raise Truncated("empty beacon body")
    n = raw[0]
    if len(raw) < 1 + n + 5:
        raise Truncated("beacon body shorter than its SSID and fixed fields")
    try:
        ssid = raw[1:1 + n].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InvariantViolation("SSID is not valid UTF-8") from exc
    interval, caps = struct.unpack_from("<HH", raw, 1 + n)
    tim_len = raw[5 + n]
    tim_raw = raw[6 + n:]
    if len(tim_raw) < tim_len:
        raise Truncated("TIM bitmap shorter than declared")
    if len(tim_raw) > tim_len:
        raise InvariantViolation("trailing bytes after TIM bitmap")
    body = BeaconBody(ssid, interval, caps, decode_tim(tim_raw))
    encode_beacon_body(body)  # re-checks the value-level invariants
    return body


@dataclass(frozen=True)
class MgmtBody:
    """Body of Probe/Association request/response and Deauthentication frames.

    ``status`` doubles as the reason code of a Deauthentication frame.
    ``aid`` is only meaningful in an AssociationResponse.
    """

    ssid: str = ""
    status: int = 0
    aid: int = 0


def encode_mgmt_body(body: MgmtBody) -> bytes:
    ssid = _check_ssid(body.ssid, allow_empty=True)
    if not 0 <= body.status <= 0xFFFF or not 0 <= body.aid <= MAX_AID:
        raise InvariantViolation("status or association ID out of range")
    return bytes([len(ssid)]) + ssid + struct.pack("<HH", body.status, body.aid)


def decode_mgmt_body(raw: bytes) -> MgmtBody:
    if not raw:
        raise Truncated("empty management body")
    n = raw[0]
    if len(raw) < 1 + n + 4:
        raise Truncated("management body shorter than declared")
    if len(raw) > 1 + n + 4:
        raise InvariantViolation("trailing bytes after management body")
    try:
        ssid = raw[1:1 + n].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InvariantViolation("SSID is not valid UTF-8") from exc
    status, aid = struct.unpack_from("<HH", raw, 1 + n)
    body = MgmtBody(ssid, status, aid)
    encode_mgmt_body(body)
    return body


# -- builders ----------------------------------------------------------------

def build_beacon(ssid: str, interval_tu: int, tim=(), *, bssid: MacAddress | None = None,
                 seq: int = 0, capabilities: int = 0x0001) -> MacFrame:
    bssid = bssid if bssid is not None else MacAddress.local(0)
    body = encode_beacon_body(BeaconBody(ssid, interval_tu, capabilities, frozenset(tim)))
    return MacFrame(FrameType.BEACON, BROADCAST, bssid, bssid, seq, body)


def build_mgmt(frame_type: FrameType, src: MacAddress, dst: MacAddress, bssid: MacAddress,
               seq: int = 0, *, ssid: str = "", status: int = 0, aid: int = 0) -> MacFrame:
    if frame_type in (FrameType.BEACON, FrameType.DATA):
        raise InvariantViolation(f"{frame_type} is not a plain management frame")
    body = encode_mgmt_body(MgmtBody(ssid, status, aid))
    return MacFrame(frame_type, dst, src, bssid, seq, body)


def peek_type(pdu: bytes) -> FrameType | None:
    """Frame type from the first byte, without validating the rest."""
    return _FROM_FC_BYTE.get(pdu[0]) if pdu else None
