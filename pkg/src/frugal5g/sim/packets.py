"""Higher-layer SDUs carried inside Data frames.

Two shapes exist: application packets belonging to a flow, and EAPOL-style
authentication messages. Both start with a one-byte tag.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from ..errors import InvariantViolation
from ..interworking import EapKind, EapMessage

TAG_DATA = 0xD7
TAG_EAPOL = 0x8E
_DATA = struct.Struct("<BB")
_SEQ_TIME = struct.Struct("<Iq")
_EAP_KINDS = list(EapKind)


@dataclass(frozen=True)
class AppPacket:
    flow: str
    pseq: int
    sent_at: int
    size: int


def data_overhead(flow: str) -> int:
    return _DATA.size + len(flow.encode()) + _SEQ_TIME.size


def encode_app(pkt: AppPacket) -> bytes:
    fid = pkt.flow.encode()
    head = _DATA.pack(TAG_DATA, len(fid)) + fid + _SEQ_TIME.pack(pkt.pseq, pkt.sent_at)
    if pkt.size < len(head):
        raise InvariantViolation(f"packet size {pkt.size} below header size {len(head)}")
    return head + bytes(pkt.size - len(head))


def encode_eap(msg: EapMessage) -> bytes:
    ue = msg.ue_id.encode()
    return bytes([TAG_EAPOL, _EAP_KINDS.index(msg.kind), len(ue)]) + ue + msg.payload


def decode_sdu(sdu: bytes) -> AppPacket | EapMessage | None:
    """Parse an SDU; returns None for anything that is not ours."""
    if len(sdu) < 3:
        return None
    if sdu[0] == TAG_DATA:
        n = sdu[1]
        end = 2 + n
        if len(sdu) < end + _SEQ_TIME.size:
            return None
        pseq, sent_at = _SEQ_TIME.unpack_from(sdu, end)
        return AppPacket(sdu[2:end].decode(), pseq, sent_at, len(sdu))
    if sdu[0] == TAG_EAPOL and sdu[1] < len(_EAP_KINDS):
        n = sdu[2]
        if len(sdu) < 3 + n:
            return None
        return EapMessage(_EAP_KINDS[sdu[1]], sdu[3:3 + n].decode(), sdu[3 + n:])
    return None
