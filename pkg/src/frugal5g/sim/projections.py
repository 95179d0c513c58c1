"""Views over a trace that tests and the CLI compare against golden text.

``callflow``
    One line per attach-procedure message of one UE, transport in the label,
    from the first beacon up to and including the first Data frame.
``mac``
    Only 802.11 management frame names exchanged by one UE; RRC transport
    is erased, so emulated and native attaches can be compared.
``northbound``
    What the core or gateway sees: boundary, auth and sync records with the
    transport-specific fields removed. Records are grouped per stream (auth
    exchange of a UE, one flow direction, sync) with order kept inside each
    stream; how independent streams interleave depends on radio timing.
"""

from __future__ import annotations

from typing import Iterable

from .trace import POP_EXTERNAL, TraceRecord

MAC_MGMT = ("ProbeRequest", "ProbeResponse", "AssociationRequest", "AssociationResponse",
            "Deauthentication")
TRANSPORT_FIELDS = ("t_us", "seq", "src", "dst", "via", "dlv", "ap", "drb", "qci", "lat", "bytes")
PROJECTIONS = ("callflow", "mac", "northbound")


def _involves(rec: TraceRecord, ue: str) -> bool:
    return ue in (rec.node, rec.get("src"), rec.get("dst"), rec.get("ue"))


def _mrb_beacon(rec: TraceRecord) -> bool:
    return rec.kind == "mgmt" and rec.get("msg") == "Beacon" and rec.get("via") == "MRB1"


def _label(rec: TraceRecord) -> str | None:
    msg, via = rec.get("msg"), rec.get("via")
    if rec.kind == "rrc":
        pdu = rec.get("pdu")
        if msg == "UlInformationTransfer" and pdu:
            return f"{pdu}/{via}"
        if msg == "ConnectionReconfiguration":
            return f"{msg}({pdu}+DRB{rec.get('drb')})/{via}"
        return f"{msg}/{via}"
    if rec.kind in ("mgmt", "data") and via:
        return f"{msg}/{via}"
    return None


def callflow(records: Iterable[TraceRecord], ue: str) -> list[str]:
    out: list[str] = []
    for rec in records:
        if _mrb_beacon(rec):
            if not out or out[-1] != "Beacon*":
                if any(not line.startswith("Beacon") for line in out):
                    continue
                out.append("Beacon*")
            continue
        if rec.kind not in ("rrc", "mgmt", "data") or not _involves(rec, ue):
            continue
        label = _label(rec)
        if label is None:
            continue
        out.append(label)
        if rec.get("msg") == "Data":
            break
    return out


def mac(records: Iterable[TraceRecord], ue: str) -> list[str]:
    out: list[str] = []
    for rec in records:
        msg = rec.get("msg")
        if _mrb_beacon(rec):
            if not out:
                out.append("Beacon*")
            continue
        if not _involves(rec, ue):
            continue
        if rec.kind == "rrc" and msg in ("UlInformationTransfer", "ConnectionReconfiguration"):
            msg = rec.get("pdu")
        elif rec.kind != "mgmt":
            continue
        if msg in MAC_MGMT:
            out.append(msg)
    return out


def _stream(rec: TraceRecord) -> tuple[str, ...]:
    if rec.kind == "auth":
        return ("auth", rec.get("ue", ""))
    return (rec.node, rec.kind, rec.get("msg", ""), rec.get("flow", ""), rec.get("dir", ""))


def northbound(records: Iterable[TraceRecord]) -> list[str]:
    picked = [r for r in records if r.kind == "auth" or r.get("boundary") == POP_EXTERNAL]
    out = []
    for rec in sorted(picked, key=_stream):
        kept = [f"{k}={v}" for k, v in rec.fields if k not in TRANSPORT_FIELDS]
        out.append(" ".join([rec.node, rec.kind] + kept))
    return out
