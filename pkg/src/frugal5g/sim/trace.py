"""Line-oriented, append-only simulation trace.

One record per line, tab separated::

    t_us  seq  node  kind  key=val  key=val ...

``seq`` is the record's position in the trace. Field order is the order the
emitter supplied, which keeps the bytes stable for a given run.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

KINDS = ("rrc", "mgmt", "data", "mrb", "ctrl", "auth", "sync", "drop", "boundary")
POP_EXTERNAL = "pop-external"


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    text = str(value)
    if any(c in text for c in "\t\n\r"):
        raise ValueError(f"trace value may not contain tabs or newlines: {text!r}")
    return text


@dataclass(frozen=True)
class TraceRecord:
    t_us: int
    seq: int
    node: str
    kind: str
    fields: tuple[tuple[str, str], ...] = ()

    def get(self, key: str, default: str | None = None) -> str | None:
        for k, v in self.fields:
            if k == key:
                return v
        return default

    def __getitem__(self, key: str) -> str:
        value = self.get(key)
        if value is None:
            raise KeyError(key)
        return value

    def __contains__(self, key: str) -> bool:
        return self.get(key) is not None

    def line(self) -> str:
        head = [str(self.t_us), str(self.seq), self.node, self.kind]
        return "\t".join(head + [f"{k}={v}" for k, v in self.fields])

    @classmethod
    def parse(cls, line: str) -> "TraceRecord":
        parts = line.rstrip("\n").split("\t")
        if len(parts) < 4:
            raise ValueError(f"malformed trace line: {line!r}")
        t, seq, node, kind, *rest = parts
        fields = tuple(tuple(p.split("=", 1)) for p in rest)
        if any(len(f) != 2 for f in fields):
            raise ValueError(f"malformed field in trace line: {line!r}")
        return cls(int(t), int(seq), node, kind, fields)  # type: ignore[arg-type]


class Trace:
    def __init__(self, clock: Callable[[], int] = lambda: 0):
        self._clock = clock
        self.records: list[TraceRecord] = []

    def emit(self, node: str, kind: str, **fields) -> TraceRecord:
        if kind not in KINDS:
            raise ValueError(f"unknown trace kind {kind!r}")
        rec = TraceRecord(
            self._clock(),
            len(self.records),
            node,
            kind,
            tuple((k, _fmt(v)) for k, v in fields.items() if v is not None),
        )
        self.records.append(rec)
        return rec

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def dumps(self) -> str:
        return "".join(r.line() + "\n" for r in self.records)

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    @classmethod
    def loads(cls, text: str) -> "Trace":
        trace = cls()
        trace.records = [TraceRecord.parse(l) for l in text.splitlines() if l.strip()]
        return trace

    def select(self, node: str | Iterable[str] | None = None,
               kind: str | Iterable[str] | None = None, **match) -> list[TraceRecord]:
        return filter_records(self.records, node=node, kind=kind, **match)


def _as_set(value):
    if value is None:
        return None
    if isinstance(value, str):
        return {v for v in value.split(",") if v}
    return set(value)


def filter_records(records: Iterable[TraceRecord], node=None, kind=None, **match) -> list[TraceRecord]:
    """Keep records whose node/kind lie in the given sets and whose fields equal ``match``.

    ``node`` also matches records that name the node as ``src``, ``dst``,
    or ``ue`` so that a per-node projection sees both directions.
    """
    nodes, kinds = _as_set(node), _as_set(kind)
    out = []
    for r in records:
        if kinds is not None and r.kind not in kinds:
            continue
        if nodes is not None and not (
            r.node in nodes or r.get("src") in nodes or r.get("dst") in nodes or r.get("ue") in nodes
        ):
            continue
        if any(r.get(k) != str(v) for k, v in match.items()):
            continue
        out.append(r)
    return out
