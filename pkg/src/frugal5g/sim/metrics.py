"""Per-run counters and the metrics document written at the end."""

from __future__ import annotations

import hashlib
import json
import math

from ..errors import InvariantViolation
from .engine import US_PER_MS, US_PER_S


class FlowStats:
    def __init__(self, flow_id: str, start: int, stop: int):
        self.flow_id = flow_id
        self.start = start
        self.stop = stop
        self.sent = 0
        self.delivered: set[int] = set()
        self.dropped: dict[int, str] = {}
        self.latencies: list[int] = []
        self.bits = 0
        self.last_pseq = -1
        self.reordered = 0


class Metrics:
    def __init__(self):
        self.flows: dict[str, FlowStats] = {}
        self.utilization: dict[str, list[list]] = {}
        self.asleep_since: dict[str, int] = {}
        self.asleep_us: dict[str, int] = {}
        self.handovers = 0
        self.decisions = hashlib.sha256()
        self.modes: dict[str, str] = {}

    def add_flow(self, flow_id: str, start: int, stop: int) -> None:
        self.flows[flow_id] = FlowStats(flow_id, start, stop)

    def sent(self, flow_id: str, pseq: int) -> None:
        st = self.flows[flow_id]
        if pseq != st.sent:
            raise InvariantViolation(f"{flow_id}: packet {pseq} sent out of order")
        st.sent += 1

    def delivered(self, flow_id: str, pseq: int, latency: int, size: int) -> None:
        st = self.flows[flow_id]
        if pseq >= st.sent or pseq in st.delivered or pseq in st.dropped:
            raise InvariantViolation(f"{flow_id}: packet {pseq} delivered twice or never sent")
        st.delivered.add(pseq)
        st.latencies.append(latency)
        st.bits += size * 8
        if pseq < st.last_pseq:
            st.reordered += 1
        st.last_pseq = max(st.last_pseq, pseq)

    def dropped(self, flow_id: str, pseq: int, reason: str) -> None:
        st = self.flows[flow_id]
        if pseq >= st.sent or pseq in st.delivered or pseq in st.dropped:
            raise InvariantViolation(f"{flow_id}: packet {pseq} dropped twice or after delivery")
        st.dropped[pseq] = reason

    def ap_sample(self, ap_id: str, t: int, load: int, capacity: int) -> None:
        self.utilization.setdefault(ap_id, []).append([t // US_PER_MS, round(load / capacity, 6)])

    def sleep(self, node: str, t: int) -> None:
        self.asleep_since.setdefault(node, t)

    def wake(self, node: str, t: int) -> None:
        since = self.asleep_since.pop(node, None)
        if since is not None:
            self.asleep_us[node] = self.asleep_us.get(node, 0) + t - since

    def decision(self, line: str) -> None:
        self.decisions.update(line.encode() + b"\n")

    def report(self, scenario: str, seed: int, end: int) -> dict:
        for node in sorted(self.asleep_since):
            self.wake(node, end)
        flows = {}
        for fid, st in sorted(self.flows.items()):
            lat = sorted(st.latencies)
            n_drop = len(st.dropped)
            in_flight = st.sent - len(st.delivered) - n_drop
            if in_flight < 0:
                raise InvariantViolation(f"{fid}: more packets resolved than sent")
            active = max(1, min(end, st.stop) - st.start)
            reasons: dict[str, int] = {}
            for r in st.dropped.values():
                reasons[r] = reasons.get(r, 0) + 1
            flows[fid] = {
                "sent": st.sent,
                "delivered": len(st.delivered),
                "dropped": n_drop,
                "in_flight": in_flight,
                "drop_reasons": dict(sorted(reasons.items())),
                "latency_mean_ms": round(sum(lat) / len(lat) / US_PER_MS, 3) if lat else None,
                "latency_p95_ms": round(lat[math.ceil(0.95 * len(lat)) - 1] / US_PER_MS, 3) if lat else None,
                "throughput_bps": st.bits * US_PER_S // active,
                "reordered": st.reordered,
            }
        return {
            "scenario": scenario,
            "seed": seed,
            "duration_ms": end // US_PER_MS,
            "flows": flows,
            "aps": {ap: {"utilization": tl} for ap, tl in sorted(self.utilization.items())},
            "energy": {"node_ms_asleep": {n: us // US_PER_MS for n, us in sorted(self.asleep_us.items())}},
            "handovers": self.handovers,
            "decision_log_digest": self.decisions.hexdigest(),
            "ue_modes": dict(sorted(self.modes.items())),
        }


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"
