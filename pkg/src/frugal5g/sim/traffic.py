"""Packet arrival processes. The only consumer of randomness in a run."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .engine import US_PER_S
from .scenario import TrafficSpec


def flow_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """One independent generator per flow, in declaration order."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def send_times(spec: TrafficSpec, rng: np.random.Generator) -> Iterator[int]:
    """Integer-microsecond send instants in [start, stop)."""
    t = spec.start_us
    if spec.kind == "CBR":
        gap = max(1, round(US_PER_S / spec.rate))
        while t < spec.stop_us:
            yield t
            t += gap
        return
    mean = US_PER_S / spec.rate
    while True:
        t += max(1, int(round(rng.exponential(mean))))
        if t >= spec.stop_us:
            return
        yield t
