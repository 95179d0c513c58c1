"""Single-threaded discrete-event engine on an integer microsecond clock."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any, Callable

from ..errors import InvariantViolation

US_PER_MS = 1000
US_PER_S = 1_000_000


def ms(value: float) -> int:
    """Milliseconds to integer microseconds, rounding half away from zero."""
    us = value * US_PER_MS
    return int(us + 0.5) if us >= 0 else -int(-us + 0.5)


@dataclass(order=True)
class Event:
    time: int
    seq: int
    target: str = field(compare=False)
    action: Callable[..., Any] = field(compare=False, repr=False)
    args: tuple = field(compare=False, default=())
    cancelled: bool = field(compare=False, default=False)


class EventAborted(InvariantViolation):
    """An invariant broke while executing ``event``; the run stops there."""

    def __init__(self, event: Event, cause: Exception):
        self.event = event
        self.cause = cause
        name = getattr(event.action, "__qualname__", repr(event.action))
        super().__init__(
            f"event #{event.seq} at t={event.time}us on {event.target!r} ({name}) failed: {cause}"
        )


class Engine:
    """Executes events in (time, seq) order.

    ``seq`` is a global insertion counter, so two events scheduled for the
    same microsecond run in the order they were scheduled.
    """

    def __init__(self):
        self.now = 0
        self._queue: list[Event] = []
        self._seq = 0
        self.executed = 0

    def at(self, time: int, action: Callable[..., Any], *args, target: str = "") -> Event:
        if not isinstance(time, int):
            raise TypeError(f"event time must be integer microseconds, got {time!r}")
        if time < self.now:
            raise InvariantViolation(f"causality: cannot schedule at {time}us before now={self.now}us")
        ev = Event(time, self._seq, target, action, args)
        self._seq += 1
        heapq.heappush(self._queue, ev)
        return ev

    def after(self, delay: int, action: Callable[..., Any], *args, target: str = "") -> Event:
        return self.at(self.now + delay, action, *args, target=target)

    @staticmethod
    def cancel(event: Event | None) -> None:
        if event is not None:
            event.cancelled = True

    def pending(self) -> int:
        return sum(1 for ev in self._queue if not ev.cancelled)

    def peek_time(self) -> int | None:
        while self._queue and self._queue[0].cancelled:
            heapq.heappop(self._queue)
        return self._queue[0].time if self._queue else None

    def step(self) -> bool:
        while self._queue:
            ev = heapq.heappop(self._queue)
            if ev.cancelled:
                continue
            self.now = ev.time
            try:
                ev.action(*ev.args)
            except InvariantViolation as exc:
                if isinstance(exc, EventAborted):
                    raise
                raise EventAborted(ev, exc) from exc
            self.executed += 1
            return True
        return False

    def run(self, until: int | None = None) -> None:
        """Run until the queue drains or the next event lies beyond ``until``."""
        while True:
            t = self.peek_time()
            if t is None or (until is not None and t > until):
                break
            self.step()
        if until is not None and until > self.now:
            self.now = until
