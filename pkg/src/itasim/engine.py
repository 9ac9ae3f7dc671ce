"""Deterministic discrete-event engine.

Simulation time is an integer count of microseconds. Config values such as
0.01 s or 0.5 s are exact at that resolution, so accumulated timestamps never
drift and repeated runs produce byte-identical output.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Any, Callable, Hashable

US_PER_SECOND = 1_000_000

SimTime = int  # microseconds


class SchedulingInPast(ValueError):
    pass


def to_us(value: Any) -> SimTime:
    """Convert seconds (int, float, str or Decimal) to integer microseconds.

    Raises ValueError for negative, non-finite or sub-microsecond values.
    """
    if isinstance(value, bool):
        raise ValueError(f"not a time value: {value!r}")
    try:
        # str() first so that 0.01 becomes Decimal("0.01"), not its binary expansion
        d = Decimal(value) if isinstance(value, (int, Decimal)) else Decimal(str(value).strip())
    except InvalidOperation:
        raise ValueError(f"not a time value: {value!r}") from None
    if not d.is_finite():
        raise ValueError(f"time must be finite: {value!r}")
    if d < 0:
        raise ValueError(f"time must be non-negative: {value!r}")
    us = d * US_PER_SECOND
    if us != us.to_integral_value():
        raise ValueError(f"time {value!r} is finer than 1 microsecond")
    return int(us)


def fmt_seconds(us: int) -> str:
    """Render microseconds as an exact decimal number of seconds."""
    sign = "-" if us < 0 else ""
    whole, frac = divmod(abs(us), US_PER_SECOND)
    if not frac:
        return f"{sign}{whole}"
    return f"{sign}{whole}.{frac:06d}".rstrip("0")


@dataclass(slots=True)
class Event:
    fire_at: SimTime
    seq: int
    target: Hashable
    kind: str
    message: Any = None
    data: Any = None
    sender: Any = None


Handler = Callable[[Event], None]


@dataclass
class Engine:
    """Single-threaded event loop.

    Events with equal ``fire_at`` run in insertion order. There is no
    cancellation: handlers that own timers must ignore stale ones themselves.
    """

    seed: int = 0
    trace: bool = False
    now: SimTime = 0
    events_processed: int = 0
    _queue: list = field(default_factory=list, repr=False)
    _seq: int = 0
    _handlers: dict = field(default_factory=dict, repr=False)
    _trace: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.rng = random.Random(self.seed)

    def stream(self, name: str) -> random.Random:
        """An independent generator derived from the run seed and ``name``."""
        return random.Random(f"{self.seed}/{name}")

    def register(self, target: Hashable, handler: Handler) -> None:
        self._handlers[target] = handler

    def schedule(self, time: SimTime, target: Hashable, kind: str, message=None,
                 data=None, sender=None) -> int:
        if time < self.now:
            raise SchedulingInPast(f"cannot schedule at {fmt_seconds(time)} s, now is {fmt_seconds(self.now)} s")
        seq = self._seq
        self._seq += 1
        heapq.heappush(self._queue, (time, seq, Event(time, seq, target, kind, message, data, sender)))
        return seq

    def pending(self) -> int:
        return len(self._queue)

    def run(self, until: SimTime | None = None) -> int:
        """Execute events with ``fire_at <= until``; ``None`` drains the queue.

        Returns the number of events executed by this call.
        """
        if until is not None and until < self.now:
            raise SchedulingInPast(f"run(until={fmt_seconds(until)}) is before now={fmt_seconds(self.now)}")
        count = 0
        queue = self._queue
        while queue and (until is None or queue[0][0] <= until):
            time, _, event = heapq.heappop(queue)
            self.now = time
            if self.trace:
                msg_id = getattr(event.message, "msg_id", None)
                self._trace.append((time, event.seq, str(event.target), event.kind, msg_id))
            handler = self._handlers.get(event.target)
            if handler is None:
                raise KeyError(f"no handler registered for {event.target!r}")
            handler(event)
            count += 1
        if until is not None:
            self.now = until
        self.events_processed += count
        return count

    def trace_log(self) -> list:
        return list(self._trace)
