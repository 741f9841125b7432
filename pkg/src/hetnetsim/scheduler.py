"""Deterministic discrete-event kernel driving every simulated component."""

from __future__ import annotations

import hashlib
import heapq
import logging
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Tuple

logger = logging.getLogger(__name__)

# Simulation time is an integer count of microseconds since start.
SimTime = int

US_PER_MS = 1_000
US_PER_S = 1_000_000


def seconds(value: float) -> SimTime:
    return int(round(value * US_PER_S))


def millis(value: float) -> SimTime:
    return int(round(value * US_PER_MS))


def to_seconds(value: SimTime) -> float:
    return value / US_PER_S


def to_millis(value: SimTime) -> float:
    return value / US_PER_MS


class CausalityError(ValueError):
    """Raised when an event would fire before the current clock."""


@dataclass(eq=False)
class Event:
    """A timestamped action in the future-event list."""

    fire_at: SimTime
    action: Callable[..., None]
    args: Tuple[Any, ...] = ()
    seq: int = -1
    cancelled: bool = False

    def cancel(self) -> None:
        self.cancelled = True


@dataclass
class KernelStats:
    events_processed: int
    clock: SimTime


class Kernel:
    """
    Future-event list ordered by (fire_at, seq).

    Single-threaded: handlers run inline and may schedule further events.
    Cancelled events stay in the heap and are skipped when popped.
    """

    def __init__(self, trace: bool = False) -> None:
        self._now: SimTime = 0
        self._seq = 0
        self._heap: List[Tuple[SimTime, int, Event]] = []
        self._processed = 0
        self._digest: Optional[Any] = hashlib.blake2b(digest_size=16) if trace else None

    def now(self) -> SimTime:
        return self._now

    def schedule(self, event: Event) -> Event:
        if event.fire_at < self._now:
            raise CausalityError(
                f"event at {event.fire_at}us scheduled before now={self._now}us"
            )
        event.seq = self._seq
        self._seq += 1
        heapq.heappush(self._heap, (event.fire_at, event.seq, event))
        return event

    def call_at(self, fire_at: SimTime, action: Callable[..., None], *args: Any) -> Event:
        return self.schedule(Event(fire_at=fire_at, action=action, args=args))

    def call_later(self, delay: SimTime, action: Callable[..., None], *args: Any) -> Event:
        return self.schedule(Event(fire_at=self._now + delay, action=action, args=args))

    @property
    def events_processed(self) -> int:
        return self._processed

    @property
    def trace(self) -> bool:
        return self._digest is not None

    def pending(self) -> int:
        return len(self._heap)

    def run_until(self, t_end: SimTime) -> KernelStats:
        heap = self._heap
        while heap and heap[0][0] <= t_end:
            fire_at, seq, event = heapq.heappop(heap)
            if event.cancelled:
                continue
            if fire_at < self._now:
                raise CausalityError(f"clock would move back from {self._now} to {fire_at}")
            self._now = fire_at
            self._processed += 1
            if self._digest is not None:
                name = getattr(event.action, "__qualname__", repr(event.action))
                self._digest.update(f"{fire_at}:{seq}:{name};".encode("utf-8"))
            event.action(*event.args)
        if heap:
            # Later events remain, so nothing can happen before t_end.
            self._now = max(self._now, t_end)
        logger.debug("Kernel stopped at %sus after %s events", self._now, self._processed)
        return KernelStats(events_processed=self._processed, clock=self._now)

    def trace_digest(self) -> str:
        if self._digest is None:
            raise RuntimeError("kernel was created without trace=True")
        return self._digest.hexdigest()
