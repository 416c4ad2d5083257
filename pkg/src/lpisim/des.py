"""Deterministic discrete-event engine.

Time is an integer count of picoseconds. Events at equal time fire in
insertion order, so a run is fully reproducible.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, TextIO

PS = 1
NS = 1_000
US = 1_000_000
MS = 1_000_000_000
S = 1_000_000_000_000

DEFAULT_MAX_EVENTS = 10**10


class SimulationError(RuntimeError):
    """Fatal logic error inside the simulation (bad schedule, runaway, ...)."""


@dataclass(order=True)
class SimEvent:
    fire_at: int
    seq: int
    kind: str = field(compare=False)
    action: Optional[Callable[..., Any]] = field(compare=False, default=None)
    payload: tuple = field(compare=False, default=())
    cancelled: bool = field(compare=False, default=False)
    fired: bool = field(compare=False, default=False)
    entity: Any = field(compare=False, default=None)


class Simulator:
    def __init__(self, max_events: int = DEFAULT_MAX_EVENTS,
                 event_log: Optional[TextIO] = None):
        self.now = 0
        self._heap: list[SimEvent] = []
        self._seq = itertools.count()
        self.max_events = max_events
        self.dispatched = 0
        self.event_log = event_log
        self._stop = False

    def schedule(self, fire_at: int, kind: str, action: Callable[..., Any] = None,
                 *payload: Any, entity: Any = None) -> SimEvent:
        if not isinstance(fire_at, int):
            raise SimulationError(f"event time must be integer ps, got {fire_at!r}")
        if fire_at < self.now:
            raise SimulationError(
                f"cannot schedule {kind!r} at {fire_at} ps, clock is already {self.now} ps")
        ev = SimEvent(fire_at, next(self._seq), kind, action, payload, entity=entity)
        heapq.heappush(self._heap, ev)
        return ev

    def schedule_in(self, delay: int, kind: str, action: Callable[..., Any] = None,
                    *payload: Any, entity: Any = None) -> SimEvent:
        return self.schedule(self.now + delay, kind, action, *payload, entity=entity)

    @staticmethod
    def cancel(handle: Optional[SimEvent]) -> bool:
        if handle is None or handle.cancelled or handle.fired:
            return False
        handle.cancelled = True
        return True

    def stop(self) -> None:
        """Stop the loop after the event currently being dispatched."""
        self._stop = True

    def pending(self) -> int:
        return sum(1 for ev in self._heap if not ev.cancelled)

    def run_until(self, end: Optional[int] = None) -> int:
        """Dispatch events until the queue drains, ``end`` is reached or stop() is called.

        With an explicit ``end`` the clock is advanced to ``end`` when no event
        at or before it remains.
        """
        self._stop = False
        heap = self._heap
        while heap and not self._stop:
            ev = heap[0]
            if end is not None and ev.fire_at > end:
                break
            heapq.heappop(heap)
            if ev.cancelled:
                continue
            self.now = ev.fire_at
            ev.fired = True
            self.dispatched += 1
            if self.dispatched > self.max_events:
                raise SimulationError(
                    f"event limit {self.max_events} exceeded at t={self.now} ps "
                    f"(last event {ev.kind!r}); possible livelock")
            if self.event_log is not None:
                ent = "" if ev.entity is None else f" {ev.entity}"
                self.event_log.write(f"{ev.fire_at} {ev.kind}{ent}\n")
            if ev.action is not None:
                ev.action(*ev.payload)
        if end is not None and not self._stop and self.now < end:
            self.now = end
        return self.now
