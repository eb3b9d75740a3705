"""Event queue ordered by (fire_at, sequence)."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Callable


@dataclass(order=True)
class SimEvent:
    fire_at: float
    sequence: int
    action: Callable = field(compare=False)
    args: tuple = field(compare=False, default=())
    cancelled: bool = field(compare=False, default=False)


class EventQueue:
    def __init__(self):
        self._heap: list = []
        self._seq = itertools.count()
        self.now = 0.0
        self.dispatched = 0

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, at: float, action: Callable, *args) -> SimEvent:
        if at < self.now:
            raise ValueError(f"event at {at} scheduled in the past (now {self.now})")
        ev = SimEvent(at, next(self._seq), action, args)
        heapq.heappush(self._heap, ev)
        return ev

    def peek(self) -> float:
        return self._heap[0].fire_at if self._heap else float("inf")

    def run(self, until: float) -> None:
        """Dispatch every event with fire_at <= until, in order."""
        while self._heap and self._heap[0].fire_at <= until:
            ev = heapq.heappop(self._heap)
            if ev.cancelled:
                continue
            self.now = ev.fire_at
            self.dispatched += 1
            ev.action(*ev.args)
        self.now = max(self.now, until)
