"""Injectable clocks. Every component reads time through one of these."""

from __future__ import annotations

import threading
import time
from datetime import datetime, timedelta, timezone
from typing import Protocol


class Clock(Protocol):
    def now(self) -> datetime: ...


class SystemClock:
    def now(self) -> datetime:
        return datetime.now(timezone.utc)


class SimulatedClock:
    """Manually advanced clock for deterministic scheduling."""

    def __init__(self, start: datetime):
        if start.tzinfo is None:
            raise ValueError("start must be timezone-aware")
        self._now = start.astimezone(timezone.utc)
        self._lock = threading.Lock()

    def now(self) -> datetime:
        with self._lock:
            return self._now

    def advance(self, delta: timedelta | float) -> datetime:
        if not isinstance(delta, timedelta):
            delta = timedelta(seconds=delta)
        if delta < timedelta(0):
            raise ValueError("cannot move a clock backwards")
        with self._lock:
            self._now += delta
            return self._now

    def set(self, t: datetime) -> None:
        with self._lock:
            if t < self._now:
                raise ValueError("cannot move a clock backwards")
            self._now = t


def sleep(seconds: float) -> None:
    time.sleep(seconds)
