"""Time sources: real wall clock and a manually advanced clock for tests/simulation.

All instants are integer milliseconds. The manual clock makes pipeline runs
and the orchestrator fully deterministic; wall-clock binding happens only at
the service boundary.
"""

from __future__ import annotations

import time
from typing import Protocol


class Clock(Protocol):
    def now_ms(self) -> int: ...

    def sleep_ms(self, ms: int) -> None: ...


class SystemClock:
    """Wall-clock time in unix milliseconds."""

    def now_ms(self) -> int:
        return int(time.time() * 1000)

    def sleep_ms(self, ms: int) -> None:
        if ms > 0:
            time.sleep(ms / 1000.0)


class ManualClock:
    """Clock that only moves when told to; sleeping advances it instantly."""

    def __init__(self, start_ms: int = 0) -> None:
        self._now = start_ms

    def now_ms(self) -> int:
        return self._now

    def sleep_ms(self, ms: int) -> None:
        if ms < 0:
            raise ValueError("cannot sleep a negative duration")
        self._now += ms

    def advance(self, ms: int) -> None:
        self.sleep_ms(ms)

    def set_ms(self, now_ms: int) -> None:
        if now_ms < self._now:
            raise ValueError("manual clock cannot move backwards")
        self._now = now_ms
