"""Millisecond clocks: wall time for serving, virtual time for determinism."""

from __future__ import annotations

import time
from typing import Protocol


class Clock(Protocol):
    def now_ms(self) -> int: ...


class WallClock:
    def now_ms(self) -> int:
        return int(time.time() * 1000)


class VirtualClock:
    """Manually driven clock; the script runner is the only thing moving it."""

    def __init__(self, start_ms: int = 0):
        self._now = start_ms

    def now_ms(self) -> int:
        return self._now

    def set_ms(self, value: int) -> None:
        if value < self._now:
            raise ValueError(f"virtual clock cannot move backwards ({self._now} -> {value})")
        self._now = value
