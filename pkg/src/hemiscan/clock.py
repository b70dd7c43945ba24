"""Clocks for dwell accounting: wall time for real runs, a logical clock for simulation."""

from __future__ import annotations

import time
from datetime import datetime, timedelta, timezone

EPOCH = datetime(2000, 1, 1, tzinfo=timezone.utc)


class WallClock:
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)

    def timestamp(self) -> str:
        return datetime.now(timezone.utc).isoformat(timespec="microseconds")


class SimClock:
    """Logical clock: sleeping advances time instantly, timestamps count from a fixed epoch."""

    def __init__(self, start: float = 0.0):
        self.t = float(start)

    def now(self) -> float:
        return self.t

    def sleep(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot sleep a negative duration")
        self.t += seconds

    def advance(self, seconds: float) -> None:
        self.sleep(seconds)

    def timestamp(self) -> str:
        return (EPOCH + timedelta(seconds=self.t)).isoformat(timespec="microseconds")


class SimulatedTimeWallStamps(SimClock):
    """Dwell runs on logical time but records carry real UTC timestamps."""

    def timestamp(self) -> str:
        return datetime.now(timezone.utc).isoformat(timespec="microseconds")
