from __future__ import annotations

import time


class VirtualClock:
    """Logical time source; ``sleep`` advances the clock instead of blocking."""

    def __init__(self, start: float = 1_700_000_000.0):
        self.t = float(start)
        self.slept = 0.0

    def now(self) -> float:
        return self.t

    def sleep(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot sleep a negative duration")
        self.t += seconds
        self.slept += seconds

    def set(self, t: float) -> None:
        self.t = float(t)


def real_now() -> float:
    return time.time()


def real_sleep(seconds: float) -> None:
    time.sleep(seconds)
