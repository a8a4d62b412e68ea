"""Two-state breath presence detector with self-centring thresholds."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from enum import Enum


class Presence(str, Enum):
    CLOSE = "Close"
    FAR = "Far"


@dataclass(frozen=True)
class BreathDetectorState:
    presence: Presence
    upper: float
    lower: float
    margin: float
    last_reading: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("lower threshold must be below upper threshold")
        if self.margin <= 0:
            raise ValueError("margin must be positive")


@dataclass(frozen=True)
class Transition:
    timestamp: float
    presence: Presence


def initial_state(reading: float, margin: float, presence: Presence = Presence.FAR) -> BreathDetectorState:
    return BreathDetectorState(presence, reading + margin, reading - margin, margin, reading)


def _sandwich(s: BreathDetectorState, reading: float, presence: Presence) -> BreathDetectorState:
    return BreathDetectorState(presence, reading + s.margin, reading - s.margin, s.margin, reading)


def breath_step(s: BreathDetectorState, sample) -> tuple[BreathDetectorState, Transition | None]:
    """Feed one gas sample; returns the new state and a transition if the state flipped.

    While the signal moves the way the current state expects (rising when
    close, falling when far) the thresholds follow it. A move the other way
    only flips the state once it crosses a threshold.
    """
    r = sample.reading
    expected = (s.presence is Presence.CLOSE and r > s.last_reading) or (
        s.presence is Presence.FAR and r < s.last_reading
    )
    if expected:
        return _sandwich(s, r, s.presence), None
    if r >= s.upper and s.presence is Presence.FAR:
        return _sandwich(s, r, Presence.CLOSE), Transition(sample.timestamp, Presence.CLOSE)
    if r <= s.lower and s.presence is Presence.CLOSE:
        return _sandwich(s, r, Presence.FAR), Transition(sample.timestamp, Presence.FAR)
    return replace(s, last_reading=r), None


def noise_std(readings) -> float:
    """Noise estimate from successive differences, insensitive to slow trends."""
    if len(readings) < 3:
        return 0.0
    diffs = [b - a for a, b in zip(readings, list(readings)[1:])]
    mean = sum(diffs) / len(diffs)
    var = sum((d - mean) ** 2 for d in diffs) / (len(diffs) - 1)
    return math.sqrt(var / 2.0)


class BreathDetector:
    """Runs breath_step on a stream, re-estimating the margin over a trailing window.

    The margin is ``margin_factor`` times the noise estimate over the last
    ``noise_window`` seconds, never below ``min_margin``. Samples are averaged
    over ``block`` consecutive readings before reaching the state machine.
    """

    def __init__(
        self,
        margin_factor: float = 3.0,
        noise_window: float = 30.0,
        min_margin: float = 0.05,
        initial_margin: float | None = None,
        block: int = 10,
    ):
        self.margin_factor = margin_factor
        self.noise_window = noise_window
        self.min_margin = min_margin
        self.initial_margin = initial_margin
        self.block = block
        self.state: BreathDetectorState | None = None
        self.history: deque = deque()
        self.transitions: list[Transition] = []
        self._acc: list = []

    def margin(self) -> float:
        est = self.margin_factor * noise_std([r for _, r in self.history])
        if est <= 0 and self.initial_margin is not None:
            return self.initial_margin
        return max(self.min_margin, est)

    def update(self, sample) -> Transition | None:
        self._acc.append(sample)
        if len(self._acc) < self.block:
            return None
        t = self._acc[-1].timestamp
        reading = sum(s.reading for s in self._acc) / len(self._acc)
        self._acc = []
        self.history.append((t, reading))
        while self.history and self.history[0][0] < t - self.noise_window:
            self.history.popleft()
        m = self.margin()
        if self.state is None:
            self.state = initial_state(reading, m)
            return None
        self.state = replace(self.state, margin=m)
        self.state, tr = breath_step(self.state, _Reading(t, reading))
        if tr is not None:
            self.transitions.append(tr)
        return tr

    @property
    def presence(self) -> Presence | None:
        return None if self.state is None else self.state.presence


@dataclass(frozen=True)
class _Reading:
    timestamp: float
    reading: float
