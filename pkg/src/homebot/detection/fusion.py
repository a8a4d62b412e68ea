"""Combine the fast breath detector, slow trend changes and a pan sweep."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .breath import Presence
from .trend import Direction


class Side(str, Enum):
    LEFT = "Left"
    RIGHT = "Right"
    CENTER = "Center"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class PresenceEstimate:
    present: bool
    side: Side


def side_of_bearing(bearing: float, center_halfwidth: float = math.radians(15)) -> Side:
    """Bearing is measured counter-clockwise from straight ahead, so positive is left."""
    if bearing > center_halfwidth:
        return Side.LEFT
    if bearing < -center_halfwidth:
        return Side.RIGHT
    return Side.CENTER


def fuse_presence(
    fast_state: Presence | None,
    slow_changes,
    pan_samples,
    noise_floor: float = 0.0,
    now: float | None = None,
    hold_window: float = 30.0,
) -> PresenceEstimate:
    """Present if the fast detector says Close or the latest slow change is a recent rise.

    ``slow_changes`` holds ``(timestamp, ChangePoint)`` pairs. ``pan_samples``
    holds ``(bearing, reading)`` pairs; readings are averaged per side bucket
    and the side is reported only when the spread beats ``noise_floor``.
    """
    present = fast_state is Presence.CLOSE
    if not present and slow_changes:
        t_last, cp = slow_changes[-1]
        recent = now is None or now - t_last <= hold_window
        present = cp.direction is Direction.RISING and recent

    buckets: dict[Side, list[float]] = {}
    for bearing, reading in pan_samples:
        buckets.setdefault(side_of_bearing(bearing), []).append(reading)
    side = Side.UNKNOWN
    if len({b for b, _ in pan_samples}) >= 2 and len(buckets) >= 2:
        means = {k: sum(v) / len(v) for k, v in buckets.items()}
        ranked = sorted(means.items(), key=lambda kv: (-kv[1], kv[0].value))
        if ranked[0][1] - min(means.values()) > noise_floor:
            side = ranked[0][0]
    return PresenceEstimate(present, side)
