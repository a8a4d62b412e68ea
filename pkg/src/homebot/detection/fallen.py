"""Fallen-person detection from laser clusters and fall direction from shoulder tracks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


@dataclass(frozen=True)
class FallenThresholds:
    size_min: float = 0.4
    size_max: float = 2.1
    temp_min: float = 30.0
    temp_max: float = 40.0


@dataclass(frozen=True)
class FallenCandidate:
    position: tuple[float, float]
    confidence: float
    size_ok: bool
    temperature_ok: bool
    source: str = ""


def _margin(x: float, lo: float, hi: float) -> float:
    """1 at the middle of [lo, hi], falling linearly to 0 at either end."""
    half = (hi - lo) / 2
    if half <= 0:
        return 1.0
    return max(0.0, min(1.0, min(x - lo, hi - x) / half))


def is_fallen_candidate(cluster, cfg: FallenThresholds = FallenThresholds()) -> bool:
    return (
        not cluster.in_known_map
        and cfg.size_min <= cluster.major_extent <= cfg.size_max
        and cfg.temp_min <= cluster.mean_temperature <= cfg.temp_max
    )


def detect_fallen(clusters, cfg: FallenThresholds = FallenThresholds()) -> list[FallenCandidate]:
    """Unknown objects that are both human-sized and human-warm."""
    out = []
    for c in clusters:
        if not is_fallen_candidate(c, cfg):
            continue
        conf = _margin(c.major_extent, cfg.size_min, cfg.size_max) * _margin(
            c.mean_temperature, cfg.temp_min, cfg.temp_max
        )
        out.append(FallenCandidate(tuple(c.centroid), conf, True, True, getattr(c, "source", "")))
    return out


class FallOutcome(str, Enum):
    FORWARD = "Forward"
    BACKWARD = "Backward"
    LEFT = "Left"
    RIGHT = "Right"
    NO_FALL = "NoFall"


class TrackTooShort(ValueError):
    pass


def quadrant(angle: float) -> FallOutcome:
    """Azimuth in the person's frame to a direction.

    Each quadrant owns its counter-clockwise edge: (-45, 45] is Forward,
    (45, 135] Left, (135, 225] Backward, (225, 315] Right.
    """
    deg = math.degrees(angle) % 360.0
    if deg > 315.0 or deg <= 45.0:
        return FallOutcome.FORWARD
    if deg <= 135.0:
        return FallOutcome.LEFT
    if deg <= 225.0:
        return FallOutcome.BACKWARD
    return FallOutcome.RIGHT


def fall_direction(shoulder_track, drop_threshold: float = 0.5, window_fall: float = 2.0) -> FallOutcome:
    """Fall if the shoulders drop by ``drop_threshold`` within ``window_fall`` seconds."""
    if len(shoulder_track) < 2:
        raise TrackTooShort("shoulder track needs at least two samples")
    track = sorted(shoulder_track, key=lambda s: s[0])
    fell = False
    j0 = 0
    for j, (tj, hj, _) in enumerate(track):
        while track[j0][0] < tj - window_fall - 1e-9:
            j0 += 1
        peak = max(h for _, h, _ in track[j0 : j + 1])
        if peak - hj >= drop_threshold - 1e-12:
            fell = True
            break
    if not fell:
        return FallOutcome.NO_FALL
    d0 = track[0][2]
    d1 = track[-1][2]
    dx, dy = d1[0] - d0[0], d1[1] - d0[1]
    return quadrant(math.atan2(dy, dx))
