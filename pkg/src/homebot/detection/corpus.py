"""Synthetic labelled sensor windows for training the anomaly forest.

Normal windows mix walking, brief mat stops, meals on the kitchen chair and
quiet nights. Anomalies follow three archetypes: a person lying on a floor
mat (fall), leaving through the front door at night, and repeated kitchen
cupboard opening (redundant cooking).
"""

from __future__ import annotations

import numpy as np

from ..sensors import SensorEvent
from ..world import HomeMap, SensorKind
from .anomaly import DEFAULT_WINDOW, extract_features

NORMAL_KINDS = ("active", "meal", "night_quiet", "night_bathroom", "visit_out")
ANOMALY_KINDS = ("long_dwell", "night_exit", "redundant_cooking")

HOURS = {
    "Night": (0.5, 5.5),
    "Morning": (6.5, 11.5),
    "Day": (12.5, 17.5),
    "Evening": (18.5, 23.5),
}
MAT_DWELL_MAX = 40.0
FALL_DWELL_MIN = 60.0


class _Window:
    def __init__(self, home: HomeMap, window: float, dt: float):
        self.home = home
        self.window = window
        self.dt = dt
        self.n = int(round(window / dt))
        self.events: list[SensorEvent] = []

    def tick_time(self, k: int) -> float:
        return round(k * self.dt, 9)

    def span(self, sensor_id: str, start: float, end: float):
        kind = self.home.sensor(sensor_id).kind
        k0 = max(1, int(round(start / self.dt)))
        k1 = min(self.n, int(round(end / self.dt)))
        for k in range(k0, k1 + 1):
            self.events.append(SensorEvent(self.tick_time(k), sensor_id, kind, True))

    def pulse(self, sensor_id: str, t: float, value: bool = True):
        kind = self.home.sensor(sensor_id).kind
        k = min(self.n, max(1, int(round(t / self.dt))))
        self.events.append(SensorEvent(self.tick_time(k), sensor_id, kind, value))


def _sensors(home: HomeMap, kind: SensorKind, room: str | None = None) -> list[str]:
    return [
        s.sensor_id
        for s in home.sensors
        if s.kind is kind and (room is None or home.sensor_room(s) == room)
    ]


def _pir(home, room):
    ids = _sensors(home, SensorKind.PIR, room)
    return ids[0] if ids else None


def _walkabout(w: _Window, rng, rooms, t0: float, t1: float, mats=True):
    """Random room-to-room wandering between t0 and t1 with short mat stops."""
    t = t0
    home = w.home
    while t < t1:
        room = rooms[rng.integers(len(rooms))]
        stay = float(rng.uniform(10, 60))
        end = min(t1, t + stay)
        pir = _pir(home, room)
        if pir:
            moving = float(rng.uniform(0.3, 0.9))
            w.span(pir, t, t + (end - t) * moving)
        mats_here = [m for m in _sensors(home, SensorKind.PRESSURE, room) if "chair" not in m]
        if mats and mats_here and rng.random() < 0.5:
            dwell = float(rng.uniform(2, min(MAT_DWELL_MAX, max(2.0, end - t))))
            start = float(rng.uniform(t, max(t, end - dwell)))
            w.span(mats_here[0], start, start + dwell)
        t = end


def generate_window(kind: str, home: HomeMap, rng: np.random.Generator, window=DEFAULT_WINDOW, dt=0.1):
    """Return ``(events, clock, day_offset, label)`` for one synthetic window."""
    w = _Window(home, window, dt)
    rooms = [r.name for r in home.rooms]
    kitchen = next((r for r in rooms if r == "kitchen"), rooms[-1])
    hallway = next((r for r in rooms if r == "hallway"), rooms[0])
    day_rooms = [r for r in rooms]
    contacts_kitchen = _sensors(home, SensorKind.CONTACT, kitchen)
    door = next(iter(_sensors(home, SensorKind.CONTACT, hallway)), None)
    chair = next((s for s in _sensors(home, SensorKind.PRESSURE) if "chair" in s), None)

    def hour(bucket):
        lo, hi = HOURS[bucket]
        return float(rng.uniform(lo, hi)) * 3600.0

    label = kind in ANOMALY_KINDS
    if kind == "active":
        bucket = ["Morning", "Day", "Evening"][rng.integers(3)]
        _walkabout(w, rng, day_rooms, 0.0, window)
        for _ in range(rng.integers(0, 4)):
            if contacts_kitchen:
                w.pulse(contacts_kitchen[rng.integers(len(contacts_kitchen))], float(rng.uniform(1, window)))
        if door and rng.random() < 0.1:
            w.pulse(door, float(rng.uniform(1, window)))
    elif kind == "meal":
        bucket = ["Morning", "Day", "Evening"][rng.integers(3)]
        sit = float(rng.uniform(60, window))
        start = window - sit
        if start > 5:
            _walkabout(w, rng, day_rooms, 0.0, start)
        if chair:
            w.span(chair, start, window)
        kpir = _pir(home, kitchen)
        if kpir:
            for _ in range(rng.integers(0, 6)):
                a = float(rng.uniform(start, window))
                w.span(kpir, a, a + float(rng.uniform(0.5, 3)))
        for _ in range(rng.integers(0, 4)):
            if contacts_kitchen:
                w.pulse(contacts_kitchen[rng.integers(len(contacts_kitchen))], float(rng.uniform(1, window)))
    elif kind == "night_quiet":
        bucket = "Night"
    elif kind == "night_bathroom":
        bucket = "Night"
        a = float(rng.uniform(0, window - 120))
        bath = next((r for r in rooms if r == "bathroom"), rooms[0])
        for room, dur in ((hallway, 8), (bath, float(rng.uniform(30, 90))), (hallway, 8)):
            pir = _pir(home, room)
            if pir:
                w.span(pir, a, a + dur * 0.7)
            a += dur
    elif kind == "visit_out":
        bucket = ["Morning", "Day", "Evening"][rng.integers(3)]
        t_out = float(rng.uniform(30, window - 30))
        _walkabout(w, rng, day_rooms, 0.0, t_out - 10)
        hpir = _pir(home, hallway)
        if hpir:
            w.span(hpir, t_out - 10, t_out)
        if door:
            w.pulse(door, t_out)
    elif kind == "long_dwell":
        bucket = ["Night", "Morning", "Day", "Evening"][rng.integers(4)]
        mats = [s for s in _sensors(home, SensorKind.PRESSURE) if "chair" not in s]
        mat = mats[rng.integers(len(mats))]
        dwell = float(rng.uniform(FALL_DWELL_MIN, window))
        t_fall = window - dwell
        if t_fall > 5:
            _walkabout(w, rng, day_rooms, 0.0, t_fall, mats=False)
        room = home.sensor_room(home.sensor(mat))
        pir = _pir(home, room)
        if pir and t_fall > 3:
            w.span(pir, t_fall - 3, t_fall)
        w.span(mat, t_fall, window)
    elif kind == "night_exit":
        bucket = "Night"
        t_out = float(rng.uniform(30, window - 5))
        hpir = _pir(home, hallway)
        if hpir:
            w.span(hpir, max(0.0, t_out - float(rng.uniform(8, 25))), t_out)
        if door:
            w.pulse(door, t_out)
    elif kind == "redundant_cooking":
        bucket = ["Morning", "Day", "Evening"][rng.integers(3)]
        kpir = _pir(home, kitchen)
        if kpir:
            w.span(kpir, 0.0, window * float(rng.uniform(0.4, 0.9)))
        for _ in range(rng.integers(6, 14)):
            if contacts_kitchen:
                w.pulse(contacts_kitchen[rng.integers(len(contacts_kitchen))], float(rng.uniform(1, window)))
    else:
        raise ValueError(f"unknown window kind {kind!r}")

    day_offset = hour(bucket) - window
    events = sorted(w.events, key=lambda e: (e.timestamp, e.sensor_id))
    return events, window, day_offset, label


def build_corpus(home: HomeMap, n_normal: int = 300, n_anomaly: int = 60, seed: int = 0, window=DEFAULT_WINDOW, dt=0.1):
    """Labelled feature vectors: ``[(features, label, kind), ...]``."""
    rng = np.random.default_rng(seed)
    kinds = [NORMAL_KINDS[i % len(NORMAL_KINDS)] for i in range(n_normal)]
    kinds += [ANOMALY_KINDS[i % len(ANOMALY_KINDS)] for i in range(n_anomaly * len(ANOMALY_KINDS))]
    out = []
    for kind in kinds:
        events, clock, offset, label = generate_window(kind, home, rng, window, dt)
        out.append((extract_features(events, clock, home, window, dt, offset), label, kind))
    return out


def rule_baseline(f, dwell_threshold: float = FALL_DWELL_MIN) -> bool:
    """Single-rule floor: anomalous when any floor mat holds someone too long.

    The chair is skipped by construction because it belongs to the kitchen,
    whose dwell column is ignored.
    """
    for room, dwell in zip(f.rooms, f.pressure_dwell):
        if room == "kitchen":
            continue
        if dwell >= dwell_threshold:
            return True
    return False
