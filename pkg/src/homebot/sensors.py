"""Noisy percepts derived from a WorldState.

Every function takes an explicit ``rng``; passing ``None`` disables noise,
which makes the percept a pure function of the world.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .world import FALL_ROTATION, AgentState, FallDirection, HomeMap, SensorKind, WorldState

MOTION_EPSILON = 0.01
SHOULDER_WIDTH = 0.45
BODY_DEPTH = 0.25
# Viewing rays this close to the body axis only see the body's width.
FORESHORTEN_ANGLE = math.radians(30.0)


@dataclass(frozen=True)
class SensorEvent:
    timestamp: float
    sensor_id: str
    kind: SensorKind
    value: bool

    def to_record(self) -> dict:
        return {"t": round(self.timestamp, 6), "id": self.sensor_id, "kind": self.kind.value, "value": self.value}

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=False)

    @classmethod
    def from_record(cls, rec: dict) -> SensorEvent:
        return cls(float(rec["t"]), rec["id"], SensorKind(rec["kind"]), bool(rec["value"]))


def sample_environment_sensors(state: WorldState, motion_epsilon: float = MOTION_EPSILON) -> list[SensorEvent]:
    """Events fired by the fixed home sensors on the current tick."""
    home = state.map
    events = []
    present = [a for a in state.agents if a.present]
    cells = {a.id: home.cell_of(a.position) for a in present}
    for s in home.sensors:
        x0, y0, x1, y1 = home.sensor_cells(s)

        def inside(cell):
            return x0 <= cell[0] <= x1 and y0 <= cell[1] <= y1

        if s.kind is SensorKind.PRESSURE:
            if any(inside(cells[a.id]) for a in present):
                events.append(SensorEvent(state.clock, s.sensor_id, s.kind, True))
        elif s.kind is SensorKind.PIR:
            if any(inside(cells[a.id]) and state.moved.get(a.id, 0.0) >= motion_epsilon for a in present):
                events.append(SensorEvent(state.clock, s.sensor_id, s.kind, True))
        else:
            for act in state.contact_actions:
                if act.sensor_id == s.sensor_id:
                    events.append(SensorEvent(state.clock, s.sensor_id, s.kind, act.open))
    return events


def write_events_jsonl(events, fh) -> None:
    for ev in events:
        fh.write(ev.to_json() + "\n")


def read_events_jsonl(fh) -> list[SensorEvent]:
    return [SensorEvent.from_record(json.loads(line)) for line in fh if line.strip()]


# --- gas -----------------------------------------------------------------


@dataclass(frozen=True)
class GasModel:
    baseline: float = 100.0
    amplitude: float = 10.0
    plume_sigma: float = 0.25
    puff_lifetime: float = 4.0
    tau_rise: float = 2.0
    tau_decay: float = 60.0
    noise_std: float | None = None  # None -> 1% of amplitude
    floor: float = 0.0

    @property
    def sigma_n(self) -> float:
        return 0.01 * self.amplitude if self.noise_std is None else self.noise_std


@dataclass(frozen=True)
class GasSample:
    timestamp: float
    reading: float


def gas_target(state: WorldState, position, model: GasModel = GasModel()) -> float:
    """Noise-free concentration the sensor relaxes towards."""
    c = model.baseline
    two_s2 = 2.0 * model.plume_sigma**2
    cutoff = 5.0 * model.puff_lifetime
    for ex in state.exhalations:
        age = state.clock - ex.t
        if age < 0 or age > cutoff:
            continue
        d2 = (ex.position[0] - position[0]) ** 2 + (ex.position[1] - position[1]) ** 2
        c += model.amplitude * math.exp(-d2 / two_s2) * math.exp(-age / model.puff_lifetime)
    return c


class GasSensor:
    """Metal-oxide sensor proxy: fast rise, very slow recovery."""

    def __init__(self, model: GasModel = GasModel(), level: float | None = None):
        self.model = model
        self.level = model.baseline if level is None else level
        self.last_t: float | None = None

    def relax(self, target: float, dt: float) -> float:
        tau = self.model.tau_rise if target > self.level else self.model.tau_decay
        self.level += (target - self.level) * (1.0 - math.exp(-dt / tau))
        return self.level

    def sample(self, state: WorldState, position, rng: np.random.Generator | None = None) -> GasSample:
        dt = 0.0 if self.last_t is None else state.clock - self.last_t
        self.last_t = state.clock
        if dt > 0:
            self.relax(gas_target(state, position, self.model), dt)
        reading = self.level
        if rng is not None and self.model.sigma_n > 0:
            reading += rng.normal(0.0, self.model.sigma_n)
        return GasSample(state.clock, max(self.model.floor, reading))


def sample_gas(state: WorldState, sensor_position, sensor: GasSensor, rng=None) -> GasSample:
    return sensor.sample(state, sensor_position, rng)


# --- laser scans -----------------------------------------------------------


@dataclass(frozen=True)
class ScanCluster:
    centroid: tuple[float, float]
    major_extent: float
    minor_extent: float
    mean_temperature: float
    in_known_map: bool
    source: str = ""


def line_of_sight(home: HomeMap, a, b) -> bool:
    """True when no wall cell lies on the segment a-b (target cells excepted)."""
    dist = math.hypot(b[0] - a[0], b[1] - a[1])
    n = max(1, int(dist / (home.cell_size * 0.25)))
    end_cell = home.cell_of(b)
    for i in range(1, n):
        t = i / n
        cell = home.cell_of((a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t))
        if cell == end_cell:
            continue
        if not home.is_free(cell):
            return False
    return True


def _fallen_geometry(agent: AgentState):
    ax, ay = agent.body_axis()
    half = agent.body_height / 2
    centroid = (agent.position[0] + ax * half, agent.position[1] + ay * half)
    return centroid, (ax, ay)


def sample_laser_clusters(
    state: WorldState,
    robot_pose,
    rng: np.random.Generator | None = None,
    max_range: float = 4.0,
    extent_noise: float = 0.03,
    temperature_noise: float = 0.5,
    check_walls: bool = True,
) -> list[ScanCluster]:
    rx, ry = robot_pose[0], robot_pose[1]
    out = []

    def noisy(v, s):
        return v + rng.normal(0.0, s) if rng is not None and s > 0 else v

    for agent in state.agents:
        if not agent.present:
            continue
        if agent.fallen:
            centroid, axis = _fallen_geometry(agent)
            ray = (centroid[0] - rx, centroid[1] - ry)
            rn = math.hypot(*ray)
            if rn > 0:
                cosang = abs(ray[0] * axis[0] + ray[1] * axis[1]) / rn
                along = math.acos(min(1.0, cosang))
            else:
                along = math.pi / 2
            major = SHOULDER_WIDTH if along < FORESHORTEN_ANGLE else agent.body_height
            minor = BODY_DEPTH
        else:
            centroid = agent.position
            major, minor = SHOULDER_WIDTH, BODY_DEPTH
        dist = math.hypot(centroid[0] - rx, centroid[1] - ry)
        if dist > max_range:
            continue
        if check_walls and not line_of_sight(state.map, (rx, ry), centroid):
            continue
        major = max(noisy(major, extent_noise), 1e-3)
        minor = min(max(noisy(minor, extent_noise), 1e-3), major)
        out.append(
            ScanCluster(centroid, major, minor, noisy(agent.skin_temperature, temperature_noise), False, agent.id)
        )
    for prop in state.props:
        dist = math.hypot(prop.position[0] - rx, prop.position[1] - ry)
        if dist > max_range:
            continue
        if check_walls and not line_of_sight(state.map, (rx, ry), prop.position):
            continue
        major = max(noisy(prop.size, extent_noise), 1e-3)
        minor = min(max(noisy(prop.size * 0.8, extent_noise), 1e-3), major)
        out.append(
            ScanCluster(
                prop.position,
                major,
                minor,
                noisy(prop.temperature(state.clock), temperature_noise),
                prop.in_known_map,
                prop.id,
            )
        )
    return out


# --- faces -----------------------------------------------------------------


@dataclass(frozen=True)
class PerceivedFace:
    agent_id: str
    apparent_width: float
    face_center_height: float
    bearing: float


@dataclass(frozen=True)
class FaceNoise:
    width_rel: float = 0.02
    height: float = 0.02
    miss_free_range: float = 2.0
    miss_per_meter: float = 0.1
    miss_max: float = 0.5

    def p_miss(self, distance: float) -> float:
        if distance <= self.miss_free_range:
            return 0.0
        return min(self.miss_max, self.miss_per_meter * (distance - self.miss_free_range))


def _wrap(angle: float) -> float:
    return (angle + math.pi) % (2 * math.pi) - math.pi


def perceive_faces(
    state: WorldState,
    robot_pose,
    fov: float = math.radians(60),
    max_range: float = 5.0,
    rng: np.random.Generator | None = None,
    noise: FaceNoise = FaceNoise(),
    check_walls: bool = True,
) -> list[PerceivedFace]:
    if not 0 < fov <= math.pi:
        raise ValueError("fov must lie in (0, pi]")
    if max_range <= 0:
        raise ValueError("max_range must be positive")
    rx, ry, rh = robot_pose
    faces = []
    for agent in state.agents:
        if not agent.present:
            continue
        dx, dy = agent.position[0] - rx, agent.position[1] - ry
        dist = math.hypot(dx, dy)
        if dist <= 1e-9 or dist > max_range:
            continue
        bearing = _wrap(math.atan2(dy, dx) - rh)
        if abs(bearing) > fov / 2:
            continue
        if check_walls and not line_of_sight(state.map, (rx, ry), agent.position):
            continue
        width = agent.face_width / dist
        height = agent.face_height
        if rng is not None:
            if rng.random() < noise.p_miss(dist):
                continue
            width *= max(1e-3, 1.0 + rng.normal(0.0, noise.width_rel))
            height += rng.normal(0.0, noise.height)
        faces.append(PerceivedFace(agent.id, width, height, bearing))
    return faces


# --- fall and first-aid percepts -------------------------------------------

DIRECTION_VECTORS = {
    FallDirection.FORWARD: (1.0, 0.0),
    FallDirection.LEFT: (0.0, 1.0),
    FallDirection.BACKWARD: (-1.0, 0.0),
    FallDirection.RIGHT: (0.0, -1.0),
}


def shoulder_track(
    body_height: float = 1.7,
    direction: FallDirection | None = FallDirection.FORWARD,
    drop: float | None = None,
    fall_start: float = 0.5,
    fall_duration: float = 0.8,
    duration: float = 3.0,
    rate: float = 10.0,
    rng: np.random.Generator | None = None,
    height_noise: float = 0.03,
    displacement_noise: float = 0.05,
):
    """Shoulder height and horizontal displacement of a frontally viewed person.

    Displacements are in the person's frame (x forward, y to their left).
    ``direction=None`` models a slow bend of ``drop`` metres with no sideways motion.
    """
    h0 = 0.82 * body_height
    drop = (h0 - 0.15) if drop is None else drop
    vec = DIRECTION_VECTORS[direction] if direction is not None else (0.0, 0.0)
    reach = 0.6 * body_height if direction is not None else 0.0
    track = []
    n = int(round(duration * rate)) + 1
    for i in range(n):
        t = i / rate
        u = min(1.0, max(0.0, (t - fall_start) / fall_duration))
        s = u * u * (3 - 2 * u)
        h = h0 - drop * s
        disp = (vec[0] * reach * s, vec[1] * reach * s)
        if rng is not None:
            h += rng.normal(0.0, height_noise)
            disp = (disp[0] + rng.normal(0.0, displacement_noise), disp[1] + rng.normal(0.0, displacement_noise))
        track.append((t, h, disp))
    return track


def breath_intervals(exhalation_times, window_start: float, window_end: float, rng=None, jitter: float = 0.0):
    """Inter-breath intervals heard within a window, with optional timing jitter."""
    times = sorted(t for t in exhalation_times if window_start <= t <= window_end)
    if rng is not None and jitter > 0:
        times = sorted(t + rng.normal(0.0, jitter) for t in times)
    return [b - a for a, b in zip(times, times[1:])]


def fallen_face_frame(agent: AgentState):
    """Ground-truth face centre and head-to-feet axis of a fallen agent."""
    ax, ay = agent.body_axis()
    head_len = agent.body_height / 7.5
    face = (
        agent.position[0] + ax * (agent.body_height - head_len / 2),
        agent.position[1] + ay * (agent.body_height - head_len / 2),
    )
    return face, (-ax, -ay), head_len


def heading_of(direction: FallDirection, heading: float) -> float:
    return heading + FALL_ROTATION[direction]
