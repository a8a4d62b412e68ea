"""Small scripted trials used to calibrate detectors and planners.

Each trial builds its own open-room world, so results do not depend on the
bundled apartment layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import planning
from .detection.breath import BreathDetector
from .detection.fusion import Side, fuse_presence
from .sensors import FaceNoise, GasModel, GasSensor, perceive_faces
from .world import AgentState, RobotState, ScriptAction, load_map, make_world, step_world


def open_room(width: int, height: int, cell_size: float = 0.1):
    """A walled rectangle of ``width`` x ``height`` cells."""
    rows = ["#" * width] + ["#" + "." * (width - 2) + "#"] * (height - 2) + ["#" * width]
    return load_map({"name": "open_room", "grid": {"rows": rows}, "rooms": [{"name": "room", "rect": [1, 1, width - 2, height - 2]}], "cell_size": cell_size})


# --- breath presence -------------------------------------------------------------


@dataclass
class BreathTrial:
    seed: int
    latencies: list  # seconds per scripted change; None when never detected
    transitions: int


def breath_reaction_trial(
    seed: int,
    cycles: int = 5,
    hold: float = 20.0,
    close: float = 0.2,
    far: float = 1.0,
    interval: float = 3.0,
    cv: float = 0.2,
    dt: float = 0.1,
    detector: BreathDetector | None = None,
    model: GasModel = GasModel(),
) -> BreathTrial:
    """A person alternately leans in to ``close`` m of a gas sensor and backs
    off to ``far`` m, holding each position for ``hold`` seconds.

    Latency is the time from each move until the detector first reports the
    matching presence.
    """
    home = open_room(30, 30)
    sensor = (1.5, 1.5)
    script, truth = [], []
    t = hold
    for _ in range(cycles):
        script.append(ScriptAction(t, "teleport", {"position": [sensor[0] + close, sensor[1]]}))
        truth.append((t, "Close"))
        t += hold
        script.append(ScriptAction(t, "teleport", {"position": [sensor[0] + far, sensor[1]]}))
        truth.append((t, "Far"))
        t += hold
    person = AgentState(id="participant", position=(sensor[0] + far, sensor[1]), breathing_interval=interval, breathing_cv=cv, script=tuple(script))
    world = make_world(home, [person], RobotState(position=(1.45, 1.45)), seed=seed)
    rng = np.random.default_rng([seed, 1000])
    gas = GasSensor(model)
    det = detector if detector is not None else BreathDetector()
    trace = []
    n = int(round(t / dt))
    for _ in range(n):
        world = step_world(world, dt)
        det.update(gas.sample(world, sensor, rng))
        trace.append((world.clock, det.presence))
    latencies = []
    for tc, want in truth:
        hit = next((tt - tc for tt, p in trace if tt >= tc - 1e-9 and p is not None and p.value == want), None)
        latencies.append(None if hit is None else round(hit, 6))
    return BreathTrial(seed, latencies, len(det.transitions))


def breath_reaction_study(participants: int = 7, cycles: int = 5, **kw) -> dict:
    trials = [breath_reaction_trial(seed, cycles=cycles, **kw) for seed in range(participants)]
    lat = [x for tr in trials for x in tr.latencies]
    found = [x for x in lat if x is not None]
    return {
        "trials": trials,
        "changes": len(lat),
        "missed": len(lat) - len(found),
        "mean": float(np.mean(found)) if found else None,
        "std": float(np.std(found)) if found else None,
        "max": float(max(found)) if found else None,
    }


def pan_side_trial(
    seed: int,
    lateral: float = 0.3,
    duration: float = 10.0,
    arm: float = 0.15,
    sweep: float = math.radians(60),
    dwell: float = 2.5,
    dt: float = 0.1,
    model: GasModel = GasModel(),
) -> Side:
    """Side reported after panning a gas sensor on a short arm for ``duration`` s.

    The robot faces +x; a breathing person stands ``lateral`` m to its left
    (negative values put them on the right). The arm holds at +-``sweep`` for
    ``dwell`` seconds at a time in the order L, R, R, L, ... so neither side is
    favoured by the sensor's slow recovery. Each sample is reported as the rise
    since the arm arrived at its current side.
    """
    home = open_room(30, 30)
    robot = (1.5, 1.5)
    person = AgentState(id="p", position=(robot[0], robot[1] + lateral), breathing_interval=3.0, breathing_cv=0.2)
    world = make_world(home, [person], RobotState(position=robot), seed=seed)
    rng = np.random.default_rng([seed, 1001])
    gas = GasSensor(model)
    samples = []
    ref, leg = None, -1
    for k in range(int(round(duration / dt))):
        world = step_world(world, dt)
        n = int(k * dt / dwell + 1e-9)
        bearing = sweep if n % 4 in (0, 3) else -sweep
        pos = (robot[0] + arm * math.cos(bearing), robot[1] + arm * math.sin(bearing))
        reading = gas.sample(world, pos, rng).reading
        if n != leg:
            ref, leg = reading, n
        samples.append((bearing, reading - ref))
    return fuse_presence(None, [], samples, noise_floor=model.sigma_n).side


# --- two-photo target selection -----------------------------------------------------


@dataclass
class PhotoTrial:
    condition: str  # "distance" or "height"
    photos: tuple  # ((id, distance, face height), ...)
    truth: str
    chosen: str | None

    @property
    def correct(self) -> bool:
        return self.chosen == self.truth


DISTANCE_TRIALS = tuple(((1.5 if k % 2 == 0 else 2.0), 3.0, 1.2) for k in range(10))
HEIGHT_TRIALS = tuple((2.0, 2.0, (1.35, 1.05) if k < 5 else (1.275, 1.125)) for k in range(10))


def _photo_world(photos, lateral: float, seed: int):
    home = open_room(50, 30)
    robot = (0.5, 1.5)
    agents = []
    for k, (pid, d, h) in enumerate(photos):
        y = robot[1] + (lateral if k == 0 else -lateral)
        agents.append(AgentState(id=pid, position=(robot[0] + d, y), face_height_offset=h, body_height=min(2.2, max(0.5, h + 0.12)), breathing_interval=None))
    return home, make_world(home, agents, RobotState(position=robot), seed=seed), robot


def choose_photo(photos, rng=None, noise: FaceNoise = FaceNoise(), weights=(1.0, 1.0), cfg=planning.HelpfulnessConfig(), lateral=0.4, swap=False):
    """Which of two face photos the robot heads for first.

    Faces are scored for helpfulness, placed by their apparent size, and
    handed to the orienteering planner; the chosen target is its most
    rewarding stop. ``swap`` mirrors which photo sits on the left.
    """
    order = list(photos)[::-1] if swap else list(photos)
    home, state, robot = _photo_world(order, lateral, seed=0)
    grid = planning.NavGrid.from_map(home)
    faces = perceive_faces(state, (robot[0], robot[1], 0.0), rng=rng, noise=noise)
    nodes, cells = [], []
    for f in sorted(faces, key=lambda f: f.agent_id):
        d = planning.estimated_distance(f, cfg)
        pos = (robot[0] + d * math.cos(f.bearing), robot[1] + d * math.sin(f.bearing))
        cell = home.cell_of(pos)
        cell = (min(max(cell[0], 1), home.width - 2), min(max(cell[1], 1), home.height - 2))
        nodes.append(planning.HelpNode(f.agent_id, pos, planning.helpfulness(f, weights, cfg)))
        cells.append(cell)
    if not nodes:
        return None
    cost = planning.cost_matrix(grid, home.cell_of(robot), cells, state.robot.speed)
    plan = planning.plan_tour(nodes, cost)
    return planning.select_target(plan, nodes)


def two_photo_trials(noisy: bool, seed: int = 0, noise: FaceNoise = FaceNoise(), weights=(1.0, 1.0)) -> list[PhotoTrial]:
    """Ten distance trials (equal height, one photo nearer) and ten height
    trials (equal distance, one face higher); the better photo alternates sides."""
    rng = np.random.default_rng(seed) if noisy else None
    out = []
    for k, (d_near, d_far, h) in enumerate(DISTANCE_TRIALS):
        photos = (("near", d_near, h), ("far", d_far, h))
        out.append(PhotoTrial("distance", photos, "near", choose_photo(photos, rng, noise, weights, swap=bool(k % 2))))
    for k, (d1, d2, (h_hi, h_lo)) in enumerate(HEIGHT_TRIALS):
        photos = (("tall", d1, h_hi), ("short", d2, h_lo))
        out.append(PhotoTrial("height", photos, "tall", choose_photo(photos, rng, noise, weights, swap=bool(k % 2))))
    return out
