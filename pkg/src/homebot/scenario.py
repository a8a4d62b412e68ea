"""End-to-end scenarios: detect an anomaly, dispatch, talk, triage, find help.

A scenario is a JSON config describing the home, scripted people and the
parameters of each stage. ``run_scenario`` steps the world at a fixed rate
and writes every percept and decision to an ordered JSON-lines event log;
``compute_metrics`` turns a log back into timing and correctness figures.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import planning, triage
from .detection.anomaly import Forest, classify_anomaly, extract_features, train_forest
from .detection.breath import BreathDetector
from .detection.corpus import build_corpus
from .detection.fallen import FallenThresholds, detect_fallen
from .motion import PlayfulParams, check_guidelines, optimize, peak_deviation, seed_straight
from .sensors import FaceNoise, GasSensor, perceive_faces, sample_environment_sensors, sample_laser_clusters
from .world import (
    DEFAULT_DT,
    RobotMode,
    RobotState,
    ScriptAction,
    Prop,
    SensorKind,
    agent_from_config,
    bundled_path,
    load_map,
    make_world,
    step_world,
)

DEFAULT_ACCURACY = 0.769
DEFAULT_TIMEOUT = 10.0


class ConfigError(ValueError):
    pass


class ScenarioRuntimeError(RuntimeError):
    pass


# --- dialogue --------------------------------------------------------------------


class Decision(str, Enum):
    CALL_EMS = "CallEMS"
    STAND_DOWN = "StandDown"
    TIMEOUT_CALL = "TimeoutCall"


class Answer(str, Enum):
    YES = "yes"  # "yes, call for help"
    NO = "no"


def decide(heard: Answer | None) -> Decision:
    """A heard no stands the robot down; a heard yes or silence calls for help."""
    if heard is None:
        return Decision.TIMEOUT_CALL
    return Decision.CALL_EMS if heard is Answer.YES else Decision.STAND_DOWN


@dataclass(frozen=True)
class DialogueOutcome:
    decision: Decision
    responded: bool
    true_answer: Answer | None
    heard: Answer | None
    duration: float  # seconds from the question to the decision


def dialogue_turn(agent, p: float, timeout: float = DEFAULT_TIMEOUT, rng: np.random.Generator | None = None) -> DialogueOutcome:
    """Ask whether to call emergency services over a noisy yes/no channel.

    Two uniforms are always drawn (respond?, heard correctly?) so the random
    stream advances identically whatever the outcome.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("channel accuracy must be in [0, 1]")
    rng = rng if rng is not None else np.random.default_rng(0)
    u_respond, u_channel = rng.random(), rng.random()
    if agent is None or not agent.present:
        return DialogueOutcome(Decision.TIMEOUT_CALL, False, None, None, timeout)
    responds = u_respond < agent.responsiveness and agent.response_delay <= timeout
    if not responds:
        return DialogueOutcome(Decision.TIMEOUT_CALL, False, None, None, timeout)
    truth = Answer.YES if agent.vitals_truth.needs_help() else Answer.NO
    heard = truth if u_channel < p else (Answer.NO if truth is Answer.YES else Answer.YES)
    return DialogueOutcome(decide(heard), True, truth, heard, agent.response_delay)


def dialogue_exchange(agent, p: float, timeout: float = DEFAULT_TIMEOUT, rng: np.random.Generator | None = None) -> Decision:
    return dialogue_turn(agent, p, timeout, rng).decision


# --- config ----------------------------------------------------------------------


@dataclass
class ScenarioConfig:
    name: str
    seed: int
    duration: float
    map: str = "apartment_3x3.json"
    dt: float = DEFAULT_DT
    start_time_of_day: float = 12 * 3600.0
    agents: list = field(default_factory=list)
    props: list = field(default_factory=list)
    schedule: list = field(default_factory=list)
    robot: dict = field(default_factory=dict)
    helpers: list = field(default_factory=list)
    detection: dict = field(default_factory=dict)
    planning: dict = field(default_factory=dict)
    motion: dict = field(default_factory=dict)
    triage: dict = field(default_factory=dict)
    dialogue: dict = field(default_factory=dict)
    expect: dict = field(default_factory=dict)
    variants: list = field(default_factory=list)
    base_dir: str = "."

    @property
    def accuracy(self) -> float:
        return float(self.dialogue.get("accuracy", DEFAULT_ACCURACY))

    @property
    def timeout(self) -> float:
        return float(self.dialogue.get("timeout", DEFAULT_TIMEOUT))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d


KNOWN_KEYS = {f for f in ScenarioConfig.__dataclass_fields__} - {"base_dir"}


def resolve_map_path(name: str, base_dir: str | Path = ".") -> Path:
    p = Path(name)
    if not p.is_absolute():
        local = Path(base_dir) / p
        if local.exists():
            return local
        bundled = bundled_path("maps", p.name)
        if bundled.exists():
            return bundled
        return local
    return p


def parse_config(data: dict, base_dir: str | Path = ".") -> ScenarioConfig:
    """Validate a scenario dict; every problem raises ConfigError naming the key."""
    if not isinstance(data, dict):
        raise ConfigError("scenario config must be a JSON object")
    unknown = set(data) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "seed" not in data:
        raise ConfigError("seed is required")
    if not isinstance(data["seed"], int) or isinstance(data["seed"], bool):
        raise ConfigError("seed must be an integer")
    for key in ("duration",):
        if key not in data:
            raise ConfigError(f"{key} is required")
    cfg = ScenarioConfig(**{k: copy.deepcopy(v) for k, v in data.items()}, base_dir=str(base_dir))
    cfg.name = str(data.get("name", "scenario"))
    if not cfg.duration > 0:
        raise ConfigError("duration must be positive")
    if not cfg.dt > 0:
        raise ConfigError("dt must be positive")
    extra = set(cfg.dialogue) - {"accuracy", "timeout"}
    if extra:
        raise ConfigError(f"unknown dialogue keys: {sorted(extra)}")
    if not 0.0 <= cfg.accuracy <= 1.0:
        raise ConfigError(f"dialogue.accuracy must lie in [0, 1], got {cfg.accuracy}")
    if not cfg.timeout > 0:
        raise ConfigError("dialogue.timeout must be positive")
    map_path = resolve_map_path(cfg.map, base_dir)
    if not map_path.exists():
        raise ConfigError(f"map file not found: {cfg.map}")
    try:
        home = load_map(map_path)
    except ValueError as exc:
        raise ConfigError(f"map {cfg.map}: {exc}") from exc
    ids = set()
    for i, a in enumerate(cfg.agents):
        try:
            agent = agent_from_config(a)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"agents[{i}]: {exc}") from exc
        if agent.id in ids:
            raise ConfigError(f"agents[{i}]: duplicate agent id {agent.id!r}")
        ids.add(agent.id)
        if not home.is_free(home.cell_of(agent.position)):
            raise ConfigError(f"agents[{i}] ({agent.id}): position {agent.position} is not free")
    for h in cfg.helpers:
        if h not in ids:
            raise ConfigError(f"helpers: unknown agent id {h!r}")
    for i, s in enumerate(cfg.schedule):
        if "t" not in s or s.get("action") not in ("contact", "prop"):
            raise ConfigError(f"schedule[{i}]: needs t and an action of contact/prop")
    forest_file = cfg.detection.get("forest_file")
    if forest_file and not (Path(base_dir) / forest_file).exists():
        raise ConfigError(f"detection.forest_file not found: {forest_file}")
    return cfg


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        bundled = bundled_path("scenarios", path.name)
        if not bundled.exists() and not path.suffix:
            bundled = bundled_path("scenarios", path.name + ".json")
        if not bundled.exists():
            raise ConfigError(f"config file not found: {path}")
        path = bundled
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return parse_config(data, path.parent)


def bundled_scenarios() -> list[Path]:
    return sorted(Path(bundled_path("scenarios", "x")).parent.glob("*.json"))


def deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


# --- event log ---------------------------------------------------------------------


class EventLog:
    """Ordered JSON-lines records, each tagged with the emitting module."""

    def __init__(self):
        self.records: list[dict] = []

    def add(self, t: float, module: str, type_: str, **payload) -> dict:
        t = round(float(t), 6)
        if self.records and t < self.records[-1]["t"]:
            raise ScenarioRuntimeError(f"log time went backwards: {t} < {self.records[-1]['t']}")
        rec = {"t": t, "module": module, "type": type_, **payload}
        self.records.append(rec)
        return rec

    def of_type(self, type_: str) -> list[dict]:
        return [r for r in self.records if r["type"] == type_]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    def write(self, path) -> None:
        Path(path).write_text(self.to_jsonl())

    def __len__(self):
        return len(self.records)


# --- metrics ---------------------------------------------------------------------------


@dataclass
class RunMetrics:
    time_to_detect: float | None = None
    time_to_arrive: float | None = None
    dispatches: int = 0
    dispatch_room: str | None = None
    dialogue_decision: str | None = None
    dialogue_correct: bool | None = None
    triage_accuracy: float | None = None
    priority: str | None = None
    help_target: str | None = None
    help_target_correct: bool | None = None
    duration: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


class MalformedLog(ValueError):
    pass


def parse_log(lines) -> list[dict]:
    """JSON-lines text (or an iterable of lines) to records, checking each line."""
    if isinstance(lines, str):
        lines = lines.splitlines()
    out = []
    for no, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedLog(f"line {no}: invalid JSON ({exc.msg})") from exc
        if not isinstance(rec, dict) or not {"t", "module", "type"} <= set(rec):
            raise MalformedLog(f"line {no}: record needs t, module and type")
        if not isinstance(rec["t"], (int, float)):
            raise MalformedLog(f"line {no}: t must be a number")
        if out and rec["t"] < out[-1]["t"]:
            raise MalformedLog(f"line {no}: timestamp decreases")
        out.append(rec)
    return out


TRIAGE_FIELDS = ("circulation", "airway", "breathing", "bleeding_location", "bleeding_severity")


def compute_metrics(log, ground_truth: dict | None = None) -> RunMetrics:
    """Aggregate one run's records; ground truth defaults to the log's start record."""
    records = log.records if isinstance(log, EventLog) else parse_log(log) if isinstance(log, str) else list(log)
    m = RunMetrics()
    if not records:
        return m
    truth = {}
    for r in records:
        if r["type"] == "start":
            truth = dict(r.get("truth", {}))
    truth.update(ground_truth or {})
    first = {}
    for r in records:
        first.setdefault(r["type"], r)
    dispatches = [r for r in records if r["type"] == "dispatch"]
    m.dispatches = len(dispatches)
    if "verdict" in first and truth.get("anomaly_onset") is not None:
        m.time_to_detect = max(0.0, round(first["verdict"]["t"] - float(truth["anomaly_onset"]), 6))
    if dispatches:
        m.dispatch_room = dispatches[0].get("room")
        arrivals = [r for r in records if r["type"] == "arrive" and r["t"] >= dispatches[0]["t"]]
        if arrivals:
            m.time_to_arrive = round(arrivals[0]["t"] - dispatches[0]["t"], 6)
    if "decision" in first:
        d = first["decision"]
        m.dialogue_decision = d["decision"]
        if d.get("truth_needs_help") is not None:
            m.dialogue_correct = (d["decision"] != Decision.STAND_DOWN.value) == bool(d["truth_needs_help"])
    if "triage" in first:
        rep = first["triage"]["report"]
        vt = first["triage"].get("truth")
        m.priority = rep["priority"]
        if vt:
            got = {
                "circulation": rep["circulation"],
                "airway": rep["airway"],
                "breathing": rep["breathing"],
                "bleeding_location": rep["bleeding"]["location"],
                "bleeding_severity": rep["bleeding"]["severity"],
            }
            m.triage_accuracy = sum(got[k] == vt[k] for k in TRIAGE_FIELDS) / len(TRIAGE_FIELDS)
    if "helper_reached" in first:
        m.help_target = first["helper_reached"]["agent"]
        best = first.get("help_start", {}).get("truth_best")
        if best is not None:
            m.help_target_correct = m.help_target == best
    m.duration = records[-1]["t"]
    return m


@dataclass
class BatchMetrics:
    runs: int
    timed_runs: int
    mean_time_to_arrive: float | None
    std_time_to_arrive: float | None
    max_time_to_arrive: float | None
    arrivals_under_60s: int
    dialogue_correct_rate: float | None
    per_run: list

    def to_dict(self) -> dict:
        return asdict(self)


def aggregate(metrics: list[RunMetrics], exclude_rooms=("bathroom",)) -> BatchMetrics:
    """Batch averages; runs dispatched to an excluded room are left out of timing."""
    timed = [m.time_to_arrive for m in metrics if m.time_to_arrive is not None and m.dispatch_room not in exclude_rooms]
    dia = [m.dialogue_correct for m in metrics if m.dialogue_correct is not None]
    return BatchMetrics(
        runs=len(metrics),
        timed_runs=len(timed),
        mean_time_to_arrive=float(np.mean(timed)) if timed else None,
        std_time_to_arrive=float(np.std(timed)) if timed else None,
        max_time_to_arrive=float(max(timed)) if timed else None,
        arrivals_under_60s=sum(t < 60.0 for t in timed),
        dialogue_correct_rate=sum(dia) / len(dia) if dia else None,
        per_run=[m.to_dict() for m in metrics],
    )


# --- forest ------------------------------------------------------------------------------


@lru_cache(maxsize=8)
def _trained_forest(map_path: str, corpus_seed: int, n_normal: int, n_anomaly: int, n_trees: int, max_depth: int, seed: int):
    home = load_map(Path(map_path))
    corpus = build_corpus(home, n_normal=n_normal, n_anomaly=n_anomaly, seed=corpus_seed)
    return train_forest([(f, lbl) for f, lbl, _ in corpus], n_trees=n_trees, max_depth=max_depth, seed=seed)


def scenario_forest(cfg: ScenarioConfig) -> Forest:
    det = cfg.detection
    if det.get("forest_file"):
        return Forest.from_json((Path(cfg.base_dir) / det["forest_file"]).read_text())
    return _trained_forest(
        str(resolve_map_path(cfg.map, cfg.base_dir).resolve()),
        int(det.get("corpus_seed", 0)),
        int(det.get("n_normal", 300)),
        int(det.get("n_anomaly", 60)),
        int(det.get("n_trees", 25)),
        int(det.get("max_depth", 6)),
        int(det.get("forest_seed", 0)),
    )


# --- the run ---------------------------------------------------------------------------------


def _substream(seed: int, k: int) -> np.random.Generator:
    return np.random.default_rng([seed, k])


def _nearest_free(home, point, max_radius: int = 10):
    """Free cell closest to ``point`` (ties by row-major index)."""
    cx, cy = home.cell_of(point)
    best = None
    for r in range(max_radius + 1):
        for x in range(cx - r, cx + r + 1):
            for y in range(cy - r, cy + r + 1):
                if max(abs(x - cx), abs(y - cy)) != r or not home.in_bounds((x, y)) or not home.is_free((x, y)):
                    continue
                c = home.cell_center((x, y))
                key = (math.hypot(c[0] - point[0], c[1] - point[1]), y * home.width + x)
                if best is None or key < best[0]:
                    best = (key, (x, y))
        if best is not None:
            return best[1]
    raise ScenarioRuntimeError(f"no free cell near {point}")


def _sensor_activity(events, home, room: str, clock: float, window: float, dt: float) -> dict:
    """Per-sensor activity in ``room`` over the trailing window: occupied
    seconds for pressure mats, opening count for contacts."""
    ids = {s.sensor_id: s for s in home.sensors if home.sensor_room(s) == room}
    ticks: dict[str, set] = {}
    opens: dict[str, int] = {}
    for ev in events:
        if ev.sensor_id not in ids or not ev.value or ev.timestamp <= clock - window - 1e-9:
            continue
        if ev.kind is SensorKind.PRESSURE:
            ticks.setdefault(ev.sensor_id, set()).add(int(round(ev.timestamp / dt)))
        elif ev.kind is SensorKind.CONTACT:
            opens[ev.sensor_id] = opens.get(ev.sensor_id, 0) + 1
    out = {sid: len(t) * dt for sid, t in ticks.items()}
    out.update(opens)
    return out


def _dispatch_target(home, activity: dict, room: str):
    """Point to inspect in ``room``: its most active mat, else its most used
    contact, else the room center. Ties go to map order."""
    for kind in (SensorKind.PRESSURE, SensorKind.CONTACT):
        best = None
        for s in home.sensors:
            if s.kind is kind and activity.get(s.sensor_id, 0) > 0:
                if best is None or activity[s.sensor_id] > activity[best.sensor_id]:
                    best = s
        if best is not None:
            return home.sensor_center(best)
    x0, y0, x1, y1 = home.room(room).rect
    return home.cell_center(((x0 + x1) // 2, (y0 + y1) // 2))


def _angle_diff(a: float, b: float) -> float:
    return (a - b + math.pi) % (2 * math.pi) - math.pi


class _Mover:
    """Drives the robot through a list of points: turn in place towards the
    next point at ``turn_rate`` rad/s, then drive straight at ``speed``."""

    def __init__(self, points, speed, turn_rate=None):
        self.points = list(points)
        self.speed = speed
        self.turn_rate = turn_rate

    def advance(self, pos, heading, dt):
        budget = dt
        x, y = pos
        while self.points and budget > 1e-12:
            tx, ty = self.points[0]
            d = math.hypot(tx - x, ty - y)
            if d <= 1e-12:
                self.points.pop(0)
                continue
            if self.turn_rate:
                err = _angle_diff(math.atan2(ty - y, tx - x), heading)
                if abs(err) > 1e-9:
                    turn = min(abs(err), self.turn_rate * budget)
                    heading += math.copysign(turn, err)
                    budget -= turn / self.turn_rate
                    continue
            else:
                heading = math.atan2(ty - y, tx - x)
            step = self.speed * budget
            if d <= step + 1e-12:
                x, y = tx, ty
                budget -= d / self.speed
                self.points.pop(0)
            else:
                x += (tx - x) / d * step
                y += (ty - y) / d * step
                budget = 0.0
        return (x, y), heading

    @property
    def done(self):
        return not self.points


def _simplify(points):
    """Drop intermediate points that lie on a straight run."""
    out = []
    for p in points:
        if len(out) >= 2:
            (ax, ay), (bx, by) = out[-2], out[-1]
            if abs((bx - ax) * (p[1] - by) - (by - ay) * (p[0] - bx)) < 1e-12:
                out[-1] = p
                continue
        out.append(p)
    return out


def _path_points(home, grid, start_pos, goal_cell, stop_near=None, approach=0.0):
    path = planning.astar(grid, home.cell_of(start_pos), goal_cell)
    cells = list(path.cells)
    if stop_near is not None and approach > 0:
        for k, c in enumerate(cells):
            cc = home.cell_center(c)
            if math.hypot(cc[0] - stop_near[0], cc[1] - stop_near[1]) <= approach:
                cells = cells[: k + 1]
                break
    return path, [home.cell_center(c) for c in cells[1:]] if len(cells) > 1 else []


def _scan_faces(state, pose_xy, rng, noise, exclude, fov=math.radians(60), max_range=5.0, views=6):
    """Faces seen while turning on the spot through ``views`` headings."""
    seen = {}
    for k in range(views):
        heading = 2 * math.pi * k / views
        for f in perceive_faces(state, (pose_xy[0], pose_xy[1], heading), fov, max_range, rng, noise):
            if f.agent_id in exclude or f.agent_id in seen:
                continue
            seen[f.agent_id] = (f, heading + f.bearing)
    return seen


class Run:
    """Mutable state of one scenario execution."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.home = load_map(resolve_map_path(cfg.map, cfg.base_dir))
        self.grid = planning.NavGrid.from_map(self.home)
        agents = [agent_from_config(a) for a in cfg.agents]
        rc = cfg.robot
        pos = tuple(rc.get("position", self.home.robot_home or (0.0, 0.0)))
        robot = RobotState(
            position=pos, heading=float(rc.get("heading", 0.0)), speed=float(rc.get("speed", 0.3)), home_position=pos
        )
        self.turn_rate = float(rc.get("turn_rate", 0.5))  # rad/s; 0 turns instantly
        schedule = [
            ScriptAction(float(s["t"]), s["action"], {k: v for k, v in s.items() if k not in ("t", "action")})
            for s in cfg.schedule
        ]
        props = [
            Prop(
                id=p["id"],
                position=tuple(p["position"]),
                size=float(p.get("size", 0.2)),
                initial_temperature=float(p.get("temperature", 22.0)),
                cooling_time_constant=float(p.get("cooling_time_constant", 600.0)),
                in_known_map=bool(p.get("in_known_map", False)),
            )
            for p in cfg.props
        ]
        self.state = make_world(self.home, agents, robot, seed=cfg.seed, props=props, schedule=schedule)
        self.log = EventLog()
        self.rng_dialogue = _substream(cfg.seed, 1)
        self.rng_percept = _substream(cfg.seed, 2)
        self.rng_triage = _substream(cfg.seed, 3)
        self.rng_faces = _substream(cfg.seed, 4)
        self.rng_gas = _substream(cfg.seed, 5)
        self.gas = GasSensor()
        self.breath = BreathDetector()
        det = cfg.detection
        self.window = float(det.get("window", 300.0))
        self.classify_period = float(det.get("classify_period", 1.0))
        self.warmup = float(det.get("warmup", 10.0))
        self.cooldown = float(det.get("cooldown", 120.0))
        self.forest = scenario_forest(cfg) if det.get("enabled", True) else None
        # a standing person's scan is shoulder-wide (0.45 m), so the size floor
        # sits above it; otherwise every bystander counts as fallen
        self.fallen_thresholds = FallenThresholds(
            **{k: float(v) for k, v in {"size_min": 0.5, **det.get("fallen", {})}.items()}
        )
        self.events: list = []
        self.tick = 0
        self.mode = RobotMode.IDLE
        self.mover: _Mover | None = None
        self.idle_after = 0.0
        self.returning = False
        self.done = False
        self.target_point = None
        self.victim = None
        self.wait_until = None
        self.pending = None
        self.exhalations: list[float] = []
        self.help_started = None
        self.help_budget = float(cfg.planning.get("budget", planning.DEFAULT_BUDGET))
        hc = cfg.planning
        self.weights = tuple(hc.get("weights", (1.0, 1.0)))
        self.help_cfg = planning.HelpfulnessConfig(
            **{k: float(hc[k]) for k in ("face_width_prior", "d_max", "h_adult", "tall_share", "h_ref") if k in hc}
        )
        tc = cfg.triage
        self.triage_cfg = triage.TriageConfig(**{k: float(v) for k, v in tc.get("thresholds", {}).items()})
        self.triage_noise = triage.DEFAULT_NOISE if tc.get("noise", False) else None
        self.observe = float(tc.get("observe", 30.0))
        self.help_trigger = cfg.expect.get("help_trigger", cfg.planning.get("help_trigger", "Red"))

    @property
    def now(self) -> float:
        return round(self.tick * self.cfg.dt, 9)

    # -- stages --
    def start(self):
        truth = dict(self.cfg.expect)
        truth.pop("help_trigger", None)
        self.log.add(0.0, "scenario", "start", name=self.cfg.name, seed=self.cfg.seed, truth=truth)

    def sense(self):
        for ev in sample_environment_sensors(self.state):
            self.events.append(ev)
            self.log.add(self.now, "sensors", "sensor", id=ev.sensor_id, kind=ev.kind.value, value=ev.value)
        horizon = self.now - self.window - 1.0
        if self.events and self.events[0].timestamp < horizon:
            self.events = [e for e in self.events if e.timestamp >= horizon]

    def sniff(self):
        """On-board gas sensor feeding the breath-presence detector."""
        tr = self.breath.update(self.gas.sample(self.state, self.state.robot.position, self.rng_gas))
        if tr is not None:
            self.log.add(self.now, "detection", "breath", presence=tr.presence.value)

    def detect(self):
        if self.forest is None or self.mode is not RobotMode.IDLE or self.returning or self.now < self.idle_after:
            return
        if self.now < self.warmup:
            return
        period = max(1, int(round(self.classify_period / self.cfg.dt)))
        if self.tick % period:
            return
        f = extract_features(self.events, self.state.clock, self.home, self.window, self.cfg.dt, self.cfg.start_time_of_day)
        verdict = classify_anomaly(self.forest, f)
        if not verdict.anomalous:
            return
        self.log.add(self.now, "detection", "verdict", anomalous=True, room=verdict.room, score=verdict.score)
        self.dispatch(f, verdict.room)

    def dispatch(self, features, room):
        activity = _sensor_activity(self.events, self.home, room, self.state.clock, self.window, self.cfg.dt)
        target = _dispatch_target(self.home, activity, room)
        goal = _nearest_free(self.home, target)
        approach = float(self.cfg.planning.get("approach", 0.3))
        path, pts = _path_points(self.home, self.grid, self.state.robot.position, goal, target, approach)
        self.target_point = target
        self.mover = _Mover(_simplify([self.state.robot.position] + pts)[1:], self.state.robot.speed, self.turn_rate)
        self.mode = RobotMode.DISPATCHING
        eta = planning.travel_time(path, self.state.robot.speed, self.home.cell_size)
        self.log.add(
            self.now, "planning", "dispatch", room=room, target=[round(v, 6) for v in target], cells=len(path.cells), planned_travel=round(eta, 6)
        )

    def move(self):
        if self.mover is None:
            return
        pos, heading = self.mover.advance(self.state.robot.position, self.state.robot.heading, self.cfg.dt)
        self.state.robot = _robot(self.state.robot, position=pos, heading=heading, mode=self.mode)
        if not self.mover.done:
            return
        self.mover = None
        if self.returning:
            self.returning = False
            self.mode = RobotMode.IDLE
            self.idle_after = self.now + self.cooldown
            self.log.add(self.now, "planning", "home", position=list(pos))
            return
        if self.mode is RobotMode.DISPATCHING:
            self.log.add(self.now, "planning", "arrive", position=[round(v, 6) for v in pos])
            self.arrive()

    def arrive(self):
        pose = self.state.robot.position
        clusters = sample_laser_clusters(self.state, (pose[0], pose[1], 0.0), self.rng_percept)
        fallen = detect_fallen(clusters, self.fallen_thresholds)
        for c in fallen:
            self.log.add(self.now, "detection", "fallen", source=c.source, confidence=round(c.confidence, 6), position=[round(v, 6) for v in c.position])
        room = self.home.room_at(self.target_point)
        present = [a for a in self.state.agents if a.present and self.home.room_at(a.position) == room]
        present.sort(key=lambda a: (math.hypot(a.position[0] - pose[0], a.position[1] - pose[1]), a.id))
        agent = present[0] if present else None
        self.victim = agent.id if agent is not None else None
        self.fallen_confirmed = any(c.source == self.victim for c in fallen)
        self.mode = RobotMode.DIALOGUE
        self.log.add(self.now, "dialogue", "ask", agent=self.victim, question="Shall I call emergency services?")
        out = dialogue_turn(agent, self.cfg.accuracy, self.cfg.timeout, self.rng_dialogue)
        self.pending = out
        self.wait_until = self.now + out.duration

    def converse(self):
        if self.mode is not RobotMode.DIALOGUE or self.now < self.wait_until - 1e-9:
            return
        out = self.pending
        agent = self.state.agent(self.victim) if self.victim else None
        if out.responded:
            self.log.add(self.now, "dialogue", "reply", agent=self.victim, heard=out.heard.value)
        self.log.add(
            self.now,
            "dialogue",
            "decision",
            decision=out.decision.value,
            agent=self.victim,
            truth_needs_help=agent.vitals_truth.needs_help() if agent else None,
        )
        if out.decision is Decision.STAND_DOWN:
            self.stand_down()
            return
        self.log.add(self.now, "dialogue", "ems_call", reason=out.decision.value)
        if agent is not None and (out.decision is Decision.TIMEOUT_CALL or self.fallen_confirmed):
            self.mode = RobotMode.TRIAGE
            self.wait_until = self.now + self.observe
            self.exhalations = []
            self.log.add(self.now, "triage", "observe", agent=self.victim, window=self.observe)
        else:
            self.finish("ems_called")

    def stand_down(self):
        if self.cfg.motion.get("enabled", True):
            self.gesture()
        home_cell = _nearest_free(self.home, self.state.robot.home_position)
        _, pts = _path_points(self.home, self.grid, self.state.robot.position, home_cell)
        pts.append(tuple(self.state.robot.home_position))
        self.mover = _Mover(_simplify([self.state.robot.position] + pts)[1:], self.state.robot.speed, self.turn_rate)
        self.returning = True
        self.mode = RobotMode.IDLE
        self.log.add(self.now, "planning", "return", target=list(self.state.robot.home_position))

    def gesture(self):
        mc = self.cfg.motion
        p = PlayfulParams(
            amplitude=float(mc.get("amplitude", 0.1)),
            lam=float(mc.get("lam", 1.0)),
            velocity_limit=float(mc.get("velocity_limit", 0.5)),
        )
        goal = tuple(mc.get("reach", (0.4, 0.1)))
        traj, rep = optimize(seed_straight((0.0, 0.0), goal, int(mc.get("waypoints", 21))), p)
        g = check_guidelines(traj, p, goal)
        self.log.add(
            self.now,
            "motion",
            "gesture",
            iterations=rep.iterations,
            peak=round(peak_deviation(traj), 6),
            helpful=g.helpful,
            safe=g.safe,
            clear=g.clear,
        )

    def observe_breaths(self):
        if self.mode is not RobotMode.TRIAGE:
            return
        for ex in self.state.new_exhalations:
            if ex.agent_id == self.victim:
                self.exhalations.append(ex.t)
        if self.now < self.wait_until - 1e-9:
            return
        agent = self.state.agent(self.victim)
        frame = triage.frame_from_agent(agent, self.rng_triage) if agent.fallen else None
        if frame is not None:
            parts = triage.locate_parts(frame)
            self.log.add(
                self.now,
                "triage",
                "body_parts",
                parts={p.part.value: [round(v, 6) for v in p.position] for p in parts},
            )
        per = triage.percepts_from_vitals(agent.vitals_truth, self.rng_triage, self.triage_noise)
        times = sorted(self.exhalations)
        intervals = [b - a for a, b in zip(times, times[1:])]
        report = triage.triage_report(
            triage.assess_cyanosis(per["blueness"], self.triage_cfg),
            triage.assess_airway(per["pitch"], per["orientation"], self.triage_cfg),
            triage.assess_breathing(intervals, self.observe, cfg=self.triage_cfg) if times else triage.Breathing.ABSENT,
            triage.assess_bleeding(per["red_track"], self.triage_cfg),
        )
        self.log.add(self.now, "triage", "triage", agent=self.victim, report=report.to_record(), truth=asdict(agent.vitals_truth))
        if self.cfg.helpers and _priority_at_least(report.priority, self.help_trigger):
            self.start_help()
        else:
            self.finish("triaged")

    def start_help(self):
        self.mode = RobotMode.SEEKING_HELP
        self.help_started = self.now
        pos = self.state.robot.position
        exclude = {self.victim}
        truth_faces = _scan_faces(self.state, pos, None, FaceNoise(), exclude)
        candidates = {aid: v for aid, v in truth_faces.items() if aid in self.cfg.helpers}
        best = None
        if candidates:
            best = max(
                sorted(candidates),
                key=lambda aid: planning.helpfulness(candidates[aid][0], self.weights, self.help_cfg),
            )
        self.log.add(self.now, "planning", "help_start", budget=self.help_budget, truth_best=best)
        self.plan = None
        self.help_target = None

    def seek_help(self):
        if self.mode is not RobotMode.SEEKING_HELP:
            return
        elapsed = self.now - self.help_started
        if elapsed > self.help_budget:
            self.finish("help_budget_exhausted")
            return
        period = max(1, int(round(float(self.cfg.planning.get("replan_period", 1.0)) / self.cfg.dt)))
        pos = self.state.robot.position
        if self.plan is None or self.tick % period == 0:
            seen = _scan_faces(self.state, pos, self.rng_faces, FaceNoise(), {self.victim})
            nodes, cells = [], []
            for aid in sorted(seen):
                face, bearing = seen[aid]
                d = planning.estimated_distance(face, self.help_cfg)
                est = (pos[0] + d * math.cos(bearing), pos[1] + d * math.sin(bearing))
                nodes.append(planning.HelpNode(aid, est, planning.helpfulness(face, self.weights, self.help_cfg)))
                cells.append(_nearest_free(self.home, est))
            cost = planning.cost_matrix(self.grid, self.home.cell_of(pos), cells, self.state.robot.speed)
            # replan against the original budget: elapsed time is charged once
            base = planning.TourPlan((), 0.0, 0.0, self.help_budget)
            self.plan = planning.replan(nodes, base, elapsed, cost)
            target = planning.select_target(self.plan, nodes)
            self.log.add(
                self.now,
                "planning",
                "tour",
                order=list(self.plan.order),
                reward=round(self.plan.total_reward, 6),
                cost=round(self.plan.total_cost, 6),
                target=target,
            )
            if target is None:
                return
            node = next(n for n in nodes if n.id == target)
            self.help_target = target
            self.help_point = node.position
            goal = _nearest_free(self.home, node.position)
            _, pts = _path_points(self.home, self.grid, pos, goal)
            self.mover = _Mover(_simplify([self.state.robot.position] + pts)[1:], self.state.robot.speed, self.turn_rate)
        agent = self.state.agent(self.help_target) if self.help_target else None
        reach = float(self.cfg.planning.get("reach", 0.5))
        if agent is not None and math.hypot(agent.position[0] - pos[0], agent.position[1] - pos[1]) <= reach:
            self.log.add(self.now, "planning", "helper_reached", agent=self.help_target)
            self.finish("helper_reached")

    def finish(self, reason):
        self.mover = None
        self.done = True
        self.log.add(self.now, "scenario", "resolved", reason=reason)

    def step(self):
        self.tick += 1
        self.state = step_world(self.state, self.cfg.dt)
        self.sense()
        self.sniff()
        self.move()
        self.converse()
        self.observe_breaths()
        self.seek_help()
        self.detect()


def _robot(r: RobotState, **kw) -> RobotState:
    from dataclasses import replace

    return replace(r, **kw)


def _priority_at_least(p: triage.Priority, level: str) -> bool:
    return triage.PRIORITY_RANK[p] >= triage.PRIORITY_RANK[triage.Priority(level)]


def run_scenario(cfg: ScenarioConfig) -> tuple[EventLog, RunMetrics]:
    """Execute one scenario. Runtime failures are logged, then re-raised as
    ScenarioRuntimeError."""
    run = Run(cfg)
    run.start()
    n_ticks = int(round(cfg.duration / cfg.dt))
    try:
        while run.tick < n_ticks and not run.done:
            run.step()
    except ScenarioRuntimeError as exc:
        run.log.add(run.now, "scenario", "error", message=str(exc))
        raise
    except (ValueError, KeyError, planning.NoPath) as exc:
        run.log.add(run.now, "scenario", "error", message=f"{type(exc).__name__}: {exc}")
        raise ScenarioRuntimeError(str(exc)) from exc
    if not run.done:
        run.log.add(run.now, "scenario", "end", reason="duration")
    return run.log, compute_metrics(run.log)


def variant_config(cfg: ScenarioConfig, i: int) -> ScenarioConfig:
    """Run ``i`` of a batch: seed + i, with variant ``i mod len(variants)`` merged in."""
    data = cfg.to_dict()
    variants = data.pop("variants")
    if variants:
        data = deep_merge(data, variants[i % len(variants)])
    data["seed"] = cfg.seed + i
    return parse_config(data, cfg.base_dir)


def run_batch(cfg: ScenarioConfig, runs: int, exclude_rooms=("bathroom",)):
    if runs < 1:
        raise ConfigError("runs must be >= 1")
    logs, metrics = [], []
    for i in range(runs):
        log, m = run_scenario(variant_config(cfg, i))
        logs.append(log)
        metrics.append(m)
    return logs, aggregate(metrics, exclude_rooms)
