"""Apartment model, simulated people and the fixed-step world clock."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np

DEFAULT_DT = 0.1
# Shared by every step-time comparison so float accumulation of dt never drops a tick.
TIME_EPS = 1e-9


class MapError(ValueError):
    """Raised when a map description is malformed or violates an invariant."""


class SensorKind(str, Enum):
    PRESSURE = "Pressure"
    CONTACT = "Contact"
    PIR = "PIR"


class FallDirection(str, Enum):
    FORWARD = "Forward"
    BACKWARD = "Backward"
    LEFT = "Left"
    RIGHT = "Right"


# Rotation of the pre-fall heading for each fall direction.
FALL_ROTATION = {
    FallDirection.FORWARD: 0.0,
    FallDirection.LEFT: math.pi / 2,
    FallDirection.BACKWARD: math.pi,
    FallDirection.RIGHT: -math.pi / 2,
}


class RobotMode(str, Enum):
    IDLE = "Idle"
    DISPATCHING = "Dispatching"
    DIALOGUE = "Dialogue"
    TRIAGE = "Triage"
    SEEKING_HELP = "SeekingHelp"


@dataclass(frozen=True)
class Room:
    name: str
    rect: tuple[int, int, int, int]  # inclusive cell bounds x0, y0, x1, y1

    def contains(self, cell: tuple[int, int]) -> bool:
        x0, y0, x1, y1 = self.rect
        return x0 <= cell[0] <= x1 and y0 <= cell[1] <= y1

    def cells(self):
        x0, y0, x1, y1 = self.rect
        for y in range(y0, y1 + 1):
            for x in range(x0, x1 + 1):
                yield (x, y)


@dataclass(frozen=True)
class Door:
    cell: tuple[int, int]
    rooms: tuple[str, str]


@dataclass(frozen=True)
class SensorPlacement:
    sensor_id: str
    kind: SensorKind
    cells: tuple[int, int, int, int] | None = None
    zone: str | None = None


@dataclass(frozen=True)
class HomeMap:
    width: int
    height: int
    cell_size: float
    walls: frozenset  # set of (x, y) wall cells
    rooms: tuple[Room, ...]
    doors: tuple[Door, ...]
    sensors: tuple[SensorPlacement, ...]
    robot_home: tuple[float, float] | None = None
    name: str = "map"

    def in_bounds(self, cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def is_free(self, cell) -> bool:
        return self.in_bounds(cell) and tuple(cell) not in self.walls

    def cell_of(self, pos) -> tuple[int, int]:
        return (int(math.floor(pos[0] / self.cell_size)), int(math.floor(pos[1] / self.cell_size)))

    def cell_center(self, cell) -> tuple[float, float]:
        return ((cell[0] + 0.5) * self.cell_size, (cell[1] + 0.5) * self.cell_size)

    def room(self, name: str) -> Room:
        for r in self.rooms:
            if r.name == name:
                return r
        raise KeyError(name)

    def room_at(self, pos) -> str | None:
        cell = self.cell_of(pos)
        for r in self.rooms:
            if r.contains(cell):
                return r.name
        return None

    def sensor(self, sensor_id: str) -> SensorPlacement:
        for s in self.sensors:
            if s.sensor_id == sensor_id:
                return s
        raise KeyError(sensor_id)

    def sensor_cells(self, placement: SensorPlacement) -> tuple[int, int, int, int]:
        if placement.cells is not None:
            return placement.cells
        return self.room(placement.zone).rect

    def sensor_room(self, placement: SensorPlacement) -> str | None:
        if placement.zone is not None:
            return placement.zone
        x0, y0, x1, y1 = placement.cells
        return self.room_at(self.cell_center(((x0 + x1) // 2, (y0 + y1) // 2)))

    def sensor_center(self, placement: SensorPlacement) -> tuple[float, float]:
        x0, y0, x1, y1 = self.sensor_cells(placement)
        cs = self.cell_size
        return ((x0 + x1 + 1) * cs / 2, (y0 + y1 + 1) * cs / 2)


def _rect(value, what: str) -> tuple[int, int, int, int]:
    if len(value) == 2:
        value = [value[0], value[1], value[0], value[1]]
    if len(value) != 4:
        raise MapError(f"{what}: expected [x0, y0, x1, y1], got {value!r}")
    x0, y0, x1, y1 = (int(v) for v in value)
    if x1 < x0 or y1 < y0:
        raise MapError(f"{what}: inverted rectangle {value!r}")
    return (x0, y0, x1, y1)


def parse_map(data: dict) -> HomeMap:
    """Build a HomeMap from its JSON dictionary, checking every invariant."""
    try:
        grid = data["grid"]
    except (KeyError, TypeError):
        raise MapError("map: missing 'grid' section") from None
    walls: set[tuple[int, int]] = set()
    if "rows" in grid:
        rows = grid["rows"]
        height = len(rows)
        width = len(rows[0]) if rows else 0
        for y, row in enumerate(rows):
            if len(row) != width:
                raise MapError(f"grid.rows[{y}]: ragged row (len {len(row)} != {width})")
            for x, ch in enumerate(row):
                if ch == "#":
                    walls.add((x, y))
                elif ch != ".":
                    raise MapError(f"grid.rows[{y}][{x}]: unknown cell symbol {ch!r}")
    else:
        try:
            width, height = int(grid["width"]), int(grid["height"])
        except KeyError as exc:
            raise MapError(f"grid: missing {exc.args[0]!r}") from None
        for i, w in enumerate(grid.get("walls", [])):
            x0, y0, x1, y1 = _rect(w, f"grid.walls[{i}]")
            walls.update((x, y) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1))
    if width <= 0 or height <= 0:
        raise MapError(f"grid: dimensions must be positive, got {width}x{height}")

    cell_size = float(data.get("cell_size", 0.1))
    if cell_size <= 0:
        raise MapError(f"cell_size: must be positive, got {cell_size}")

    def inside(rect):
        x0, y0, x1, y1 = rect
        return x0 >= 0 and y0 >= 0 and x1 < width and y1 < height

    rooms = []
    for i, r in enumerate(data.get("rooms", [])):
        rect = _rect(r["rect"], f"rooms[{i}] ({r.get('name')})")
        if not inside(rect):
            raise MapError(f"rooms[{i}] ({r['name']}): rectangle {list(rect)} outside {width}x{height} grid")
        room = Room(str(r["name"]), rect)
        if all(c in walls for c in room.cells()):
            raise MapError(f"rooms[{i}] ({room.name}): no free cell")
        rooms.append(room)
    names = [r.name for r in rooms]
    if len(set(names)) != len(names):
        raise MapError("rooms: duplicate room name")

    doors = []
    for i, d in enumerate(data.get("doors", [])):
        cell = (int(d["cell"][0]), int(d["cell"][1]))
        if not (0 <= cell[0] < width and 0 <= cell[1] < height):
            raise MapError(f"doors[{i}]: cell {list(cell)} outside grid")
        # A doorway punches through whatever wall rectangle covers it.
        walls.discard(cell)
        linked = tuple(d.get("rooms", ()))
        for name in linked:
            if name not in names:
                raise MapError(f"doors[{i}]: unknown room {name!r}")
        doors.append(Door(cell, linked))

    sensors = []
    seen = set()
    for i, s in enumerate(data.get("sensors", [])):
        sid = str(s["id"])
        if sid in seen:
            raise MapError(f"sensors[{i}]: duplicate sensor id {sid!r}")
        seen.add(sid)
        try:
            kind = SensorKind(s["kind"])
        except ValueError:
            raise MapError(f"sensors[{i}] ({sid}): unknown kind {s['kind']!r}") from None
        if "zone" in s:
            if s["zone"] not in names:
                raise MapError(f"sensors[{i}] ({sid}): unknown zone {s['zone']!r}")
            sensors.append(SensorPlacement(sid, kind, zone=s["zone"]))
            continue
        rect = _rect(s.get("cells", s.get("cell", [])), f"sensors[{i}] ({sid})")
        if not inside(rect):
            raise MapError(f"sensors[{i}] ({sid}): placement {list(rect)} outside grid")
        x0, y0, x1, y1 = rect
        blocked = [(x, y) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1) if (x, y) in walls]
        # Contact sensors sit on fixtures and may touch walls; floor sensors may not.
        if blocked and kind is not SensorKind.CONTACT:
            raise MapError(f"sensors[{i}] ({sid}): placed on wall cell {list(blocked[0])}")
        sensors.append(SensorPlacement(sid, kind, cells=rect))

    home = data.get("robot_home")
    if home is not None:
        home = (float(home[0]), float(home[1]))
        hc = (int(math.floor(home[0] / cell_size)), int(math.floor(home[1] / cell_size)))
        if not (0 <= hc[0] < width and 0 <= hc[1] < height) or hc in walls:
            raise MapError(f"robot_home: {list(home)} is not on a free cell")

    return HomeMap(
        width=width,
        height=height,
        cell_size=cell_size,
        walls=frozenset(walls),
        rooms=tuple(rooms),
        doors=tuple(doors),
        sensors=tuple(sensors),
        robot_home=home,
        name=str(data.get("name", "map")),
    )


def load_map(description) -> HomeMap:
    """Parse a map from a JSON string, a dict, or a path to a JSON file."""
    if isinstance(description, dict):
        return parse_map(description)
    if isinstance(description, Path) or (isinstance(description, str) and not description.lstrip().startswith("{")):
        path = Path(description)
        if not path.exists():
            path = bundled_path("maps", path.name)
        text = path.read_text()
    else:
        text = description
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MapError(f"map: JSON parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_map(data)


def bundled_path(kind: str, name: str) -> Path:
    return Path(str(resources.files("homebot") / "data" / kind / name))


def default_map() -> HomeMap:
    return load_map(bundled_path("maps", "apartment_3x3.json"))


@dataclass(frozen=True)
class VitalsProfile:
    """Ground-truth health state of a simulated person."""

    circulation: str = "Normal"
    airway: str = "Open"
    breathing: str = "Normal"
    bleeding_location: str = "None"
    bleeding_severity: str = "None"

    def needs_help(self) -> bool:
        return (
            self.circulation != "Normal"
            or self.airway != "Open"
            or self.breathing != "Normal"
            or self.bleeding_severity != "None"
        )


@dataclass(frozen=True)
class ScriptAction:
    t: float
    action: str
    params: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class AgentState:
    id: str
    position: tuple[float, float]
    heading: float = 0.0
    pose: str = "Standing"
    fall_direction: FallDirection | None = None
    body_height: float = 1.7
    face_height_offset: float = 1.58
    face_width: float = 0.15
    skin_temperature: float = 33.0
    breathing_interval: float | None = 4.0
    breathing_cv: float = 0.0
    responsiveness: float = 1.0
    response_delay: float = 1.5
    vitals_truth: VitalsProfile = field(default_factory=VitalsProfile)
    present: bool = True
    script: tuple[ScriptAction, ...] = ()
    # runtime bookkeeping
    script_index: int = 0
    waypoints: tuple[tuple[float, float], ...] = ()
    walk_speed: float = 0.0
    next_breath: float | None = None

    def __post_init__(self):
        if not 0.5 <= self.body_height <= 2.2:
            raise ValueError(f"agent {self.id}: body_height {self.body_height} outside [0.5, 2.2]")
        if not 20.0 <= self.skin_temperature <= 45.0:
            raise ValueError(f"agent {self.id}: skin_temperature {self.skin_temperature} outside [20, 45]")
        if self.breathing_interval is not None and self.breathing_interval <= 0:
            raise ValueError(f"agent {self.id}: breathing_interval must be positive or None")
        if not 0.0 <= self.responsiveness <= 1.0:
            raise ValueError(f"agent {self.id}: responsiveness outside [0, 1]")

    @property
    def fallen(self) -> bool:
        return self.pose == "Fallen"

    @property
    def face_height(self) -> float:
        return 0.12 if self.fallen else self.face_height_offset

    def body_axis(self) -> tuple[float, float]:
        """Unit vector from the feet towards the head of a fallen body."""
        ang = self.heading + FALL_ROTATION[self.fall_direction or FallDirection.FORWARD]
        return (math.cos(ang), math.sin(ang))


@dataclass(frozen=True)
class RobotState:
    position: tuple[float, float]
    heading: float = 0.0
    speed: float = 0.3
    mode: RobotMode = RobotMode.IDLE
    home_position: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.speed <= 0:
            raise ValueError("robot speed must be positive")


@dataclass(frozen=True)
class Prop:
    """A non-agent object that shows up in laser scans, e.g. a cooling kettle."""

    id: str
    position: tuple[float, float]
    size: float
    initial_temperature: float
    ambient_temperature: float = 22.0
    cooling_time_constant: float = 600.0
    placed_at: float = 0.0
    in_known_map: bool = False

    def temperature(self, clock: float) -> float:
        age = max(0.0, clock - self.placed_at)
        return self.ambient_temperature + (self.initial_temperature - self.ambient_temperature) * math.exp(
            -age / self.cooling_time_constant
        )


@dataclass(frozen=True)
class Exhalation:
    t: float
    agent_id: str
    position: tuple[float, float]


@dataclass(frozen=True)
class ContactAction:
    t: float
    sensor_id: str
    open: bool


@dataclass
class WorldState:
    clock: float
    map: HomeMap
    agents: list[AgentState]
    robot: RobotState
    rng: np.random.Generator
    props: list[Prop] = field(default_factory=list)
    schedule: tuple[ScriptAction, ...] = ()
    schedule_index: int = 0
    # gas_field_sources: recent exhalation puffs still contributing to the plume
    exhalations: list[Exhalation] = field(default_factory=list)
    # per-step scratch, overwritten by every step_world
    moved: dict = field(default_factory=dict)
    contact_actions: list[ContactAction] = field(default_factory=list)
    new_exhalations: list[Exhalation] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    plume_lifetime: float = 20.0

    @property
    def gas_field_sources(self):
        return [(e.position, 1.0) for e in self.exhalations]

    def agent(self, agent_id: str) -> AgentState:
        for a in self.agents:
            if a.id == agent_id:
                return a
        raise KeyError(agent_id)

    def copy(self) -> WorldState:
        dup = copy.copy(self)
        dup.agents = list(self.agents)
        dup.props = list(self.props)
        dup.exhalations = list(self.exhalations)
        dup.moved = dict(self.moved)
        dup.contact_actions = list(self.contact_actions)
        dup.new_exhalations = list(self.new_exhalations)
        dup.events = list(self.events)
        dup.rng = copy.deepcopy(self.rng)
        return dup


def make_world(home: HomeMap, agents=(), robot: RobotState | None = None, seed: int = 0, props=(), schedule=()):
    if robot is None:
        pos = home.robot_home or home.cell_center(next(iter(home.rooms[0].cells())))
        robot = RobotState(position=pos, home_position=pos)
    if not home.is_free(home.cell_of(robot.position)):
        raise ValueError(f"robot position {robot.position} is not on a free cell")
    agents = [_initial_agent(a) for a in agents]
    return WorldState(
        clock=0.0,
        map=home,
        agents=agents,
        robot=robot,
        rng=np.random.default_rng(seed),
        props=list(props),
        schedule=tuple(sorted(schedule, key=lambda s: s.t)),
    )


def _initial_agent(a: AgentState) -> AgentState:
    script = tuple(sorted(a.script, key=lambda s: s.t))
    nb = a.next_breath
    if nb is None and a.breathing_interval is not None:
        nb = a.breathing_interval
    return replace(a, script=script, next_breath=nb)


def _breath_interval(agent: AgentState, rng: np.random.Generator) -> float:
    base = agent.breathing_interval
    if agent.breathing_cv <= 0:
        return base
    # lognormal with the requested mean and coefficient of variation
    s2 = math.log(1.0 + agent.breathing_cv**2)
    return float(base * math.exp(rng.normal(-s2 / 2, math.sqrt(s2))))


def _apply_action(state: WorldState, agent: AgentState, act: ScriptAction) -> AgentState:
    p = act.params
    kind = act.action
    if kind == "walk":
        pts = tuple(tuple(float(v) for v in pt) for pt in p["path"])
        return replace(agent, waypoints=pts, walk_speed=float(p.get("speed", 0.5)))
    if kind == "stop":
        return replace(agent, waypoints=(), walk_speed=0.0)
    if kind == "fall":
        return replace(agent, pose="Fallen", fall_direction=FallDirection(p.get("direction", "Forward")), waypoints=())
    if kind == "stand":
        return replace(agent, pose="Standing", fall_direction=None)
    if kind == "teleport":
        return replace(agent, position=(float(p["position"][0]), float(p["position"][1])), waypoints=())
    if kind == "face":
        return replace(agent, heading=float(p["heading"]))
    if kind == "leave":
        return replace(agent, present=False, waypoints=())
    if kind == "enter":
        return replace(agent, present=True)
    if kind == "contact":
        state.contact_actions.append(ContactAction(state.clock, p["sensor"], bool(p.get("open", True))))
        return agent
    if kind == "set":
        fields = dict(p)
        if "vitals_truth" in fields and isinstance(fields["vitals_truth"], dict):
            fields["vitals_truth"] = VitalsProfile(**fields["vitals_truth"])
        if "breathing_interval" in fields and fields["breathing_interval"] is not None:
            fields.setdefault("next_breath", state.clock + float(fields["breathing_interval"]))
        return replace(agent, **fields)
    raise ValueError(f"agent {agent.id}: unknown scripted action {kind!r}")


def _walk(state: WorldState, agent: AgentState, dt: float) -> tuple[AgentState, float]:
    if agent.fallen or not agent.present or not agent.waypoints or agent.walk_speed <= 0:
        return agent, 0.0
    pos = agent.position
    budget = agent.walk_speed * dt
    waypoints = list(agent.waypoints)
    heading = agent.heading
    travelled = 0.0
    while waypoints and budget > TIME_EPS:
        tx, ty = waypoints[0]
        dx, dy = tx - pos[0], ty - pos[1]
        dist = math.hypot(dx, dy)
        if dist <= TIME_EPS:
            waypoints.pop(0)
            continue
        step = min(budget, dist)
        nxt = (pos[0] + dx / dist * step, pos[1] + dy / dist * step)
        if not state.map.is_free(state.map.cell_of(nxt)):
            waypoints = []
            break
        heading = math.atan2(dy, dx)
        pos = nxt
        budget -= step
        travelled += step
        if step >= dist - TIME_EPS:
            pos = (tx, ty)
            waypoints.pop(0)
    return replace(agent, position=pos, heading=heading, waypoints=tuple(waypoints)), travelled


def step_world(state: WorldState, dt: float = DEFAULT_DT) -> WorldState:
    """Advance the world by one fixed step and return the new state.

    The input state is left untouched. Schedule entries due by the new clock
    fire first; agent script actions take effect in the step that begins at
    their time, so a walk from t0 to t1 moves for (t1 - t0) / dt steps. Agents
    then walk, then exhalations due by the new clock are
    emitted into ``new_exhalations`` and the plume history.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    new = state.copy()
    new.clock = state.clock + dt
    new.moved = {}
    new.contact_actions = []
    new.new_exhalations = []
    new.events = []

    while new.schedule_index < len(new.schedule) and new.schedule[new.schedule_index].t <= new.clock + TIME_EPS:
        act = new.schedule[new.schedule_index]
        if act.action == "contact":
            new.contact_actions.append(ContactAction(new.clock, act.params["sensor"], bool(act.params.get("open", True))))
        elif act.action == "prop":
            p = act.params
            new.props.append(
                Prop(
                    id=p["id"],
                    position=tuple(p["position"]),
                    size=float(p.get("size", 0.2)),
                    initial_temperature=float(p.get("temperature", 60.0)),
                    cooling_time_constant=float(p.get("cooling_time_constant", 600.0)),
                    placed_at=new.clock,
                )
            )
        else:
            raise ValueError(f"schedule: unknown action {act.action!r}")
        new.schedule_index += 1

    agents = []
    for agent in new.agents:
        while agent.script_index < len(agent.script) and agent.script[agent.script_index].t <= state.clock + TIME_EPS:
            act = agent.script[agent.script_index]
            agent = _apply_action(new, replace(agent, script_index=agent.script_index + 1), act)
        agent, travelled = _walk(new, agent, dt)
        new.moved[agent.id] = travelled
        if agent.breathing_interval is not None and agent.present:
            nb = agent.next_breath if agent.next_breath is not None else new.clock + agent.breathing_interval
            while nb <= new.clock + TIME_EPS:
                ex = Exhalation(nb, agent.id, agent.position)
                new.new_exhalations.append(ex)
                nb = nb + _breath_interval(agent, new.rng)
            agent = replace(agent, next_breath=nb)
        agents.append(agent)
    new.agents = agents

    if new.new_exhalations:
        new.exhalations.extend(new.new_exhalations)
    horizon = new.clock - new.plume_lifetime
    if new.exhalations and new.exhalations[0].t < horizon:
        new.exhalations = [e for e in new.exhalations if e.t >= horizon]
    return new


def agent_from_config(cfg: dict) -> AgentState:
    cfg = dict(cfg)
    script = tuple(
        ScriptAction(float(s["t"]), s["action"], {k: v for k, v in s.items() if k not in ("t", "action")})
        for s in cfg.pop("script", [])
    )
    vitals = VitalsProfile(**cfg.pop("vitals_truth", {}))
    pos = cfg.pop("position")
    if "fall_direction" in cfg and cfg["fall_direction"] is not None:
        cfg["fall_direction"] = FallDirection(cfg["fall_direction"])
    return AgentState(position=(float(pos[0]), float(pos[1])), vitals_truth=vitals, script=script, **cfg)
