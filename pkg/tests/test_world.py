import math

import pytest

from homebot.world import (
    AgentState,
    FallDirection,
    MapError,
    RobotState,
    ScriptAction,
    SensorKind,
    agent_from_config,
    default_map,
    load_map,
    make_world,
    step_world,
)


def open_map(w=20, h=20):
    rows = ["#" * w] + ["#" + "." * (w - 2) + "#"] * (h - 2) + ["#" * w]
    return load_map({"grid": {"rows": rows}, "rooms": [{"name": "room", "rect": [1, 1, w - 2, h - 2]}]})


def test_default_map_layout():
    home = default_map()
    assert [r.name for r in home.rooms] == ["bathroom", "bedroom", "hallway", "kitchen"]
    kinds = [s.kind for s in home.sensors]
    assert kinds.count(SensorKind.PRESSURE) == 4
    assert kinds.count(SensorKind.CONTACT) == 3
    assert kinds.count(SensorKind.PIR) == 4
    assert home.width * home.cell_size == pytest.approx(3.0)
    assert home.height * home.cell_size == pytest.approx(3.0)
    for door in home.doors:
        assert home.is_free(door.cell)


def test_trivial_map():
    home = load_map({"grid": {"width": 1, "height": 1}, "rooms": [{"name": "only", "rect": [0, 0, 0, 0]}]})
    assert home.room_at((0.05, 0.05)) == "only"
    assert home.sensors == ()


def test_sensor_on_wall_is_named():
    with pytest.raises(MapError, match="mat"):
        load_map(
            {
                "grid": {"rows": ["###", "#.#", "###"]},
                "rooms": [{"name": "r", "rect": [1, 1, 1, 1]}],
                "sensors": [{"id": "mat", "kind": "Pressure", "cells": [0, 0, 0, 0]}],
            }
        )


@pytest.mark.parametrize(
    "bad, match",
    [
        ({"rooms": []}, "grid"),
        ({"grid": {"width": 0, "height": 3}}, "positive"),
        ({"grid": {"width": 3, "height": 3}, "rooms": [{"name": "r", "rect": [0, 0, 5, 5]}]}, "outside"),
        (
            {
                "grid": {"width": 3, "height": 3},
                "rooms": [{"name": "r", "rect": [0, 0, 2, 2]}],
                "sensors": [{"id": "a", "kind": "PIR", "zone": "r"}, {"id": "a", "kind": "PIR", "zone": "r"}],
            },
            "duplicate sensor id",
        ),
    ],
)
def test_map_errors(bad, match):
    with pytest.raises(MapError, match=match):
        load_map(bad)


def test_empty_world_only_advances_clock():
    s0 = make_world(open_map(), [], seed=1)
    s1 = step_world(s0, 0.1)
    assert s1.clock == pytest.approx(0.1)
    assert s0.clock == 0.0  # input untouched
    assert s1.agents == [] and s1.robot == s0.robot and s1.new_exhalations == []


def test_walk_kinematics():
    agent = AgentState(
        id="a",
        position=(0.5, 1.0),
        breathing_interval=None,
        script=(ScriptAction(0.0, "walk", {"path": [[1.5, 1.0]], "speed": 0.3}),),
    )
    s = make_world(open_map(), [agent])
    for _ in range(10):
        s = step_world(s, 0.1)
    assert s.agents[0].position[0] == pytest.approx(0.8, abs=1e-9)
    assert s.agents[0].position[1] == pytest.approx(1.0)


def test_breathing_count():
    s = make_world(open_map(), [AgentState(id="a", position=(1.0, 1.0), breathing_interval=4.0)])
    count = 0
    for _ in range(600):
        s = step_world(s, 0.1)
        count += len(s.new_exhalations)
    assert count == 15


def test_fallen_agent_does_not_move():
    agent = AgentState(
        id="a",
        position=(0.5, 1.0),
        script=(
            ScriptAction(0.0, "walk", {"path": [[1.5, 1.0]], "speed": 0.5}),
            ScriptAction(0.5, "fall", {"direction": "Left"}),
        ),
    )
    s = make_world(open_map(), [agent])
    for _ in range(5):
        s = step_world(s)
    pos = s.agents[0].position
    for _ in range(20):
        s = step_world(s)
    assert s.agents[0].fallen and s.agents[0].fall_direction is FallDirection.LEFT
    assert s.agents[0].position == pos


def test_agents_conserved_and_clock_exact():
    agents = [AgentState(id=str(i), position=(0.5 + 0.1 * i, 0.5)) for i in range(3)]
    s = make_world(open_map(), agents, seed=3)
    for k in range(1, 50):
        s = step_world(s)
        assert len(s.agents) == 3
    assert s.clock == pytest.approx(4.9)


def test_determinism_same_seed():
    def run(seed):
        a = AgentState(id="a", position=(1.0, 1.0), breathing_interval=3.0, breathing_cv=0.3)
        s = make_world(open_map(), [a], seed=seed)
        out = []
        for _ in range(300):
            s = step_world(s)
            out += [e.t for e in s.new_exhalations]
        return out

    assert run(5) == run(5)
    assert run(5) != run(6)


def test_agent_invariants():
    with pytest.raises(ValueError):
        AgentState(id="x", position=(0, 0), body_height=3.0)
    with pytest.raises(ValueError):
        AgentState(id="x", position=(0, 0), skin_temperature=50.0)
    with pytest.raises(ValueError):
        RobotState(position=(0, 0), speed=0.0)
    a = agent_from_config({"id": "b", "position": [1, 2], "vitals_truth": {"breathing": "Slow"}})
    assert a.vitals_truth.needs_help()


def test_robot_must_start_on_free_cell():
    with pytest.raises(ValueError):
        make_world(open_map(), [], RobotState(position=(0.05, 0.05)))


def test_bad_dt():
    with pytest.raises(ValueError):
        step_world(make_world(open_map(), []), 0.0)


def test_body_axis_rotates_with_direction():
    a = AgentState(id="a", position=(0, 0), heading=0.0, pose="Fallen", fall_direction=FallDirection.FORWARD)
    b = AgentState(id="a", position=(0, 0), heading=0.0, pose="Fallen", fall_direction=FallDirection.BACKWARD)
    ax, bx = a.body_axis(), b.body_axis()
    assert ax[0] == pytest.approx(-bx[0]) and ax[1] == pytest.approx(-bx[1], abs=1e-12)
    assert math.hypot(*ax) == pytest.approx(1.0)
