import itertools

import numpy as np
import pytest

from homebot import triage
from homebot.triage import (
    Airway,
    BodyFrame,
    Breathing,
    Circulation,
    Part,
    Priority,
    Region,
    Severity,
    assess_airway,
    assess_bleeding,
    assess_breathing,
    assess_cyanosis,
    frame_from_agent,
    locate_parts,
    priority_of,
    skeleton,
    triage_report,
)
from homebot.sensors import fallen_face_frame
from homebot.world import AgentState, FallDirection


def _parts(frame):
    return {p.part: np.array(p.position) for p in locate_parts(frame)}


def test_locate_canonical_supine():
    parts = _parts(BodyFrame((1.0, 2.0), (1.0, 0.0), 0.24))
    assert parts[Part.CHEST] == pytest.approx([1.48, 2.0])
    assert parts[Part.LEFT_HAND][1] > 2.0 > parts[Part.RIGHT_HAND][1]


def test_locate_mirrored_axis_mirrors_hands():
    a = _parts(BodyFrame((0.0, 0.0), (1.0, 0.0), 0.24))
    b = _parts(BodyFrame((0.0, 0.0), (-1.0, 0.0), 0.24))
    for part in (Part.LEFT_HAND, Part.RIGHT_HAND):
        assert b[part] == pytest.approx(-a[part])


def test_locate_degenerate_axis():
    with pytest.raises(ValueError):
        locate_parts(BodyFrame((0.0, 0.0), (0.0, 0.0), 0.24))
    with pytest.raises(ValueError):
        locate_parts(BodyFrame((0.0, 0.0), (1.0, 0.0), 0.0))


def test_locate_five_poses_against_skeleton():
    rng = np.random.default_rng(0)
    errors = []
    poses = [(0.0, FallDirection.BACKWARD), (1.0, FallDirection.BACKWARD), (2.5, FallDirection.LEFT), (4.0, FallDirection.RIGHT), (5.5, FallDirection.FORWARD)]
    for heading, direction in poses:
        agent = AgentState(id="v", position=(1.5, 1.5), heading=heading, pose="Fallen", fall_direction=direction)
        face, axis, _ = fallen_face_frame(agent)
        truth = skeleton(face, axis, agent.body_height)
        est = _parts(frame_from_agent(agent, rng))
        errors += [float(np.linalg.norm(est[p] - np.array(truth[p]))) for p in Part]
    assert np.mean(errors) <= 0.05


def test_verdict_thresholds():
    assert assess_cyanosis(0.0) is Circulation.NORMAL
    assert assess_cyanosis(1.0) is Circulation.CYANOTIC
    assert assess_airway(30.0, "Front") is Airway.OPEN
    assert assess_airway(30.0, "Down") is Airway.OBSTRUCTED_RISK
    assert assess_airway(-20.0, "Side") is Airway.OBSTRUCTED_RISK
    with pytest.raises(ValueError):
        assess_cyanosis(1.5)
    with pytest.raises(ValueError):
        assess_airway(120.0, "Front")


def test_breathing_verdicts():
    assert assess_breathing([4.0] * 7, 30.0) is Breathing.NORMAL
    assert assess_breathing([], 30.0) is Breathing.ABSENT
    assert assess_breathing([1.5] * 15, 30.0) is Breathing.FAST
    assert assess_breathing([10.0, 10.0], 30.0) is Breathing.SLOW
    assert assess_breathing([2.0, 14.0, 4.0, 20.0], 60.0) is Breathing.AGONAL
    with pytest.raises(triage.WindowTooShort):
        assess_breathing([4.0], 5.0)


def test_bleeding_verdicts():
    still = [(t, r.value, 0.0) for t in range(10) for r in Region if r is not Region.NONE]
    assert assess_bleeding(still) == (Region.NONE, Severity.NONE)
    growing = [(t, "LeftLeg", 1e-3 * t) for t in range(10)]
    assert assess_bleeding(growing) == (Region.LEFT_LEG, Severity.MASSIVE)
    slow = [(t, "Head", 2e-3 + 1e-4 * t) for t in range(10)]
    assert assess_bleeding(slow) == (Region.HEAD, Severity.SLIGHT)
    with pytest.raises(ValueError):
        assess_bleeding([])


def test_priority_examples():
    ok = (Circulation.NORMAL, Airway.OPEN, Breathing.NORMAL, (Region.NONE, Severity.NONE))
    assert priority_of(*ok) is Priority.GREEN
    assert priority_of(Circulation.NORMAL, Airway.OPEN, Breathing.ABSENT, (Region.NONE, Severity.NONE)) is Priority.RED
    assert priority_of(Circulation.CYANOTIC, Airway.OPEN, Breathing.NORMAL, (Region.NONE, Severity.NONE)) is Priority.YELLOW


def test_priority_monotone():
    """Making any single verdict worse never lowers the priority."""
    worse = {
        0: [(Circulation.NORMAL, Circulation.CYANOTIC)],
        1: [(Airway.OPEN, Airway.OBSTRUCTED_RISK)],
        2: [(Breathing.NORMAL, b) for b in Breathing if b is not Breathing.NORMAL],
        3: [((Region.NONE, Severity.NONE), (Region.HEAD, Severity.SLIGHT)), ((Region.HEAD, Severity.SLIGHT), (Region.HEAD, Severity.MASSIVE))],
    }
    bleeds = [(Region.NONE, Severity.NONE), (Region.HEAD, Severity.SLIGHT), (Region.HEAD, Severity.MASSIVE)]
    for combo in itertools.product(Circulation, Airway, Breathing, bleeds):
        for i, pairs in worse.items():
            for lo, hi in pairs:
                if combo[i] != lo:
                    continue
                up = list(combo)
                up[i] = hi
                assert triage.PRIORITY_RANK[priority_of(*up)] >= triage.PRIORITY_RANK[priority_of(*combo)]


def test_report_roundtrip():
    r = triage_report("Cyanotic", "Open", "Slow", ("Head", "Slight"))
    assert r.priority is Priority.YELLOW
    assert triage.VitalsReport.from_record(r.to_record()) == r
    with pytest.raises(ValueError):
        triage_report(None, "Open", "Slow", ("Head", "Slight"))


def test_fixture_csv_roundtrip_and_bundled():
    fx = triage.generate_fixtures(seed=1)
    for name, rows in fx.items():
        back = triage.read_fixture_csv(name, triage.fixture_csv(name, rows))
        assert len(back) == len(rows)
    again = {n: triage.read_fixture_csv(n, triage.fixture_csv(n, r)) for n, r in fx.items()}
    assert triage.evaluate_fixtures(again) == pytest.approx(triage.evaluate_fixtures(fx))
    sizes = {k: len(v) for k, v in triage.load_fixtures().items()}
    assert sizes == {"cyanosis": 40, "airway": 40, "breathing": 40, "bleeding_location": 36, "bleeding_rate": 18}


def test_noise_free_fixtures_perfect():
    acc = triage.evaluate_fixtures(triage.generate_fixtures(noise=None))
    assert all(v == 1.0 for v in acc.values())
