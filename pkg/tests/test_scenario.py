import numpy as np
import pytest

from homebot.scenario import (
    Answer,
    ConfigError,
    Decision,
    MalformedLog,
    Run,
    ScenarioRuntimeError,
    compute_metrics,
    decide,
    dialogue_exchange,
    load_config,
    parse_config,
    run_batch,
    run_scenario,
)
from homebot.world import AgentState, RobotMode, VitalsProfile


@pytest.fixture(scope="module")
def unresponsive():
    return run_scenario(load_config("unresponsive_victim"))


def test_quiet_day_robot_stays_idle():
    run = Run(load_config("quiet_day"))
    run.start()
    home = run.state.robot.position
    while run.tick < int(round(run.cfg.duration / run.cfg.dt)) and not run.done:
        run.step()
        assert run.mode is RobotMode.IDLE
    assert run.state.robot.position == home
    m = compute_metrics(run.log)
    assert m.dispatches == 0 and m.time_to_arrive is None


def test_bathroom_fall_reached_within_a_minute():
    log, m = run_scenario(load_config("bathroom_fall"))
    assert log.of_type("verdict")[0]["room"] == "bathroom"
    dispatch, arrive = log.of_type("dispatch")[0], log.of_type("arrive")[0]
    assert m.time_to_arrive == pytest.approx(arrive["t"] - dispatch["t"])
    assert m.time_to_arrive < 60


def test_unresponsive_victim_skeleton(unresponsive):
    log, m = unresponsive
    skeleton = [r["type"] for r in log.records if r["type"] in ("verdict", "dispatch", "arrive", "decision", "ems_call", "triage", "help_start", "helper_reached")]
    assert skeleton == ["verdict", "dispatch", "arrive", "decision", "ems_call", "triage", "help_start", "helper_reached"]
    assert log.of_type("decision")[0]["decision"] == "TimeoutCall"
    assert log.of_type("helper_reached")[0]["agent"] == "adult"
    assert m.help_target_correct and m.priority == "Red" and m.dialogue_correct


def test_log_times_non_decreasing(unresponsive):
    log, _ = unresponsive
    ts = [r["t"] for r in log.records]
    assert ts == sorted(ts)
    with pytest.raises(ScenarioRuntimeError):
        log.add(ts[-1] - 1.0, "x", "late")


def test_metrics_roundtrip_through_jsonl(unresponsive):
    log, m = unresponsive
    assert compute_metrics(log.to_jsonl()) == m


def test_compute_metrics_empty_and_malformed():
    m = compute_metrics("")
    assert m.dispatches == 0 and m.time_to_detect is None and m.dialogue_correct is None
    bad = '{"t": 0, "module": "scenario", "type": "start"}\nnot json\n'
    with pytest.raises(MalformedLog, match="line 2"):
        compute_metrics(bad)


def test_dialogue_decisions():
    silent = AgentState(id="a", position=(0, 0), responsiveness=0.0)
    rng = np.random.default_rng(0)
    assert all(dialogue_exchange(silent, p, rng=rng) is Decision.TIMEOUT_CALL for p in (0.0, 0.5, 1.0))
    healthy = AgentState(id="b", position=(0, 0), responsiveness=1.0)
    assert dialogue_exchange(healthy, 1.0, rng=rng) is Decision.STAND_DOWN
    hurt = AgentState(id="c", position=(0, 0), responsiveness=1.0, vitals_truth=VitalsProfile(breathing="Agonal"))
    assert dialogue_exchange(hurt, 1.0, rng=rng) is Decision.CALL_EMS
    assert decide(None) is Decision.TIMEOUT_CALL and decide(Answer.NO) is Decision.STAND_DOWN


def _base():
    return load_config("bathroom_fall").to_dict()


@pytest.mark.parametrize(
    "change, message",
    [
        ({"bogus": 1}, "unknown"),
        ({"seed": 1.5}, "seed"),
        ({"duration": -1}, "duration"),
        ({"dialogue": {"accuracy": 1.5}}, "accuracy"),
        ({"dialogue": {"p": 0.5}}, "unknown dialogue"),
        ({"map": "missing_map.json"}, "map"),
        ({"agents": [{"id": "a", "position": [0.05, 0.05]}]}, "free"),
    ],
)
def test_config_errors(change, message):
    data = _base()
    data.pop("base_dir", None)
    data.update(change)
    with pytest.raises(ConfigError, match=message):
        parse_config(data)


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{ nope")
    with pytest.raises(ConfigError, match="line 1"):
        load_config(bad)


def test_runtime_error_is_logged(monkeypatch):
    cfg = load_config("bathroom_fall")

    def boom(self):
        raise ValueError("sensor exploded")

    monkeypatch.setattr(Run, "sense", boom)
    with pytest.raises(ScenarioRuntimeError, match="sensor exploded"):
        run_scenario(cfg)


def test_batch_seeds_and_variants():
    cfg = load_config("dispatch_timing")
    logs, batch = run_batch(cfg, 3)
    seeds = [l.of_type("start")[0]["seed"] for l in logs]
    rooms = [l.of_type("dispatch")[0]["room"] for l in logs]
    assert seeds == [cfg.seed, cfg.seed + 1, cfg.seed + 2]
    assert rooms == ["bedroom", "hallway", "kitchen"]
    assert batch.runs == 3
    with pytest.raises(ConfigError):
        run_batch(cfg, 0)
