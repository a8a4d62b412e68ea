import math
import json

import numpy as np
import pytest

from homebot.detection.anomaly import (
    AnomalyFeatureVector,
    DegenerateTrainingSet,
    Forest,
    TimeBucket,
    classify_anomaly,
    extract_features,
    train_forest,
)
from homebot.detection.breath import BreathDetector, Presence, breath_step, initial_state
from homebot.detection.corpus import build_corpus, rule_baseline
from homebot.detection.fallen import FallOutcome, TrackTooShort, detect_fallen, fall_direction, quadrant
from homebot.detection.fusion import Side, fuse_presence, side_of_bearing
from homebot.detection.trend import Direction, WindowTooShort, trend_filter
from homebot.experiments import pan_side_trial
from homebot.scenario import load_config, run_scenario
from homebot.sensors import GasSample, ScanCluster, SensorEvent, shoulder_track
from homebot.world import FallDirection, SensorKind, default_map


def _samples(values, dt=0.1):
    return [GasSample(round((k + 1) * dt, 6), v) for k, v in enumerate(values)]


# --- breath presence ---------------------------------------------------------


def test_breath_constant_signal_never_flips():
    det = BreathDetector()
    for s in _samples([100.0] * 3000):
        det.update(s)
    assert det.transitions == [] and det.presence is Presence.FAR


def test_breath_jump_flips_on_that_step():
    s = initial_state(100.0, margin=0.5)
    s, tr = breath_step(s, GasSample(1.0, 100.0))
    assert tr is None
    s, tr = breath_step(s, GasSample(1.1, 105.0))
    assert tr is not None and tr.presence is Presence.CLOSE and tr.timestamp == 1.1
    assert s.upper == pytest.approx(105.5) and s.lower == pytest.approx(104.5)


def test_breath_thresholds_follow_expected_drift():
    s = initial_state(100.0, margin=1.0)
    for r in (99.5, 99.0, 98.0):
        s, tr = breath_step(s, GasSample(0.0, r))
        assert tr is None
    assert s.upper == pytest.approx(99.0) and s.lower == pytest.approx(97.0)
    s, tr = breath_step(s, GasSample(0.0, 98.5))
    assert tr is None and s.upper == pytest.approx(99.0)


def test_breath_state_validation():
    with pytest.raises(ValueError):
        initial_state(100.0, margin=0.0)


# --- trend filter ---------------------------------------------------------


def test_trend_single_exponential_one_segment():
    t = np.arange(0, 30, 0.5)
    y = 100 + 8 * np.exp(-t / 20)
    segs, cps = trend_filter(y, times=t)
    assert len(segs) == 1 and cps == []


def test_trend_constant_signal():
    segs, cps = trend_filter([100.0] * 50)
    assert len(segs) == 1 and cps == []
    assert abs(segs[0].b) < 1e-9


def test_trend_rise_then_decay():
    t1 = np.arange(0, 10, 0.5)
    rise = 100 + 10 * (1 - np.exp(-t1 / 2))
    top = rise[-1]
    t2 = np.arange(0, 30, 0.5)
    decay = 100 + (top - 100) * np.exp(-(t2 + 0.5) / 60)
    y = np.concatenate([rise, decay])
    segs, cps = trend_filter(y, times=np.arange(len(y)) * 0.5)
    assert len(cps) == 1
    assert abs(cps[0].index - len(rise)) <= 2
    assert cps[0].direction is Direction.FALLING


def test_trend_window_too_short():
    with pytest.raises(WindowTooShort):
        trend_filter([1.0, 2.0, 3.0])


# --- fusion -----------------------------------------------------------------


def test_fusion_fast_close_is_present():
    assert fuse_presence(Presence.CLOSE, [], []).present
    assert not fuse_presence(Presence.FAR, [], []).present


def test_fusion_pan_side_from_readings():
    est = fuse_presence(None, [], [(math.radians(60), 105.0), (math.radians(-60), 101.0)])
    assert est.side is Side.LEFT
    assert fuse_presence(None, [], [(0.5, 100.0), (-0.5, 100.0)], noise_floor=0.1).side is Side.UNKNOWN
    assert side_of_bearing(0.0) is Side.CENTER


def test_pan_side_monte_carlo():
    left = sum(pan_side_trial(seed) is Side.LEFT for seed in range(100))
    right = sum(pan_side_trial(seed, lateral=-0.3) is Side.RIGHT for seed in range(100))
    assert left >= 90 and right >= 90


# --- features --------------------------------------------------------------


def test_features_empty_window():
    home = default_map()
    f = extract_features([], 3600.0, home, day_offset=9 * 3600.0)
    assert not f.as_array()[:-2].any() and f.since_motion == 0.0
    assert f.bucket is TimeBucket.MORNING


def test_features_mat_dwell():
    home = default_map()
    events = [SensorEvent(round(0.1 * k, 6), "bathroom_mat", SensorKind.PRESSURE, True) for k in range(1, 3001)]
    f = extract_features(events, 300.0, home)
    assert f.pressure_dwell[f.rooms.index("bathroom")] == pytest.approx(300.0)


def test_features_midnight_exit_hallway_at_night():
    cfg = load_config("midnight_exit")
    log, _ = run_scenario(cfg)
    recs = log.of_type("sensor")
    events = [SensorEvent(r["t"], r["id"], SensorKind(r["kind"]), r["value"]) for r in recs]
    verdict = log.of_type("verdict")[0]
    f = extract_features(events, verdict["t"], default_map(), day_offset=cfg.start_time_of_day)
    assert f.bucket is TimeBucket.NIGHT
    assert f.pir_fraction[f.rooms.index("hallway")] > 0


def test_feature_vector_rejects_negative():
    with pytest.raises(ValueError):
        AnomalyFeatureVector(("a",), (-1.0,), (0.0,), (0.0,), TimeBucket.DAY, 0.0)


# --- forest ----------------------------------------------------------------


def test_forest_toy_separable():
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 200, size=(80, 2))
    data = [(x, x[0] > 100) for x in X]
    forest = train_forest(data, n_trees=10, seed=1)
    pred = [sum(forest.votes(x)) / 10 >= 0.5 for x in X]
    assert pred == [bool(lbl) for _, lbl in data]


def test_forest_rejects_single_class():
    with pytest.raises(DegenerateTrainingSet):
        train_forest([(np.zeros(2), False)] * 5)


@pytest.fixture(scope="module")
def corpus():
    home = default_map()
    return build_corpus(home, n_normal=200, n_anomaly=40, seed=3), build_corpus(home, n_normal=100, n_anomaly=20, seed=4)


def test_forest_beats_rule_baseline(corpus):
    train, test = corpus
    forest = train_forest([(f, y) for f, y, _ in train], seed=0)
    acc = np.mean([classify_anomaly(forest, f).anomalous == y for f, y, _ in test])
    base = np.mean([rule_baseline(f) == y for f, y, _ in test])
    assert acc >= base


def test_forest_deterministic_and_serialisable(corpus):
    train, test = corpus
    data = [(f, y) for f, y, _ in train]
    a, b = train_forest(data, seed=5), train_forest(data, seed=5)
    probe = [f for f, _, _ in test]
    assert [classify_anomaly(a, f) for f in probe] == [classify_anomaly(b, f) for f in probe]
    c = Forest.from_json(a.to_json())
    assert [classify_anomaly(c, f) for f in probe] == [classify_anomaly(a, f) for f in probe]
    with pytest.raises(ValueError):
        Forest.from_json(json.dumps({"format": "other", "version": 1}))


def test_bedroom_dwell_flagged_in_bedroom(corpus):
    train, _ = corpus
    forest = train_forest([(f, y) for f, y, _ in train], seed=0)
    home = default_map()
    events = [SensorEvent(round(0.1 * k, 6), "bedroom_mat", SensorKind.PRESSURE, True) for k in range(1, 3001)]
    v = classify_anomaly(forest, extract_features(events, 300.0, home, day_offset=14 * 3600.0))
    assert v.anomalous and v.room == "bedroom"


class _Stub:
    def __init__(self, label):
        self.label = label

    def predict_one(self, x):
        return self.label

    def used_features(self, x):
        return [0]


def _stub_forest(labels, rooms):
    n = 3 * len(rooms) + 2
    return Forest([_Stub(v) for v in labels], rooms, np.zeros(n), np.ones(n))


def test_classify_vote_tie_is_anomalous():
    rooms = ("a", "b")
    f = AnomalyFeatureVector(rooms, (5.0, 0.0), (0.0, 0.0), (0.0, 0.0), TimeBucket.DAY, 0.0)
    v = classify_anomaly(_stub_forest([1, 0], rooms), f)
    assert v.score == 0.5 and v.anomalous and v.room == "a"
    v = classify_anomaly(_stub_forest([0, 0, 0], rooms), f)
    assert v.score == 0.0 and not v.anomalous


# --- fallen person -----------------------------------------------------------


def _cluster(extent, temp, known=False):
    return ScanCluster(centroid=(1.0, 1.0), major_extent=extent, minor_extent=0.3, mean_temperature=temp, in_known_map=known)


def test_fallen_fixture_and_kettle():
    (c,) = detect_fallen([_cluster(1.7, 33.0)])
    assert c.size_ok and c.temperature_ok and 0 < c.confidence <= 1
    assert detect_fallen([_cluster(0.2, 60.0)]) == []
    assert detect_fallen([_cluster(1.7, 33.0, known=True)]) == []


def test_fall_direction_examples():
    assert fall_direction(shoulder_track(direction=FallDirection.FORWARD)) is FallOutcome.FORWARD
    for d, want in [(FallDirection.BACKWARD, FallOutcome.BACKWARD), (FallDirection.LEFT, FallOutcome.LEFT), (FallDirection.RIGHT, FallOutcome.RIGHT)]:
        assert fall_direction(shoulder_track(direction=d)) is want
    assert fall_direction(shoulder_track(direction=None, drop=0.3, fall_duration=3.0, duration=6.0)) is FallOutcome.NO_FALL
    diag = [(0.0, 1.4, (0.0, 0.0)), (0.5, 1.1, (0.3, 0.3)), (1.0, 0.8, (0.6, 0.6))]
    assert fall_direction(diag) is FallOutcome.FORWARD
    assert quadrant(math.radians(135)) is FallOutcome.LEFT and quadrant(math.radians(-45)) is FallOutcome.RIGHT


def test_fall_direction_noisy_tracks():
    rng = np.random.default_rng(0)
    for d in FallDirection:
        ok = sum(fall_direction(shoulder_track(direction=d, rng=rng)).value == d.value for _ in range(20))
        assert ok >= 19


def test_fall_track_too_short():
    with pytest.raises(TrackTooShort):
        fall_direction([(0.0, 1.4, (0.0, 0.0))])
