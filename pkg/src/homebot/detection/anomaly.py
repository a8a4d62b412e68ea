"""Environmental anomaly detection: feature windows and a random forest."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from ..world import HomeMap, SensorKind

MODEL_VERSION = 1
DEFAULT_WINDOW = 300.0


class TimeBucket(IntEnum):
    NIGHT = 0
    MORNING = 1
    DAY = 2
    EVENING = 3


def time_bucket(time_of_day: float) -> TimeBucket:
    hour = (time_of_day % 86400.0) / 3600.0
    if hour < 6:
        return TimeBucket.NIGHT
    if hour < 12:
        return TimeBucket.MORNING
    if hour < 18:
        return TimeBucket.DAY
    return TimeBucket.EVENING


PER_ROOM = ("pressure_dwell", "contact_opens", "pir_fraction")


@dataclass(frozen=True)
class AnomalyFeatureVector:
    rooms: tuple[str, ...]
    pressure_dwell: tuple[float, ...]
    contact_opens: tuple[float, ...]
    pir_fraction: tuple[float, ...]
    bucket: TimeBucket
    since_motion: float

    def __post_init__(self):
        for v in self.as_array():
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"feature values must be finite and >= 0, got {v}")

    def as_array(self) -> np.ndarray:
        return np.array(
            [*self.pressure_dwell, *self.contact_opens, *self.pir_fraction, float(self.bucket), self.since_motion],
            dtype=float,
        )

    @staticmethod
    def names(rooms) -> list[str]:
        out = []
        for feat in PER_ROOM:
            out += [f"{feat}:{r}" for r in rooms]
        return out + ["time_bucket", "since_motion"]


def feature_room(rooms, index: int) -> str | None:
    """Room owning feature column ``index`` (None for the global columns)."""
    n = len(rooms)
    return rooms[index % n] if index < len(PER_ROOM) * n else None


def extract_features(
    events,
    clock: float,
    home: HomeMap,
    window: float = DEFAULT_WINDOW,
    dt: float = 0.1,
    day_offset: float = 0.0,
) -> AnomalyFeatureVector:
    """Aggregate the sensor events of the trailing ``window`` seconds.

    Pressure dwell counts occupied ticks times ``dt``; PIR activity is the
    fraction of ticks in the window with motion. ``day_offset`` is the
    time of day (seconds after midnight) at clock zero.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    rooms = tuple(r.name for r in home.rooms)
    index = {r: i for i, r in enumerate(rooms)}
    sensor_room = {s.sensor_id: home.sensor_room(s) for s in home.sensors}
    n = len(rooms)
    dwell_ticks = [set() for _ in range(n)]
    pir_ticks = [set() for _ in range(n)]
    opens = [0.0] * n
    start = clock - window
    last_motion = None
    any_event = False
    for ev in events:
        if ev.timestamp <= start - 1e-9 or ev.timestamp > clock + 1e-9:
            continue
        any_event = True
        room = sensor_room.get(ev.sensor_id)
        if room is None:
            continue
        i = index[room]
        tick = int(round(ev.timestamp / dt))
        if ev.kind is SensorKind.PRESSURE and ev.value:
            dwell_ticks[i].add(tick)
        elif ev.kind is SensorKind.PIR and ev.value:
            pir_ticks[i].add(tick)
            last_motion = ev.timestamp if last_motion is None else max(last_motion, ev.timestamp)
        elif ev.kind is SensorKind.CONTACT and ev.value:
            opens[i] += 1
    ticks_in_window = window / dt
    if not any_event:
        since = 0.0
    elif last_motion is None:
        since = float(window)
    else:
        since = max(0.0, clock - last_motion)
    return AnomalyFeatureVector(
        rooms=rooms,
        pressure_dwell=tuple(round(len(s) * dt, 9) for s in dwell_ticks),
        contact_opens=tuple(opens),
        pir_fraction=tuple(min(1.0, len(s) / ticks_in_window) for s in pir_ticks),
        bucket=time_bucket(day_offset + clock),
        since_motion=since,
    )


# --- random forest -----------------------------------------------------------


class DegenerateTrainingSet(ValueError):
    pass


class DecisionTree:
    """CART classification tree stored as flat arrays; labels are 0/1."""

    def __init__(self, max_depth: int = 6, n_feats: int | None = None, min_leaf: int = 1):
        self.max_depth = max_depth
        self.n_feats = n_feats
        self.min_leaf = min_leaf
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[int] = []  # leaf label, -1 for internal nodes

    def fit(self, X, y, rng: np.random.Generator):
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []
        self._grow(np.asarray(X, float), np.asarray(y, int), 0, rng)
        return self

    def _leaf(self, y) -> int:
        counts = np.bincount(y, minlength=2)
        label = 1 if counts[1] >= counts[0] else 0
        return self._add(-1, 0.0, label)

    def _add(self, feat, thr, label) -> int:
        self.feature.append(feat)
        self.threshold.append(thr)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(label)
        return len(self.feature) - 1

    def _grow(self, X, y, depth, rng) -> int:
        if depth >= self.max_depth or len(np.unique(y)) < 2 or len(y) < 2 * self.min_leaf:
            return self._leaf(y)
        n_features = X.shape[1]
        k = self.n_feats or max(1, int(math.sqrt(n_features)))
        feats = np.sort(rng.choice(n_features, size=min(k, n_features), replace=False))
        split = self._best_split(X, y, feats)
        if split is None:
            return self._leaf(y)
        feat, thr = split
        node = self._add(feat, thr, -1)
        mask = X[:, feat] <= thr
        self.left[node] = self._grow(X[mask], y[mask], depth + 1, rng)
        self.right[node] = self._grow(X[~mask], y[~mask], depth + 1, rng)
        return node

    def _best_split(self, X, y, feats):
        n = len(y)
        pos = y.sum()
        parent = 1.0 - (pos / n) ** 2 - ((n - pos) / n) ** 2
        best = None
        nl = np.arange(1, n, dtype=float)
        lo, hi = self.min_leaf - 1, n - self.min_leaf
        for f in feats:
            order = np.argsort(X[:, f], kind="stable")
            xs, ys = X[order, f], y[order]
            l1 = np.cumsum(ys)[:-1].astype(float)
            r1 = pos - l1
            nr = n - nl
            gl = 1.0 - (l1 / nl) ** 2 - ((nl - l1) / nl) ** 2
            gr = 1.0 - (r1 / nr) ** 2 - ((nr - r1) / nr) ** 2
            gain = parent - (nl * gl + nr * gr) / n
            valid = xs[:-1] != xs[1:]
            valid[:lo] = False
            valid[hi:] = False
            gain = np.where(valid, gain, -np.inf)
            i = int(np.argmax(gain))
            if gain[i] > 1e-12 and (best is None or gain[i] > best[0]):
                best = (float(gain[i]), int(f), float((xs[i] + xs[i + 1]) / 2))
        return None if best is None else best[1:]

    def predict_one(self, x) -> int:
        node = 0
        while self.value[node] < 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return self.value[node]

    def used_features(self, x) -> list[int]:
        node, path = 0, []
        while self.value[node] < 0:
            path.append(self.feature[node])
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return path

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "value": self.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> DecisionTree:
        t = cls()
        t.feature, t.threshold = list(d["feature"]), [float(v) for v in d["threshold"]]
        t.left, t.right, t.value = list(d["left"]), list(d["right"]), list(d["value"])
        return t


@dataclass
class Forest:
    trees: list[DecisionTree]
    rooms: tuple[str, ...]
    normal_mean: np.ndarray
    normal_std: np.ndarray
    seed: int = 0

    def votes(self, x) -> list[int]:
        x = np.asarray(x, float)
        return [t.predict_one(x) for t in self.trees]

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": "homebot.forest",
                "version": MODEL_VERSION,
                "seed": self.seed,
                "rooms": list(self.rooms),
                "normal_mean": self.normal_mean.tolist(),
                "normal_std": self.normal_std.tolist(),
                "trees": [t.to_dict() for t in self.trees],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> Forest:
        d = json.loads(text)
        if d.get("format") != "homebot.forest" or d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported forest model (format={d.get('format')}, version={d.get('version')})")
        return cls(
            trees=[DecisionTree.from_dict(t) for t in d["trees"]],
            rooms=tuple(d["rooms"]),
            normal_mean=np.array(d["normal_mean"], float),
            normal_std=np.array(d["normal_std"], float),
            seed=int(d["seed"]),
        )


def _as_matrix(samples):
    X = np.array([f.as_array() if hasattr(f, "as_array") else np.asarray(f, float) for f in samples], float)
    return X


def train_forest(labeled, n_trees: int = 25, max_depth: int = 6, seed: int = 0, n_feats: int | None = None) -> Forest:
    """Bagged CART trees on ``(features, label)`` pairs; label True/1 means anomalous."""
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    feats = [f for f, _ in labeled]
    y = np.array([int(bool(lbl)) for _, lbl in labeled], int)
    if len(np.unique(y)) < 2:
        raise DegenerateTrainingSet("training set must contain both normal and anomalous samples")
    X = _as_matrix(feats)
    rooms = feats[0].rooms if hasattr(feats[0], "rooms") else ()
    rng = np.random.default_rng(seed)
    trees = []
    n = len(y)
    for _ in range(n_trees):
        idx = rng.integers(0, n, size=n)
        tree = DecisionTree(max_depth=max_depth, n_feats=n_feats)
        tree.fit(X[idx], y[idx], rng)
        trees.append(tree)
    normal = X[y == 0]
    return Forest(trees, tuple(rooms), normal.mean(axis=0), normal.std(axis=0), seed)


@dataclass(frozen=True)
class AnomalyVerdict:
    anomalous: bool
    room: str | None
    score: float


def classify_anomaly(forest: Forest, f: AnomalyFeatureVector) -> AnomalyVerdict:
    """Vote fraction of anomalous trees; a 0.5 tie counts as anomalous.

    The room is the one whose features stand out most from normal training
    windows, counting only features the anomalous-voting trees consulted.
    """
    x = f.as_array()
    votes = forest.votes(x)
    score = sum(votes) / len(votes)
    anomalous = score >= 0.5
    rooms = f.rooms or forest.rooms
    z = np.abs(x - forest.normal_mean) / (forest.normal_std + 1e-6)
    consulted = set()
    for tree, v in zip(forest.trees, votes):
        if v == 1:
            consulted.update(tree.used_features(x))
    candidates = [i for i in consulted if feature_room(rooms, i) is not None] or [
        i for i in range(len(PER_ROOM) * len(rooms))
    ]
    best = max(candidates, key=lambda i: (z[i], -i)) if candidates else None
    room = feature_room(rooms, best) if best is not None else None
    return AnomalyVerdict(anomalous, room, score)
