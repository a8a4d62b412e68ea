"""Body-part localization and rule-based vital-sign triage.

Percepts arrive pre-extracted: a blueness ratio for the hands, a chin pitch
and face orientation, inter-breath intervals, and a track of red-area
measurements per body region. Each check is a threshold rule; the report
combines them into a Red/Yellow/Green priority.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np


# --- body frame ----------------------------------------------------------------


class Part(str, Enum):
    CHEST = "Chest"
    LEFT_HAND = "LeftHand"
    RIGHT_HAND = "RightHand"
    CHIN = "Chin"
    MOUTH = "Mouth"
    NOSE = "Nose"


@dataclass(frozen=True)
class BodyModel:
    """Offsets in head lengths from the face center along the head-to-feet axis."""

    chin: float = 0.5
    mouth: float = 0.35
    nose: float = 0.25
    chest: float = 2.0
    hands_axial: float = 3.0
    hands_lateral: float = 1.0


@dataclass(frozen=True)
class BodyFrame:
    face_center: tuple[float, float]
    body_axis: tuple[float, float]  # unit vector from the head toward the feet
    scale: float  # head length, meters
    confidence: float = 1.0


@dataclass(frozen=True)
class BodyPartEstimate:
    part: Part
    position: tuple[float, float]
    uncertainty: float


def locate_parts(frame: BodyFrame, model: BodyModel = BodyModel()) -> list[BodyPartEstimate]:
    """Place the six first-aid parts on a person lying face up.

    For a supine body the person's left hand lies counter-clockwise of the
    head-to-feet axis when seen from above.
    """
    if frame.scale <= 0:
        raise ValueError("scale must be positive")
    axis = np.asarray(frame.body_axis, float)
    norm = np.linalg.norm(axis)
    if norm == 0 or not np.isfinite(norm):
        raise ValueError("body axis must be a non-zero vector")
    axis = axis / norm
    left = np.array([-axis[1], axis[0]])
    c = np.asarray(frame.face_center, float)
    s = frame.scale
    unc = s * (1.5 - frame.confidence)

    def at(axial, lateral=0.0):
        p = c + s * (axial * axis + lateral * left)
        return (float(p[0]), float(p[1]))

    return [
        BodyPartEstimate(Part.CHEST, at(model.chest), unc),
        BodyPartEstimate(Part.LEFT_HAND, at(model.hands_axial, model.hands_lateral), unc),
        BodyPartEstimate(Part.RIGHT_HAND, at(model.hands_axial, -model.hands_lateral), unc),
        BodyPartEstimate(Part.CHIN, at(model.chin), unc),
        BodyPartEstimate(Part.MOUTH, at(model.mouth), unc),
        BodyPartEstimate(Part.NOSE, at(model.nose), unc),
    ]


# Ground-truth proportions of a lying body as fractions of standing height.
SKELETON = {
    Part.CHEST: (0.26, 0.0),
    Part.LEFT_HAND: (0.40, 0.13),
    Part.RIGHT_HAND: (0.40, -0.13),
    Part.CHIN: (0.06, 0.0),
    Part.MOUTH: (0.045, 0.0),
    Part.NOSE: (0.03, 0.0),
}


def skeleton(face_center, body_axis, body_height: float) -> dict[Part, tuple[float, float]]:
    """True part positions for a supine body (simulation ground truth)."""
    axis = np.asarray(body_axis, float)
    axis = axis / np.linalg.norm(axis)
    left = np.array([-axis[1], axis[0]])
    c = np.asarray(face_center, float)
    out = {}
    for part, (a, lat) in SKELETON.items():
        p = c + body_height * (a * axis + lat * left)
        out[part] = (float(p[0]), float(p[1]))
    return out


def frame_from_agent(agent, rng: np.random.Generator | None = None, face_sigma=0.015, angle_sigma_deg=2.0, scale_rel=0.03):
    """BodyFrame as perceived from a fallen agent, with optional percept noise."""
    from .sensors import fallen_face_frame

    face, axis, head = fallen_face_frame(agent)
    face, axis = np.asarray(face, float), np.asarray(axis, float)
    conf = 1.0
    if rng is not None:
        face = face + rng.normal(0.0, face_sigma, 2)
        ang = math.radians(float(rng.normal(0.0, angle_sigma_deg)))
        ca, sa = math.cos(ang), math.sin(ang)
        axis = np.array([ca * axis[0] - sa * axis[1], sa * axis[0] + ca * axis[1]])
        head = head * (1.0 + float(rng.normal(0.0, scale_rel)))
        conf = 0.9
    return BodyFrame(tuple(map(float, face)), tuple(map(float, axis)), float(head), conf)


# --- verdicts ----------------------------------------------------------------------


class Circulation(str, Enum):
    NORMAL = "Normal"
    CYANOTIC = "Cyanotic"


class Airway(str, Enum):
    OPEN = "Open"
    OBSTRUCTED_RISK = "ObstructedRisk"


class Orientation(str, Enum):
    FRONT = "Front"
    SIDE = "Side"
    DOWN = "Down"


class Breathing(str, Enum):
    NORMAL = "Normal"
    FAST = "Fast"
    SLOW = "Slow"
    AGONAL = "Agonal"
    ABSENT = "Absent"


class Region(str, Enum):
    HEAD = "Head"
    BODY = "Body"
    LEFT_ARM = "LeftArm"
    RIGHT_ARM = "RightArm"
    LEFT_LEG = "LeftLeg"
    RIGHT_LEG = "RightLeg"
    NONE = "None"


class Severity(str, Enum):
    MASSIVE = "Massive"
    SLIGHT = "Slight"
    NONE = "None"


class Priority(str, Enum):
    GREEN = "Green"
    YELLOW = "Yellow"
    RED = "Red"


PRIORITY_RANK = {Priority.GREEN: 0, Priority.YELLOW: 1, Priority.RED: 2}


@dataclass(frozen=True)
class TriageConfig:
    blueness: float = 0.3
    pitch_open: float = 10.0  # degrees, chin up
    min_window: float = 15.0  # seconds
    fast_rate: float = 25.0  # breaths per minute
    slow_rate: float = 8.0
    agonal_cv: float = 0.6
    rate_hi: float = 5e-4  # m^2/s (5 cm^2/s)
    rate_min: float = 5e-5  # m^2/s; slower growth is treated as measurement noise
    area_min: float = 1e-4  # m^2


class WindowTooShort(ValueError):
    pass


def assess_cyanosis(blueness: float, cfg: TriageConfig = TriageConfig()) -> Circulation:
    if not 0.0 <= blueness <= 1.0:
        raise ValueError("blueness must be in [0, 1]")
    return Circulation.CYANOTIC if blueness >= cfg.blueness else Circulation.NORMAL


def assess_airway(chin_pitch: float, orientation, cfg: TriageConfig = TriageConfig()) -> Airway:
    if not -90.0 <= chin_pitch <= 90.0:
        raise ValueError("chin pitch must be in [-90, 90] degrees")
    orientation = Orientation(orientation)
    if chin_pitch >= cfg.pitch_open and orientation is not Orientation.DOWN:
        return Airway.OPEN
    return Airway.OBSTRUCTED_RISK


def breathing_stats(intervals) -> tuple[float, float]:
    """(breaths per minute, coefficient of variation) of inter-breath intervals."""
    iv = np.asarray(intervals, float)
    mean = float(iv.mean())
    cv = float(iv.std() / mean) if len(iv) > 1 and mean > 0 else 0.0
    return 60.0 / mean, cv


def assess_breathing(intervals, window: float, cv: float | None = None, cfg: TriageConfig = TriageConfig()) -> Breathing:
    """Classify breathing from the intervals seen in an observation window.

    ``cv`` overrides the regularity computed from the intervals.
    """
    if window < cfg.min_window:
        raise WindowTooShort(f"observation window {window} s is shorter than {cfg.min_window} s")
    if len(intervals) == 0:
        return Breathing.ABSENT
    rate, own_cv = breathing_stats(intervals)
    cv = own_cv if cv is None else cv
    if cv > cfg.agonal_cv and rate < cfg.slow_rate:
        return Breathing.AGONAL
    if rate > cfg.fast_rate:
        return Breathing.FAST
    if rate < cfg.slow_rate:
        return Breathing.SLOW
    return Breathing.NORMAL


def assess_bleeding(red_track, cfg: TriageConfig = TriageConfig()) -> tuple[Region, Severity]:
    """Location is the region with the largest final red area; severity comes
    from the least-squares growth rate of that region's area."""
    if not red_track:
        raise ValueError("red track must not be empty")
    by_region: dict[str, list[tuple[float, float]]] = {}
    for t, region, area in red_track:
        by_region.setdefault(Region(region).value, []).append((float(t), float(area)))
    final = {r: max(pts)[1] for r, pts in by_region.items()}
    region, area = max(final.items(), key=lambda kv: (kv[1], -list(Region).index(Region(kv[0]))))
    if area < cfg.area_min:
        return Region.NONE, Severity.NONE
    pts = sorted(by_region[region])
    t = np.array([p[0] for p in pts])
    a = np.array([p[1] for p in pts])
    rate = 0.0
    if len(pts) > 1 and np.ptp(t) > 0:
        rate = float(np.polyfit(t, a, 1)[0])
    if rate >= cfg.rate_hi:
        sev = Severity.MASSIVE
    elif rate > cfg.rate_min:
        sev = Severity.SLIGHT
    else:
        sev = Severity.NONE
    return Region(region), sev


# --- report --------------------------------------------------------------------------


@dataclass(frozen=True)
class VitalsReport:
    circulation: Circulation
    airway: Airway
    breathing: Breathing
    bleeding: tuple[Region, Severity]
    priority: Priority

    def to_record(self) -> dict:
        return {
            "circulation": self.circulation.value,
            "airway": self.airway.value,
            "breathing": self.breathing.value,
            "bleeding": {"location": self.bleeding[0].value, "severity": self.bleeding[1].value},
            "priority": self.priority.value,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)

    @classmethod
    def from_record(cls, d: dict) -> VitalsReport:
        return cls(
            Circulation(d["circulation"]),
            Airway(d["airway"]),
            Breathing(d["breathing"]),
            (Region(d["bleeding"]["location"]), Severity(d["bleeding"]["severity"])),
            Priority(d["priority"]),
        )


def priority_of(circulation, airway, breathing, bleeding) -> Priority:
    _, severity = bleeding
    if (
        breathing in (Breathing.ABSENT, Breathing.AGONAL)
        or severity is Severity.MASSIVE
        or (circulation is Circulation.CYANOTIC and airway is Airway.OBSTRUCTED_RISK)
    ):
        return Priority.RED
    if (
        circulation is Circulation.CYANOTIC
        or airway is Airway.OBSTRUCTED_RISK
        or breathing is not Breathing.NORMAL
        or severity is Severity.SLIGHT
    ):
        return Priority.YELLOW
    return Priority.GREEN


def triage_report(circulation, airway, breathing, bleeding) -> VitalsReport:
    if circulation is None or airway is None or breathing is None or bleeding is None:
        raise ValueError("all four verdicts are required")
    circulation, airway, breathing = Circulation(circulation), Airway(airway), Breathing(breathing)
    bleeding = (Region(bleeding[0]), Severity(bleeding[1]))
    return VitalsReport(circulation, airway, breathing, bleeding, priority_of(circulation, airway, breathing, bleeding))


# --- fixtures -------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseModel:
    """Percept corruption applied to the fixture sets.

    cyanosis: low-resolution hand crops blur the blueness ratio.
    airway: angled faces jitter the pitch and sometimes misread the orientation.
    breathing: interval jitter plus missed and spurious breath detections.
    bleeding: per-sample area noise and red spill into a neighbouring region.
    """

    blueness_sigma: float = 0.2
    pitch_sigma: float = 12.0
    orientation_flip: float = 0.1
    interval_jitter: float = 0.25
    miss_breath: float = 0.06
    extra_breath: float = 0.04
    area_rel_sigma: float = 0.03
    area_abs_sigma: float = 5e-5
    spill_max: float = 0.8


DEFAULT_NOISE = NoiseModel()
NEIGHBOURS = {
    Region.HEAD: Region.BODY,
    Region.BODY: Region.LEFT_ARM,
    Region.LEFT_ARM: Region.BODY,
    Region.RIGHT_ARM: Region.BODY,
    Region.LEFT_LEG: Region.RIGHT_LEG,
    Region.RIGHT_LEG: Region.LEFT_LEG,
}
BLEED_REGIONS = [r for r in Region if r is not Region.NONE]


def _cyanosis_set(rng, noise):
    rows = []
    for rep in range(4):
        for k in range(10):
            cyan = k < 6  # six blued regions, four clean
            b = float(rng.uniform(0.36, 0.7) if cyan else rng.uniform(0.02, 0.24))
            if noise:
                b = float(np.clip(b + rng.normal(0.0, noise.blueness_sigma), 0.0, 1.0))
            label = Circulation.CYANOTIC if cyan else Circulation.NORMAL
            rows.append({"id": f"cy{rep * 10 + k:02d}", "blueness": round(b, 6), "label": label.value})
    return rows


def _airway_set(rng, noise):
    rows = []
    combos = [(up, o) for up in (True, False) for o in Orientation]
    for i in range(40):
        up, orient = combos[i % len(combos)]
        pitch = float(rng.uniform(18, 45) if up else rng.uniform(-40, 2))
        label = Airway.OPEN if up and orient is not Orientation.DOWN else Airway.OBSTRUCTED_RISK
        seen = orient
        if noise:
            pitch = float(np.clip(pitch + rng.normal(0.0, noise.pitch_sigma), -90, 90))
            if rng.random() < noise.orientation_flip:
                seen = list(Orientation)[(list(Orientation).index(orient) + int(rng.integers(1, 3))) % 3]
        rows.append({"id": f"aw{i:02d}", "pitch": round(pitch, 6), "orientation": seen.value, "label": label.value})
    return rows


def _breath_pattern(label: Breathing, rng):
    if label is Breathing.NORMAL:
        mean, k, window = rng.uniform(3.4, 5.0), rng.uniform(0.0, 0.12), 30.0
    elif label is Breathing.FAST:
        mean, k, window = rng.uniform(1.5, 2.0), rng.uniform(0.0, 0.15), 20.0
    elif label is Breathing.SLOW:
        mean, k, window = rng.uniform(8.8, 12.0), rng.uniform(0.05, 0.25), 60.0
    else:
        mean, k, window = rng.uniform(9.5, 14.0), rng.uniform(0.8, 0.95), 60.0
    n = max(4, int(window // mean))
    n += n % 2  # alternating short/long pairs give a CV of exactly k
    intervals = [mean * (1 - k) if i % 2 == 0 else mean * (1 + k) for i in range(n)]
    return intervals, max(window, sum(intervals))


def _breathing_set(rng, noise):
    labels = [Breathing.NORMAL] * 10 + [Breathing.FAST, Breathing.SLOW, Breathing.AGONAL] * 10
    rows = []
    for i, label in enumerate(labels):
        iv, window = _breath_pattern(label, rng)
        if noise:
            iv = [x * math.exp(rng.normal(0.0, noise.interval_jitter)) for x in iv]
            out = []
            for x in iv:
                if out and rng.random() < noise.miss_breath:
                    out[-1] += x
                elif rng.random() < noise.extra_breath:
                    f = float(rng.uniform(0.3, 0.7))
                    out += [x * f, x * (1 - f)]
                else:
                    out.append(x)
            iv = out
        rows.append(
            {
                "id": f"br{i:02d}",
                "window": round(window, 6),
                "intervals": " ".join(repr(round(x, 6)) for x in iv),
                "label": label.value,
            }
        )
    return rows


def _bleed_track(region: Region, severity: Severity, rng, noise):
    a0 = float(rng.uniform(3e-3, 6e-3))
    rate = {
        Severity.MASSIVE: rng.uniform(6.5e-4, 1.2e-3),
        Severity.SLIGHT: rng.uniform(1.5e-4, 3.5e-4),
        Severity.NONE: 0.0,
    }[severity]
    spill = float(rng.uniform(0.2, noise.spill_max)) if noise else 0.0
    track = []
    for k in range(11):
        t = 0.5 * k
        area = a0 + rate * t
        seen = area
        if noise:
            seen = max(0.0, area * (1 + rng.normal(0.0, noise.area_rel_sigma)) + rng.normal(0.0, noise.area_abs_sigma))
        track.append((t, region.value, seen))
        if noise:
            other = max(0.0, spill * area * (1 + rng.normal(0.0, noise.area_rel_sigma)))
            track.append((t, NEIGHBOURS[region].value, other))
    return track


def _bleeding_sets(rng, noise):
    loc, rate = [], []
    for i in range(36):
        region = BLEED_REGIONS[i // 6]
        sev = [Severity.MASSIVE, Severity.SLIGHT][i % 2]
        loc.append({"id": f"bl{i:02d}", "region": region.value, "severity": sev.value, "track": _bleed_track(region, sev, rng, noise)})
    for i in range(18):
        region = BLEED_REGIONS[i % 6]
        sev = [Severity.MASSIVE, Severity.SLIGHT, Severity.NONE][i // 6]
        rate.append({"id": f"br{i:02d}", "region": region.value, "severity": sev.value, "track": _bleed_track(region, sev, rng, noise)})
    return loc, rate


def generate_fixtures(noise: NoiseModel | None = DEFAULT_NOISE, seed: int = 0) -> dict[str, list[dict]]:
    """The labelled fixture sets: cyanosis 40, airway 40, breathing 40,
    bleeding location 36 and bleeding rate 18 samples."""
    rng = np.random.default_rng(seed)
    loc, rate = _bleeding_sets(rng, noise)
    return {
        "cyanosis": _cyanosis_set(rng, noise),
        "airway": _airway_set(rng, noise),
        "breathing": _breathing_set(rng, noise),
        "bleeding_location": loc,
        "bleeding_rate": rate,
    }


def evaluate_fixtures(fixtures, cfg: TriageConfig = TriageConfig()) -> dict[str, float]:
    """Accuracy per classifier plus the pooled ``overall`` accuracy."""
    hits: dict[str, list[bool]] = {}
    hits["cyanosis"] = [assess_cyanosis(r["blueness"], cfg).value == r["label"] for r in fixtures["cyanosis"]]
    hits["airway"] = [assess_airway(r["pitch"], r["orientation"], cfg).value == r["label"] for r in fixtures["airway"]]
    hits["breathing"] = [
        assess_breathing(_intervals(r["intervals"]), r["window"], cfg=cfg).value == r["label"] for r in fixtures["breathing"]
    ]
    hits["bleeding_location"] = [assess_bleeding(r["track"], cfg)[0].value == r["region"] for r in fixtures["bleeding_location"]]
    hits["bleeding_rate"] = [assess_bleeding(r["track"], cfg)[1].value == r["severity"] for r in fixtures["bleeding_rate"]]
    out = {k: sum(v) / len(v) for k, v in hits.items()}
    pooled = [h for v in hits.values() for h in v]
    out["overall"] = sum(pooled) / len(pooled)
    return out


def _intervals(text) -> list[float]:
    if isinstance(text, str):
        return [float(x) for x in text.split()]
    return list(text)


FIXTURE_COLUMNS = {
    "cyanosis": ["id", "blueness", "label"],
    "airway": ["id", "pitch", "orientation", "label"],
    "breathing": ["id", "window", "intervals", "label"],
    "bleeding_location": ["id", "region", "severity", "track"],
    "bleeding_rate": ["id", "region", "severity", "track"],
}


def fixture_csv(name: str, rows) -> str:
    buf = io.StringIO()
    out = csv.DictWriter(buf, FIXTURE_COLUMNS[name], lineterminator="\n")
    out.writeheader()
    for r in rows:
        r = dict(r)
        if "track" in r:
            r["track"] = json.dumps([[t, reg, round(a, 9)] for t, reg, a in r["track"]])
        out.writerow(r)
    return buf.getvalue()


def read_fixture_csv(name: str, text: str) -> list[dict]:
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        if name == "cyanosis":
            r["blueness"] = float(r["blueness"])
        elif name == "airway":
            r["pitch"] = float(r["pitch"])
        elif name == "breathing":
            r["window"] = float(r["window"])
        else:
            r["track"] = [tuple(x) for x in json.loads(r["track"])]
        rows.append(r)
    return rows


def load_fixtures(directory=None) -> dict[str, list[dict]]:
    """Read the bundled (noisy) fixture CSVs, or those in ``directory``."""
    from pathlib import Path

    base = Path(directory) if directory else Path(__file__).parent / "data" / "fixtures"
    return {name: read_fixture_csv(name, (base / f"{name}.csv").read_text()) for name in FIXTURE_COLUMNS}


def report_record(report: VitalsReport) -> dict:
    return asdict(report)


def percepts_from_vitals(vitals, rng: np.random.Generator, noise: NoiseModel | None = None) -> dict:
    """Simulated hand, chin and bleeding percepts for a ground-truth VitalsProfile.

    Values are drawn from the same class bands as the fixture sets; breathing
    is not covered because it is observed from the agent's actual exhalations.
    """
    cyan = Circulation(vitals.circulation) is Circulation.CYANOTIC
    blue = float(rng.uniform(0.36, 0.7) if cyan else rng.uniform(0.02, 0.24))
    open_airway = Airway(vitals.airway) is Airway.OPEN
    pitch = float(rng.uniform(18, 45) if open_airway else rng.uniform(-40, 2))
    orient = Orientation.FRONT if open_airway else Orientation.SIDE
    if noise:
        blue = float(np.clip(blue + rng.normal(0.0, noise.blueness_sigma), 0.0, 1.0))
        pitch = float(np.clip(pitch + rng.normal(0.0, noise.pitch_sigma), -90, 90))
    region, severity = Region(vitals.bleeding_location), Severity(vitals.bleeding_severity)
    if region is Region.NONE:
        track = [(0.5 * k, Region.BODY.value, 0.0) for k in range(11)]
    else:
        track = _bleed_track(region, severity, rng, noise)
    return {"blueness": blue, "pitch": pitch, "orientation": orient.value, "red_track": track}
