"""Recognition algorithms: breath presence, trend changes, anomalies, falls."""

from .anomaly import (
    AnomalyFeatureVector,
    AnomalyVerdict,
    DegenerateTrainingSet,
    Forest,
    classify_anomaly,
    extract_features,
    train_forest,
)
from .breath import BreathDetector, BreathDetectorState, Presence, Transition, breath_step, initial_state
from .fallen import FallenCandidate, FallenThresholds, FallOutcome, detect_fallen, fall_direction
from .fusion import PresenceEstimate, Side, fuse_presence
from .trend import ChangePoint, Direction, TrendSegment, WindowTooShort, trend_filter

__all__ = [
    "AnomalyFeatureVector",
    "AnomalyVerdict",
    "BreathDetector",
    "BreathDetectorState",
    "ChangePoint",
    "DegenerateTrainingSet",
    "Direction",
    "FallOutcome",
    "FallenCandidate",
    "FallenThresholds",
    "Forest",
    "Presence",
    "PresenceEstimate",
    "Side",
    "Transition",
    "TrendSegment",
    "WindowTooShort",
    "breath_step",
    "classify_anomaly",
    "detect_fallen",
    "extract_features",
    "fall_direction",
    "fuse_presence",
    "initial_state",
    "train_forest",
    "trend_filter",
]
