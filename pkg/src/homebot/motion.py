"""Playful reaching trajectories and six-line alphanumeric glyphs.

Trajectories are optimized by metric-preconditioned gradient descent on a
smoothness term plus a pull toward a half-sine "playful" offset of the
straight reach. Glyphs come from a fixed table of segments on a 3x3 node
grid inside a unit cell.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solveh_banded


class ObjectiveNotFinite(ArithmeticError):
    pass


class UnsupportedCharacter(ValueError):
    pass


@dataclass(frozen=True)
class Trajectory:
    waypoints: np.ndarray  # (N, d), d in {2, 3}
    dt_waypoint: float = 0.1

    def __post_init__(self):
        w = np.array(self.waypoints, dtype=float)
        if w.ndim != 2 or w.shape[1] not in (2, 3):
            raise ValueError("waypoints must be an (N, 2) or (N, 3) array")
        if len(w) < 3:
            raise ValueError("a trajectory needs at least 3 waypoints")
        if self.dt_waypoint <= 0:
            raise ValueError("dt_waypoint must be positive")
        w.setflags(write=False)
        object.__setattr__(self, "waypoints", w)

    @property
    def n(self) -> int:
        return len(self.waypoints)

    @property
    def start(self) -> np.ndarray:
        return self.waypoints[0]

    @property
    def goal(self) -> np.ndarray:
        return self.waypoints[-1]

    def with_waypoints(self, w) -> Trajectory:
        return Trajectory(w, self.dt_waypoint)


@dataclass(frozen=True)
class PlayfulParams:
    amplitude: float = 0.1
    lam: float = 1.0
    eta: float = 0.5
    max_iter: int = 20000
    bounds: tuple | None = (-1.0, 1.0)  # (lo, hi), scalars or per-axis
    velocity_limit: float = 0.5
    side: int = 1  # which side of the reach the curve bulges toward
    tol_abs: float = 1e-13
    tol_rel: float = 1e-15
    step_tol: float = 1e-10  # largest waypoint move still counted as converged

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.eta <= 0:
            raise ValueError("eta must be > 0")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")
        if self.side not in (1, -1):
            raise ValueError("side must be +1 or -1")


def seed_straight(start, goal, n: int, dt_waypoint: float = 0.1) -> Trajectory:
    if n < 3:
        raise ValueError("n must be >= 3")
    start, goal = np.asarray(start, float), np.asarray(goal, float)
    s = np.linspace(0.0, 1.0, n)[:, None]
    w = start + s * (goal - start)
    w[0], w[-1] = start, goal
    return Trajectory(w, dt_waypoint)


def _normal(direction: np.ndarray) -> np.ndarray | None:
    """Unit normal in the horizontal plane, rotated +90 degrees from the reach."""
    dx, dy = float(direction[0]), float(direction[1])
    norm = math.hypot(dx, dy)
    if len(direction) == 2:
        if norm == 0:
            return None
        return np.array([-dy, dx]) / norm
    if np.linalg.norm(direction) == 0:
        return None
    if norm == 0:  # vertical reach: bulge along x
        return np.array([1.0, 0.0, 0.0])
    return np.array([-dy, dx, 0.0]) / norm


def playful_offsets(traj: Trajectory, amplitude: float, side: int = 1):
    """Targets ``c_i``: the straight seed pushed sideways by a half sine.

    Returns ``(targets, degenerate)``; when start equals goal there is no
    normal and the straight targets come back with ``degenerate=True``.
    """
    n = traj.n
    base = seed_straight(traj.start, traj.goal, n).waypoints.copy()
    nhat = _normal(traj.goal - traj.start)
    if nhat is None:
        return base, True
    bump = amplitude * np.sin(np.pi * np.arange(n) / (n - 1))
    c = base + side * bump[:, None] * nhat
    c[0], c[-1] = traj.start, traj.goal
    return c, False


def objective(w: np.ndarray, targets: np.ndarray, lam: float) -> float:
    w = np.asarray(w, float)
    with np.errstate(over="ignore", invalid="ignore"):  # callers check isfinite
        return float(np.sum(np.diff(w, axis=0) ** 2) + lam * np.sum((w - targets) ** 2))


def gradient(w: np.ndarray, targets: np.ndarray, lam: float) -> np.ndarray:
    """dU/dw for the interior waypoints, shape (N-2, d)."""
    w = np.asarray(w, float)
    smooth = 2.0 * (2.0 * w[1:-1] - w[:-2] - w[2:])
    return smooth + 2.0 * lam * (w[1:-1] - targets[1:-1])


def _metric_banded(m: int) -> np.ndarray:
    """Upper banded storage of tridiag(-1, 2, -1) of size m."""
    ab = np.zeros((2, m))
    ab[0, 1:] = -1.0
    ab[1, :] = 2.0
    return ab


def _precondition(ab: np.ndarray, g: np.ndarray) -> np.ndarray:
    if ab.shape[1] == 1:  # a single interior waypoint: the metric is just 2
        return g / 2.0
    return solveh_banded(ab, g)


def _clamp(w: np.ndarray, bounds) -> np.ndarray:
    if bounds is None:
        return w
    lo, hi = bounds
    return np.clip(w, lo, hi)


@dataclass
class OptimizeReport:
    iterations: int = 0
    accepted: int = 0
    converged: bool = False
    stop_reason: str = ""
    final_eta: float = 0.0
    history: list[float] = field(default_factory=list)  # U at every accepted iterate


def optimize(traj: Trajectory, p: PlayfulParams = PlayfulParams()):
    """Minimize smoothness + lam * playfulness with endpoints pinned.

    The step is preconditioned by the second-difference metric over the
    interior waypoints. A step that would raise U (after clamping to the
    workspace bounds) is retried with half the step size; the reduced
    step size is kept afterwards. Returns ``(trajectory, report)``.
    """
    targets, _ = playful_offsets(traj, p.amplitude, p.side)
    w = traj.waypoints.copy()
    ab = _metric_banded(traj.n - 2)
    eta = p.eta
    u = objective(w, targets, p.lam)
    if not math.isfinite(u):
        raise ObjectiveNotFinite(f"objective is {u} at the initial trajectory")
    report = OptimizeReport(history=[u])
    while report.iterations < p.max_iter:
        report.iterations += 1
        direction = _precondition(ab, gradient(w, targets, p.lam))
        cand = w.copy()
        cand[1:-1] = _clamp(w[1:-1] - eta * direction, p.bounds)
        u_new = objective(cand, targets, p.lam)
        if not math.isfinite(u_new):
            raise ObjectiveNotFinite(f"objective became {u_new} at iteration {report.iterations}")
        if u_new > u:
            eta *= 0.5
            if eta < 1e-300:
                report.stop_reason = "step underflow"
                break
            continue
        delta = u - u_new
        moved = float(np.max(np.abs(cand - w)))
        w, u = cand, u_new
        report.accepted += 1
        report.history.append(u)
        if delta < p.tol_abs + p.tol_rel * abs(u) and moved < p.step_tol:
            report.converged = True
            report.stop_reason = "converged"
            break
    else:
        report.stop_reason = "max_iter"
    report.final_eta = eta
    return traj.with_waypoints(w), report


def closed_form(traj: Trajectory, p: PlayfulParams) -> np.ndarray:
    """Unconstrained minimizer: (K + lam I) x = b + lam c on the interior."""
    targets, _ = playful_offsets(traj, p.amplitude, p.side)
    m = traj.n - 2
    K = 2.0 * np.eye(m) - np.eye(m, k=1) - np.eye(m, k=-1)
    rhs = p.lam * targets[1:-1].copy()
    rhs[0] += traj.start
    rhs[-1] += traj.goal
    x = np.linalg.solve(K + p.lam * np.eye(m), rhs)
    return np.vstack([traj.start, x, traj.goal])


def peak_deviation(traj: Trajectory) -> float:
    """Largest perpendicular distance of any waypoint from the start-goal line."""
    d = traj.goal - traj.start
    norm = np.linalg.norm(d)
    rel = traj.waypoints - traj.start
    if norm == 0:
        return float(np.max(np.linalg.norm(rel, axis=1)))
    u = d / norm
    perp = rel - np.outer(rel @ u, u)
    return float(np.max(np.linalg.norm(perp, axis=1)))


@dataclass(frozen=True)
class GuidelineReport:
    helpful: bool
    safe: bool
    clear: bool


def check_guidelines(traj: Trajectory, p: PlayfulParams, goal) -> GuidelineReport:
    reaches = bool(np.linalg.norm(traj.goal - np.asarray(goal, float)) < 1e-6)
    inside = True
    if p.bounds is not None:
        lo, hi = p.bounds
        inside = bool(np.all(traj.waypoints >= lo) and np.all(traj.waypoints <= hi))
    speed = np.max(np.linalg.norm(np.diff(traj.waypoints, axis=0), axis=1)) / traj.dt_waypoint
    return GuidelineReport(helpful=reaches, safe=inside and bool(speed <= p.velocity_limit), clear=reaches)


def trajectory_csv(traj: Trajectory) -> str:
    """Point-light trace: one ``t,x,y[,z]`` row per waypoint."""
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    axes = ["x", "y", "z"][: traj.waypoints.shape[1]]
    out.writerow(["t", *axes])
    for i, pt in enumerate(traj.waypoints):
        out.writerow([repr(round(i * traj.dt_waypoint, 9)), *(repr(float(v)) for v in pt)])
    return buf.getvalue()


# --- glyphs ------------------------------------------------------------------------

# 3x3 node grid in the unit cell, named like a keypad.
NODES = {
    "TL": (0.0, 1.0), "TM": (0.5, 1.0), "TR": (1.0, 1.0),
    "ML": (0.0, 0.5), "C": (0.5, 0.5), "MR": (1.0, 0.5),
    "BL": (0.0, 0.0), "BM": (0.5, 0.0), "BR": (1.0, 0.0),
}
# seven-segment names for the outline pieces
SEG = {
    "a": "TL-TR", "b": "TR-MR", "c": "MR-BR", "d": "BL-BR",
    "e": "ML-BL", "f": "TL-ML", "g": "ML-MR",
}
MAX_SEGMENTS = 6

_TABLE = {
    "0": "a b c d e f",
    "1": "b c",
    "2": "a b g e d",
    "3": "a b g c d",
    "4": "f g b c",
    "5": "a f g c d",
    "6": "a f g e d c",
    "7": "a b c",
    "8": "TL-BL TR-BR a g d",
    "9": "a b c d f g",
    "A": "e f a b c g",
    "B": "TL-BL TL-TM TM-MR g MR-BM BM-BL",
    "C": "a f e d",
    "D": "TL-BL TL-TM TM-MR MR-BM BM-BL",
    "E": "a f e d g",
    "F": "a f e g",
    "G": "a f e d c C-MR",
    "H": "f e b c g",
    "I": "a d TM-BM",
    "J": "b c d e",
    "K": "TL-BL ML-TR ML-BR",
    "L": "f e d",
    "M": "TL-BL TR-BR TL-C C-TR",
    "N": "TL-BL TR-BR TL-BR",
    "O": "TM-ML ML-BM BM-MR MR-TM",
    "P": "a b g f e",
    "Q": "TM-ML ML-BM BM-MR MR-TM C-BR",
    "R": "a b g f e C-BR",
    "S": "TR-TM TM-ML g MR-BM BM-BL",
    "T": "a TM-BM",
    "U": "b c d e f",
    "V": "TL-BM BM-TR",
    "W": "TL-BL TR-BR BL-C C-BR",
    "X": "TL-BR TR-BL",
    "Y": "TL-C TR-C C-BM",
    "Z": "a TR-BL d",
}


def _segment(token: str):
    a, b = SEG.get(token, token).split("-")
    pa, pb = NODES[a], NODES[b]
    return (pa, pb) if pa <= pb else (pb, pa)


GLYPHS: dict[str, tuple] = {ch: tuple(sorted(_segment(t) for t in strokes.split())) for ch, strokes in _TABLE.items()}

assert len(GLYPHS) == 36 and all(len(s) <= MAX_SEGMENTS for s in GLYPHS.values())
assert len({frozenset(s) for s in GLYPHS.values()}) == 36


@dataclass(frozen=True)
class GlyphStrokes:
    character: str
    segments: tuple  # cell-local ((x0, y0), (x1, y1)) in [0, 1]^2
    world: tuple  # the same segments placed by the anchors


def _cell_transform(center, corner):
    """Similarity mapping local (0.5, 0.5) to ``center`` and (1, 1) to ``corner``."""
    c = np.asarray(center, float)
    v = np.asarray(corner, float) - c
    a, b = v[0] + v[1], v[1] - v[0]
    m = np.array([[a, -b], [b, a]])
    return lambda p: tuple(float(x) for x in c + m @ (np.asarray(p) - 0.5))


def glyph_strokes(ch: str, anchors=((0.5, 0.5), (1.0, 1.0))) -> GlyphStrokes:
    """Segments for ``ch``; anchors are the cell center and its upper-right corner."""
    key = ch.upper() if isinstance(ch, str) and len(ch) == 1 else None
    if key not in GLYPHS:
        raise UnsupportedCharacter(f"no glyph for {ch!r}; expected one of 0-9, A-Z")
    center, corner = anchors
    if np.allclose(center, corner, rtol=0, atol=0):
        raise ValueError("anchors must be distinct")
    place = _cell_transform(center, corner)
    segs = GLYPHS[key]
    return GlyphStrokes(key, segs, tuple((place(p), place(q)) for p, q in segs))


def glyph_csv(text: str, anchors=((0.5, 0.5), (1.0, 1.0)), advance: float | None = None) -> str:
    """Segment endpoints for a string, one cell per character laid out along x.

    ``advance`` is the distance between cell centers; by default one cell width.
    """
    center, corner = np.asarray(anchors[0], float), np.asarray(anchors[1], float)
    step = advance if advance is not None else 2.0 * abs(corner[0] - center[0]) or 1.0
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["index", "char", "segment", "x0", "y0", "x1", "y1"])
    for i, ch in enumerate(text):
        if ch == " ":
            continue
        shift = np.array([i * step, 0.0])
        g = glyph_strokes(ch, (center + shift, corner + shift))
        for k, (p, q) in enumerate(g.world):
            out.writerow([i, g.character, k, *(repr(v) for v in (*p, *q))])
    return buf.getvalue()
