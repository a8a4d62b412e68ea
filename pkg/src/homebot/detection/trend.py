"""Piecewise-exponential trend filter for slow gas-sensor changes.

A window is modelled as consecutive segments ``y = a * exp(b * t) + c``.
Segmentation is greedy top-down: fit one exponential, split where the
accumulated residual peaks while the fit error exceeds the tolerance, then
merge neighbours back together whenever a joint fit is good enough.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import minimize_scalar

MIN_WINDOW = 8
MIN_SEGMENT = 3
REFINE = 2
# Search range for b * (segment duration); exp(40) keeps lstsq well conditioned.
RATE_SPAN = 40.0


class Direction(str, Enum):
    RISING = "Rising"
    FALLING = "Falling"


@dataclass(frozen=True)
class TrendSegment:
    start_index: int
    end_index: int  # exclusive
    a: float
    b: float
    c: float
    residual: float  # RMSE
    t0: float = 0.0

    @property
    def params(self):
        return (self.a, self.b, self.c)

    def value(self, t):
        return self.a * np.exp(self.b * (np.asarray(t, dtype=float) - self.t0)) + self.c

    def slope(self, t: float) -> float:
        return self.a * self.b * math.exp(self.b * (t - self.t0))


@dataclass(frozen=True)
class ChangePoint:
    index: int
    direction: Direction


class WindowTooShort(ValueError):
    pass


def _sse_for_rates(tt, y, rates):
    """Closed-form SSE, amplitude and offset of ``a*exp(b*tt)+c`` for each rate.

    Basis values are scaled to peak at 1 so large rates stay finite; the
    returned amplitude is rescaled back to ``exp(b*tt)``. Rate 0 stands for
    the affine limit, whose "amplitude" is the slope per unit of ``tt[-1]``.
    """
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    shift = np.where(rates > 0, tt[-1], 0.0)
    e = np.exp(rates[:, None] * (tt[None, :] - shift[:, None]))
    zero = rates == 0.0
    if zero.any():
        e[zero] = tt[None, :] / max(tt[-1], 1e-12)
    yc = y - y.mean()
    ec = e - e.mean(axis=1, keepdims=True)
    see = np.einsum("ij,ij->i", ec, ec)
    sey = ec @ yc
    syy = float(yc @ yc)
    safe = see > 1e-300
    a_scaled = np.where(safe, sey / np.where(safe, see, 1.0), 0.0)
    sse = np.maximum(syy - a_scaled * sey, 0.0)
    c = y.mean() - a_scaled * e.mean(axis=1)
    a = a_scaled * np.exp(-rates * shift)
    return sse, a, c


def fit_exponential(t, y):
    """Best ``a*exp(b*(t-t0)) + c`` for one segment; returns (a, b, c, sse, t0).

    Rate is found by a coarse grid followed by bounded Brent refinement; for
    each rate the amplitude and offset are an exact linear solve. The b -> 0
    limit degenerates to an affine fit, which is tried explicitly.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    t0 = float(t[0])
    tt = t - t0
    span = max(float(tt[-1]), 1e-12)
    if np.ptp(y) <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        return 0.0, 0.0, float(np.mean(y)), float(np.sum((y - np.mean(y)) ** 2)), t0

    grid = np.linspace(-RATE_SPAN, RATE_SPAN, 161) / span
    sses, _, _ = _sse_for_rates(tt, y, grid)
    k = int(np.argmin(sses))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(
        lambda b: float(_sse_for_rates(tt, y, [b])[0][0]),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12 / span},
    )
    b = float(res.x) if res.fun < sses[k] else float(grid[k])
    if b == 0.0:
        # affine limit: represent the line as a tiny-rate exponential
        (sse,), (slope,), (icpt,) = _sse_for_rates(tt, y, [0.0])
        slope /= span
        if abs(slope) <= 1e-15:
            return 0.0, 0.0, float(icpt), float(sse), t0
        b = 1e-9 / span
        a = slope / b
        return a, b, float(icpt) - a, float(sse), t0
    (sse,), (a,), (c,) = _sse_for_rates(tt, y, [b])
    return float(a), b, float(c), float(sse), t0


def _segment(t, y, i, j, parent: TrendSegment | None = None) -> TrendSegment:
    ts, ys = t[i:j], y[i:j]
    n = j - i
    if n < MIN_SEGMENT:
        a, b, c, sse, t0 = 0.0, 0.0, float(np.mean(ys)), float(np.sum((ys - np.mean(ys)) ** 2)), float(ts[0])
    else:
        a, b, c, sse, t0 = fit_exponential(ts, ys)
    if parent is not None:
        # the parent's curve restricted here is always feasible; keep whichever fits better
        r = ys - parent.value(ts)
        psse = float(r @ r)
        if psse < sse:
            a, b, c, sse, t0 = parent.a, parent.b, parent.c, psse, parent.t0
    return TrendSegment(i, j, a, b, c, math.sqrt(sse / n), t0)


def _sse(seg: TrendSegment) -> float:
    return seg.residual**2 * (seg.end_index - seg.start_index)


def _direction(left: TrendSegment, right: TrendSegment, t_boundary: float) -> Direction:
    return Direction.RISING if right.slope(t_boundary) > left.slope(t_boundary) else Direction.FALLING


def trend_filter(window, penalty: float = 0.0, tolerance: float = 0.05, times=None):
    """Segment ``window`` into exponentials; returns (segments, change points).

    ``window`` is a sequence of GasSample or plain floats (then ``times``
    defaults to the sample index). A split is only kept when it lowers the
    squared error by more than ``penalty``.
    """
    if len(window) < MIN_WINDOW:
        raise WindowTooShort(f"trend_filter needs at least {MIN_WINDOW} samples, got {len(window)}")
    if hasattr(window[0], "reading"):
        y = np.array([s.reading for s in window], dtype=float)
        t = np.array([s.timestamp for s in window], dtype=float) if times is None else np.asarray(times, float)
    else:
        y = np.asarray(window, dtype=float)
        t = np.arange(len(y), dtype=float) if times is None else np.asarray(times, float)

    segments = _split(t, y, _segment(t, y, 0, len(y)), tolerance, penalty)
    segments = _merge(t, y, segments, tolerance)
    segments = _merge(t, y, _dissolve(t, y, segments, tolerance), tolerance)
    changes = [
        ChangePoint(right.start_index, _direction(left, right, float(t[right.start_index])))
        for left, right in zip(segments, segments[1:])
    ]
    return segments, changes


def _split(t, y, seg: TrendSegment, tol: float, penalty: float) -> list[TrendSegment]:
    i, j = seg.start_index, seg.end_index
    if seg.residual <= tol or j - i < 2 * MIN_SEGMENT:
        return [seg]
    # Extremum of the running residual sum marks where the single fit switches
    # from over- to under-shooting; pointwise maxima sit at segment ends.
    r = np.abs(np.cumsum(y[i:j] - seg.value(t[i:j])))
    # a split must leave at least MIN_SEGMENT samples on each side
    r[: MIN_SEGMENT - 1] = -1.0
    r[len(r) - MIN_SEGMENT :] = -1.0
    k0 = i + int(np.argmax(r)) + 1
    best = None
    # nudge the split a couple of samples either way to the cheaper boundary
    for k in range(max(i + MIN_SEGMENT, k0 - REFINE), min(j - MIN_SEGMENT, k0 + REFINE) + 1):
        left = _segment(t, y, i, k, seg)
        right = _segment(t, y, k, j, seg)
        cost = _sse(left) + _sse(right)
        if best is None or cost < best[0]:
            best = (cost, left, right)
    _, left, right = best
    if _sse(seg) - _sse(left) - _sse(right) <= penalty:
        return [seg]
    return _split(t, y, left, tol, penalty) + _split(t, y, right, tol, penalty)


def _merge(t, y, segments, tol: float) -> list[TrendSegment]:
    segments = list(segments)
    while len(segments) > 1:
        best = None
        for idx in range(len(segments) - 1):
            a, b = segments[idx], segments[idx + 1]
            joint = _segment(t, y, a.start_index, b.end_index)
            if joint.residual > tol:
                continue
            if best is None or joint.residual < best[1].residual:
                best = (idx, joint)
        if best is None:
            break
        idx, joint = best
        segments[idx : idx + 2] = [joint]
    return segments


def _dissolve(t, y, segments, tol: float) -> list[TrendSegment]:
    """Re-cut around short segments that still miss the tolerance.

    A junction closer than MIN_SEGMENT samples to a parent's edge cannot be
    reached by a split; the stranded sliver is absorbed by re-cutting the
    union with its neighbours at the cheapest nearby boundary.
    """
    segments = list(segments)
    idx = 1
    while idx < len(segments) - 1:
        mid = segments[idx]
        n = mid.end_index - mid.start_index
        if mid.residual <= tol or n >= 2 * MIN_SEGMENT:
            idx += 1
            continue
        left, right = segments[idx - 1], segments[idx + 1]
        a, d = left.start_index, right.end_index
        lo = max(a + MIN_SEGMENT, mid.start_index - REFINE)
        hi = min(d - MIN_SEGMENT, mid.end_index + REFINE)
        before = _sse(left) + _sse(mid) + _sse(right)
        best = None
        for k in range(lo, hi + 1):
            l2 = _segment(t, y, a, k)
            r2 = _segment(t, y, k, d)
            cost = _sse(l2) + _sse(r2)
            if best is None or cost < best[0]:
                best = (cost, l2, r2)
        if best is not None and best[0] <= before:
            segments[idx - 1 : idx + 2] = [best[1], best[2]]
        else:
            idx += 1
    return segments
