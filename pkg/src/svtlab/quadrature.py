"""Adaptive Simpson quadrature for log-concave integrands given in log space.

The integrand ``exp(logf(z))`` is rescaled by its maximum before integrating,
so probabilities far below the float range are still returned accurately as
logarithms.  Log-concavity is what makes the mode search and the tail cut-off
cheap: away from the mode the integrand only decreases.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable

import numpy as np

# tails are dropped once the integrand is this many nats below its peak
TAIL_DROP = 50.0
MAX_DEPTH = 48
ROUNDOFF = 1e-13


def _eval(logf, z):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.asarray(logf(np.asarray(z, dtype=float)), dtype=float)
    return np.where(np.isnan(out), -np.inf, out)


def _locate_mode(logf, lo, hi, start, scale):
    """Approximate argmax of a concave ``logf`` on ``(lo, hi)`` by grid refinement."""
    steps = scale * np.exp2(np.arange(-4, 70))
    pts = np.concatenate([[start], start - steps, start + steps])
    pts = pts[(pts > lo) & (pts < hi)]
    if math.isfinite(lo) and math.isfinite(hi):
        pts = np.concatenate([pts, np.linspace(lo, hi, 65)[1:-1]])
    if pts.size == 0:
        pts = np.array([0.5 * (lo + hi)])
    pts = np.unique(pts)
    for _ in range(4):
        vals = _eval(logf, pts)
        k = int(np.argmax(vals))
        left = pts[k - 1] if k > 0 else (lo if math.isfinite(lo) else pts[k] - scale)
        right = pts[k + 1] if k + 1 < pts.size else (hi if math.isfinite(hi) else pts[k] + scale)
        best_z, best_v = pts[k], vals[k]
        if right - left <= 1e-9 * scale:
            break
        pts = np.linspace(left, right, 67)[1:-1]
    vals = _eval(logf, pts)
    k = int(np.argmax(vals))
    if vals[k] > best_v:
        best_z, best_v = pts[k], vals[k]
    return float(best_z), float(best_v)


def _tail_end(logf, mode, bound, direction, cutoff, scale):
    """First point from ``mode`` towards ``bound`` where ``logf`` drops below ``cutoff``."""
    steps = scale * np.exp2(np.arange(-2, 80))
    pts = mode + direction * steps
    if math.isfinite(bound):
        inside = pts * direction < bound * direction
        pts = pts[inside]
    vals = _eval(logf, pts)
    low = np.flatnonzero(vals < cutoff)
    if low.size:
        return float(pts[low[0]])
    if math.isfinite(bound):
        return float(bound)
    return float(mode + direction * steps[-1])


def _simpson_segments(f, edges, tol):
    """Breadth-first adaptive Simpson over consecutive ``edges``; fully vectorised."""
    a = edges[:-1]
    b = edges[1:]
    total_width = edges[-1] - edges[0]
    m = 0.5 * (a + b)
    fa, fm, fb = f(a), f(m), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    total = 0.0
    depth = 0
    while a.size:
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        err = left + right - whole
        budget = 15.0 * tol * (b - a) / total_width
        # the last clause stops refinement once the error is pure round-off
        done = ((np.abs(err) <= budget) | (depth >= MAX_DEPTH)
                | (np.abs(err) <= ROUNDOFF * (np.abs(left) + np.abs(right))))
        total += float(np.sum((left + right + err / 15.0)[done]))
        keep = ~done
        if not keep.any():
            break
        a, m, b = a[keep], m[keep], b[keep]
        fa, fm, fb = fa[keep], fm[keep], fb[keep]
        lm, rm, flm, frm = lm[keep], rm[keep], flm[keep], frm[keep]
        left, right = left[keep], right[keep]
        # children: [a, m] with midpoint lm, and [m, b] with midpoint rm
        a = np.concatenate([a, m])
        b, m = np.concatenate([m, b]), np.concatenate([lm, rm])
        fa, fb, fm = np.concatenate([fa, fm]), np.concatenate([fm, fb]), np.concatenate([flm, frm])
        whole = np.concatenate([left, right])
        depth += 1
    return total


def log_integrate(logf: Callable[[np.ndarray], np.ndarray], lo: float = -math.inf,
                  hi: float = math.inf, breakpoints: Iterable[float] = (),
                  scale: float = 1.0, tol: float = 1e-12, start: float = 0.0) -> float:
    """Return ``log ∫_lo^hi exp(logf(z)) dz`` for a log-concave ``logf``.

    ``breakpoints`` are points where the integrand has kinks; they become
    segment edges.  ``scale`` is a characteristic width used to grow search
    brackets.  ``tol`` is the absolute Simpson tolerance on the integrand
    rescaled to peak value 1.
    """
    if not lo < hi:
        return -math.inf
    bps = np.array([p for p in breakpoints if lo < p < hi], dtype=float)
    start = min(max(start, lo), hi)
    mode, peak = _locate_mode(logf, lo, hi, start, scale)
    if bps.size:
        vals = _eval(logf, bps)
        k = int(np.argmax(vals))
        if vals[k] > peak:
            mode, peak = float(bps[k]), float(vals[k])
    if peak == -math.inf:
        return -math.inf
    cutoff = peak - TAIL_DROP
    left = _tail_end(logf, mode, lo, -1.0, cutoff, scale)
    right = _tail_end(logf, mode, hi, 1.0, cutoff, scale)
    inner = bps[(bps > left) & (bps < right)]
    edges = np.unique(np.concatenate([[left, right], inner, [mode] if left < mode < right else []]))
    # start from a few pieces per segment so narrow features are not skipped
    fine = np.concatenate([np.linspace(x0, x1, 9)[:-1] for x0, x1 in zip(edges[:-1], edges[1:])]
                          + [edges[-1:]])

    def f(z):
        return np.exp(_eval(logf, z) - peak)

    total = _simpson_segments(f, fine, tol)
    if total <= 0:
        return -math.inf
    return peak + math.log(total)
