"""Trajectory similarity metrics: RMSE, dynamic time warping distance and
partial curve matching, plus min-max score normalization for reports."""

from __future__ import annotations

import numpy as np

__all__ = ["rmse", "dtwd", "pcm", "normalize_scores"]


def _as_curve(P, min_points=2):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if P.shape[0] < min_points:
        raise ValueError(f"curve needs at least {min_points} points")
    if not np.all(np.isfinite(P)):
        raise ValueError("curve contains non-finite points")
    return P


def rmse(pred, ref) -> float:
    pred, ref = _as_curve(pred), _as_curve(ref)
    if pred.shape != ref.shape:
        raise ValueError("rmse expects curves sampled at matched timestamps")
    return float(np.sqrt(np.mean(np.sum((pred - ref) ** 2, axis=1))))


def dtwd(P, Q) -> float:
    """Unnormalized cumulative dynamic-time-warping cost with Euclidean
    cell distances."""
    P, Q = _as_curve(P, 1), _as_curve(Q, 1)
    cost = np.sqrt(((P[:, None, :] - Q[None, :, :]) ** 2).sum(axis=2))
    n, m = cost.shape
    D = np.full((n, m), np.inf)
    D[0, 0] = cost[0, 0]
    D[0, 1:] = cost[0, 1:].cumsum() + cost[0, 0]
    D[1:, 0] = cost[1:, 0].cumsum() + cost[0, 0]
    for i in range(1, n):
        row = D[i]
        prev = D[i - 1]
        ci = cost[i]
        for j in range(1, m):
            row[j] = ci[j] + min(prev[j], row[j - 1], prev[j - 1])
    return float(D[n - 1, m - 1])


def _arc_lengths(P):
    seg = np.linalg.norm(np.diff(P, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    return s, float(s[-1])


def _interp_curve(P, s, query):
    """Linear interpolation of a polyline at arc-length positions."""
    out = np.column_stack([np.interp(query, s, P[:, k]) for k in range(P.shape[1])])
    return out


def _quad_area(p0, p1, q0, q1):
    # shoelace area of the quadrilateral p0 -> p1 -> q1 -> q0
    pts = np.array([p0, p1, q1, q0])
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def pcm(P, Q, n_offsets=200) -> float:
    """Partial curve matching.

    Both curves are parameterized by normalized arc length; the shorter (by
    arc length) slides along the longer over a grid of offsets.  At each
    offset, points of the shorter curve are matched to equal normalized arc
    length on the longer one and the cost is the summed quadrilateral areas
    between consecutive matched segment pairs.  Returns the minimum cost.
    """
    P, Q = _as_curve(P, 3), _as_curve(Q, 3)
    sP, lP = _arc_lengths(P)
    sQ, lQ = _arc_lengths(Q)
    if lP <= 0.0 or lQ <= 0.0:
        raise ValueError("pcm needs curves of positive arc length")
    if lP <= lQ:
        short, s_short, l_short = P, sP, lP
        long_, s_long, l_long = Q, sQ, lQ
    else:
        short, s_short, l_short = Q, sQ, lQ
        long_, s_long, l_long = P, sP, lP
    frac = l_short / l_long
    offsets = np.linspace(0.0, 1.0 - frac, n_offsets)
    u_short = s_short / l_short  # normalized positions of the short vertices
    best = np.inf
    for delta in offsets:
        query = (delta + u_short * frac) * l_long
        matched = _interp_curve(long_, s_long, query)
        total = 0.0
        for k in range(len(short) - 1):
            total += _quad_area(short[k], short[k + 1], matched[k], matched[k + 1])
        if total < best:
            best = total
    return float(best)


def normalize_scores(values):
    """Min-max normalization to [0, 1]; a zero range maps everything to 0."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError("normalization needs at least 2 values")
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)
