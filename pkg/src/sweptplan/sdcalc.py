"""Reference signed distance between planar convex shapes.

The signed distance of two compact convex sets equals

    sd(C, D) = max_{|c| = 1} cost_C(c) - support_D(c)

so in the plane it is a one-dimensional search over the angle of ``c``.
A dense angular scan locates the best brackets, which golden-section search
then refines. Slow compared to GJK/EPA, but simple enough to serve as a test
oracle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import ConvexShape, Point

SCAN_SAMPLES = 3600
REFINE_WIDTH = 1e-10
N_BRACKETS = 4

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SignedDistanceResult:
    sd: float
    witness_direction: np.ndarray

    @property
    def dist(self) -> float:
        return max(self.sd, 0.0)

    @property
    def pen(self) -> float:
        return max(-self.sd, 0.0)


def _unit(theta):
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def certificate_gap(C: ConvexShape, D: ConvexShape, c) -> np.ndarray:
    """``cost_C(c) - support_D(c)``; a lower bound on sd for unit ``c``."""
    return C.cost(c) - D.support(c)


def _golden_max(f, a: float, b: float, width: float):
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > width:
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INVPHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INVPHI * (b - a)
            f2 = f(x2)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def signed_distance(C: ConvexShape, D: ConvexShape, samples: int = SCAN_SAMPLES) -> SignedDistanceResult:
    """Signed distance and a unit witness direction pointing from D toward C."""
    thetas = 2.0 * np.pi * np.arange(samples) / samples
    vals = certificate_gap(C, D, _unit(thetas))
    if not np.all(np.isfinite(vals)):
        raise ValueError("shapes must be bounded")
    step = 2.0 * np.pi / samples

    # local maxima of the periodic scan, best first
    left, right = np.roll(vals, 1), np.roll(vals, -1)
    peaks = np.flatnonzero((vals >= left) & (vals >= right))
    if peaks.size == 0:
        peaks = np.array([int(np.argmax(vals))])
    peaks = peaks[np.argsort(-vals[peaks], kind="stable")][:N_BRACKETS]

    def f(t):
        return float(certificate_gap(C, D, _unit(t)))

    best_t, best_v = thetas[peaks[0]], vals[peaks[0]]
    for i in peaks:
        t, v = _golden_max(f, thetas[i] - step, thetas[i] + step, REFINE_WIDTH)
        if v > best_v:
            best_t, best_v = t, v
    return SignedDistanceResult(float(best_v), _unit(best_t))


def convex_hull_2d(points) -> np.ndarray:
    """Counter-clockwise hull vertices (monotone chain), starting at the
    lexicographically smallest point. Collinear points are dropped."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise ValueError("need at least one point")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.any(np.diff(pts, axis=0) != 0.0, axis=1)
    pts = pts[keep]
    if len(pts) <= 2:
        return pts.copy()

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    P = [tuple(p) for p in pts]
    lower: list = []
    for p in P:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(P):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    return np.array(hull, dtype=float)


def distance_points_to_polygon(points, hull) -> np.ndarray:
    """Distances from ``points`` (k, 2) to a convex polygon given by ccw
    vertices ``hull`` (as returned by :func:`convex_hull_2d`)."""
    q = np.asarray(points, dtype=float).reshape(-1, 2)
    H = np.asarray(hull, dtype=float)
    if len(H) == 1:
        return np.linalg.norm(q - H[0], axis=1)
    a = H
    b = np.roll(H, -1, axis=0)
    if len(H) == 2:
        a, b = H[:1], H[1:]
    e = b - a                                      # (m, 2)
    w = q[:, None, :] - a[None, :, :]              # (k, m, 2)
    ee = np.einsum("mi,mi->m", e, e)
    t = np.clip(np.einsum("kmi,mi->km", w, e) / ee, 0.0, 1.0)
    d = w - t[..., None] * e
    dist = np.sqrt(np.min(np.einsum("kmi,kmi->km", d, d), axis=1))
    if len(H) >= 3:
        crs = e[None, :, 0] * w[..., 1] - e[None, :, 1] * w[..., 0]
        inside = np.all(crs >= 0.0, axis=1)
        dist = np.where(inside, 0.0, dist)
    return dist


def distance_point_to_convex(q, C: ConvexShape) -> float:
    """Euclidean distance from point ``q`` to ``C`` (zero inside)."""
    q = np.asarray(q, dtype=float)
    if C.is_polygonal:
        hull = convex_hull_2d(C.vertices())
        return float(distance_points_to_polygon(q, hull)[0])
    return max(signed_distance(Point(q), C).sd, 0.0)
