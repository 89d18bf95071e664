"""Minimal native SVG rendering of a planned trajectory.

Only polygons and polylines are emitted, with coordinates printed at a fixed
precision so the output is byte-stable for identical inputs.
"""
from __future__ import annotations

import numpy as np

from .dynamics import simulate_fine, vehicle_vertices
from .geom import ConvexShape, Placed, Polytope
from .sdcalc import convex_hull_2d

WIDTH = 900.0
MARGIN = 20.0


def _outline(shape: ConvexShape, n: int = 64) -> np.ndarray:
    """Boundary of a convex shape: exact vertices for polygons, otherwise
    the intersections of neighbouring support lines on ``n`` directions
    (a tight circumscribed polygon)."""
    if shape.is_polygonal:
        return convex_hull_2d(shape.vertices())
    th = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    dirs = np.column_stack([np.cos(th), np.sin(th)])
    vals = shape.support(dirs)
    nxt = np.roll(np.arange(n), -1)
    return np.array([np.linalg.solve(dirs[[i, j]], vals[[i, j]]) for i, j in zip(range(n), nxt)])


class _Canvas:
    def __init__(self, points: np.ndarray):
        lo = points.min(axis=0)
        hi = points.max(axis=0)
        span = np.maximum(hi - lo, 1e-9)
        self.scale = (WIDTH - 2 * MARGIN) / span[0]
        self.lo = lo
        self.height = span[1] * self.scale + 2 * MARGIN
        self.items: list[str] = []

    def _xy(self, pts) -> str:
        pts = np.atleast_2d(pts)
        x = MARGIN + (pts[:, 0] - self.lo[0]) * self.scale
        y = self.height - MARGIN - (pts[:, 1] - self.lo[1]) * self.scale
        return " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(x, y))

    def polygon(self, pts, style: str):
        self.items.append(f'<polygon points="{self._xy(pts)}" {style}/>')

    def polyline(self, pts, style: str):
        self.items.append(f'<polyline points="{self._xy(pts)}" {style}/>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0f}" '
                f'height="{self.height:.0f}" viewBox="0 0 {WIDTH:.0f} {self.height:.0f}">')
        return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *self.items, "</svg>"]) + "\n"


def trajectory_svg(sc, tr, m: int = 20) -> str:
    """Obstacles (filled), knot-pair hulls (dashed), fine swept outline per
    interval (red), vehicle footprints at knots (blue) and the path."""
    verts = Polytope(_outline(sc.vehicle)).verts
    knots = vehicle_vertices(tr.states, verts)
    fine = np.stack([simulate_fine(tr.states[k], tr.inputs[k], sc.dt, m, sc.car)
                     for k in range(sc.N)])  # (N, m+1, 5)
    fine_v = vehicle_vertices(fine, verts)  # (N, m+1, nv, 2)

    obstacles = []
    for o in sc.obstacles:
        for angle, t in o.poses:
            obstacles.append(_outline(Placed(o.shape, angle, t)))
    pts = [knots.reshape(-1, 2), fine_v.reshape(-1, 2)] + obstacles
    cv = _Canvas(np.vstack(pts))

    for poly in obstacles:
        cv.polygon(poly, 'fill="#bbbbbb" stroke="black" stroke-width="1"')
    for k in range(sc.N):
        hull = convex_hull_2d(np.vstack([knots[k], knots[k + 1]]))
        cv.polygon(hull, 'fill="none" stroke="#888888" stroke-width="0.6" stroke-dasharray="3,2"')
    for k in range(sc.N):
        cv.polygon(convex_hull_2d(fine_v[k].reshape(-1, 2)),
                   'fill="none" stroke="#d62728" stroke-width="0.8"')
    for k in range(sc.N + 1):
        cv.polygon(knots[k], 'fill="#1f77b4" fill-opacity="0.35" stroke="#1f77b4" stroke-width="1"')
    path = np.vstack([fine[k, :-1, :2] for k in range(sc.N)] + [tr.states[-1:, :2]])
    cv.polyline(path, 'fill="none" stroke="black" stroke-width="0.8"')
    return cv.render()
