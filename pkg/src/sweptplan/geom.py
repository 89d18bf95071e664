"""Planar convex shapes described through their support and cost functions.

Every shape answers two queries for a direction ``c``:

    support(c) = sup_{x in S} c.x
    cost(c)    = inf_{x in S} c.x = -support(-c)

Directions may be a single vector of shape ``(2,)`` or a stack ``(k, 2)``;
the result is then a scalar or an array of shape ``(k,)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_EPS = 1e-9


def _frozen(a, shape=None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite coordinates")
    arr.setflags(write=False)
    return arr


def rotation_and_derivative(psi: float) -> tuple[np.ndarray, np.ndarray]:
    """Return ``R(psi)`` and ``dR/dpsi``."""
    cs, sn = np.cos(psi), np.sin(psi)
    R = np.array([[cs, -sn], [sn, cs]])
    dR = np.array([[-sn, -cs], [cs, -sn]])
    return R, dR


def rotation(psi: float) -> np.ndarray:
    cs, sn = np.cos(psi), np.sin(psi)
    return np.array([[cs, -sn], [sn, cs]])


def _check_direction(c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.shape[-1] != 2:
        raise ValueError("directions must be 2-vectors")
    if np.any(np.all(c == 0.0, axis=-1)):
        raise ValueError("zero direction vector")
    return c


class ConvexShape:
    """Base class; subclasses implement ``_support`` on validated directions."""

    def _support(self, c: np.ndarray):
        raise NotImplementedError

    def support(self, c):
        return self._support(_check_direction(c))

    def cost(self, c):
        return -self._support(-_check_direction(c))

    def scaled(self, k: float) -> "ConvexShape":
        raise NotImplementedError(f"scaling not defined for {type(self).__name__}")

    def vertices(self) -> np.ndarray:
        """Vertex set for polygonal shapes (raises for curved ones)."""
        raise TypeError(f"{type(self).__name__} has no finite vertex set")

    @property
    def is_polygonal(self) -> bool:
        return False


@dataclass(frozen=True)
class Point(ConvexShape):
    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", _frozen(self.q, (2,)))

    def _support(self, c):
        return c @ self.q

    def scaled(self, k):
        return Point(k * self.q)

    def vertices(self):
        return self.q[None, :]

    @property
    def is_polygonal(self):
        return True


@dataclass(frozen=True)
class Polytope(ConvexShape):
    """Convex hull of a vertex list (V-representation)."""

    verts: np.ndarray

    def __post_init__(self):
        v = _frozen(self.verts)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 1:
            raise ValueError("polytope needs a nonempty (k, 2) vertex array")
        object.__setattr__(self, "verts", v)

    def _support(self, c):
        return np.max(c @ self.verts.T, axis=-1)

    def scaled(self, k):
        return Polytope(k * self.verts)

    def vertices(self):
        return self.verts

    @property
    def is_polygonal(self):
        return True


@dataclass(frozen=True)
class Ellipsoid(ConvexShape):
    """The set {x : x^T P^{-1} x <= 1} with support sqrt(c^T P c)."""

    P: np.ndarray

    def __post_init__(self):
        P = _frozen(self.P, (2, 2))
        if not np.allclose(P, P.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(P).max())):
            raise ValueError("ellipsoid matrix must be symmetric")
        if np.linalg.eigvalsh(P).min() <= 0.0:
            raise ValueError("ellipsoid matrix must be positive definite")
        object.__setattr__(self, "P", P)

    def _support(self, c):
        return np.sqrt(np.einsum("...i,ij,...j->...", c, self.P, c))

    def scaled(self, k):
        if k == 0:
            return Point(np.zeros(2))
        return Ellipsoid(k * k * self.P)


@dataclass(frozen=True)
class Ball(ConvexShape):
    r: float

    def __post_init__(self):
        if not np.isfinite(self.r) or self.r < 0:
            raise ValueError("ball radius must be finite and nonnegative")
        object.__setattr__(self, "r", float(self.r))

    def _support(self, c):
        return self.r * np.linalg.norm(c, axis=-1)

    def scaled(self, k):
        return Ball(k * self.r)


@dataclass(frozen=True)
class Inflated(ConvexShape):
    """Minkowski sum ``base + B_r``."""

    base: ConvexShape
    r: float

    def __post_init__(self):
        if not np.isfinite(self.r) or self.r < 0:
            raise ValueError("inflation radius must be finite and nonnegative")
        object.__setattr__(self, "r", float(self.r))

    def _support(self, c):
        return self.base._support(c) + self.r * np.linalg.norm(c, axis=-1)

    def scaled(self, k):
        return Inflated(self.base.scaled(k), k * self.r)


@dataclass(frozen=True)
class Hull(ConvexShape):
    """Convex hull of the union of its members."""

    members: tuple

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("hull needs at least one member")
        for m in members:
            if isinstance(m, Hull):
                raise ValueError("nested hulls are not supported")
        object.__setattr__(self, "members", members)

    def _support(self, c):
        vals = [m._support(c) for m in self.members]
        return np.max(np.stack(vals), axis=0)

    def scaled(self, k):
        return Hull(tuple(m.scaled(k) for m in self.members))

    def vertices(self):
        return np.vstack([m.vertices() for m in self.members])

    @property
    def is_polygonal(self):
        return all(m.is_polygonal for m in self.members)


@dataclass(frozen=True)
class Placed(ConvexShape):
    """``R(angle) shape + translation``."""

    shape: ConvexShape
    angle: float = 0.0
    translation: np.ndarray = None

    def __post_init__(self):
        t = np.zeros(2) if self.translation is None else self.translation
        object.__setattr__(self, "translation", _frozen(t, (2,)))
        object.__setattr__(self, "angle", float(self.angle))

    @property
    def R(self) -> np.ndarray:
        return rotation(self.angle)

    def _support(self, c):
        # c R rotates row directions into the body frame: (R^T c)^T = c^T R
        return self.shape._support(c @ self.R) + c @ self.translation

    def vertices(self):
        return self.shape.vertices() @ self.R.T + self.translation

    @property
    def is_polygonal(self):
        return self.shape.is_polygonal


def support(s: ConvexShape, c):
    return s.support(c)


def cost(s: ConvexShape, c):
    return s.cost(c)


def smoothed_ellipsoid_support(P, c, eps: float = DEFAULT_EPS):
    """Smoothed ellipsoid support ``sqrt(c^T P c + eps)`` and its gradient.

    Strictly larger than the exact support for ``eps > 0`` and twice
    differentiable everywhere including ``c = 0``.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    P = np.asarray(P, dtype=float)
    c = np.asarray(c, dtype=float)
    Pc = P @ c
    value = np.sqrt(c @ Pc + eps)
    if value == 0.0:
        return 0.0, np.zeros_like(c)
    return value, Pc / value


# -- smooth member evaluation -------------------------------------------------
#
# Certificate rows need each hull member to have a C^2 support function.
# Points, ellipsoids, balls and inflated versions thereof qualify; polytopes
# are expanded into their vertices.


def smooth_members(shape: ConvexShape) -> list:
    """Split ``shape`` into members whose support functions are smooth."""
    if isinstance(shape, Hull):
        out = []
        for m in shape.members:
            out.extend(smooth_members(m))
        return out
    if isinstance(shape, Polytope):
        return [Point(v) for v in shape.verts]
    if isinstance(shape, Inflated):
        return [Inflated(m, shape.r) for m in smooth_members(shape.base)]
    if isinstance(shape, Placed):
        return [Placed(m, shape.angle, shape.translation) for m in smooth_members(shape.shape)]
    if isinstance(shape, (Point, Ellipsoid, Ball)):
        return [shape]
    raise TypeError(f"unsupported member type {type(shape).__name__}")


def member_support_grad(m: ConvexShape, d: np.ndarray, eps: float = DEFAULT_EPS):
    """Support value and gradient w.r.t. ``d`` of a smooth member."""
    if isinstance(m, Point):
        return float(d @ m.q), m.q.copy()
    if isinstance(m, Ellipsoid):
        return smoothed_ellipsoid_support(m.P, d, eps)
    if isinstance(m, Ball):
        val, g = smoothed_ellipsoid_support(np.eye(2), d, eps)
        return m.r * val, m.r * g
    if isinstance(m, Inflated):
        bv, bg = member_support_grad(m.base, d, eps)
        val, g = smoothed_ellipsoid_support(np.eye(2), d, eps)
        return bv + m.r * val, bg + m.r * g
    if isinstance(m, Placed):
        R = m.R
        bv, bg = member_support_grad(m.shape, R.T @ d, eps)
        return bv + float(d @ m.translation), R @ bg + m.translation
    raise TypeError(f"member {type(m).__name__} has no smooth support")


def member_cost_grad(m: ConvexShape, d: np.ndarray, eps: float = DEFAULT_EPS):
    val, g = member_support_grad(m, -d, eps)
    return -val, g


def centroid(s: ConvexShape) -> np.ndarray:
    """Vertex mean for polygonal shapes, bounding-box center otherwise."""
    if s.is_polygonal:
        return s.vertices().mean(axis=0)
    e = np.eye(2)
    return 0.5 * (s.support(e) + s.cost(e))


# -- JSON ---------------------------------------------------------------------


def shape_from_json(obj: dict) -> ConvexShape:
    kind = obj.get("type")
    if kind == "polytope":
        return Polytope(obj["vertices"])
    if kind == "ellipsoid":
        return Ellipsoid(obj["P"])
    if kind == "point":
        return Point(obj["q"])
    if kind == "ball":
        return Ball(obj["r"])
    if kind == "inflated":
        return Inflated(shape_from_json(obj["base"]), obj["r"])
    if kind == "hull":
        return Hull(tuple(shape_from_json(m) for m in obj["members"]))
    raise ValueError(f"unknown shape type {kind!r}")


def shape_to_json(s: ConvexShape) -> dict:
    if isinstance(s, Polytope):
        return {"type": "polytope", "vertices": s.verts.tolist()}
    if isinstance(s, Ellipsoid):
        return {"type": "ellipsoid", "P": s.P.tolist()}
    if isinstance(s, Point):
        return {"type": "point", "q": s.q.tolist()}
    if isinstance(s, Ball):
        return {"type": "ball", "r": s.r}
    if isinstance(s, Inflated):
        return {"type": "inflated", "base": shape_to_json(s.base), "r": s.r}
    if isinstance(s, Hull):
        return {"type": "hull", "members": [shape_to_json(m) for m in s.members]}
    raise TypeError(f"cannot serialize {type(s).__name__}")


def box(xmin: float, xmax: float, ymin: float, ymax: float) -> Polytope:
    return Polytope([[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]])

