"""Swept-volume inflation radii and their polynomial upper-bound model.

For one step of the car, the region swept between two knots is covered by
the hull of the start/end footprints grown by a ball of radius ``r``.
:func:`sample_radius` measures the smallest such ``r`` from a fine
simulation; :func:`fit_radius_model` fits a polynomial ``r(v, delta)`` lying
on or above every sample via linear programming.
"""
from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .dynamics import DELTA, V, CarParams, rk4_step, simulate_fine, vehicle_vertices
from .geom import ConvexShape
from .sdcalc import convex_hull_2d, distance_points_to_polygon

RIDGE = 1e-10


@dataclass(frozen=True)
class RadiusSample:
    v: float
    delta: float
    u: tuple
    r: float


def _polygon_vertices(A: ConvexShape) -> np.ndarray:
    if not A.is_polygonal:
        raise NotImplementedError("radius sampling needs a polygonal vehicle shape")
    return A.vertices()


def _radius_from_poses(fine: np.ndarray, x_next: np.ndarray, verts: np.ndarray) -> float:
    corners = vehicle_vertices(np.stack([fine[0], x_next]), verts).reshape(-1, 2)
    hull = convex_hull_2d(corners)
    pts = vehicle_vertices(fine, verts).reshape(-1, 2)
    return float(np.max(distance_points_to_polygon(pts, hull)))


def sample_radius(x_k, u_k, dt: float, m: int, A: ConvexShape,
                  params: CarParams = CarParams()) -> RadiusSample:
    """Smallest ball radius covering the fine-simulated footprints.

    The hull is built from the footprint at ``x_k`` and at the single-step
    RK4 successor, which is the successor the transcription uses.
    """
    if m < 2:
        raise ValueError("need at least two substeps")
    verts = _polygon_vertices(A)
    x_k = np.asarray(x_k, dtype=float)
    fine = simulate_fine(x_k, u_k, dt, m, params)
    x_next = rk4_step(x_k, u_k, dt, params)
    r = _radius_from_poses(fine, x_next, verts)
    return RadiusSample(float(x_k[V]), float(x_k[DELTA]), tuple(np.asarray(u_k, float)), r)


def sample_radii(states, inputs, dt: float, m: int, A: ConvexShape,
                 params: CarParams = CarParams()) -> np.ndarray:
    """Batched :func:`sample_radius` returning only the radii."""
    verts = _polygon_vertices(A)
    states = np.asarray(states, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    fine = simulate_fine(states, inputs, dt, m, params)      # (m+1, S, 5)
    nxt = rk4_step(states, inputs, dt, params)
    return np.array([_radius_from_poses(fine[:, i], nxt[i], verts) for i in range(len(states))])


# -- polynomial model ----------------------------------------------------------


def monomials(degree: int) -> list[tuple[int, int]]:
    """Exponent pairs ``(j, k)`` of ``v**j * delta**k`` with ``j + k <= degree``."""
    return [(t - k, k) for t in range(degree + 1) for k in range(t + 1)]


def _design(v, d, mons) -> np.ndarray:
    v = np.asarray(v, dtype=float)[:, None]
    d = np.asarray(d, dtype=float)[:, None]
    j = np.array([m[0] for m in mons])[None, :]
    k = np.array([m[1] for m in mons])[None, :]
    return v**j * d**k


@dataclass(frozen=True)
class RadiusModel:
    degree: int
    coeffs: np.ndarray
    v_range: tuple = (0.0, 15.0)
    delta_range: tuple = (-0.6, 0.6)
    report: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.degree < 0 or self.degree % 2:
            raise ValueError("degree must be even and nonnegative")
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (len(monomials(self.degree)),):
            raise ValueError("coefficient count does not match degree")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_terms(cls, degree: int, terms: dict, **kw) -> "RadiusModel":
        mons = monomials(degree)
        c = np.zeros(len(mons))
        for jk, val in terms.items():
            c[mons.index(tuple(jk))] = val
        return cls(degree, c, **kw)

    @classmethod
    def zero(cls, degree: int = 8, **kw) -> "RadiusModel":
        return cls(degree, np.zeros(len(monomials(degree))), **kw)

    def to_json(self) -> dict:
        return {
            "degree": self.degree,
            "domain": {"v": list(self.v_range), "delta": list(self.delta_range)},
            "monomials": [list(m) for m in monomials(self.degree)],
            "coeffs": [float(c) for c in self.coeffs],
            "report": self.report,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RadiusModel":
        dom = obj.get("domain", {})
        return cls(int(obj["degree"]), np.asarray(obj["coeffs"], float),
                   tuple(dom.get("v", (0.0, 15.0))), tuple(dom.get("delta", (-0.6, 0.6))),
                   obj.get("report", {}))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "RadiusModel":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def values(self, v, d) -> np.ndarray:
        """Vectorized polynomial values (no clamping, no derivatives)."""
        return _design(np.ravel(v), np.ravel(d), monomials(self.degree)) @ self.coeffs


def eval_radius(model: RadiusModel, v: float, delta: float):
    """Return ``(r, dr/dv, dr/ddelta)``. Points outside the domain box are
    clamped onto it (with a warning) and the clamped partial is zeroed."""
    lo_v, hi_v = model.v_range
    lo_d, hi_d = model.delta_range
    vc = min(max(v, lo_v), hi_v)
    dc = min(max(delta, lo_d), hi_d)
    if vc != v or dc != delta:
        warnings.warn(f"radius model evaluated outside its domain at v={v}, delta={delta}",
                      RuntimeWarning, stacklevel=2)
    r = dv = dd = 0.0
    for (j, k), c in zip(monomials(model.degree), model.coeffs):
        if c == 0.0:
            continue
        r += c * vc**j * dc**k
        if j:
            dv += c * j * vc ** (j - 1) * dc**k
        if k:
            dd += c * k * vc**j * dc ** (k - 1)
    if vc != v:
        dv = 0.0
    if dc != delta:
        dd = 0.0
    return r, dv, dd


def fit_radius_model(samples, degree: int = 8, **kw) -> RadiusModel:
    """Fit a :class:`RadiusModel` to a list of :class:`RadiusSample`."""
    v = [s.v for s in samples]
    d = [s.delta for s in samples]
    r = [s.r for s in samples]
    return fit_upper_bound(v, d, r, degree, **kw)


def fit_upper_bound(v, delta, r, degree: int = 8, v_range=None, delta_range=None,
                    grid: int = 21) -> RadiusModel:
    """One-sided least-absolute-deviation polynomial fit.

    Solves  min sum_i (q(v_i, d_i) - r_i)  s.t.  q(v_i, d_i) >= r_i and
    q >= 0 on a ``grid`` x ``grid`` lattice of the domain box. A tiny
    penalty on the largest (column-scaled) coefficient breaks ties.
    """
    v = np.asarray(v, float)
    delta = np.asarray(delta, float)
    r = np.asarray(r, float)
    if degree < 0 or degree % 2:
        raise ValueError("degree must be even and nonnegative")
    mons = monomials(degree)
    if len(r) == 0:
        raise ValueError("no samples")
    v_range = tuple(v_range or (float(v.min()), float(v.max())))
    delta_range = tuple(delta_range or (float(delta.min()), float(delta.max())))

    X = _design(v, delta, mons)
    gv, gd = np.meshgrid(np.linspace(*v_range, grid), np.linspace(*delta_range, grid))
    G = _design(gv.ravel(), gd.ravel(), mons)

    # column scaling keeps the LP well conditioned for v up to ~15
    scale = np.maximum(np.abs(np.vstack([X, G])).max(axis=0), 1e-300)
    Xs, Gs = X / scale, G / scale
    if np.linalg.matrix_rank(Xs) < len(mons):
        warnings.warn("rank-deficient monomial basis on the sample set", RuntimeWarning, stacklevel=2)

    n = len(mons)
    # variables: scaled coefficients w (n), bound t on |w|
    cost_vec = np.concatenate([Xs.sum(axis=0), [RIDGE]])
    A_ub = np.vstack([
        np.hstack([-Xs, np.zeros((len(r), 1))]),
        np.hstack([-Gs, np.zeros((len(Gs), 1))]),
        np.hstack([np.eye(n), -np.ones((n, 1))]),
        np.hstack([-np.eye(n), -np.ones((n, 1))]),
    ])
    b_ub = np.concatenate([-r, np.zeros(len(Gs)), np.zeros(2 * n)])
    bounds = [(None, None)] * n + [(0, None)]
    res = linprog(cost_vec, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise RuntimeError(f"radius LP failed: {res.message}")
    coeffs = res.x[:n] / scale

    # remove residual LP infeasibility by lifting the constant term
    gap = X @ coeffs - r
    lift = max(0.0, -float(gap.min()))
    if lift > 0.0:
        coeffs[0] += lift
        gap = gap + lift
    gvals = G @ coeffs
    report = {
        "samples": int(len(r)),
        "objective_residual": float(gap.sum()),
        "max_violation": float(max(0.0, -gap.min())),
        "max_gap": float(gap.max()),
        "min_grid_value": float(gvals.min()),
        "constant_lift": lift,
    }
    return RadiusModel(degree, coeffs, v_range, delta_range, report)


@dataclass
class FitConfig:
    """Sampling grid for the car radius model."""

    v: tuple = (0.0, 15.0, 0.375)
    delta: tuple = (-0.6, 0.6, 0.03)
    a: tuple = (-4.0, 0.0, 4.0)
    s: tuple = (-0.6, 0.0, 0.6)
    dt: float = 10.0 / 13.0
    substeps: int = 100
    degree: int = 8
    L: float = 2.7
    vehicle: list = field(default_factory=lambda: [[2.5, 1.0], [-2.5, 1.0], [-2.5, -1.0], [2.5, -1.0]])
    heldout: int = 200
    seed: int = 0
    synthetic: str | None = None  # "v2delta2": fit r = v^2 delta^2 instead of the car

    @classmethod
    def from_json(cls, obj: dict) -> "FitConfig":
        known = {k: obj[k] for k in cls.__dataclass_fields__ if k in obj}
        for key in ("v", "delta", "a", "s"):
            if key in known:
                known[key] = tuple(known[key])
        return cls(**known)

    def to_json(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        for key in ("v", "delta", "a", "s"):
            out[key] = [float(x) for x in out[key]]
        return out

    def grid(self, lo_hi_step) -> np.ndarray:
        """``(lo, hi, step)`` -> evenly spaced values; ``lo == hi`` gives a
        single value."""
        if len(lo_hi_step) != 3:
            raise ValueError(f"grid must be (lo, hi, step), got {lo_hi_step}")
        lo, hi, step = map(float, lo_hi_step)
        if not (np.isfinite(lo) and np.isfinite(hi) and np.isfinite(step)) or step <= 0 or hi < lo:
            raise ValueError(f"degenerate grid {lo_hi_step}")
        n = int(round((hi - lo) / step)) + 1
        return np.linspace(lo, hi, n)

    def validate(self) -> None:
        self.grid(self.v)
        self.grid(self.delta)
        for key in ("a", "s"):
            vals = np.asarray(getattr(self, key), float)
            if vals.size == 0 or not np.all(np.isfinite(vals)):
                raise ValueError(f"input set {key} must be a nonempty list of numbers")
        if not self.dt > 0 or self.substeps < 2 or self.heldout < 0:
            raise ValueError("need dt > 0, substeps >= 2, heldout >= 0")
        if self.degree < 0 or self.degree % 2:
            raise ValueError("degree must be even and nonnegative")
        if self.synthetic not in (None, "v2delta2"):
            raise ValueError(f"unknown synthetic target {self.synthetic!r}")
        verts = np.asarray(self.vehicle, float)
        if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 1:
            raise ValueError("vehicle must be a list of 2D vertices")


def generate_samples(cfg: FitConfig, A: ConvexShape):
    """Radii on the (v, delta) grid, maximized over the input grid."""
    vs, ds = cfg.grid(cfg.v), cfg.grid(cfg.delta)
    if cfg.synthetic == "v2delta2":
        V_, D_ = (g.ravel() for g in np.meshgrid(vs, ds, indexing="ij"))
        return V_, D_, V_**2 * D_**2
    us = np.array(list(itertools.product(cfg.a, cfg.s)), dtype=float)
    V_, D_ = np.meshgrid(vs, ds, indexing="ij")
    V_, D_ = V_.ravel(), D_.ravel()
    n = len(V_)
    states = np.zeros((n * len(us), 5))
    states[:, 3] = np.repeat(V_, len(us))
    states[:, 4] = np.repeat(D_, len(us))
    inputs = np.tile(us, (n, 1))
    radii = sample_radii(states, inputs, cfg.dt, cfg.substeps, A, CarParams(cfg.L))
    return V_, D_, radii.reshape(n, len(us)).max(axis=1)


def heldout_statistics(model: RadiusModel, cfg: FitConfig, A: ConvexShape, tol: float = 5e-3) -> dict:
    """Compare the model against fresh random samples inside the domain."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.heldout
    states = np.zeros((n, 5))
    states[:, 3] = rng.uniform(*model.v_range, n)
    states[:, 4] = rng.uniform(*model.delta_range, n)
    inputs = np.column_stack([rng.uniform(min(cfg.a), max(cfg.a), n),
                              rng.uniform(min(cfg.s), max(cfg.s), n)])
    radii = sample_radii(states, inputs, cfg.dt, cfg.substeps, A, CarParams(cfg.L))
    pred = model.values(states[:, 3], states[:, 4])
    short = radii - pred
    return {
        "count": n,
        "failures": int(np.sum(short > 0.0)),
        "failures_over_tol": int(np.sum(short > tol)),
        "worst_shortfall": float(max(0.0, short.max())),
        "states": states,
        "inputs": inputs,
        "radii": radii,
        "predicted": pred,
    }
