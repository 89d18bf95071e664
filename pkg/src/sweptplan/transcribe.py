"""Multiple-shooting transcription of the car planning problem.

Decision vector layout::

    [ x_0 .. x_N | u_0 .. u_{N-1} | certificates (obstacle-major, step-minor) ]

Discrete mode attaches one certificate per knot and obstacle; continuous
mode one per interval and obstacle.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import certify
from .certify import CertificateVars, ObstacleSpec
from .dynamics import NU, NX, CarParams, rk4_step_jac, simulate_fine, vehicle_shape
from .geom import ConvexShape, Hull, Placed, shape_from_json, shape_to_json, smooth_members
from .nlp import Block, NlpProblem, SolveReport, SolverOptions, solve
from .sdcalc import signed_distance
from .sweptfit import RadiusModel

PINNED = (0, 1, 2)  # p_x, p_y, psi fixed at both ends
DEFAULT_BOUNDS = {"v": (0.0, 15.0), "a": (-4.0, 4.0), "s": (-0.6, 0.6), "delta": (-0.6, 0.6)}


@dataclass
class Scenario:
    start: np.ndarray
    goal: np.ndarray
    T_f: float
    N: int
    vehicle: ConvexShape
    obstacles: list
    car: CarParams = field(default_factory=CarParams)
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    gamma: float = 0.0
    mode: str = "discrete"
    rmodel: RadiusModel | None = None
    name: str = "scenario"
    waypoints: list = field(default_factory=list)
    source: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.start = np.asarray(self.start, float)
        self.goal = np.asarray(self.goal, float)
        if self.N < 1 or not self.T_f > 0:
            raise ValueError("need N >= 1 and T_f > 0")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.mode not in ("discrete", "continuous"):
            raise ValueError(f"unknown mode {self.mode!r}")
        for key, (lo, hi) in self.bounds.items():
            if lo > hi:
                raise ValueError(f"empty bound box for {key}")

    @property
    def dt(self) -> float:
        return self.T_f / self.N

    @classmethod
    def from_json(cls, obj: dict, base_dir: str = ".") -> "Scenario":
        if obj.get("schema", 1) != 1:
            raise ValueError("unsupported scenario schema")

        def state(d):
            return [d.get("p_x", 0.0), d.get("p_y", 0.0), d.get("psi", 0.0),
                    d.get("v", 0.0), d.get("delta", 0.0)]

        obstacles = []
        for o in obj.get("obstacles", []):
            poses = o.get("poses") or [o.get("pose", [0.0, 0.0, 0.0])]
            obstacles.append(ObstacleSpec(shape_from_json(o["shape"]),
                                          tuple((p[2], (p[0], p[1])) for p in poses),
                                          o.get("w", 0.0)))
        bounds = dict(DEFAULT_BOUNDS)
        bounds.update({k: tuple(v) for k, v in obj.get("bounds", {}).items()})
        rmodel = None
        if obj.get("radius_model"):
            rmodel = RadiusModel.load(os.path.join(base_dir, obj["radius_model"]))
        return cls(state(obj["start"]), state(obj["goal"]), float(obj["T_f"]), int(obj["N"]),
                   shape_from_json(obj["vehicle_shape"]), obstacles,
                   CarParams(**obj.get("car", {})), bounds, float(obj.get("gamma", 0.0)),
                   obj.get("mode", "discrete"), rmodel, obj.get("name", "scenario"),
                   [tuple(w) for w in obj.get("init_waypoints", [])], obj)

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path) as fh:
            return cls.from_json(json.load(fh), os.path.dirname(os.path.abspath(path)))

    def to_json(self) -> dict:
        def state(x):
            return dict(zip(("p_x", "p_y", "psi", "v", "delta"), map(float, x)))

        obs = []
        for o in self.obstacles:
            poses = [[float(t[0]), float(t[1]), float(a)] for a, t in o.poses]
            entry = {"shape": shape_to_json(o.shape), "w": o.w}
            if len(poses) == 1:
                entry["pose"] = poses[0]
            else:
                entry["poses"] = poses
            obs.append(entry)
        return {
            "schema": 1, "name": self.name, "start": state(self.start), "goal": state(self.goal),
            "T_f": self.T_f, "N": self.N, "car": {"L": self.car.L},
            "vehicle_shape": shape_to_json(self.vehicle), "obstacles": obs,
            "bounds": {k: list(v) for k, v in self.bounds.items()},
            "gamma": self.gamma, "mode": self.mode,
            "init_waypoints": [list(map(float, w)) for w in self.waypoints],
        }


def _layout(sc: Scenario):
    n_A = len(smooth_members(sc.vehicle))
    N = sc.N
    n_cert = N + 1 if sc.mode == "discrete" else N
    offset = NX * (N + 1) + NU * N
    flags, offsets, sizes = [], [], []
    for o in sc.obstacles:
        if sc.mode == "discrete":
            ha, hb = certify.discrete_layout(n_A, o.n_members)
        else:
            ha, hb = certify.continuous_layout(n_A, o.n_members, o.static)
        size = 2 + int(ha) + int(hb)
        flags.append((ha, hb))
        sizes.append(size)
        offsets.append([offset + k * size for k in range(n_cert)])
        offset += n_cert * size
    return n_cert, flags, sizes, offsets, offset


class _Cached:
    """Memoize the last certificate evaluation so the inequality and norm
    blocks of one certificate share the work."""

    def __init__(self, fn):
        self.fn = fn
        self.key = None
        self.val = None

    def __call__(self, zl):
        key = zl.tobytes()
        if key != self.key:
            self.val = self.fn(zl)
            self.key = key
        return self.val


@dataclass
class Ocp:
    problem: NlpProblem
    scenario: Scenario
    n_cert: int
    cert_flags: list
    cert_sizes: list
    cert_offsets: list

    def x_slice(self, k):
        return slice(NX * k, NX * (k + 1))

    def u_slice(self, k):
        o = NX * (self.scenario.N + 1)
        return slice(o + NU * k, o + NU * (k + 1))

    def states(self, z) -> np.ndarray:
        return np.asarray(z[:NX * (self.scenario.N + 1)]).reshape(-1, NX)

    def inputs(self, z) -> np.ndarray:
        o = NX * (self.scenario.N + 1)
        return np.asarray(z[o:o + NU * self.scenario.N]).reshape(-1, NU)

    def certificates(self, z) -> list:
        out = []
        for j, offs in enumerate(self.cert_offsets):
            ha, hb = self.cert_flags[j]
            size = self.cert_sizes[j]
            out.append([CertificateVars.from_vector(z[o:o + size], ha, hb) for o in offs])
        return out

    def cert_rows(self, j: int) -> int:
        """Inequality plus equality rows of one certificate of obstacle j."""
        return sum(b.size for b in self.problem.ineq + self.problem.eq
                   if b.name.startswith(f"cert[{j},0]"))


def build_ocp(sc: Scenario) -> Ocp:
    if sc.mode == "continuous" and sc.rmodel is None:
        raise ValueError("continuous mode needs a radius model")
    N, dt, par = sc.N, sc.dt, sc.car
    n_cert, flags, sizes, offsets, n = _layout(sc)
    nxu = NX * (N + 1)
    X = np.arange(nxu).reshape(N + 1, NX)
    U = nxu + np.arange(NU * N).reshape(N, NU)

    names = {"X": slice(0, nxu), "U": slice(nxu, nxu + NU * N)}
    for j, offs in enumerate(offsets):
        names[f"cert{j}"] = slice(offs[0], offs[-1] + sizes[j])

    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    b = sc.bounds
    lo[X[:, 3]], hi[X[:, 3]] = b["v"]
    lo[X[:, 4]], hi[X[:, 4]] = b["delta"]
    lo[U[:, 0]], hi[U[:, 0]] = b["a"]
    lo[U[:, 1]], hi[U[:, 1]] = b["s"]

    def objective(z):
        u = z[nxu:nxu + NU * N]
        grad = np.zeros(n)
        grad[nxu:nxu + NU * N] = 2.0 * u
        return float(u @ u), grad

    eq, ineq = [], []
    pins = list(PINNED)
    eye_pins = np.eye(NX)[pins]
    eq.append(Block("start", len(pins), X[0], lambda xl: (xl[pins] - sc.start[pins], eye_pins)))
    eq.append(Block("goal", len(pins), X[N], lambda xl: (xl[pins] - sc.goal[pins], eye_pins)))

    dyn_cols = np.concatenate([X.ravel(), U.ravel()])

    def dynamics(zl):
        x = zl[:nxu].reshape(N + 1, NX)
        u = zl[nxu:].reshape(N, NU)
        xn, Jx, Ju = rk4_step_jac(x[:-1], u, dt, par)
        vals = (x[1:] - xn).ravel() / dt
        J = np.zeros((NX * N, len(zl)))
        for k in range(N):
            rows = slice(NX * k, NX * (k + 1))
            J[rows, NX * (k + 1):NX * (k + 2)] = np.eye(NX) / dt
            J[rows, NX * k:NX * (k + 1)] = -Jx[k] / dt
            J[rows, nxu + NU * k:nxu + NU * (k + 1)] = -Ju[k] / dt
        return vals, J

    eq.append(Block("dynamics", NX * N, dyn_cols, dynamics))

    for j, obs in enumerate(sc.obstacles):
        ha, hb = flags[j]
        size = sizes[j]
        for k in range(n_cert):
            cc = np.arange(offsets[j][k], offsets[j][k] + size)
            if sc.mode == "discrete":
                cols = np.concatenate([X[k], cc])

                def fn(zl, k=k, obs=obs, ha=ha, hb=hb):
                    cert = CertificateVars.from_vector(zl[NX:], ha, hb)
                    return certify.discrete_residuals(zl[:NX], cert, sc.vehicle, obs, sc.gamma, k)
            else:
                cols = np.concatenate([X[k], X[k + 1], cc])

                def fn(zl, k=k, obs=obs, ha=ha, hb=hb):
                    cert = CertificateVars.from_vector(zl[2 * NX:], ha, hb)
                    return certify.continuous_residuals(zl[:NX], zl[NX:2 * NX], None, cert,
                                                        sc.vehicle, obs, sc.gamma, sc.rmodel, k)
            cached = _Cached(fn)
            z_probe = np.zeros(len(cols))
            z_probe[len(cols) - size] = 1.0      # c = (1, 0)
            probe = fn(z_probe)
            ineq.append(Block(f"cert[{j},{k}].rows", len(probe.g), cols,
                              lambda zl, f=cached: (f(zl).g, f(zl).Jg)))
            if len(probe.h):
                eq.append(Block(f"cert[{j},{k}].norm", len(probe.h), cols,
                                lambda zl, f=cached: (f(zl).h, f(zl).Jh)))

    hess = np.zeros((n, n))
    iu = np.arange(nxu, nxu + NU * N)
    hess[iu, iu] = 2.0
    p = NlpProblem(n, objective, eq, ineq, lo, hi, names, objective_hessian=hess)
    return Ocp(p, sc, n_cert, flags, sizes, offsets)


def _polyline_guess(sc: Scenario) -> np.ndarray:
    """Knots spread evenly by arc length along start -> waypoints -> goal,
    heading along the local segment (end knots keep their pinned headings)."""
    pts = np.array([sc.start[:2], *sc.waypoints, sc.goal[:2]], dtype=float)
    seg = np.diff(pts, axis=0)
    seglen = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seglen)])
    s = np.linspace(0.0, cum[-1], sc.N + 1)
    X = np.zeros((sc.N + 1, NX))
    X[:, 0] = np.interp(s, cum, pts[:, 0])
    X[:, 1] = np.interp(s, cum, pts[:, 1])
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    X[:, 2] = np.arctan2(seg[idx, 1], seg[idx, 0])
    X[0, 2], X[-1, 2] = sc.start[2], sc.goal[2]
    X[:, 3] = cum[-1] / sc.T_f
    return X


def initial_guess(sc: Scenario, ocp: Ocp | None = None) -> np.ndarray:
    """Straight-line interpolation of position and heading at constant speed
    ``|p_F - p_S| / T_f``, zero inputs, certificates from
    :func:`certify.init_certificate`. With ``sc.waypoints`` the knots follow
    the polyline through them instead."""
    ocp = ocp or build_ocp(sc)
    N = sc.N
    z = np.zeros(ocp.problem.n)
    if sc.waypoints:
        X = _polyline_guess(sc)
    else:
        lam = np.linspace(0.0, 1.0, N + 1)[:, None]
        X = np.zeros((N + 1, NX))
        X[:, :3] = (1 - lam) * sc.start[:3] + lam * sc.goal[:3]
        X[:, 3] = np.linalg.norm(sc.goal[:2] - sc.start[:2]) / sc.T_f
    z[:NX * (N + 1)] = X.ravel()
    for j, obs in enumerate(sc.obstacles):
        ha, hb = ocp.cert_flags[j]
        for k, off in enumerate(ocp.cert_offsets[j]):
            nxt = X[k + 1] if sc.mode == "continuous" else None
            cert = certify.init_certificate(X[k], sc.vehicle, obs, k, nxt)
            z[off:off + ocp.cert_sizes[j]] = cert.as_vector(ha, hb)
    return ocp.problem.project(z)


@dataclass
class Trajectory:
    states: np.ndarray
    inputs: np.ndarray
    certificates: list
    report: SolveReport
    audit: dict | None = None

    def to_json(self) -> dict:
        certs = [[{"c": c.c.tolist(), "alpha": c.alpha, "beta": c.beta} for c in row]
                 for row in self.certificates]
        return {
            "states": self.states.tolist(),
            "inputs": self.inputs.tolist(),
            "certificates": certs,
            "solver": self.report.summary(),
        }


def plan(sc: Scenario, opts: SolverOptions | None = None, z0=None) -> Trajectory:
    ocp = build_ocp(sc)
    if z0 is None:
        z0 = initial_guess(sc, ocp)
    rep = solve(ocp.problem, z0, opts)
    return Trajectory(ocp.states(rep.z), ocp.inputs(rep.z), ocp.certificates(rep.z), rep)


def audit_trajectory(tr: Trajectory, sc: Scenario, m: int = 100, workers: int = 1) -> dict:
    """Oracle signed distance of every fine-simulated pose to every obstacle.

    Returns ``rows`` (interval, pose_index, sd, p_x, p_y) with sd minimized
    over obstacles, the overall ``min_sd`` (``inf`` without obstacles) and
    ``hull_sd`` per interval: sd between the hull of the two knot
    footprints and the hull of the two obstacle placements. Intervals are
    independent, so ``workers > 1`` spreads them over a thread pool; the
    output does not depend on the worker count.
    """
    def interval(k):
        fine = simulate_fine(tr.states[k], tr.inputs[k], sc.dt, m, sc.car)
        rows = []
        for i, x in enumerate(fine):
            V_ = vehicle_shape(x, sc.vehicle)
            sd = min((signed_distance(V_, _placed_obstacle(o, k)).sd for o in sc.obstacles),
                     default=np.inf)
            rows.append((k, i, sd, float(x[0]), float(x[1])))
        hull = np.inf
        if sc.obstacles:
            hv = Hull((vehicle_shape(tr.states[k], sc.vehicle), vehicle_shape(tr.states[k + 1], sc.vehicle)))
            hull = min(signed_distance(hv, Hull((_placed_obstacle(o, k), _placed_obstacle(o, k + 1)))).sd
                       for o in sc.obstacles)
        return rows, hull

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(interval, range(sc.N)))
    else:
        parts = [interval(k) for k in range(sc.N)]
    rows = [r for part, _ in parts for r in part]
    hull_sd = [h for _, h in parts]
    min_sd = min((r[2] for r in rows), default=np.inf)
    return {"rows": rows, "min_sd": min_sd, "hull_sd": hull_sd}


def _placed_obstacle(o: ObstacleSpec, k: int):
    angle, t = o.poses[0] if len(o.poses) == 1 else o.poses[min(k, len(o.poses) - 1)]
    return Placed(o.shape, angle, t)


def knot_sd(tr: Trajectory, sc: Scenario) -> np.ndarray:
    """Oracle sd at each knot (min over obstacles)."""
    return np.array([min((signed_distance(vehicle_shape(x, sc.vehicle), _placed_obstacle(o, k)).sd
                          for o in sc.obstacles), default=np.inf)
                     for k, x in enumerate(tr.states)])
