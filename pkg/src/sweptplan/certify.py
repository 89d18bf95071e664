"""Smooth certificate rows proving a minimum signed distance.

A certificate ``(c, alpha, beta)`` with unit ``c`` shows that the vehicle
lies in the halfplane ``{c.x >= alpha + c.p}`` and the obstacle in
``{c.x <= beta + c.d}``; the gap between the two halfplanes bounds the
signed distance from below. For shapes that are hulls of several members,
one row per member bounds ``alpha`` (resp. ``beta``).

Every row follows the convention ``g <= 0`` (inequalities) or ``h = 0``
(norm equality). Jacobians are analytic and dense over the block's own
variables, listed in :attr:`ResidualBlock.columns`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import DELTA, NX, PSI, V
from .geom import (DEFAULT_EPS, ConvexShape, centroid, member_cost_grad,
                   member_support_grad, rotation, rotation_and_derivative, smooth_members)
from .sweptfit import RadiusModel, eval_radius

STATE_COLS = ("p_x", "p_y", "psi", "v", "delta")


@dataclass
class CertificateVars:
    c: np.ndarray
    alpha: float | None = None
    beta: float | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)

    def as_vector(self, has_alpha: bool, has_beta: bool) -> np.ndarray:
        out = list(self.c)
        if has_alpha:
            out.append(self.alpha)
        if has_beta:
            out.append(self.beta)
        return np.array(out, dtype=float)

    @classmethod
    def from_vector(cls, z, has_alpha: bool, has_beta: bool) -> "CertificateVars":
        z = np.asarray(z, dtype=float)
        i = 2
        alpha = beta = None
        if has_alpha:
            alpha = float(z[i])
            i += 1
        if has_beta:
            beta = float(z[i])
        return cls(z[:2].copy(), alpha, beta)


@dataclass(frozen=True)
class ObstacleSpec:
    """Obstacle base shape with per-step placements.

    ``poses`` is either a single ``(angle, (x, y))`` pair (static obstacle)
    or one pair per time index. ``w`` is the swept-volume inflation per
    interval (a scalar applies to all intervals).
    """

    shape: ConvexShape
    poses: tuple = ((0.0, (0.0, 0.0)),)
    w: float | tuple = 0.0

    def __post_init__(self):
        object.__setattr__(self, "poses", tuple((float(a), tuple(map(float, t))) for a, t in self.poses))
        ws = np.atleast_1d(np.asarray(self.w, dtype=float))
        if np.any(ws < 0):
            raise ValueError("obstacle inflation must be nonnegative")
        object.__setattr__(self, "members", tuple(smooth_members(self.shape)))

    @property
    def static(self) -> bool:
        return len(set(self.poses)) == 1

    @property
    def n_members(self) -> int:
        return len(self.members)

    def pose(self, k: int):
        angle, t = self.poses[0] if len(self.poses) == 1 else self.poses[k]
        return rotation(angle), np.array(t)

    def w_at(self, k: int) -> float:
        if np.ndim(self.w) == 0:
            return float(self.w)
        return float(self.w[k])

    def placed_centroid(self, k: int) -> np.ndarray:
        S, d = self.pose(k)
        return S @ centroid(self.shape) + d


@dataclass
class ResidualBlock:
    g: np.ndarray                 # inequality values, feasible when <= 0
    Jg: np.ndarray
    h: np.ndarray                 # equality values
    Jh: np.ndarray
    columns: tuple = field(default_factory=tuple)

    @property
    def n_rows(self) -> int:
        return len(self.g) + len(self.h)


def _vehicle_member_rows(members, x, c, eps):
    """cost_i(R(psi)^T c) with gradients w.r.t. c and psi for every member."""
    R, dR = rotation_and_derivative(x[PSI])
    d = R.T @ c
    dd_dpsi = dR.T @ c
    vals, gc, gpsi = [], [], []
    for m in members:
        mu, gm = member_cost_grad(m, d, eps)
        vals.append(mu)
        gc.append(R @ gm)
        gpsi.append(gm @ dd_dpsi)
    return np.array(vals), np.array(gc), np.array(gpsi)


def _obstacle_member_rows(members, S, c, eps):
    d = S.T @ c
    vals, gc = [], []
    for m in members:
        sg, gm = member_support_grad(m, d, eps)
        vals.append(sg)
        gc.append(S @ gm)
    return np.array(vals), np.array(gc)


def _norm_rows(c, ncols, ci):
    row = np.zeros((1, ncols))
    row[0, ci:ci + 2] = 2.0 * c
    return np.array([c @ c - 1.0]), row


def _check_mode(gamma, relaxed):
    if relaxed and not gamma > 0:
        raise ValueError("relaxed norm condition requires gamma > 0")


def discrete_layout(n_A: int, n_B: int):
    """``(has_alpha, has_beta)`` for the per-knot certificate."""
    return n_A > 1, n_B > 1


def continuous_layout(n_A: int, n_B: int, static: bool):
    return True, not (n_B == 1 and static)


def discrete_residuals(x_k, cert: CertificateVars, A: ConvexShape, obs: ObstacleSpec,
                       gamma: float, k: int = 0, eps: float = DEFAULT_EPS,
                       relaxed: bool = False) -> ResidualBlock:
    """Rows certifying ``sd(V(x_k), O_k) >= gamma``.

    Columns: the five state entries, ``c``, then ``alpha`` and ``beta`` when
    they are not eliminated (single-member shapes substitute them directly).
    """
    _check_mode(gamma, relaxed)
    x = np.asarray(x_k, dtype=float)
    c = np.asarray(cert.c, dtype=float)
    A_members = smooth_members(A)
    has_a, has_b = discrete_layout(len(A_members), obs.n_members)
    cols = STATE_COLS + ("c_x", "c_y") + (("alpha",) if has_a else ()) + (("beta",) if has_b else ())
    nc = len(cols)
    ci, ai = NX, NX + 2
    bi = ai + (1 if has_a else 0)

    mu, mu_c, mu_psi = _vehicle_member_rows(A_members, x, c, eps)
    S, d = obs.pose(k)
    sg, sg_c = _obstacle_member_rows(obs.members, S, c, eps)

    g, J = [], []
    # alpha value and its gradient row (over all columns)
    alpha_row = np.zeros(nc)
    if has_a:
        alpha = cert.alpha
        alpha_row[ai] = 1.0
        for i in range(len(mu)):
            row = np.zeros(nc)
            row[ai] = 1.0
            row[ci:ci + 2] = -mu_c[i]
            row[PSI] = -mu_psi[i]
            g.append(alpha - mu[i])
            J.append(row)
    else:
        alpha = mu[0]
        alpha_row[ci:ci + 2] = mu_c[0]
        alpha_row[PSI] = mu_psi[0]
    beta_row = np.zeros(nc)
    if has_b:
        beta = cert.beta
        beta_row[bi] = 1.0
        for j in range(len(sg)):
            row = np.zeros(nc)
            row[bi] = -1.0
            row[ci:ci + 2] = sg_c[j]
            g.append(sg[j] - beta)
            J.append(row)
    else:
        beta = sg[0]
        beta_row[ci:ci + 2] = sg_c[0]

    pd = x[:2] - d
    row = -alpha_row + beta_row
    row[:2] -= c
    row[ci:ci + 2] -= pd
    g.append(gamma - alpha + beta - c @ pd)
    J.append(row)

    nval, nrow = _norm_rows(c, nc, ci)
    if relaxed:
        g.append(nval[0])
        J.append(nrow[0])
        h, Jh = np.zeros(0), np.zeros((0, nc))
    else:
        h, Jh = nval, nrow
    return ResidualBlock(np.array(g), np.array(J).reshape(-1, nc), h, Jh, cols)


def continuous_residuals(x_k, x_k1, u_k, cert: CertificateVars, A: ConvexShape,
                         obs: ObstacleSpec, gamma: float, rmodel: RadiusModel, k: int = 0,
                         eps: float = DEFAULT_EPS, relaxed: bool = False) -> ResidualBlock:
    """Rows certifying clearance of the whole step ``[t_k, t_{k+1}]``.

    The hull of the two vehicle footprints, grown by ``r(v_k, delta_k)``,
    must keep ``gamma + w_k`` from the hull of the two obstacle placements.
    Columns: state k (5), state k+1 (5), ``c``, ``alpha``, and ``beta``
    unless the obstacle is static with a single member. ``u_k`` enters only
    through the radius model, which depends on ``(v_k, delta_k)`` alone.
    """
    if rmodel is None:
        raise ValueError("continuous certificates need a radius model")
    _check_mode(gamma, relaxed)
    x0 = np.asarray(x_k, dtype=float)
    x1 = np.asarray(x_k1, dtype=float)
    c = np.asarray(cert.c, dtype=float)
    A_members = smooth_members(A)
    has_a, has_b = continuous_layout(len(A_members), obs.n_members, obs.static)
    cols = (tuple(f"{s}_k" for s in STATE_COLS) + tuple(f"{s}_k1" for s in STATE_COLS)
            + ("c_x", "c_y", "alpha") + (("beta",) if has_b else ()))
    nc = len(cols)
    ci, ai, bi = 2 * NX, 2 * NX + 2, 2 * NX + 3
    o1 = NX  # offset of x_{k+1} columns

    mu0, mu0_c, mu0_psi = _vehicle_member_rows(A_members, x0, c, eps)
    mu1, mu1_c, mu1_psi = _vehicle_member_rows(A_members, x1, c, eps)
    S0, d0 = obs.pose(k)
    S1, d1 = obs.pose(k + 1)
    s0, s0_c = _obstacle_member_rows(obs.members, S0, c, eps)
    s1, s1_c = _obstacle_member_rows(obs.members, S1, c, eps)
    dp = x1[:2] - x0[:2]
    dd = d1 - d0

    g, J = [], []
    alpha = cert.alpha
    for i in range(len(mu0)):
        row = np.zeros(nc)
        row[ai] = 1.0
        row[ci:ci + 2] = -mu0_c[i]
        row[PSI] = -mu0_psi[i]
        g.append(alpha - mu0[i])
        J.append(row)
    for i in range(len(mu1)):
        row = np.zeros(nc)
        row[ai] = 1.0
        row[ci:ci + 2] = -mu1_c[i] - dp
        row[o1 + PSI] = -mu1_psi[i]
        row[o1:o1 + 2] = -c
        row[0:2] = c
        g.append(alpha - mu1[i] - c @ dp)
        J.append(row)

    beta_row = np.zeros(nc)
    if has_b:
        beta = cert.beta
        beta_row[bi] = 1.0
        for j in range(len(s0)):
            row = np.zeros(nc)
            row[bi] = -1.0
            row[ci:ci + 2] = s0_c[j]
            g.append(s0[j] - beta)
            J.append(row)
        for j in range(len(s1)):
            row = np.zeros(nc)
            row[bi] = -1.0
            row[ci:ci + 2] = s1_c[j] + dd
            g.append(s1[j] + c @ dd - beta)
            J.append(row)
    else:
        beta = s0[0]
        beta_row[ci:ci + 2] = s0_c[0]

    r, dr_dv, dr_dd = eval_radius(rmodel, x0[V], x0[DELTA])
    pd = x0[:2] - d0
    row = beta_row.copy()
    row[ai] -= 1.0
    row[:2] -= c
    row[ci:ci + 2] -= pd
    row[V] += dr_dv
    row[DELTA] += dr_dd
    g.append(gamma - alpha + beta - c @ pd + r + obs.w_at(k))
    J.append(row)

    nval, nrow = _norm_rows(c, nc, ci)
    if relaxed:
        g.append(nval[0])
        J.append(nrow[0])
        h, Jh = np.zeros(0), np.zeros((0, nc))
    else:
        h, Jh = nval, nrow
    return ResidualBlock(np.array(g), np.array(J).reshape(-1, nc), h, Jh, cols)


def init_certificate(x_k, A: ConvexShape, obs: ObstacleSpec, k: int = 0, x_k1=None,
                     eps: float = DEFAULT_EPS) -> CertificateVars:
    """Direction from the obstacle centroid to the vehicle, with ``alpha``
    and ``beta`` at the values that make their member rows tight."""
    x = np.asarray(x_k, dtype=float)
    off = x[:2] - obs.placed_centroid(k)
    nrm = np.linalg.norm(off)
    c = off / nrm if nrm > 0 else np.array([1.0, 0.0])
    members = smooth_members(A)
    mu, _, _ = _vehicle_member_rows(members, x, c, eps)
    alpha = mu.min()
    S, _ = obs.pose(k)
    beta = _obstacle_member_rows(obs.members, S, c, eps)[0].max()
    if x_k1 is not None:
        x1 = np.asarray(x_k1, dtype=float)
        mu1, _, _ = _vehicle_member_rows(members, x1, c, eps)
        alpha = min(alpha, (mu1 + c @ (x1[:2] - x[:2])).min())
        S1, d1 = obs.pose(k + 1)
        _, d0 = obs.pose(k)
        s1 = _obstacle_member_rows(obs.members, S1, c, eps)[0] + c @ (d1 - d0)
        beta = max(beta, s1.max())
    return CertificateVars(c, float(alpha), float(beta))


def formulation_stats(n: int, n_A: int, n_B: int, m_A: int = 0, m_B: int = 0,
                      mode: str = "discrete", family: str = "polytope", static: bool = True):
    """Variables/constraints per signed-distance constraint, ours vs. the
    dual (multiplier) formulation. Dual counts exist only for discrete mode.

    Returns ``(ours_vars, ours_cons, dual_vars, dual_cons)``.
    """
    if family not in ("polytope", "ellipsoid"):
        raise ValueError(f"unknown shape family {family!r}")
    if mode == "discrete":
        if family == "polytope":
            return 2 + n, 2 + n_A + n_B, m_A + m_B, 2 + n + m_A + m_B
        return n, 2, 2 * (n + 1), 4 + n
    if mode == "continuous":
        if family == "polytope":
            return 2 + n, 2 + 2 * n_A + 2 * n_B, None, None
        # single-member shapes: alpha kept (two poses), beta kept unless static
        nb_rows = 0 if static else 2
        return n + 1 + (0 if static else 1), 2 + 2 + nb_rows, None, None
    raise ValueError(f"unknown mode {mode!r}")
