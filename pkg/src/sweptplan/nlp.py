"""Small dense NLP container and an augmented-Lagrangian solver.

    minimize f(z)  s.t.  h(z) = 0,  g(z) <= 0,  lo <= z <= hi

Residuals come in blocks; each block sees only its own slice of ``z`` and
returns values plus a dense Jacobian over that slice. The solver runs a
bound-constrained Newton method on

    L(z) = f + lam.h + rho/2 |h|^2 + 1/(2 rho) sum(max(0, mu + rho g)^2 - mu^2)

and updates multipliers between inner solves. Second-order terms of the
residuals come from forward differences of each block's Jacobian, which is
cheap because every block touches only a handful of variables.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)


class NonFiniteError(FloatingPointError):
    pass


@dataclass
class Block:
    name: str
    size: int
    cols: np.ndarray
    fun: Callable  # z[cols] -> (values (size,), jacobian (size, len(cols)))

    def __post_init__(self):
        self.cols = np.asarray(self.cols, dtype=int)


@dataclass
class NlpProblem:
    n: int
    objective: Callable  # z -> (f, grad)
    eq: list = field(default_factory=list)
    ineq: list = field(default_factory=list)
    lo: np.ndarray = None
    hi: np.ndarray = None
    names: dict = field(default_factory=dict)
    objective_hessian: np.ndarray = None  # constant Hessian of f, if known

    def __post_init__(self):
        self.lo = np.full(self.n, -np.inf) if self.lo is None else np.asarray(self.lo, float)
        self.hi = np.full(self.n, np.inf) if self.hi is None else np.asarray(self.hi, float)
        if np.any(self.lo > self.hi):
            raise ValueError("empty variable box")

    @property
    def m_eq(self) -> int:
        return sum(b.size for b in self.eq)

    @property
    def m_ineq(self) -> int:
        return sum(b.size for b in self.ineq)

    def slice_name(self, i: int) -> str:
        for name, sl in self.names.items():
            if sl.start <= i < sl.stop:
                return f"{name}[{i - sl.start}]"
        return f"z[{i}]"

    def _stack(self, blocks, z, m):
        vals = np.empty(m)
        J = np.zeros((m, self.n))
        r = 0
        for b in blocks:
            v, jb = b.fun(z[b.cols])
            v = np.asarray(v, float)
            jb = np.asarray(jb, float)
            if v.shape != (b.size,) or jb.shape != (b.size, len(b.cols)):
                raise ValueError(f"block {b.name}: output shape mismatch")
            if not (np.all(np.isfinite(v)) and np.all(np.isfinite(jb))):
                bad = sorted({self.slice_name(i) for i in b.cols})
                raise NonFiniteError(f"non-finite output in block {b.name} over {bad[0]}..{bad[-1]}")
            vals[r:r + b.size] = v
            J[r:r + b.size, b.cols] += jb
            r += b.size
        return vals, J

    def evaluate(self, z):
        """``(f, grad, h, Jh, g, Jg)`` at ``z``."""
        z = np.asarray(z, float)
        f, grad = self.objective(z)
        grad = np.asarray(grad, float)
        if not (np.isfinite(f) and np.all(np.isfinite(grad))):
            raise NonFiniteError("non-finite objective")
        h, Jh = self._stack(self.eq, z, self.m_eq)
        g, Jg = self._stack(self.ineq, z, self.m_ineq)
        return float(f), grad, h, Jh, g, Jg

    def curvature(self, z, w_eq, w_ineq, h_fd: float = 1e-7) -> np.ndarray:
        """``hess f + sum_i w_i hess r_i`` by forward differences of each
        block Jacobian over that block's own columns. Blocks whose weights
        all vanish are skipped."""
        z = np.asarray(z, float)
        if self.objective_hessian is not None:
            H = np.array(self.objective_hessian, dtype=float)
        else:
            H = np.zeros((self.n, self.n))
            g0 = self.objective(z)[1]
            for j in range(self.n):
                step = h_fd * max(1.0, abs(z[j]))
                zp = z.copy()
                zp[j] += step
                H[:, j] = (self.objective(zp)[1] - g0) / step
        for blocks, w in ((self.eq, w_eq), (self.ineq, w_ineq)):
            r = 0
            for b in blocks:
                wb = w[r:r + b.size]
                r += b.size
                if not np.any(wb):
                    continue
                zl = z[b.cols]
                g0 = wb @ b.fun(zl)[1]
                Hb = np.empty((len(zl), len(zl)))
                for j in range(len(zl)):
                    step = h_fd * max(1.0, abs(zl[j]))
                    zp = zl.copy()
                    zp[j] += step
                    Hb[:, j] = (wb @ b.fun(zp)[1] - g0) / step
                H[np.ix_(b.cols, b.cols)] += Hb
        return 0.5 * (H + H.T)

    def project(self, z):
        return np.clip(z, self.lo, self.hi)


@dataclass
class SolverOptions:
    rho0: float = 10.0
    rho_growth: float = 10.0
    rho_max: float = 1e10
    tol_feas: float = 1e-6
    tol_kkt: float = 1e-6
    max_outer: int = 50
    max_inner: int = 500
    armijo: float = 1e-4

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SolveReport:
    status: str
    iterations: int
    z: np.ndarray
    eq_violation: float
    ineq_violation: float
    stationarity: float
    objective: float
    outer_iterations: int = 0
    history: list = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def summary(self) -> dict:
        return {
            "status": self.status,
            "iterations": self.iterations,
            "outer_iterations": self.outer_iterations,
            "eq_violation": self.eq_violation,
            "ineq_violation": self.ineq_violation,
            "stationarity": self.stationarity,
            "objective": self.objective,
        }


def _violation(h, g):
    hv = float(np.max(np.abs(h))) if h.size else 0.0
    gv = float(np.max(np.maximum(g, 0.0))) if g.size else 0.0
    return hv, gv


class _AugLag:
    def __init__(self, p: NlpProblem):
        self.p = p
        self.lam = np.zeros(p.m_eq)
        self.mu = np.zeros(p.m_ineq)
        self.rho = 1.0
        self.evals = 0

    def __call__(self, z):
        self.evals += 1
        f, df, h, Jh, g, Jg = self.p.evaluate(z)
        s = np.maximum(0.0, self.mu + self.rho * g)
        val = (f + self.lam @ h + 0.5 * self.rho * (h @ h)
               + (s @ s - self.mu @ self.mu) / (2.0 * self.rho))
        grad = df + Jh.T @ (self.lam + self.rho * h) + Jg.T @ s
        return val, grad

    def model(self, z):
        """Pieces of the Newton model at ``z``: the Hessian without the
        inequality penalty's Gauss-Newton term, the inequality Jacobian and
        the shifted values ``mu + rho g`` that decide which rows count."""
        f, df, h, Jh, g, Jg = self.p.evaluate(z)
        shifted = self.mu + self.rho * g
        H = self.p.curvature(z, self.lam + self.rho * h, np.maximum(0.0, shifted))
        H += self.rho * (Jh.T @ Jh)
        return H, Jg, shifted


def _projected_gradient(z, grad, lo, hi):
    return z - np.clip(z - grad, lo, hi)


def _damped_step(H, g, tau, scale):
    """``d = -(H + tau I)^-1 g``, raising ``tau`` until the matrix is
    positive definite. Returns ``(d, tau)``."""
    n = len(g)
    if n == 0:
        return np.zeros(0), tau
    eye = np.eye(n)
    while True:
        try:
            Lc = np.linalg.cholesky(H + tau * eye)
            return -np.linalg.solve(Lc.T, np.linalg.solve(Lc, g)), tau
        except np.linalg.LinAlgError:
            tau = max(10.0 * tau, 1e-8 * scale)


def _newton_box(al, z, lo, hi, tol, max_iter, c1):
    """Damped (Levenberg-Marquardt style) Newton method on a box.

    The inequality penalty is modelled by its exact piecewise quadratic
    ``1/(2 rho) max(0, s + rho Jg d)^2``; a few semismooth passes settle
    which rows are switched on along the step. The rest of the Lagrangian
    uses a plain second-order model. Each step solves the damped system
    over the free variables and is projected onto the box; ``tau`` adapts
    to the ratio of actual to predicted decrease like a trust region.
    Returns ``(z, f, grad, iterations)``.
    """
    n = len(z)
    f, g = al(z)
    tau = 0.0
    rho = al.rho
    it = 0
    while it < max_iter:
        pg = _projected_gradient(z, g, lo, hi)
        pgn = float(np.max(np.abs(pg)))
        if pgn <= tol:
            break
        it += 1
        # variables pinned at (or within a hair of) a bound, pushed outward
        eps = min(1e-8, pgn)
        active = ((z <= lo + eps) & (g > 0)) | ((z >= hi - eps) & (g < 0))
        free = ~active
        Hbase, Jg, shifted = al.model(z)
        sp = np.maximum(0.0, shifted)
        g_rest = g - Jg.T @ sp
        pen0 = sp @ sp
        Hff0 = Hbase[np.ix_(free, free)]
        noise = 1e-13 * max(1.0, abs(f))
        accepted = False
        for _ in range(60):
            rows = shifted > 0
            for _ in range(10):
                Ja = Jg[rows][:, free]
                Hff = Hff0 + rho * (Ja.T @ Ja)
                rhs = g_rest[free] + Ja.T @ shifted[rows]
                scale = max(1.0, float(np.max(np.abs(np.diag(Hff))))) if Hff.size else 1.0
                d = np.zeros(n)
                d[free], tau = _damped_step(Hff, rhs, tau, scale)
                zt = np.clip(z + d, lo, hi)
                sk = zt - z
                lin = shifted + rho * (Jg @ sk)
                new_rows = lin > 0
                if np.array_equal(new_rows, rows):
                    break
                rows = new_rows
            lp = np.maximum(0.0, lin)
            model = g_rest @ sk + 0.5 * sk @ Hbase @ sk + (lp @ lp - pen0) / (2.0 * rho)
            pred = -model
            if pred > 0:
                ft, gt = al(zt)
                ratio = (f - ft) / pred
                if ratio >= c1 or (f - ft >= -noise and pred <= noise):
                    accepted = True
                    break
            tau = max(4.0 * tau, 1e-8 * scale)
        if not accepted:
            break
        if ratio > 0.75:
            tau /= 3.0
        elif ratio < 0.25:
            tau *= 2.0
        step = np.max(np.abs(sk))
        z, f, g = zt, ft, gt
        if step == 0.0:
            break
    return z, f, g, it


def solve(p: NlpProblem, z0, opts: SolverOptions | None = None) -> SolveReport:
    """Augmented-Lagrangian solve from ``z0`` (projected into the box)."""
    opts = opts or SolverOptions()
    z = p.project(np.asarray(z0, float).copy())
    al = _AugLag(p)
    al.rho = opts.rho0
    f, _, h, _, g, _ = p.evaluate(z)
    prev_viol = max(_violation(h, g))
    best_viol = prev_viol
    history = []
    inner_total = 0
    omega = 1e-2
    status = "max_iter"
    outer = 0
    stat = np.inf
    for outer in range(1, opts.max_outer + 1):
        tol = max(opts.tol_kkt, omega)
        z, _, grad, its = _newton_box(al, z, p.lo, p.hi, tol, opts.max_inner, opts.armijo)
        inner_total += its
        stat = float(np.max(np.abs(_projected_gradient(z, grad, p.lo, p.hi))))
        f, _, h, _, g, _ = p.evaluate(z)
        hv, gv = _violation(h, g)
        viol = max(hv, gv)
        best_viol = min(best_viol, viol)
        history.append({"outer": outer, "rho": al.rho, "viol": viol, "best_viol": best_viol,
                        "stationarity": stat, "objective": f, "inner": its})
        log.debug("outer %d rho %.1e viol %.3e stat %.3e f %.6g inner %d",
                  outer, al.rho, viol, stat, f, its)
        # multiplier update; the inner gradient is then the Lagrangian gradient
        al.lam = al.lam + al.rho * h
        al.mu = np.maximum(0.0, al.mu + al.rho * g)
        if viol <= opts.tol_feas and stat <= opts.tol_kkt:
            status = "optimal"
            break
        if viol > 0.25 * prev_viol and viol > opts.tol_feas:
            if al.rho >= opts.rho_max:
                status = "infeasible_stall"
                break
            al.rho = min(al.rho * opts.rho_growth, opts.rho_max)
        prev_viol = viol
        omega = max(opts.tol_kkt, omega * 0.1)

    hv, gv = _violation(h, g)
    return SolveReport(status, inner_total, z, hv, gv, stat, f, outer, history)


def check_gradients(p: NlpProblem, z, h_fd: float = 1e-6, per_block: bool = False):
    """Worst relative error between analytic and central-difference
    derivatives of the objective and every residual block.

    The relative error uses ``max(1, |analytic|)`` as denominator. With
    ``per_block=True`` a dict ``{block name: error}`` is returned instead.
    """
    z = np.asarray(z, float)
    errors = {}

    def fd(fun, x):
        cols = []
        for j in range(len(x)):
            xp, xm = x.copy(), x.copy()
            xp[j] += h_fd
            xm[j] -= h_fd
            cols.append((np.atleast_1d(fun(xp)) - np.atleast_1d(fun(xm))) / (2.0 * h_fd))
        return np.array(cols).T

    def rel(an, nu):
        an = np.atleast_2d(an)
        return float(np.max(np.abs(an - nu) / np.maximum(1.0, np.abs(an)))) if an.size else 0.0

    f, grad = p.objective(z)
    num = fd(lambda x: p.objective(x)[0], z)
    errors["objective"] = rel(np.atleast_2d(grad), num)
    for b in list(p.eq) + list(p.ineq):
        zl = z[b.cols].copy()
        _, jb = b.fun(zl)
        errors[b.name] = rel(jb, fd(lambda x: b.fun(x)[0], zl))
    if per_block:
        return errors
    return max(errors.values())
