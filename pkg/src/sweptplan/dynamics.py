"""Kinematic car model and its fixed-step Runge-Kutta discretization.

State ``x = (p_x, p_y, psi, v, delta)``, input ``u = (a, s)``. Arrays may
carry leading batch dimensions; the last axis is always the state or input.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import ConvexShape, Placed

NX, NU = 5, 2
PX, PY, PSI, V, DELTA = range(NX)
STATE_NAMES = ("p_x", "p_y", "psi", "v", "delta")
INPUT_NAMES = ("a", "s")

_B = np.zeros((NX, NU))
_B[V, 0] = 1.0
_B[DELTA, 1] = 1.0


@dataclass(frozen=True)
class CarParams:
    L: float = 2.7

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("wheelbase must be positive")


def _check_steering(x):
    if np.any(np.abs(x[..., DELTA]) >= np.pi / 2):
        raise ValueError("steering angle must satisfy |delta| < pi/2")


def car_derivative(x, u, p: CarParams = CarParams()) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    _check_steering(x)
    psi, v, delta = x[..., PSI], x[..., V], x[..., DELTA]
    u = np.broadcast_to(u, x.shape[:-1] + (NU,))
    return np.stack(
        [v * np.cos(psi), v * np.sin(psi), v * np.tan(delta) / p.L, u[..., 0], u[..., 1]],
        axis=-1,
    )


def car_jacobian(x, p: CarParams = CarParams()) -> np.ndarray:
    """``df/dx`` with shape ``x.shape[:-1] + (5, 5)``; ``df/du`` is constant."""
    x = np.asarray(x, dtype=float)
    psi, v, delta = x[..., PSI], x[..., V], x[..., DELTA]
    J = np.zeros(x.shape[:-1] + (NX, NX))
    cs, sn = np.cos(psi), np.sin(psi)
    J[..., PX, PSI] = -v * sn
    J[..., PX, V] = cs
    J[..., PY, PSI] = v * cs
    J[..., PY, V] = sn
    J[..., PSI, V] = np.tan(delta) / p.L
    J[..., PSI, DELTA] = v / (np.cos(delta) ** 2 * p.L)
    return J


def rk4_step(x, u, dt: float, p: CarParams = CarParams()) -> np.ndarray:
    """One classical RK4 step with ``u`` held constant over the step."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    k1 = car_derivative(x, u, p)
    k2 = car_derivative(x + 0.5 * dt * k1, u, p)
    k3 = car_derivative(x + 0.5 * dt * k2, u, p)
    k4 = car_derivative(x + dt * k3, u, p)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step_jac(x, u, dt: float, p: CarParams = CarParams()):
    """RK4 step plus its Jacobians w.r.t. state and input.

    Returns ``(x_next, dx_next/dx, dx_next/du)`` with batched shapes
    ``(..., 5)``, ``(..., 5, 5)``, ``(..., 5, 2)``.
    """
    x = np.asarray(x, dtype=float)
    I = np.broadcast_to(np.eye(NX), x.shape[:-1] + (NX, NX))
    B = np.broadcast_to(_B, x.shape[:-1] + (NX, NU))

    def stage(xs, dxs_dx, dxs_du):
        k = car_derivative(xs, u, p)
        A = car_jacobian(xs, p)
        return k, A @ dxs_dx, A @ dxs_du + B

    k1, k1x, k1u = stage(x, I, np.zeros_like(B))
    k2, k2x, k2u = stage(x + 0.5 * dt * k1, I + 0.5 * dt * k1x, 0.5 * dt * k1u)
    k3, k3x, k3u = stage(x + 0.5 * dt * k2, I + 0.5 * dt * k2x, 0.5 * dt * k2u)
    k4, k4x, k4u = stage(x + dt * k3, I + dt * k3x, dt * k3u)
    w = dt / 6.0
    xn = x + w * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    Jx = I + w * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    Ju = w * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
    return xn, Jx, Ju


def simulate_fine(x, u, dt: float, m: int, p: CarParams = CarParams()) -> np.ndarray:
    """``m`` RK4 substeps of size ``dt / m``; returns ``m + 1`` states
    stacked on a new leading axis (element 0 is ``x``)."""
    if m < 1:
        raise ValueError("need at least one substep")
    h = dt / m
    out = [np.asarray(x, dtype=float)]
    for _ in range(m):
        out.append(rk4_step(out[-1], u, h, p))
    return np.stack(out)


def vehicle_shape(x, A: ConvexShape) -> Placed:
    x = np.asarray(x, dtype=float)
    return Placed(A, x[PSI], x[:2])


def vehicle_vertices(x, verts) -> np.ndarray:
    """Body-frame vertices placed at (batched) states: ``(..., k, 2)``."""
    x = np.asarray(x, dtype=float)
    cs, sn = np.cos(x[..., PSI]), np.sin(x[..., PSI])
    vx, vy = verts[:, 0], verts[:, 1]
    wx = cs[..., None] * vx - sn[..., None] * vy + x[..., PX, None]
    wy = sn[..., None] * vx + cs[..., None] * vy + x[..., PY, None]
    return np.stack([wx, wy], axis=-1)
