import numpy as np
import pytest
from hypothesis import given, settings

from sweptplan.certify import (CertificateVars, ObstacleSpec, continuous_residuals,
                               discrete_residuals, formulation_stats, init_certificate)
from sweptplan.dynamics import rk4_step, simulate_fine, vehicle_shape
from sweptplan.geom import (Ellipsoid, Hull, Placed, box, member_cost_grad,
                            member_support_grad, rotation, smooth_members)
from sweptplan.sdcalc import signed_distance
from sweptplan.sweptfit import RadiusModel, eval_radius, sample_radius

from conftest import CAR, DATA, random_ellipsoid, random_polytope, random_unit, seeds

RMODEL = RadiusModel.load(DATA / "radius_model.json")
DT = 10.0 / 13.0
FEAS = 1e-9


def eliminating(x, c, A, obs, k=0, eps=1e-9):
    """alpha, beta at the values that make the member rows tight."""
    d = rotation(x[2]).T @ c
    alpha = min(member_cost_grad(m, d, eps)[0] for m in smooth_members(A))
    S, _ = obs.pose(k)
    beta = max(member_support_grad(m, S.T @ c, eps)[0] for m in obs.members)
    return alpha, beta


def feasible(blk, tol=FEAS):
    return np.all(blk.g <= tol) and np.all(np.abs(blk.h) <= tol)


def random_pair(rng, family=None):
    family = family or ("polytope", "ellipsoid", "mixed")[int(rng.integers(0, 3))]
    if family == "polytope":
        A, B = random_polytope(rng, k=int(rng.integers(1, 6))), random_polytope(rng, k=int(rng.integers(1, 6)))
    elif family == "ellipsoid":
        A, B = random_ellipsoid(rng), random_ellipsoid(rng)
    else:
        A, B = random_polytope(rng), Hull((random_ellipsoid(rng), random_polytope(rng)))
    x = np.array([*rng.normal(size=2) * 2, rng.uniform(-np.pi, np.pi), rng.uniform(0, 15), rng.uniform(-0.5, 0.5)])
    obs = ObstacleSpec(B, ((float(rng.uniform(-np.pi, np.pi)), tuple(rng.normal(size=2) * 5)),))
    return x, A, obs


def oracle_sd(x, A, obs, k=0):
    angle, t = obs.poses[0]
    return signed_distance(vehicle_shape(x, A), Placed(obs.shape, angle, t)).sd


def certificate(x, c, A, obs, k=0):
    a, b = eliminating(x, c, A, obs, k)
    return CertificateVars(c, a, b)


# -- examples -------------------------------------------------------------------

def test_overlapping_pair_gamma_row_infeasible():
    x = np.array([0, 25, 0, 10, 0])
    obs = ObstacleSpec(CAR, ((0.0, (0.0, 25.0)),))
    assert oracle_sd(x, CAR, obs) < 0
    for c in random_unit(np.random.default_rng(0), 20):
        blk = discrete_residuals(x, certificate(x, c, CAR, obs), CAR, obs, 0.0)
        assert blk.g[-1] >= 0


def test_separated_pair_gamma_row():
    x = np.zeros(5)
    obs = ObstacleSpec(box(9.5, 10.5, -0.5, 0.5))
    res = signed_distance(vehicle_shape(x, CAR), Placed(obs.shape))
    assert res.sd == pytest.approx(7.0, abs=1e-9)
    assert np.allclose(res.witness_direction, [-1, 0], atol=1e-6)
    blk = discrete_residuals(x, certificate(x, res.witness_direction, CAR, obs), CAR, obs, 0.0)
    assert blk.g[-1] == pytest.approx(-7.0, abs=1e-8)
    blk = discrete_residuals(x, CertificateVars([-1.0, 0.0], -2.5, -9.5), CAR, obs, 0.0)
    assert blk.g[-1] == pytest.approx(-7.0, abs=1e-12)
    assert feasible(blk)


def test_row_layout_and_elimination():
    x = np.zeros(5)
    blk = discrete_residuals(x, CertificateVars([1.0, 0.0], 0.0, 0.0), CAR,
                             ObstacleSpec(box(5, 6, 0, 1)), 0.0)
    assert blk.columns[-2:] == ("alpha", "beta") and len(blk.g) == 9 and len(blk.h) == 1
    E = Ellipsoid(np.eye(2))
    blk = discrete_residuals(x, CertificateVars([1.0, 0.0]), E, ObstacleSpec(E, ((0.0, (5.0, 0.0)),)), 0.0)
    assert "alpha" not in blk.columns and "beta" not in blk.columns
    assert len(blk.g) == 1 and len(blk.h) == 1
    blk = discrete_residuals(x, CertificateVars([1.0, 0.0], 0.0, 0.0), CAR,
                             ObstacleSpec(box(5, 6, 0, 1)), 0.5, relaxed=True)
    assert len(blk.h) == 0 and len(blk.g) == 10


def test_errors():
    obs = ObstacleSpec(box(5, 6, 0, 1))
    cert = CertificateVars([1.0, 0.0], 0.0, 0.0)
    with pytest.raises(ValueError):
        discrete_residuals(np.zeros(5), cert, CAR, obs, 0.0, relaxed=True)
    with pytest.raises(ValueError):
        continuous_residuals(np.zeros(5), np.zeros(5), None, cert, CAR, obs, 0.0, None)
    with pytest.raises(ValueError):
        ObstacleSpec(CAR, w=-1.0)


def test_formulation_stats_examples():
    assert formulation_stats(2, 4, 4, 4, 4, "discrete", "polytope") == (4, 10, 8, 12)
    assert formulation_stats(2, 1, 1, mode="discrete", family="ellipsoid") == (2, 2, 6, 6)
    assert formulation_stats(2, 4, 4, mode="continuous", family="polytope")[:2] == (4, 18)
    with pytest.raises(ValueError):
        formulation_stats(2, 1, 1, family="cone")


def test_assembled_counts_match_stats():
    obs = ObstacleSpec(box(50, 51, 0, 45))
    x = np.array([0, 25, 0, 10, 0])
    cert = CertificateVars([1.0, 0.0], 0.0, 0.0)
    blk = discrete_residuals(x, cert, CAR, obs, 0.0)
    ours = formulation_stats(2, 4, 4, 4, 4, "discrete", "polytope")
    assert (len(blk.columns) - 5, blk.n_rows) == ours[:2]
    blk = continuous_residuals(x, rk4_step(x, [0, 0], DT), None, cert, CAR, obs, 0.0, RMODEL)
    assert (len(blk.columns) - 10, blk.n_rows) == formulation_stats(2, 4, 4, mode="continuous")[:2]
    E = Ellipsoid(np.diag([4.0, 1.0]))
    blk = discrete_residuals(x, CertificateVars([1.0, 0.0]), E, ObstacleSpec(E, ((0.0, (10.0, 0.0)),)), 0.0)
    assert (len(blk.columns) - 5, blk.n_rows) == formulation_stats(2, 1, 1, family="ellipsoid")[:2]


def test_init_certificate_points_away_from_obstacle():
    obs = ObstacleSpec(box(50, 51, 0, 45))
    x = np.array([0, 25, 0, 10, 0])
    cert = init_certificate(x, CAR, obs)
    expect = x[:2] - np.array([50.5, 22.5])
    assert np.allclose(cert.c, expect / np.linalg.norm(expect))
    blk = discrete_residuals(x, cert, CAR, obs, 0.0)
    assert np.all(blk.g[:-1] <= 1e-12)


# -- Jacobians -------------------------------------------------------------------

def fd_jacobian(fun, z, h=1e-6):
    cols = []
    for j in range(len(z)):
        zp, zm = z.copy(), z.copy()
        zp[j] += h
        zm[j] -= h
        cols.append((fun(zp) - fun(zm)) / (2 * h))
    return np.array(cols).T


def rel_err(an, nu):
    return np.max(np.abs(an - nu) / np.maximum(1.0, np.abs(an)))


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_discrete_jacobian_fd(seed):
    rng = np.random.default_rng(seed)
    x, A, obs = random_pair(rng)
    ha, hb = len(smooth_members(A)) > 1, obs.n_members > 1
    z0 = np.concatenate([x, rng.normal(size=2), rng.normal(size=int(ha) + int(hb))])

    def rows(z):
        blk = discrete_residuals(z[:5], CertificateVars.from_vector(z[5:], ha, hb), A, obs, 0.3)
        return np.concatenate([blk.g, blk.h])

    blk = discrete_residuals(x, CertificateVars.from_vector(z0[5:], ha, hb), A, obs, 0.3)
    assert len(blk.columns) == len(z0)
    assert rel_err(np.vstack([blk.Jg, blk.Jh]), fd_jacobian(rows, z0)) <= 1e-6


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_continuous_jacobian_fd(seed):
    rng = np.random.default_rng(seed)
    x, A, obs = random_pair(rng)
    u = rng.uniform([-4, -0.6], [4, 0.6])
    x1 = rk4_step(x, u, DT) + rng.normal(size=5) * 0.1
    x1[4] = np.clip(x1[4], -0.55, 0.55)
    hb = not (obs.n_members == 1 and obs.static)
    z0 = np.concatenate([x, x1, rng.normal(size=3 + int(hb))])

    def block(z):
        return continuous_residuals(z[:5], z[5:10], u, CertificateVars.from_vector(z[10:], True, hb),
                                    A, obs, 0.3, RMODEL)

    def rows(z):
        blk = block(z)
        return np.concatenate([blk.g, blk.h])

    blk = block(z0)
    assert len(blk.columns) == len(z0)
    assert rel_err(np.vstack([blk.Jg, blk.Jh]), fd_jacobian(rows, z0)) <= 1e-6


# -- soundness, completeness, relaxation ------------------------------------------

@settings(max_examples=100, deadline=None)
@given(seeds)
def test_soundness(seed):
    # any feasible certificate proves the oracle distance
    rng = np.random.default_rng(seed)
    x, A, obs = random_pair(rng)
    c = random_unit(rng)
    a, b = eliminating(x, c, A, obs)
    a -= rng.exponential(0.2)
    b += rng.exponential(0.2)
    gamma = a - b + c @ (x[:2] - np.array(obs.poses[0][1])) - rng.exponential(0.5)
    blk = discrete_residuals(x, CertificateVars(c, a, b), A, obs, gamma)
    assert feasible(blk)
    assert oracle_sd(x, A, obs) >= gamma - 1e-6


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_completeness(seed):
    rng = np.random.default_rng(seed)
    x, A, obs = random_pair(rng)
    angle, t = obs.poses[0]
    res = signed_distance(vehicle_shape(x, A), Placed(obs.shape, angle, t))
    gamma = res.sd - rng.uniform(0, 1)
    blk = discrete_residuals(x, certificate(x, res.witness_direction, A, obs), A, obs, gamma)
    assert feasible(blk, 1e-6)


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_relaxation_rescaling(seed):
    rng = np.random.default_rng(seed)
    x, A, obs = random_pair(rng, "polytope")
    angle, t = obs.poses[0]
    res = signed_distance(vehicle_shape(x, A), Placed(obs.shape, angle, t))
    gamma = abs(res.sd) * 0.5 + 0.1
    # shift the obstacle so the pair is separated by more than gamma
    obs = ObstacleSpec(obs.shape, ((angle, tuple(np.array(t) - res.witness_direction * (gamma + 1 - min(res.sd, 0)))),))
    res = signed_distance(vehicle_shape(x, A), Placed(obs.shape, *obs.poses[0]))
    s = rng.uniform(0.3, 0.95)
    c = s * res.witness_direction
    a, b = eliminating(x, c, A, obs)
    g_small = gamma * s * 0.5
    blk = discrete_residuals(x, CertificateVars(c, a, b), A, obs, g_small, relaxed=True)
    assert feasible(blk)
    n = np.linalg.norm(c)
    blk = discrete_residuals(x, CertificateVars(c / n, a / n, b / n), A, obs, g_small / n)
    assert feasible(blk, 1e-9)
    assert g_small / n > g_small


def test_ellipsoid_smoothing_conservative():
    # with eps > 0 a certificate feasible for the smoothed rows also holds
    # for the exact support, strictly
    rng = np.random.default_rng(11)
    for _ in range(100):
        x, A, obs = random_pair(rng, "ellipsoid")
        c = random_unit(rng)
        a, b = eliminating(x, c, A, obs, eps=1e-3)
        gamma = a - b + c @ (x[:2] - np.array(obs.poses[0][1]))
        blk = discrete_residuals(x, CertificateVars(c, a, b), A, obs, gamma, eps=1e-3)
        assert feasible(blk)
        assert oracle_sd(x, A, obs) > gamma - 1e-6


# -- continuous mode ------------------------------------------------------------

def test_continuous_straight_motion_gamma_row():
    x0 = np.array([0.0, 25.0, 0.0, 10.0, 0.0])
    x1 = rk4_step(x0, [0, 0], DT)
    obs = ObstacleSpec(box(50, 51, 0, 45))
    hull = Hull((vehicle_shape(x0, CAR), vehicle_shape(x1, CAR)))
    res = signed_distance(hull, Placed(obs.shape))
    cert = certificate_on_step(x0, x1, res.witness_direction, obs)
    blk = continuous_residuals(x0, x1, None, cert, CAR, obs, 0.0, RMODEL)
    r = eval_radius(RMODEL, 10.0, 0.0)[0]
    assert blk.g[-1] == pytest.approx(0.0 - res.sd + r, abs=1e-8)
    assert obs.w_at(0) == 0.0
    # the straight step itself sweeps nothing outside the hull; r(v, 0) > 0
    # only because the model covers every admissible input over the step
    assert sample_radius(x0, [0, 0], DT, 100, CAR).r <= 1e-9


def certificate_on_step(x0, x1, c, obs):
    mu0 = min(member_cost_grad(m, rotation(x0[2]).T @ c)[0] for m in smooth_members(CAR))
    mu1 = min(member_cost_grad(m, rotation(x1[2]).T @ c)[0] for m in smooth_members(CAR)) + c @ (x1[:2] - x0[:2])
    beta = max(member_support_grad(m, c)[0] for m in obs.members)
    return CertificateVars(c, min(mu0, mu1), beta)


def test_continuous_feasible_implies_safe():
    rng = np.random.default_rng(4)
    worst = np.inf
    for _ in range(50):
        v, d = rng.uniform(0, 15), rng.uniform(-0.6, 0.6)
        u = rng.uniform([-4, -0.6], [4, 0.6])
        x0 = np.array([0.0, 0.0, rng.uniform(-np.pi, np.pi), v, d])
        x1 = rk4_step(x0, u, DT)
        ob = Placed(random_polytope(rng, k=4, scale=3.0), 0.0, random_unit(rng) * rng.uniform(10, 25))
        obs = ObstacleSpec(ob.shape, ((0.0, tuple(ob.translation)),))
        hull = Hull((vehicle_shape(x0, CAR), vehicle_shape(x1, CAR)))
        c = signed_distance(hull, ob).witness_direction
        cert = certificate_on_step(x0, x1, c, obs)
        r = eval_radius(RMODEL, v, d)[0]
        gamma = cert.alpha - cert.beta + c @ (x0[:2] - ob.translation) - r
        blk = continuous_residuals(x0, x1, u, cert, CAR, obs, gamma, RMODEL)
        assert feasible(blk)
        fine = simulate_fine(x0, u, DT, 100)
        sd = min(signed_distance(vehicle_shape(x, CAR), ob).sd for x in fine)
        worst = min(worst, sd - gamma)
    assert worst >= -5e-3
