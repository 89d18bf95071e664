import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sweptplan.nlp import (Block, NlpProblem, NonFiniteError, SolverOptions, _violation,
                           check_gradients, solve)


def quad(target):
    target = np.asarray(target, float)

    def f(z):
        d = z - target
        return float(d @ d), 2 * d
    return f


def linear_block(name, A, b):
    A = np.asarray(A, float)
    return Block(name, A.shape[0], np.arange(A.shape[1]), lambda z: (A @ z - b, A))


def test_bound_example():
    # min (z-1)^2 s.t. z >= 2, as an inequality row
    p = NlpProblem(1, quad([1.0]), ineq=[linear_block("lb", [[-1.0]], np.array([-2.0]))])
    rep = solve(p, [0.0])
    assert rep.optimal
    assert rep.z[0] == pytest.approx(2.0, abs=1e-6)


def test_box_bound_example():
    p = NlpProblem(1, quad([1.0]), lo=[2.0], hi=[np.inf])
    rep = solve(p, [5.0])
    assert rep.optimal and rep.z[0] == 2.0


def test_projection_onto_line():
    p = NlpProblem(2, quad([0.0, 0.0]), eq=[linear_block("sum", [[1.0, 1.0]], np.array([1.0]))])
    rep = solve(p, [3.0, -1.0])
    assert rep.optimal
    assert np.allclose(rep.z, [0.5, 0.5], atol=1e-6)


def test_unit_vector_maximization():
    pd = np.array([3.0, 4.0])

    def f(c):
        return float(-c @ pd), -pd

    norm = Block("norm", 1, [0, 1], lambda c: (np.array([c @ c - 1.0]), 2 * c[None, :]))
    rep = solve(NlpProblem(2, f, eq=[norm]), [1.0, 0.0])
    assert rep.optimal
    assert np.allclose(rep.z, [0.6, 0.8], atol=1e-6)
    assert rep.objective == pytest.approx(-5.0, abs=1e-6)


def test_nonfinite_names_block():
    bad = Block("explode", 1, [1], lambda z: (np.array([np.nan]), np.ones((1, 1))))
    p = NlpProblem(2, quad([0, 0]), eq=[bad], names={"x": slice(0, 1), "y": slice(1, 2)})
    with pytest.raises(NonFiniteError, match="explode.*y"):
        solve(p, [0.0, 0.0])


def test_shape_mismatch():
    bad = Block("short", 2, [0], lambda z: (np.zeros(1), np.zeros((1, 1))))
    with pytest.raises(ValueError):
        NlpProblem(1, quad([0]), eq=[bad]).evaluate(np.zeros(1))


def test_empty_box_rejected():
    with pytest.raises(ValueError):
        NlpProblem(1, quad([0]), lo=[1.0], hi=[0.0])


def test_check_gradients_linear_and_fault():
    A = np.array([[1.0, 2.0], [-3.0, 0.5]])
    p = NlpProblem(2, quad([1, 1]), eq=[linear_block("lin", A, np.zeros(2))])
    assert check_gradients(p, np.array([0.3, -0.7]), per_block=True)["lin"] <= 1e-10
    assert check_gradients(p, np.array([0.3, -0.7])) <= 1e-8

    def wrong(z):
        J = A.copy()
        J[1, 0] += 1e-2
        return A @ z, J
    p.eq.append(Block("wrong", 2, [0, 1], wrong))
    errs = check_gradients(p, np.array([0.3, -0.7]), per_block=True)
    assert errs["lin"] <= 1e-10 and errs["wrong"] > 1e-3


def nonconvex_problem(seed):
    rng = np.random.default_rng(seed)
    n = 4
    t = rng.normal(size=n)

    def circle(z):
        return np.array([z[0] ** 2 + z[1] ** 2 - 1.0]), np.array([[2 * z[0], 2 * z[1]]])

    def prod(z):
        return np.array([z[0] * z[1] - 0.25]), np.array([[z[1], z[0]]])

    eq = [Block("circle", 1, [0, 1], circle)]
    ineq = [Block("prod", 1, [2, 3], prod)]
    return NlpProblem(n, quad(t), eq, ineq, lo=np.full(n, -3.0), hi=np.full(n, 3.0)), rng.uniform(-2, 2, n)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_report_reproduces_norms(seed):
    p, z0 = nonconvex_problem(seed)
    rep = solve(p, z0)
    f, _, h, _, g, _ = p.evaluate(rep.z)
    hv, gv = _violation(h, g)
    assert (hv, gv, f) == (rep.eq_violation, rep.ineq_violation, rep.objective)
    if rep.optimal:
        assert max(hv, gv) <= 1e-6 and rep.stationarity <= 1e-6
    # min-so-far violation never increases
    best = [hh["best_viol"] for hh in rep.history]
    assert all(b1 <= b0 for b0, b1 in zip(best, best[1:]))
    assert np.all(rep.z >= p.lo) and np.all(rep.z <= p.hi)


def test_deterministic():
    p, z0 = nonconvex_problem(7)
    a, b = solve(p, z0), solve(p, z0)
    assert np.array_equal(a.z, b.z) and a.iterations == b.iterations


def test_options_roundtrip():
    o = SolverOptions()
    assert o.to_json()["tol_feas"] == 1e-6 and o.to_json()["rho0"] == 10.0
