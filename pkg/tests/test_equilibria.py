import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dualrail.analysis.equilibria import (
    MIXED,
    ORIGIN,
    POSITIVE,
    classify,
    descartes_condition,
    equilibrium_full,
    equilibrium_q,
    linearize,
)
from dualrail.crn import apply_perturbation, compile_dual_rail, extract_structure
from dualrail.errors import NoConvergence
from dualrail.frontend import builtin_example2

# 40-digit findroot on the mass-action field, frozen.
NOMINAL_X = [0.525276750597, 0.0609477790596, 0.687567506168, 0.716435312881, 0.559766208687] * 2
ASYMMETRIC_X = [
    2.77884856728, 0.0110429375366, 2.55352223528, 3.93459944017, 2.1627779892,
    2.77884856728, 1.35836345501, 1.29283076228, 2.88597980904, 2.1627779892,
]


def bisect(f, lo, hi, tol=1e-14):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if (f(mid) > 0) == (flo > 0):
            lo, flo = mid, f(mid)
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_example2_root_against_bisection():
    res = equilibrium_q(np.array([[-1.0, 2.0], [1.0, -1.0]]), 1.0)
    ref = bisect(lambda q: q**3 + 2 * q**2 + 3 * q - 2, 0.0, 1.0)
    assert res.classification == POSITIVE
    assert abs(res.x_star[0] - ref) < 1e-9
    assert res.residual < 1e-12


def test_example2_below_boundary_only_origin():
    res = equilibrium_q(np.array([[-1.0, 0.5], [1.0, -1.0]]), 1.0)
    assert res.classification == ORIGIN


def test_forced_equilibrium_positive():
    res = equilibrium_q(np.array([[-1.0, 0.0], [1.0, -1.0]]), 1.0, v=[1.0, 0.0])
    q = res.x_star
    # first row: q1^2 + q1 - 1 = 0
    assert q[0] == pytest.approx((np.sqrt(5) - 1) / 2, rel=1e-10)


def test_equilibrium_q_rejects_bad_input():
    with pytest.raises(ValueError):
        equilibrium_q(np.eye(2), 0.0)
    with pytest.raises(ValueError):
        equilibrium_q(np.eye(2), 1.0, v=[-1.0, 0.0])


def test_no_convergence_reported():
    with pytest.raises(NoConvergence):
        equilibrium_q(np.array([[-1.0, 2.0], [1.0, -1.0]]), 1.0, max_iter=2)


def test_descartes():
    assert descartes_condition(1, 1, 1, 2)
    assert not descartes_condition(1, 1, 1, 1)
    with pytest.raises(ValueError):
        descartes_condition(0, 1, 1, 1)


def test_classify():
    assert classify([0, 0]) == ORIGIN
    assert classify([1, 2]) == POSITIVE
    assert classify([1, 0]) == MIXED


@pytest.mark.parametrize("which,ref", [("nominal", NOMINAL_X), ("asymmetric", ASYMMETRIC_X)])
def test_full_equilibrium_against_findroot(which, ref, request):
    eq = equilibrium_full(request.getfixturevalue(which))
    assert eq.classification == POSITIVE
    np.testing.assert_allclose(eq.x_star, ref, rtol=1e-9)
    assert eq.residual < 1e-12


def test_forced_equilibrium_full(nominal):
    eq = equilibrium_full(nominal, r=(1.0, 0.0))
    assert eq.converged
    p = eq.x_star[:5] - eq.x_star[5:]
    # integral action drives the output to the reference
    assert p[4] == pytest.approx(1.0, rel=1e-8)


def test_open_loop_equilibrium_is_origin(open_loop_nominal):
    eq = equilibrium_full(open_loop_nominal)
    assert eq.classification in (ORIGIN, POSITIVE)
    assert eq.residual < 1e-12


def test_linearization_io_part_vanishes(asymmetric):
    _, WpJ = linearize(asymmetric, ASYMMETRIC_X)
    assert np.abs(WpJ).max() == 0.0


def test_linearize_rejects_negative(nominal):
    with pytest.raises(ValueError):
        linearize(nominal, -np.ones(10))


def test_eta_scaling_halves_q(nominal):
    a = equilibrium_full(nominal)
    b = equilibrium_full(apply_perturbation(nominal, {"eta": 2.0}))
    qa = a.x_star[:5] + a.x_star[5:]
    qb = b.x_star[:5] + b.x_star[5:]
    np.testing.assert_allclose(qb, qa / 2, rtol=1e-9)


@given(st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.floats(0.2, 3.0))
def test_no_mixed_equilibria(d1, d2, c1, c2):
    """Unforced equilibria are either the origin or strictly positive."""
    res = equilibrium_q(np.array([[-d1, c2], [c1, -d2]]), 1.0)
    assert res.classification != MIXED
    crn = compile_dual_rail(builtin_example2(d1, d2, c1, c2))
    eq = equilibrium_full(crn, tail_time=1e3)
    assert eq.classification != MIXED


@given(st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.floats(0.1, 10.0))
def test_inverse_k_scaling(d1, d2, c1, c2, k):
    M = np.array([[-d1, c2], [c1, -d2]])
    a = equilibrium_q(M, k).x_star
    b = equilibrium_q(M, 10 * k).x_star
    np.testing.assert_allclose(b * 10, a, rtol=1e-8, atol=1e-12)


@given(st.floats(0.2, 3.0), st.floats(0.2, 3.0))
def test_symmetric_rails_split_q_evenly(d1, c2):
    crn = compile_dual_rail(builtin_example2(d1, 1.0, 1.0, c2))
    eq = equilibrium_full(crn, tail_time=1e3)
    np.testing.assert_allclose(eq.x_star[:2], eq.x_star[2:], rtol=1e-8, atol=1e-12)
    S = extract_structure(crn)
    _, WpJ = linearize(crn, eq.x_star)
    assert np.abs(WpJ).max() <= 1e-15 * max(1.0, S.eta)
