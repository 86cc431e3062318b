import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualrail.analysis.equilibria import equilibrium_full
from dualrail.crn import VectorField, extract_structure, mass_action_field
from dualrail.errors import StepUnderflow
from dualrail.sim import (
    STEP_PROFILE,
    ReferenceProfile,
    detect_steady_state,
    integrate,
    integrate_decoupled,
    save,
)


def decay_field(k):
    # one signal whose rails both degrade at k, no annihilation
    return VectorField(np.diag([-k, -k]), np.zeros((2, 2)), 0.0)


def test_exponential_decay():
    k, c = 0.3, 2.0
    t = np.linspace(0, 20, 41)
    traj = integrate(decay_field(k), [c, c], None, 20.0, t_eval=t)
    np.testing.assert_allclose(traj.x[:, 0], c * np.exp(-k * t), rtol=1e-7)


def test_profile_validation():
    with pytest.raises(ValueError):
        ReferenceProfile(((0, 1.0, 1.0),))
    with pytest.raises(ValueError):
        ReferenceProfile(((0, 1.0, 0.0), (0, 0.0, 1.0)))
    with pytest.raises(ValueError):
        ReferenceProfile(((0, -1.0, 0.0),))
    p = ReferenceProfile.from_signed([(5.0, -2.0)])
    assert p.signed(0.0) == 0.0 and p.signed(6.0) == -2.0
    assert ReferenceProfile.from_dict(p.to_dict()) == p


def test_steps_land_on_breakpoints(nominal):
    t = np.linspace(0, 1e5, 11)
    traj = integrate(mass_action_field(nominal), None, STEP_PROFILE, 1e5, t_eval=t, method="LSODA")
    starts = [e["t"] for e in traj.events if e["kind"] == "reference"]
    assert starts == [0.0, 2.5e4, 5e4, 7e4]
    for t0 in starts[1:]:
        assert t0 in traj.t


def test_views_are_exact(asymmetric):
    traj = integrate(mass_action_field(asymmetric), None, STEP_PROFILE, 3e4, method="LSODA", t_eval=np.linspace(0, 3e4, 31))
    n = 5
    np.testing.assert_array_equal(traj.p, traj.x[:, :n] - traj.x[:, n:])
    np.testing.assert_array_equal(traj.q, traj.x[:, :n] + traj.x[:, n:])


def test_symmetry_preserved(nominal):
    x0 = np.array([0.3, 1.2, 0.7, 0.1, 2.0] * 2)
    traj = integrate(mass_action_field(nominal), x0, None, 2e5, method="LSODA", t_eval=np.linspace(0, 2e5, 201))
    assert np.abs(traj.p).max() < 1e-9


def test_tolerance_halving(nominal):
    f = mass_action_field(nominal)
    a = integrate(f, None, STEP_PROFILE, 5e4, rtol=1e-7, atol=1e-10, method="LSODA", t_eval=[5e4])
    b = integrate(f, None, STEP_PROFILE, 5e4, rtol=5e-8, atol=5e-11, method="LSODA", t_eval=[5e4])
    scale = np.abs(b.final).max()
    assert np.abs(a.final - b.final).max() < 10 * 1e-7 * scale


def test_decoupled_equals_full_when_symmetric(nominal):
    t = np.linspace(0, 1e5, 51)
    a = integrate(mass_action_field(nominal), None, STEP_PROFILE, 1e5, method="LSODA", t_eval=t)
    b = integrate_decoupled(extract_structure(nominal), None, STEP_PROFILE, 1e5, method="LSODA", t_eval=t)
    np.testing.assert_allclose(b.x, a.x, rtol=1e-5, atol=1e-8)


def test_rotated_equals_natural(asymmetric):
    t = np.linspace(0, 1e5, 51)
    a = integrate(mass_action_field(asymmetric), None, STEP_PROFILE, 1e5, method="LSODA", t_eval=t)
    b = integrate_decoupled(
        extract_structure(asymmetric), None, STEP_PROFILE, 1e5, decouple=False, method="LSODA", t_eval=t
    )
    np.testing.assert_allclose(b.x, a.x, rtol=1e-5, atol=1e-7)


def test_steady_state_of_decay():
    k = 0.5
    traj = integrate(decay_field(k), [1.0, 1.0], None, 60.0, t_eval=np.linspace(0, 60, 601))
    ss = detect_steady_state(traj, 5.0, 1e-3)
    # |x'| = k e^{-kt} < eps from t = ln(k / eps) / k onwards
    assert ss.t == pytest.approx(np.log(k / 1e-3) / k, abs=0.1)


def test_steady_state_matches_newton(nominal):
    eq = equilibrium_full(nominal)
    t = np.linspace(0, 6e6, 6001)
    traj = integrate(mass_action_field(nominal), None, STEP_PROFILE, 6e6, method="LSODA", t_eval=t)
    ss = detect_steady_state(traj, 2e5, 1e-12)
    assert ss is not None
    assert np.abs(ss.x - eq.x_star).max() < 1e-6


def test_steady_state_absent_when_diverged():
    f = VectorField(np.diag([1.0, 1.0]), np.zeros((2, 2)), 0.0)
    traj = integrate(f, [1.0, 1.0], None, 100.0, t_eval=np.linspace(0, 100, 101))
    assert traj.diverged
    assert traj.t[-1] == pytest.approx(np.log(1e6), rel=1e-6)
    assert detect_steady_state(traj, 1.0, 1.0) is None


def test_negative_start_rejected(nominal):
    with pytest.raises(ValueError):
        integrate(mass_action_field(nominal), -np.ones(10), None, 1.0)


def test_step_underflow_reported():
    # finite-time blow-up below the divergence threshold starves the step size
    f = VectorField(np.zeros((2, 2)), np.zeros((2, 2)), -1.0)
    with pytest.raises(StepUnderflow) as err:
        integrate(f, [1.0, 1.0], None, 10.0, divergence=None)
    assert err.value.t < 1.0 + 1e-3


def test_csv_and_sidecar(tmp_path, nominal):
    t = np.linspace(0, 1e4, 11)
    traj = integrate(mass_action_field(nominal), None, STEP_PROFILE, 1e4, method="LSODA", t_eval=t, species=nominal.species_names)
    csv_path, json_path = save(traj, tmp_path / "run", {"note": "x"})
    rows = list(csv.reader(open(csv_path)))
    assert rows[0] == ["t"] + nominal.species_names + [f"p{i}" for i in range(1, 6)] + [f"q{i}" for i in range(1, 6)]
    assert len(rows) == 12
    side = json.load(open(json_path))
    assert side["note"] == "x" and side["diverged"] is False
    assert side["stats"]["method"] == "LSODA"
    again = io.StringIO()
    traj.to_csv(again)
    assert again.getvalue() == open(csv_path).read()


@settings(max_examples=100)
@given(
    st.lists(st.floats(0, 5), min_size=10, max_size=10),
    st.floats(-2, 2),
    st.floats(-2, 2),
)
def test_non_negative_for_any_start(x0, r1, r2):
    from dualrail.crn import compile_dual_rail
    from dualrail.frontend import ASYMMETRIC_RATES, builtin_example1

    crn = compile_dual_rail(builtin_example1(ASYMMETRIC_RATES))
    profile = ReferenceProfile.from_signed([(0, r1), (5e3, r2)])
    traj = integrate(mass_action_field(crn), x0, profile, 2e4, method="LSODA", t_eval=np.linspace(0, 2e4, 21))
    assert traj.stats["min_raw"] >= -1e-9
