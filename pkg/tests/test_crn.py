import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dualrail.crn import (
    ANNIHILATION,
    apply_perturbation,
    compile_dual_rail,
    extract_structure,
    is_cascaded,
    mass_action_field,
    rotation,
    topological_order,
)
from dualrail.errors import UnknownRate
from dualrail.frontend import ASYMMETRIC_FACTORS, ASYMMETRIC_RATES, NOMINAL_RATES, builtin_example1, builtin_example2

ETA_NM = 5e5 * 1e-9


def rail(params, sym):
    v = params[sym]
    return (v, v) if not isinstance(v, tuple) else v


def handwritten_field(params, x, r):
    """Per-rail mass-action ODEs of the PI loop, transcribed term by term."""
    n = 5
    xp, xm = x[:n], x[n:]
    out = np.zeros(2 * n)
    for s, (xs, xo, rs) in enumerate(((xp, xm, r[0]), (xm, xp, r[1]))):
        g = lambda sym: rail(params, sym)[s]  # noqa: E731
        g_other = lambda sym: rail(params, sym)[1 - s]  # noqa: E731
        ann = ETA_NM * xp * xm
        d = np.array(
            [
                -g("gamma3") * xs[0] + g_other("gamma2") * xo[4] + g("gamma1") * rs,
                g("gamma4") * xs[0] - g("gamma5") * xs[1],
                g("k0") * xs[0],
                g("gamma6") * xs[1] + g("gamma7") * xs[2] - g("gamma8") * xs[3],
                g("k1") * xs[3] - g("k2") * xs[4],
            ]
        ) - ann
        out[s * n : (s + 1) * n] = d
    return out


@pytest.mark.parametrize("params", [NOMINAL_RATES, ASYMMETRIC_RATES], ids=["nominal", "asymmetric"])
def test_field_matches_handwritten_odes(params, rng):
    f = mass_action_field(compile_dual_rail(builtin_example1(params)))
    for _ in range(20):
        x = rng.uniform(0, 5, 10)
        r = rng.uniform(0, 2, 2) * np.array([1, 0]) if rng.random() < 0.5 else rng.uniform(0, 2, 2) * np.array([0, 1])
        np.testing.assert_allclose(f(x, r), handwritten_field(params, x, r), rtol=1e-12, atol=1e-18)


def test_io_matrix_matches_state_space(nominal):
    g = NOMINAL_RATES
    Ap = np.array(
        [
            [-g["gamma3"], 0, 0, 0, -g["gamma2"]],
            [g["gamma4"], -g["gamma5"], 0, 0, 0],
            [g["k0"], 0, 0, 0, 0],
            [0, g["gamma6"], g["gamma7"], -g["gamma8"], 0],
            [0, 0, 0, g["k1"], -g["k2"]],
        ]
    )
    S = extract_structure(nominal)
    assert S.symmetric
    np.testing.assert_allclose(S.R11_bar, Ap, rtol=0, atol=1e-18)
    np.testing.assert_allclose(S.R11, Ap, rtol=0, atol=1e-18)
    np.testing.assert_allclose(S.B1p, [g["gamma1"], 0, 0, 0, 0])


def test_example2_rotated_blocks():
    crn = compile_dual_rail(builtin_example2(0.7, 1.3, 0.9, 2.1))
    S = extract_structure(crn)
    np.testing.assert_allclose(S.R11_bar, [[-0.7, -2.1], [0.9, -1.3]])
    np.testing.assert_allclose(S.R22_bar, [[-0.7, 2.1], [0.9, -1.3]])


def test_reaction_inventory(nominal):
    counts = {}
    for r in nominal.reactions:
        counts[r.kind] = counts.get(r.kind, 0) + 1
    # 7 input ports and 4 degradation roles, each on two rails, plus 5 annihilations
    assert counts == {"catalysis": 14, "degradation": 8, "annihilation": 5}
    assert all(r.rate == pytest.approx(ETA_NM) for r in nominal.reactions if r.kind == ANNIHILATION)


def test_text_export(nominal):
    text = nominal.to_text()
    lines = text.strip().splitlines()
    assert len(lines) == 1 + len(nominal.reactions)
    assert "X1p + X1m ->{0.0005} 0" in text


def test_cascade_detection(nominal, open_loop_nominal):
    assert not is_cascaded(nominal)
    assert topological_order(open_loop_nominal) == ["X1", "X2", "X3", "X4", "X5"]


def test_perturbation_matches_asymmetric_table(nominal, asymmetric):
    scaled = apply_perturbation(nominal, ASYMMETRIC_FACTORS)
    np.testing.assert_allclose(extract_structure(scaled).A, extract_structure(asymmetric).A, rtol=1e-12)


def test_perturbation_rejects_unknown(nominal):
    with pytest.raises(UnknownRate):
        apply_perturbation(nominal, {"gamma99": 2.0})
    with pytest.raises(ValueError):
        apply_perturbation(nominal, {"gamma1": 0.0})


def test_eta_scaling(nominal):
    doubled = apply_perturbation(nominal, {"eta": 2.0})
    assert doubled.eta == pytest.approx(2 * nominal.eta)
    assert all(r.rate == pytest.approx(2 * ETA_NM) for r in doubled.reactions if r.kind == ANNIHILATION)


def test_jacobian_by_differences(asymmetric, rng):
    f = mass_action_field(asymmetric)
    x = rng.uniform(0.1, 3, 10)
    J = f.jacobian(x)
    h = 1e-6
    num = np.column_stack([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(10)])
    np.testing.assert_allclose(J, num, rtol=1e-6, atol=1e-12)


state = arrays(np.float64, 10, elements=st.floats(0, 10, allow_nan=False))


@given(state)
def test_rotated_field_equals_natural(x):
    crn = compile_dual_rail(builtin_example1(ASYMMETRIC_RATES))
    S = extract_structure(crn)
    f = mass_action_field(crn)
    W = rotation(5)
    z = W @ x
    p, q = z[:5], z[5:]
    dz = S.R @ z
    dz[5:] -= S.eta / 2 * (q * q - p * p)
    np.testing.assert_allclose(dz, W @ f(x), rtol=1e-9, atol=1e-12)
