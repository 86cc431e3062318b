import json

import numpy as np
import pytest

from dualrail.analysis.report import boundedness_bound, stability_report
from dualrail.crn import compile_dual_rail, extract_structure
from dualrail.frontend import builtin_example2


@pytest.fixture(scope="module")
def nominal_report(nominal):
    return stability_report(nominal)


@pytest.fixture(scope="module")
def asymmetric_report(asymmetric):
    return stability_report(asymmetric)


def test_nominal_verdicts(nominal_report):
    rep = nominal_report
    assert rep.symmetric
    assert rep.verdict("origin_unstable").holds
    assert rep.verdict("positive_equilibrium").holds
    assert rep.verdict("bounded_symmetric").holds
    assert rep.verdict("locally_stable").holds
    assert rep.verdict("gas_origin_from_A").holds is False
    assert rep.overall == "bounded, locally stable positive equilibrium"
    assert not rep.undecided


def test_asymmetric_verdicts(asymmetric_report):
    rep = asymmetric_report
    assert not rep.symmetric
    assert rep.spectra["io"].is_hurwitz
    assert rep.verdict("locally_stable").holds is False
    assert rep.overall == "unstable"
    assert any("rail rates differ" in n for n in rep.notes)
    with pytest.raises(KeyError):
        rep.verdict("bounded_symmetric")


def test_table_rows(nominal_report, asymmetric_report):
    t = nominal_report.table()
    assert "R̄11" in t and "-3.96445e-06" in t
    rows = {line.split()[0]: line for line in asymmetric_report.table().splitlines()[2:6]}
    assert rows["R11"].rstrip().endswith(" H")
    assert "3.16475e-05 ± 0.00126448i" in rows["A_s"]
    assert rows["A_s"].rstrip().endswith("not H")


def test_json_schema(nominal_report):
    doc = json.loads(nominal_report.to_json())
    assert set(doc) == {
        "name", "symmetric", "flags", "spectra", "equilibrium", "perron",
        "boundedness_bound_nM", "verdicts", "overall", "notes", "undecided",
    }
    assert set(doc["spectra"]) == {"io", "q", "A", "A_s"}
    assert doc["perron"]["lambda_F"] > 0


def test_cascade_is_gas(open_loop_nominal):
    rep = stability_report(open_loop_nominal)
    assert rep.flags["cascaded"]
    # the open-loop integrator puts a pole at zero, which is never called stable
    assert rep.spectra["io"].is_marginal
    assert rep.overall == "marginal"


def test_stable_cascade_is_gas():
    rep = stability_report(compile_dual_rail(builtin_example2(1.0, 2.0, 1.5, 0.0)))
    assert rep.verdict("gas_cascade").holds
    assert rep.overall == "GAS"


def test_bound_formula():
    R22 = np.array([[-1.0, 2.0], [1.0, -1.0]])
    sigma = np.linalg.svd(R22, compute_uv=False)[0]
    assert boundedness_bound(R22, 2.0) == pytest.approx(2 * np.sqrt(2) * sigma / 2.0)
    # forced: positive root of k b^2 - a b - |v|_1 = 0
    a, k, v1 = np.sqrt(2) * sigma, 1.0, 3.0
    b = boundedness_bound(R22, 2.0, v=[1.0, 2.0])
    assert k * b * b - a * b - v1 == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        boundedness_bound(R22, 0.0)


def test_nominal_bound_value(nominal, nominal_report):
    S = extract_structure(nominal)
    assert nominal_report.bound == pytest.approx(boundedness_bound(S.q_matrix(), S.eta))
