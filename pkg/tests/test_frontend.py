import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dualrail.errors import MissingRate, SchemaError, ValidationError
from dualrail.frontend import (
    ASYMMETRIC_FACTORS,
    ASYMMETRIC_RATES,
    NOMINAL_RATES,
    builtin_example1,
    builtin_example2,
    dumps,
    load,
    open_loop,
    parse_spec,
    serialize,
)


def test_builtin_roundtrip():
    d = builtin_example1(NOMINAL_RATES, name="nominal")
    again = parse_spec(dumps(d))
    assert serialize(again) == serialize(d)
    assert again.symmetric


def test_asymmetric_factors_reproduce_table():
    for sym, val in ASYMMETRIC_RATES.items():
        if sym == "eta":
            continue
        nom = NOMINAL_RATES[sym]
        if isinstance(val, tuple):
            assert val[0] == pytest.approx(nom * ASYMMETRIC_FACTORS[sym + "+"])
            assert val[1] == pytest.approx(nom * ASYMMETRIC_FACTORS[sym + "-"])
        else:
            assert val == pytest.approx(nom * ASYMMETRIC_FACTORS[sym])


def test_shipped_designs_load(tmp_path):
    import dualrail

    root = __import__("pathlib").Path(dualrail.__file__).parent / "data"
    nom = load(root / "example1_nominal.json")
    asym = load(root / "example1_asymmetric.json")
    assert nom.symmetric and not asym.symmetric
    assert serialize(nom)["blocks"] == serialize(builtin_example1(NOMINAL_RATES))["blocks"]


def test_missing_key_is_schema_error():
    with pytest.raises(SchemaError, match="blocks"):
        parse_spec('{"wires": []}')


def test_bad_json_is_schema_error():
    with pytest.raises(SchemaError):
        parse_spec("{not json")


def test_validation_lists_every_problem():
    doc = serialize(builtin_example1())
    doc["blocks"][0]["rates"]["deg"] = {"symbol": "gamma3", "value": -1.0}
    doc["wires"].append({"from": "Nowhere", "to": "X2.in"})
    doc["output"] = "X9"
    with pytest.raises(ValidationError) as err:
        parse_spec(json.dumps(doc))
    text = str(err.value)
    assert "positive" in text and "Nowhere" in text and "X9" in text


def test_unconnected_port_rejected():
    doc = serialize(builtin_example1())
    doc["wires"] = [w for w in doc["wires"] if w["to"] != "X4.in2"]
    with pytest.raises(ValidationError, match="not connected"):
        parse_spec(doc)


def test_missing_rate_in_table():
    params = dict(NOMINAL_RATES)
    del params["gamma6"]
    with pytest.raises(MissingRate):
        builtin_example1(params)


def test_open_loop_drops_feedback():
    d = open_loop(builtin_example1())
    assert all(w.port != "fb" for w in d.wires)
    assert d.block("X1").kind == "gain"


def test_example2_without_feedback_is_cascade():
    d = builtin_example2(1.0, 1.0, 1.0, 0.0)
    assert d.block("X").kind == "gain"
    with pytest.raises(ValidationError):
        builtin_example2(-1.0, 1.0, 1.0, 1.0)


rate = st.floats(1e-6, 1e-1, allow_nan=False)


@given(st.lists(st.tuples(rate, rate), min_size=11, max_size=11))
def test_roundtrip_any_rates(pairs):
    names = [k for k in NOMINAL_RATES if k != "eta"]
    params = {k: p for k, p in zip(names, pairs)}
    params["eta"] = 5e5
    d = builtin_example1(params)
    assert serialize(parse_spec(dumps(d))) == serialize(d)
