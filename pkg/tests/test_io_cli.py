import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lintransfer import io as lio
from lintransfer.cli import run
from lintransfer.space import FiniteSpace, Measure, ValidationError
from lintransfer.stochastic import ControlledChain
from lintransfer.transfer import cost_transfer

from .conftest import CYCLE3

INSTANCES = Path(__file__).resolve().parent.parent / "instances"


# --- JSON codec ------------------------------------------------------------

def test_sentinels():
    assert lio.decode_array([1, "inf", "-inf", "1/3"]).tolist() == [1.0, np.inf, -np.inf, 1 / 3]
    assert lio.encode_vector([np.inf, -np.inf, -0.0]) == ["inf", "-inf", 0.0]
    with pytest.raises(ValidationError):
        lio.decode_number("abc")
    with pytest.raises(ValidationError):
        lio.decode_number(True)
    with pytest.raises(ValidationError):
        lio.encode_number(float("nan"))


@settings(max_examples=100)
@given(st.lists(st.floats(0.0, 1e6, allow_nan=False), min_size=1, max_size=6)
       .filter(lambda w: sum(w) > 0))
def test_measure_round_trip_bit_exact(raw):
    w = np.array(raw) / np.sum(raw)
    if abs(w.sum() - 1) > 1e-12:
        return
    mu = Measure(FiniteSpace(len(w)), w)
    back = lio.measure_from_json(json.loads(lio.dumps(lio.measure_to_json(mu))))
    assert np.array_equal(back.weights, mu.weights)


def test_space_round_trip():
    X = FiniteSpace.line([0.0, 0.5, 2.0])
    Y = lio.space_from_json(json.loads(lio.dumps(lio.space_to_json(X))))
    assert Y == X


def test_transfer_round_trip():
    C = np.array([[0.0, np.inf], [1.5, 0.0]])
    T = cost_transfer(C)
    back = lio.transfer_from_json(json.loads(lio.dumps(lio.transfer_to_json(T))))
    np.testing.assert_array_equal(back.cost, C)
    E = lio.transfer_from_json(json.loads((INSTANCES / "entropic3.json").read_text()))
    again = lio.transfer_from_json(lio.transfer_to_json(E))
    f = np.array([0.1, -2.0, 1.0])
    np.testing.assert_array_equal(again.apply(f), E.apply(f))


def test_composite_and_regularized_json():
    comp = {"kind": "composite", "children": [{"kind": "cost", "cost": CYCLE3.tolist()},
                                              {"kind": "cost", "cost": CYCLE3.tolist()}]}
    T = lio.transfer_from_json(comp)
    np.testing.assert_array_equal(T.cost, [[2, 1, 0], [0, 2, 1], [1, 0, 2]])
    reg = {"kind": "regularized", "epsilon": 0.5,
           "base": {"kind": "cost", "cost": CYCLE3.tolist(), "space": {"coords": [0, 1, 2]}}}
    R = lio.transfer_from_json(reg)
    assert np.all(R.cost <= CYCLE3)


def test_gallery_json():
    T = lio.transfer_from_json({"kind": "power_cost", "space": {"coords": [0, 0.5, 1]}, "p": 2})
    np.testing.assert_allclose(T.cost[0], [0, 0.25, 1])
    with pytest.raises(ValidationError):
        lio.transfer_from_json({"kind": "nope"})
    with pytest.raises(ValidationError):
        lio.transfer_from_json({"cost": [[0]]})


def test_chain_round_trip():
    ch = lio.chain_from_json(json.loads((INSTANCES / "chain_v011.json").read_text()))
    back = lio.chain_from_json(lio.chain_to_json(ch))
    np.testing.assert_array_equal(back.kernel, ch.kernel)
    np.testing.assert_array_equal(back.lagrangian, ch.lagrangian)
    raw = ControlledChain(2, 1, [0], np.eye(2)[None], np.zeros((2, 1)))
    again = lio.chain_from_json(lio.chain_to_json(raw))
    np.testing.assert_array_equal(again.kernel, raw.kernel)


def test_inequality_round_trip():
    spec = lio.inequality_from_json(json.loads((INSTANCES / "pinsker_pass.json").read_text()))
    back = lio.inequality_from_json(lio.inequality_to_json(spec))
    assert back.lam1 == spec.lam1 and back.name == "pinsker-pass"
    np.testing.assert_array_equal(back.F.cost, spec.F.cost)


def test_csv_round_trip():
    M = np.array([[0.1, np.inf], [-np.inf, 1 / 3]])
    np.testing.assert_array_equal(lio.matrix_from_csv(lio.matrix_to_csv(M)), M)


# --- CLI -------------------------------------------------------------------

def cli(capsys, *argv):
    code = run(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def inst(name):
    return str(INSTANCES / name)


def test_cli_mane(capsys):
    code, out, _ = cli(capsys, "mane", "--transfer", inst("cyc3.json"))
    assert code == 0 and json.loads(out)["c"] == 0.0
    for method in ("lp", "iterate"):
        code, out, _ = cli(capsys, "mane", "--transfer", inst("cyc3.json"), "--method", method)
        assert code == 0 and abs(json.loads(out)["c"]) <= 0.01


def test_cli_weak_kam(capsys):
    code, out, _ = cli(capsys, "weak-kam", "--transfer", inst("cyc3.json"))
    rep = json.loads(out)
    assert code == 0 and rep["u"] == [0.0, 0.0, 0.0] and rep["residual"] == 0


def test_cli_missing_file(capsys):
    code, _, err = cli(capsys, "mane", "--transfer", "does-not-exist.json")
    assert code == 2 and "no such file" in err


def test_cli_bad_json(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = cli(capsys, "mane", "--transfer", str(bad))
    assert code == 2 and "invalid JSON" in err
    wrong = tmp_path / "wrong.json"
    wrong.write_text('{"kind": "cost", "cost": [[0.5, 1], [1]]}')
    assert cli(capsys, "mane", "--transfer", str(wrong))[0] == 2


def test_cli_bad_arguments(capsys):
    assert cli(capsys, "mane")[0] == 2
    assert cli(capsys, "frobnicate")[0] == 2


def test_cli_peierls_csv_and_text(capsys, tmp_path):
    out_csv = tmp_path / "cinf.csv"
    code, out, _ = cli(capsys, "peierls", "--transfer", inst("sparse4.json"), "--csv", str(out_csv))
    rep = json.loads(out)
    assert code == 0
    np.testing.assert_array_equal(lio.matrix_from_csv(out_csv.read_text()), lio.decode_array(rep["c_inf"]))
    code, out, _ = cli(capsys, "mather", "--transfer", inst("cyc3.json"), "--format", "text")
    assert code == 0 and out.startswith("c: 0.0")


def test_cli_eval(capsys):
    code, out, _ = cli(capsys, "eval", "--transfer", inst("line_metric.json"),
                       "--mu", inst("mu_delta0.json"), "--nu", inst("nu_delta2.json"))
    rep = json.loads(out)
    assert code == 0 and rep["value"] == pytest.approx(3.0) and rep["primal"] == pytest.approx(3.0)


def test_cli_schrodinger_stochastic_regularize(capsys):
    code, out, _ = cli(capsys, "schrodinger", "--transfer", inst("entropic3.json"))
    assert code == 0 and json.loads(out)["semigroup_exact"]
    code, out, _ = cli(capsys, "stochastic", "--chain", inst("chain_v011.json"))
    rep = json.loads(out)
    assert code == 0 and abs(rep["c_rvi"] - rep["c_lp"]) <= 1e-7
    code, out, _ = cli(capsys, "regularize", "--transfer", inst("line_metric.json"), "--eps", "1,0.5,0.1")
    rep = json.loads(out)
    assert code == 0 and rep["eps"] == [1.0, 0.5, 0.1]
    assert cli(capsys, "regularize", "--transfer", inst("line_metric.json"), "--eps", "x")[0] == 2
    assert cli(capsys, "regularize", "--transfer", inst("line_metric.json"), "--eps", "-1")[0] == 2


def test_cli_inequality_exit_codes(capsys):
    code, out, _ = cli(capsys, "inequality", "--spec", inst("pinsker_pass.json"))
    assert code == 0 and json.loads(out)["implication_holds"]
    code, out, _ = cli(capsys, "inequality", "--spec", inst("pinsker_fail.json"))
    rep = json.loads(out)
    assert code == 1 and not rep["dual"]["passes"] and rep["implication_holds"]


@pytest.mark.parametrize("name", ["cyc3.json", "sparse4.json", "mixed3.json", "power2.json"])
def test_cli_cost_instances(capsys, name):
    for verb in ("mane", "weak-kam", "peierls", "mather"):
        assert cli(capsys, verb, "--transfer", inst(name))[0] == 0
