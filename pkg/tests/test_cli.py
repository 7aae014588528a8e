import json

import numpy as np
import pytest

from tailcausal import __version__
from tailcausal.air import air_by_impulse, standardize
from tailcausal.cli import run
from tailcausal.discovery import is_linear_extension
from tailcausal.model import HscmModel, model_from_dict, model_to_dict, read_samples_csv


@pytest.fixture
def diamond_file(tmp_path, diamond):
    model = HscmModel.uniform(diamond, "linear", 0.5, alpha=1.5)
    path = tmp_path / "diamond.json"
    path.write_text(json.dumps(model_to_dict(model)))
    return model, path


def load(path):
    return json.loads(path.read_text())


def test_gen_model_example(tmp_path):
    out = tmp_path / "m.json"
    argv = ["gen-model", "--d", "4", "--edge-prob", "0.5", "--family", "linear", "--alpha", "1.5", "--seed", "7", "-o", str(out)]
    assert run(argv) == 0
    model = model_from_dict(load(out))
    assert model.d == 4 and model.alpha == 1.5 and model.families() == {"linear"}
    meta = load(tmp_path / "m.json.meta.json")["meta"]
    assert meta["tool_version"] == __version__ and meta["config"]["seed"] == 7 and "timestamp" in meta


def test_pipeline_example(tmp_path):
    m = tmp_path / "m.json"
    assert run(["gen-model", "--d", "4", "--edge-prob", "0.5", "--alpha", "1.5", "--seed", "7", "-o", str(m)]) == 0
    out = tmp_path / "report.json"
    argv = ["pipeline", "--model", str(m), "--n", "100000", "--k-rule", "power:0.4", "--delta", "0.05", "--seed", "11", "-o", str(out)]
    assert run(argv) == 0
    rep = load(out)
    assert rep["k_used"] == 100 and rep["ctc"]["rows_condition"] is True
    order = rep["causal_order"]["exact"]
    assert order is not None
    assert is_linear_extension(order, model_from_dict(load(m)).dag.reach)
    assert rep["meta"]["inputs"]["model"]["hash"].startswith("sha256:")
    assert rep["meta"]["config"]["seed"] == 11


def test_recover_example(tmp_path, diamond_file):
    model, path = diamond_file
    g = tmp_path / "population_gamma.json"
    w = tmp_path / "w.json"
    assert run(["ctc", "--model", str(path), "-o", str(g)]) == 0
    assert load(g)["kind"] == "population"
    assert run(["recover", "--gamma", str(g), "--alpha", "1.5", "-o", str(w)]) == 0
    _, W = standardize(air_by_impulse(model), 1.5)
    doc = load(w)
    assert np.max(np.abs(np.array(doc["W"]) - W.values)) <= 1e-10
    assert doc["delta"] == 1e-9 and len(doc["F_standardized"]) == 4


def test_simulate_ctc_classify_chain(tmp_path, diamond_file):
    _, path = diamond_file
    csv = tmp_path / "x.csv"
    assert run(["simulate", "--model", str(path), "--n", "2000", "--seed", "3", "-o", str(csv)]) == 0
    raw = csv.read_bytes()
    assert raw.startswith(b"X1,X2,X3,X4\n") and b"\r" not in raw
    assert read_samples_csv(csv).n == 2000
    g = tmp_path / "g.json"
    assert run(["ctc", "--samples", str(csv), "--k", "50", "--csv", str(tmp_path / "g.csv"), "-o", str(g)]) == 0
    assert load(g)["k_used"] == 50 and "gamma_unstandardized" in load(g)
    rep = tmp_path / "r.json"
    assert run(["classify", "--gamma", str(g), "--mode", "ease", "-o", str(rep)]) == 0
    doc = load(rep)
    assert doc["mode"] == "ease" and sorted(doc["order"]) == [1, 2, 3, 4] and len(doc["verdicts"]) == 6


def test_air_command(tmp_path, diamond_file):
    _, path = diamond_file
    out = tmp_path / "air.json"
    assert run(["air", "--model", str(path), "--csv", str(tmp_path / "w.csv"), "-o", str(out)]) == 0
    doc = load(out)
    assert doc["agreement"]["agree"] and doc["F"][0][3] == pytest.approx(0.5)


def test_oracle_commands(tmp_path, diamond_file, capsys):
    _, path = diamond_file
    assert run(["oracle", "roundtrip", "--d-max", "4", "--graphs", "5", "--seed", "0"]) == 0
    assert capsys.readouterr().out.startswith("PASS roundtrip")
    out = tmp_path / "o.json"
    argv = ["oracle", "brute-force-ctc", "--model", str(path), "--pair", "1", "4", "--n", "100000", "--quantile", "0.995", "--seed", "2", "-o", str(out)]
    assert run(argv) == 0
    assert load(out)["population"] == pytest.approx(1.0)


def test_exit_codes(tmp_path, capsys):
    assert run(["gen-model", "--d", "3", "--bogus"]) == 1
    assert run(["simulate", "--model", str(tmp_path / "missing.json"), "--n", "10", "--seed", "1", "-o", str(tmp_path / "x.csv")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"version": 1, "nodes": []}')
    assert run(["simulate", "--model", str(bad), "--n", "10", "--seed", "1", "-o", str(tmp_path / "x.csv")]) == 1
    # 1 -> 2 -> 3 with gamma[3,2] too small for the weight already assigned to node 1
    g = tmp_path / "g.json"
    gamma = [[1.0, 1.0, 1.0], [0.2, 1.0, 1.0], [0.5, 0.3, 1.0]]
    g.write_text(json.dumps({"version": 1, "kind": "estimated", "d": 3, "rows_condition": True, "gamma": gamma}))
    assert run(["recover", "--gamma", str(g), "--delta", "0.01", "-o", str(tmp_path / "w.json")]) == 2
    err = capsys.readouterr().err
    assert err.count("\n") >= 1 and "W[2,3]" in err


def test_generated_seed_is_recorded(tmp_path):
    out = tmp_path / "m.json"
    assert run(["gen-model", "--d", "3", "--no-timestamp", "-o", str(out)]) == 0
    meta = load(tmp_path / "m.json.meta.json")["meta"]
    assert isinstance(meta["config"]["seed"], int) and "timestamp" not in meta
