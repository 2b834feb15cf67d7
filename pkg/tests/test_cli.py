import csv
import json
import subprocess
import sys
from importlib.resources import files

import jsonschema
import numpy as np
import pytest

from advsvm import fit, synthetic_example
from advsvm.cli import main
from advsvm.model import read_csv


def schema(name):
    return json.loads((files("advsvm") / "schemas" / f"{name}.schema.json").read_text())


def run(*args):
    return main([str(a) for a in args])


def load(path):
    return json.loads(path.read_text())


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run("best-response", "classifier", "--out", d / "clf.json") == 0
    assert run("best-response", "adversary", "--opponent", d / "clf.json", "--out", d / "adv.json") == 0
    return d


def test_gen_synthetic_sizes(tmp_path):
    assert run("gen-synthetic", "--n-per-class", 0, "--out", tmp_path / "e.csv") == 0
    assert (tmp_path / "e.csv").read_text().strip() == "x1,x2,label"
    assert run("gen-synthetic", "--n-per-class", 500, "--out", tmp_path / "d.csv") == 0
    with open(tmp_path / "d.csv") as fh:
        assert sum(1 for _ in csv.reader(fh)) == 1001


def test_refit_recovers_parameters(tmp_path):
    assert run("gen-synthetic", "--n-per-class", 100_000, "--out", tmp_path / "d.csv") == 0
    assert run("fit", tmp_path / "d.csv", "--out", tmp_path / "m.json") == 0
    doc = load(tmp_path / "m.json")
    jsonschema.validate(doc, schema("model"))
    ref = synthetic_example().to_dict()
    for key in ("mu_pos", "sigma_pos", "mu_neg", "sigma_neg"):
        assert np.max(np.abs(np.array(doc["model"][key]) - np.array(ref[key]))) <= 0.1


def test_fit_roundtrip_matches_library(tmp_path):
    assert run("gen-synthetic", "--n-per-class", 300, "--seed", 3, "--out", tmp_path / "d.csv") == 0
    assert run("fit", tmp_path / "d.csv", "--whiten", "--out", tmp_path / "m.json") == 0
    doc = load(tmp_path / "m.json")
    assert doc["whiten"] is not None
    assert run("fit", tmp_path / "d.csv", "--out", tmp_path / "plain.json") == 0
    np.testing.assert_allclose(load(tmp_path / "plain.json")["model"]["mu_pos"], fit(read_csv(tmp_path / "d.csv")).mu_pos)


def test_fit_errors(tmp_path, capsys):
    (tmp_path / "nolabel.csv").write_text("x1,x2\n1,2\n")
    assert run("fit", tmp_path / "nolabel.csv") != 0
    err = capsys.readouterr().err.splitlines()
    record = json.loads(err[0])
    assert record["error"] == "data_format" and record["column"] == "label"
    assert "label" in err[1]
    (tmp_path / "01.csv").write_text("x1,label\n1,1\n2,0\n3,0\n4,1\n")
    assert run("fit", tmp_path / "01.csv") != 0
    assert "--labels01" in capsys.readouterr().err
    assert run("fit", tmp_path / "01.csv", "--labels01", "--out", tmp_path / "ok.json") == 0


def test_best_response_documents(workdir):
    clf = load(workdir / "clf.json")
    adv = load(workdir / "adv.json")
    for doc in (clf, adv):
        jsonschema.validate(doc, schema("best-response"))
    assert clf["metrics"]["true_negative"] == pytest.approx(0.99, abs=1e-3)
    assert clf["achieved"] == pytest.approx(0.9993, abs=1e-3)
    assert adv["metrics"]["manipulation_cost"] <= 2.0 * (1 + 1e-6)
    m = adv["metrics"]
    assert m["true_positive"] + m["false_negative"] == pytest.approx(1.0, abs=1e-12)


def test_zero_budget_adversary(workdir):
    out = workdir / "adv0.json"
    assert run("best-response", "adversary", "--opponent", workdir / "clf.json", "--epsilon", 0, "--out", out) == 0
    pol = load(out)["policy"]
    assert np.max(np.abs(np.array(pol["a_matrix"]) - np.eye(2))) <= 1e-4


def test_adversary_requires_opponent(capsys):
    assert run("best-response", "adversary") != 0
    assert json.loads(capsys.readouterr().err.splitlines()[0])["error"] == "data_format"


def test_wrong_policy_kind(workdir, capsys):
    assert run("eval", "--classifier", workdir / "adv.json") != 0
    assert "ClassifierPolicy" in capsys.readouterr().err


def test_eval_and_simulate_agree(workdir):
    assert run("eval", "--adversary", workdir / "adv.json", "--classifier", workdir / "clf.json", "--out", workdir / "m.json") == 0
    metrics = load(workdir / "m.json")
    jsonschema.validate(metrics, schema("metrics"))
    assert run(
        "simulate", "--adversary", workdir / "adv.json", "--classifier", workdir / "clf.json",
        "--n", 200_000, "--scatter", workdir / "s.csv", "--out", workdir / "r.json",
    ) == 0
    rates = load(workdir / "r.json")
    jsonschema.validate(rates, schema("rates"))
    r, cf = rates["rates"], metrics["metrics"]
    assert abs(r["tp"] - cf["true_positive"]) <= 4 * r["std_err_tp"]
    assert abs(r["tn"] - cf["true_negative"]) <= 4 * r["std_err_tn"]
    with open(workdir / "s.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x1", "x2", "class", "manipulated"]
    assert len(rows) == 1 + 3 * 500


def test_simulate_is_seeded(workdir):
    outs = []
    for i in range(2):
        p = workdir / f"r{i}.json"
        assert run("simulate", "--classifier", workdir / "clf.json", "--n", 10_000, "--seed", 5, "--out", p) == 0
        outs.append(p.read_text())
    assert outs[0] == outs[1]


def test_boundary_csv(workdir):
    out = workdir / "b.csv"
    assert run("boundary", "--classifier", workdir / "clf.json", "--count", 25, "--out", out) == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x1", "x2"]
    pts = np.array(rows[1:], dtype=float)
    w = load(workdir / "clf.json")["policy"]
    np.testing.assert_allclose(pts @ np.array(w["weights"]) + w["bias"], 0.0, atol=1e-12)


def test_equilibrium_outputs(tmp_path):
    out, trace = tmp_path / "eq.json", tmp_path / "trace.jsonl"
    assert run("equilibrium", "--epsilon", 0, "--max-iters", 10, "--verify", "--trace", trace, "--out", out) == 0
    doc = load(out)
    jsonschema.validate(doc, schema("equilibrium"))
    assert doc["metrics"]["false_negative"] == pytest.approx(0.0007, abs=1e-3)
    assert doc["verification"]["is_equilibrium"]
    rec_schema = schema("trace-record")
    lines = trace.read_text().splitlines()
    assert len(lines) == doc["iterations"]
    for line in lines:
        jsonschema.validate(json.loads(line), rec_schema)


def test_model_file_input(tmp_path, workdir):
    (tmp_path / "m.json").write_text(json.dumps({"schema": "advsvm/model/v1", "model": synthetic_example().to_dict(), "whiten": None}))
    assert run("eval", "--model", tmp_path / "m.json", "--classifier", workdir / "clf.json", "--out", tmp_path / "a.json") == 0
    assert run("eval", "--classifier", workdir / "clf.json", "--out", tmp_path / "b.json") == 0
    assert load(tmp_path / "a.json") == load(tmp_path / "b.json")


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "advsvm", "gen-synthetic", "--n-per-class", "3", "--out", str(tmp_path / "x.csv")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert len((tmp_path / "x.csv").read_text().splitlines()) == 7
