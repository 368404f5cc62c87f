import json
import math

import numpy as np
import pytest
import yaml
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from jointfac.harness import cli
from jointfac.harness import config as cfgmod
from jointfac.harness.algorithms import REGISTRY, TrialContext, instance_rng
from jointfac.harness.fileio import (read_labels, read_matrix, read_tensor, write_labels,
                                     write_matrix, write_tensor)
from jointfac.harness.runner import run_experiment, run_trial, to_csv, to_json

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def _custom(**kw):
    doc = dict(experiment="custom", trials=3,
               synth=dict(model="nmf", I=10, J=40, F=2, K=2, snr1_db=20.0, snr2_db=20.0),
               algorithms=["kmeans", "nmf_km"])
    doc.update(kw)
    return cfgmod.from_dict(doc)


# --------------------------------------------------------------------------
# configuration

def test_empty_algorithm_list_rejected():
    with pytest.raises(cfgmod.ConfigError, match="empty"):
        _custom(algorithms=[])


@pytest.mark.parametrize("doc, match", [
    ({"algorithms": ["nope"]}, "unknown algorithm"),
    ({"algorithms": ["kmeans", "kmeans"]}, "duplicate"),
    ({"trials": 0}, "trials"),
    ({"bogus": 1}, "unknown config keys"),
    ({"experiment": "table9"}, "unknown experiment"),
    ({"output": {"format": "xml"}}, "format"),
    ({"algorithms": ["jtkm"]}, "does not apply"),
    ({"synth": {"model": "nmf", "I": 0}}, "invalid synth"),
    ({"sweep": [{"label": "a", "algorithms": {"jnkm": {}}}]}, "not listed"),
])
def test_invalid_configs(doc, match):
    with pytest.raises(cfgmod.ConfigError, match=match):
        _custom(**doc)


def test_every_preset_validates():
    for name in cfgmod.EXPERIMENTS[:-1]:
        cfg = cfgmod.preset(name)
        assert cfg.trials == cfgmod.PRESET_TRIALS
        assert cfg.points()


def test_lambda_sweep_grid():
    cfg = cfgmod.preset("lambda_sweep")
    lams = [algos["jnkm"]["lam"] for _, _, algos in cfg.points()]
    assert np.allclose(lams, np.logspace(0, 4, 9))


def test_yaml_roundtrip_and_hash(tmp_path):
    cfg = _custom(seed=4)
    path = tmp_path / "c.yaml"
    path.write_text(cfg.to_yaml())
    again = cfgmod.load(path)
    assert again.resolved() == cfg.resolved()
    assert again.config_hash() == cfg.config_hash()
    again.parallelism = 8
    again.output_path = "elsewhere.json"
    assert again.config_hash() == cfg.config_hash()
    again.seed = 5
    assert again.config_hash() != cfg.config_hash()


def test_load_reports_bad_yaml(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("trials: [1,\n")
    with pytest.raises(cfgmod.ConfigError, match="invalid YAML"):
        cfgmod.load(path)
    with pytest.raises(cfgmod.ConfigError, match="cannot read"):
        cfgmod.load(tmp_path / "missing.yaml")


# --------------------------------------------------------------------------
# runner

def test_two_algorithms_three_trials_counts():
    doc = run_experiment(_custom())
    assert len(doc["per_trial"]) == 6
    assert len(doc["aggregates"]) == 2
    assert [r["trials"] for r in doc["aggregates"]] == [3, 3]
    assert [r["algorithm"] for r in doc["per_trial"]] == ["kmeans"] * 3 + ["nmf_km"] * 3


def test_kmeans_noiseless_single_trial_is_perfect():
    cfg = _custom(trials=1, algorithms=["kmeans"],
                  synth=dict(model="nmf", I=10, J=40, F=2, K=2))
    (res,) = run_trial(cfg, 0)
    assert res.ok and res.score.accuracy == 1.0
    assert math.isnan(res.score.mse_db)


def test_serial_and_parallel_identical():
    cfg = _custom()
    assert to_json(run_experiment(cfg, jobs=1)) == to_json(run_experiment(cfg, jobs=2))


def test_failures_are_recorded_not_raised(monkeypatch):
    def boom(gt, params, ctx):
        raise RuntimeError("solver exploded")
    monkeypatch.setitem(REGISTRY, "kmeans", REGISTRY["kmeans"].__class__(boom, ("nmf",)))
    doc = run_experiment(_custom())
    bad = [r for r in doc["per_trial"] if r["status"] == "failed"]
    assert len(bad) == 3 and "solver exploded" in bad[0]["error"]
    assert doc["aggregates"][0]["failed"] == 3
    assert doc["aggregates"][0]["accuracy_mean"] is None
    json.loads(to_json(doc))


def test_aggregate_mean_and_sample_std():
    doc = run_experiment(_custom(algorithms=["kmeans"], trials=3))
    accs = [r["accuracy"] for r in doc["per_trial"]]
    agg = doc["aggregates"][0]
    assert np.isclose(agg["accuracy_mean"], np.mean(accs))
    assert np.isclose(agg["accuracy_std"], np.std(accs, ddof=1))


def test_runtime_only_when_requested():
    doc = run_experiment(_custom(trials=1))
    assert "runtime_seconds" not in doc["per_trial"][0]
    doc = run_experiment(_custom(trials=1, record_runtime=True))
    assert doc["per_trial"][0]["runtime_seconds"] >= 0


def test_csv_has_one_row_per_aggregate():
    doc = run_experiment(_custom())
    lines = to_csv(doc).strip().splitlines()
    assert len(lines) == 1 + len(doc["aggregates"])
    assert lines[0].startswith("point,algorithm,trials")


def test_streams_are_independent_and_reproducible():
    a, b = TrialContext(1, 2), TrialContext(1, 2)
    assert a.rng("x").random() == b.rng("x").random()
    assert a.rng("x").random() != a.rng("y").random()
    assert instance_rng(1, 0).random() != instance_rng(1, 1).random()
    calls = []
    a.stage("s", lambda r: calls.append(1) or 7)
    assert a.stage("s", lambda r: calls.append(1) or 8) == 7 and len(calls) == 1


# --------------------------------------------------------------------------
# file formats

@given(arrays(float, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=finite))
def test_matrix_roundtrip(tmp_path_factory, A):
    path = tmp_path_factory.mktemp("m") / "A.txt"
    write_matrix(path, A)
    assert np.array_equal(read_matrix(path), A)


@given(arrays(float, st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4)),
              elements=finite))
def test_tensor_roundtrip(tmp_path_factory, T):
    path = tmp_path_factory.mktemp("t") / "T.txt"
    write_tensor(path, T)
    assert np.array_equal(read_tensor(path), T)


def test_tensor_layout_rows_are_mode_one_slices(tmp_path):
    T = np.arange(24.0).reshape(2, 3, 4)
    write_tensor(tmp_path / "T.txt", T)
    lines = (tmp_path / "T.txt").read_text().splitlines()
    assert lines[0] == "2 3 4"
    first = [float(v) for v in lines[1].split()]
    # J index fastest: T[0, 0, 0], T[0, 1, 0], T[0, 2, 0], T[0, 0, 1], ...
    assert first[:4] == [T[0, 0, 0], T[0, 1, 0], T[0, 2, 0], T[0, 0, 1]]


def test_labels_are_one_based_on_disk(tmp_path):
    write_labels(tmp_path / "l.txt", np.array([0, 2, 1]))
    assert (tmp_path / "l.txt").read_text() == "1\n3\n2\n"
    assert read_labels(tmp_path / "l.txt").tolist() == [0, 2, 1]
    (tmp_path / "z.txt").write_text("0\n1\n")
    with pytest.raises(ValueError):
        read_labels(tmp_path / "z.txt")


def test_matrix_header_mismatch(tmp_path):
    (tmp_path / "m.txt").write_text("2 2\n1 2\n")
    with pytest.raises(ValueError, match="header"):
        read_matrix(tmp_path / "m.txt")


# --------------------------------------------------------------------------
# command line

def test_cli_gen_then_score(tmp_path, capsys):
    out = tmp_path / "inst"
    assert cli.main(["gen", "--model", "nmf", "--I", "8", "--J", "20", "--F", "2",
                     "--K", "2", "--snr1", "20", "--out", str(out), "--seed", "3"]) == 0
    meta = json.loads((out / "truth.json").read_text())
    assert meta["params"]["seed"] == 3 and meta["files"]["W"] == "W.txt"
    assert read_matrix(out / "X.txt").shape == (8, 20)
    capsys.readouterr()
    assert cli.main(["score", "--true-labels", str(out / "labels.txt"),
                     "--pred-labels", str(out / "labels.txt"),
                     "--true-factor", str(out / "W.txt"),
                     "--est-factor", str(out / "W.txt")]) == 0
    scored = json.loads(capsys.readouterr().out)
    assert scored["accuracy"] == 1.0 and scored["mse_db"] == -120.0


def test_cli_gen_tensor(tmp_path):
    out = tmp_path / "ten"
    assert cli.main(["gen", "--model", "tensor", "--I", "6", "--J", "5", "--L", "4",
                     "--F", "2", "--K", "2", "--out", str(out)]) == 0
    assert read_tensor(out / "X.txt").shape == (6, 5, 4)


def test_cli_run_config_file(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump(dict(
        experiment="custom", trials=2, algorithms=["kmeans"],
        synth=dict(model="nmf", I=8, J=30, F=2, K=2))))
    res = tmp_path / "r.json"
    assert cli.main(["run", "--config", str(cfg), "--out", str(res)]) == 0
    doc = json.loads(res.read_text())
    assert len(doc["per_trial"]) == 2 and len(doc["config_hash"]) == 64


def test_cli_print_config(capsys):
    assert cli.main(["run", "--preset", "table6", "--trials", "7", "--print-config"]) == 0
    assert yaml.safe_load(capsys.readouterr().out)["trials"] == 7


@pytest.mark.parametrize("argv", [
    ["run"],
    ["run", "--preset", "table1", "--config", "x.yaml"],
    ["run", "--preset", "nope"],
    ["frobnicate"],
    ["gen", "--model", "graph"],
])
def test_cli_usage_errors_exit_one(argv):
    with pytest.raises(SystemExit) as exc:
        cli.main(argv)
    assert exc.value.code == 1


def test_cli_invalid_values_exit_one(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("experiment: custom\nalgorithms: []\n")
    assert cli.main(["run", "--config", str(cfg)]) == 1
    assert cli.main(["run", "--preset", "table1", "--jobs", "0"]) == 1
    assert cli.main(["gen", "--I", "0", "--out", str(tmp_path / "g")]) == 1
    (tmp_path / "a.txt").write_text("1\n2\n")
    (tmp_path / "b.txt").write_text("1\n")
    assert cli.main(["score", "--true-labels", str(tmp_path / "a.txt"),
                     "--pred-labels", str(tmp_path / "b.txt")]) == 1


def test_cli_runtime_errors_exit_two(tmp_path):
    assert cli.main(["score", "--true-labels", str(tmp_path / "missing.txt"),
                     "--pred-labels", str(tmp_path / "missing.txt")]) == 2
