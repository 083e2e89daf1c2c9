import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lstdq_lab import cli, fileio
from lstdq_lab import experiments as exp
from lstdq_lab.coverage import coverage_report
from lstdq_lab.estimators import LstdqSolution, lstdq_solve, population_moments
from lstdq_lab.features import tabular_features
from lstdq_lab.instances import random_mdp, random_mu_d, random_policy, random_realizable
from lstdq_lab.mdp import StateActionDist
from lstdq_lab.sampling import sample_dataset

GOLDEN = Path(__file__).parent / "golden"


def _golden_columns():
    out = {}
    for line in (GOLDEN / "columns.txt").read_text().splitlines():
        key, cols = line.split(": ")
        out[key] = cols.split(",")
    return out


def test_csv_columns_match_golden():
    g = _golden_columns()
    assert fileio.coverage_columns() == g["coverage"]
    assert exp.CELL_COLUMNS == g["sweep_cells"]
    assert exp.AGGREGATE_COLUMNS == g["sweep_aggregate"]
    assert exp.AUDIT_COLUMNS == g["audit"]
    assert fileio.DATASET_COLUMNS == g["dataset"]


def test_dataset_matches_golden_file(tmp_path):
    mdp = random_mdp(3, 2, 0.5, seed=1, reward_noise=0.1)
    pi = random_policy(3, 2, seed=2)
    data = sample_dataset(mdp, pi, random_mu_d(6, 3), 8, 2024)
    fileio.save_dataset(data, tmp_path / "dataset.csv")
    assert (tmp_path / "dataset.csv").read_text() == (GOLDEN / "dataset.csv").read_text()
    assert (tmp_path / "dataset.meta.json").read_text() == (GOLDEN / "dataset.meta.json").read_text()


def _arrays_equal(a, b):
    return a.shape == b.shape and a.dtype == b.dtype and np.array_equal(a, b)


def test_mdp_policy_features_roundtrip(tmp_path):
    x = random_realizable(3)
    fileio.write_json(tmp_path / "m.json", fileio.mdp_to_dict(x.mdp))
    fileio.write_json(tmp_path / "p.json", fileio.policy_to_dict(x.pi))
    fileio.write_json(tmp_path / "f.json", fileio.features_to_dict(x.fmap))
    fileio.write_json(tmp_path / "d.json", fileio.dist_to_dict(x.mu_d))
    mdp = fileio.mdp_from_dict(fileio.read_json(tmp_path / "m.json"))
    for name in ("transition", "mean_reward", "initial_dist"):
        assert _arrays_equal(getattr(mdp, name), getattr(x.mdp, name))
    assert mdp.gamma == x.mdp.gamma and mdp.r_max == x.mdp.r_max
    pi = fileio.policy_from_dict(fileio.read_json(tmp_path / "p.json"))
    assert _arrays_equal(pi.action_probs, x.pi.action_probs)
    fmap = fileio.features_from_dict(fileio.read_json(tmp_path / "f.json"))
    assert _arrays_equal(fmap.matrix, x.fmap.matrix)
    assert fmap.feature_bound == x.fmap.feature_bound
    mu = fileio.dist_from_dict(fileio.read_json(tmp_path / "d.json"))
    assert _arrays_equal(mu.probs, x.mu_d.probs)


def test_dataset_roundtrip(tmp_path, small_mdp, small_policy, small_mu_d):
    data = sample_dataset(small_mdp, small_policy, small_mu_d, 5000, 17)
    fileio.save_dataset(data, tmp_path / "d.csv")
    back = fileio.load_dataset(tmp_path / "d.csv")
    for c in ("s", "a", "r", "s_next", "a_next"):
        assert _arrays_equal(getattr(back, c), getattr(data, c))
    assert back.seed == data.seed
    assert _arrays_equal(back.mu_d.probs, data.mu_d.probs)


def test_dataset_header_checked(tmp_path):
    (tmp_path / "d.csv").write_text("s,a,reward,s_next,a_next\n0,0,0.1,0,0\n")
    (tmp_path / "d.meta.json").write_text(json.dumps(
        {"schema_version": 1, "type": "dataset", "seed": 0, "n": 1, "mu_d": [1.0]}))
    with pytest.raises(fileio.FormatError):
        fileio.load_dataset(tmp_path / "d.csv")


def test_moments_and_solution_roundtrip(tmp_path, small_mdp, small_policy):
    p = np.full(8, 1 / 7)
    p[1] = 0.0
    m = population_moments(small_mdp, small_policy, StateActionDist(p), tabular_features(small_mdp))
    sol = lstdq_solve(m)
    assert sol.theta is None
    fileio.write_json(tmp_path / "m.json", fileio.moments_to_dict(m))
    fileio.write_json(tmp_path / "s.json", fileio.solution_to_dict(sol))
    m2 = fileio.moments_from_dict(fileio.read_json(tmp_path / "m.json"))
    assert _arrays_equal(m2.sigma, m.sigma) and _arrays_equal(m2.a_mat, m.a_mat)
    s2 = fileio.solution_from_dict(fileio.read_json(tmp_path / "s.json"))
    assert s2.theta is None and s2.invertible is False
    assert s2.min_singular_a == sol.min_singular_a


def test_infinity_written_as_string(tmp_path):
    sol = LstdqSolution(np.array([1.0, math.inf]), "inverse", True, math.nan)
    fileio.write_json(tmp_path / "s.json", fileio.solution_to_dict(sol))
    raw = json.loads((tmp_path / "s.json").read_text())
    assert raw["theta"] == [1.0, "inf"] and raw["min_singular_a"] == "nan"
    back = fileio.solution_from_dict(raw)
    assert back.theta[1] == math.inf and math.isnan(back.min_singular_a)


def test_coverage_csv_inf_and_blank(tmp_path, small_mdp, small_policy):
    p = np.full(8, 1 / 7)
    p[0] = 0.0
    rep = coverage_report(small_mdp, small_policy, StateActionDist(p), tabular_features(small_mdp))
    fileio.write_coverage(tmp_path / "c.csv", [(0, rep)])
    header, rows = fileio.read_csv(tmp_path / "c.csv")
    assert header == fileio.coverage_columns()
    assert rows[0]["c_phi"] == "inf"
    assert rows[0]["c_phi_emp"] == ""
    assert rows[0]["onpolicy_certified"] == "false"


def test_wrong_document_type_rejected():
    with pytest.raises(fileio.FormatError):
        fileio.policy_from_dict({"type": "tabular_mdp"})
    with pytest.raises(fileio.FormatError):
        fileio.policy_from_dict({"type": "policy", "schema_version": 9, "action_probs": [[1]]})


def test_atomic_write_leaves_no_temp_files(tmp_path):
    fileio.atomic_write_text(tmp_path / "a.txt", "one")
    fileio.atomic_write_text(tmp_path / "a.txt", "two")
    assert (tmp_path / "a.txt").read_text() == "two"
    assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]


finite = st.floats(allow_nan=False, allow_infinity=True, width=64)


@settings(max_examples=200, deadline=None)
@given(st.lists(finite, min_size=1, max_size=20))
def test_float_formats_are_lossless(xs):
    for x in xs:
        assert float(fileio.fmt_float(x)) == x
    doc = json.loads(json.dumps(fileio._encode(np.array(xs))))
    assert fileio._num(doc) == xs


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 3))
def test_random_mdp_json_roundtrip(seed, S, A):
    mdp = random_mdp(S, A, 0.7, seed)
    back = fileio.mdp_from_dict(json.loads(json.dumps(fileio._encode(fileio.mdp_to_dict(mdp)))))
    assert _arrays_equal(back.transition, mdp.transition)
    assert _arrays_equal(back.mean_reward, mdp.mean_reward)


# --- command line -------------------------------------------------------------

def _write_cfg(tmp_path, **extra):
    cfg = {"schema_version": 1, "seed": 7,
           "mdp": {"source": "random", "num_states": 4, "num_actions": 2, "gamma": 0.5,
                   "reward_noise": 0.1},
           "policy": {"source": "random"},
           "features": {"kind": "realizable_random", "dim": 3},
           "data_distribution": {"kind": "random", "floor": 0.1},
           "dataset": {"n": 500}}
    cfg.update(extra)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_cli_counterexample(capsys):
    assert cli.main(["counterexample", "--epsilon", "0.01", "--gamma", "0.9"]) == 0
    out = dict(line.split() for line in capsys.readouterr().out.splitlines())
    assert out["lhs"] == "1.0" and out["rhs"] == "100.0"


def test_cli_counterexample_bad_epsilon():
    assert cli.main(["counterexample", "--epsilon", "1.5", "--gamma", "0.9"]) == 2


def test_cli_verify_tabular_chi2(capsys):
    assert cli.main(["verify", "--suite", "tabular-chi2", "--seeds", "50"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "instance_id,property_id,residual,pass"
    assert len(lines) == 51 and all(l.endswith(",true") for l in lines[1:])


def test_cli_verify_failure_exit_code(monkeypatch, capsys):
    monkeypatch.setitem(exp.PROPERTIES, "tabular-chi2", lambda inst: (1.0, 1e-8))
    assert cli.main(["verify", "--suite", "tabular-chi2", "--seeds", "3"]) == 3


def test_cli_missing_config(tmp_path):
    assert cli.main(["coverage", str(tmp_path / "missing.json")]) == 2


def test_cli_unknown_field(tmp_path, capsys):
    path = _write_cfg(tmp_path, colour="blue")
    assert cli.main(["coverage", str(path)]) == 2
    assert "colour" in capsys.readouterr().err


def test_cli_bad_nested_field(tmp_path, capsys):
    path = _write_cfg(tmp_path, dataset={"n": -3})
    assert cli.main(["coverage", str(path)]) == 2
    assert "dataset/n" in capsys.readouterr().err


def test_cli_malformed_json_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n "schema_version": 1,\n "seed": ,\n}')
    assert cli.main(["coverage", str(path)]) == 2
    assert f"{path}:3:" in capsys.readouterr().err


def test_cli_unknown_subcommand():
    assert cli.main(["frobnicate"]) == 2


def test_cli_generate_roundtrip(tmp_path):
    path = _write_cfg(tmp_path)
    out = tmp_path / "out"
    assert cli.main(["generate", str(path), "--out", str(out)]) == 0
    x = cli.build_instance(cli.load_config(path))
    mdp = fileio.mdp_from_dict(fileio.read_json(out / "mdp.json"))
    assert _arrays_equal(mdp.transition, x.mdp.transition)
    fmap = fileio.features_from_dict(fileio.read_json(out / "features.json"))
    assert _arrays_equal(fmap.matrix, x.fmap.matrix)
    data = fileio.load_dataset(out / "dataset.csv")
    assert data.n == 500
    # Instances built from the generated files reproduce the originals.
    cfg2 = {"schema_version": 1, "seed": 0,
            "mdp": {"source": "file", "path": "out/mdp.json"},
            "policy": {"source": "file", "path": "out/policy.json"},
            "features": {"kind": "file", "path": "out/features.json"},
            "data_distribution": {"kind": "file", "path": "out/mu_d.json"}}
    (tmp_path / "cfg2.json").write_text(json.dumps(cfg2))
    y = cli.build_instance(cli.load_config(tmp_path / "cfg2.json"))
    assert _arrays_equal(y.pi.action_probs, x.pi.action_probs)
    assert _arrays_equal(y.mu_d.probs, x.mu_d.probs)


def test_cli_estimate_file_and_config_agree(tmp_path, capsys):
    path = _write_cfg(tmp_path)
    cli.main(["generate", str(path), "--out", str(tmp_path / "out")])
    capsys.readouterr()
    assert cli.main(["estimate", str(path)]) == 0
    a = capsys.readouterr().out
    assert cli.main(["estimate", str(path), "--dataset", str(tmp_path / "out/dataset.csv")]) == 0
    b = capsys.readouterr().out
    assert a == b
    vals = dict(line.split() for line in a.splitlines())
    assert abs(float(vals["j_hat"]) - float(vals["j_true"])) < 0.2
    assert math.isfinite(float(vals["c_hat"]))


def test_cli_estimate_lossmin_needs_radius(tmp_path):
    path = _write_cfg(tmp_path)
    assert cli.main(["estimate", str(path), "--solver", "loss_min"]) == 2
    assert cli.main(["estimate", str(path), "--solver", "loss_min", "--b-theta", "100"]) == 0


def test_cli_coverage_csv(tmp_path):
    path = _write_cfg(tmp_path, coverage={"delta": 0.1})
    assert cli.main(["coverage", str(path), "--out", str(tmp_path / "c.csv")]) == 0
    header, rows = fileio.read_csv(tmp_path / "c.csv")
    assert header == _golden_columns()["coverage"] and len(rows) == 1
    assert rows[0]["c_phi_emp"] != ""


def test_cli_coverage_with_abstraction(tmp_path, capsys):
    path = _write_cfg(tmp_path, policy={"source": "uniform"}, features={"kind": "tabular"},
                      coverage={"abstraction": {"state_to_block": [0, 0, 1, 1], "num_blocks": 2}})
    assert cli.main(["coverage", str(path)]) == 0
    lines = capsys.readouterr().out.splitlines()
    row = dict(zip(lines[0].split(","), lines[1].split(",")))
    assert row["agg_concentrability_chi2"] != ""


def test_cli_sweep_writes_files_deterministically(tmp_path):
    sweep = {"n_grid": [100, 400, 1600], "num_seeds": 30}
    path = _write_cfg(tmp_path, sweep=sweep)
    assert cli.main(["sweep", str(path), "--out", str(tmp_path / "s1")]) == 0
    assert cli.main(["sweep", str(path), "--out", str(tmp_path / "s2")]) == 0
    for name in ("cells.csv", "aggregate.csv"):
        assert (tmp_path / "s1" / name).read_bytes() == (tmp_path / "s2" / name).read_bytes()
    header, rows = fileio.read_csv(tmp_path / "s1" / "cells.csv")
    assert header == exp.CELL_COLUMNS and len(rows) == 90


def test_cli_sweep_rejects_small_seed_count(tmp_path):
    path = _write_cfg(tmp_path, sweep={"n_grid": [100, 400, 1600], "num_seeds": 5})
    assert cli.main(["sweep", str(path), "--out", str(tmp_path / "s")]) == 2


def test_cli_sweep_rejects_non_realizable(tmp_path):
    path = _write_cfg(tmp_path, features={"kind": "abstraction",
                                          "abstraction": {"state_to_block": [0, 0, 0, 1],
                                                          "num_blocks": 2}},
                      sweep={"n_grid": [100, 400, 1600], "num_seeds": 30})
    assert cli.main(["sweep", str(path), "--out", str(tmp_path / "s")]) == 2


def test_cli_sweep_realizability_tolerance_knob(tmp_path):
    features = {"kind": "abstraction",
                "abstraction": {"state_to_block": [0, 0, 0, 1], "num_blocks": 2}}
    sweep = {"n_grid": [100, 400], "num_seeds": 30, "realizability_rtol": 1e6}
    path = _write_cfg(tmp_path, features=features, sweep=sweep)
    assert cli.main(["sweep", str(path), "--out", str(tmp_path / "s")]) == 0
    bad = _write_cfg(tmp_path, features=features, sweep={**sweep, "realizability_rtol": -1})
    assert cli.main(["sweep", str(bad), "--out", str(tmp_path / "s")]) == 2


def test_cli_invalid_inline_policy(tmp_path, capsys):
    path = _write_cfg(tmp_path, policy={"source": "inline", "action_probs": [[0.9, 0.9]] * 4})
    assert cli.main(["coverage", str(path)]) == 2
    assert "invalid configuration" in capsys.readouterr().err


def test_module_entry_point():
    import subprocess
    import sys
    out = subprocess.run([sys.executable, "-m", "lstdq_lab", "counterexample",
                          "--epsilon", "0.1", "--gamma", "0.5"], capture_output=True, text=True)
    assert out.returncode == 0 and "rhs 10.0" in out.stdout
