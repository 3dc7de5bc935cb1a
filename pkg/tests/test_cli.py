import csv
import json

import numpy as np
import pytest

from gridreduce import __version__, data_path
from gridreduce import cli
from gridreduce import io as gio
from gridreduce.errors import TrainingAborted
from gridreduce.learn import build_dataset, generate_scenarios

CASE6 = str(data_path("case6_zonal.m"))
ZONES6 = str(data_path("zones6.json"))
CASE118 = str(data_path("case118.m"))
ZONES118 = str(data_path("zones118.json"))


def run(*argv):
    return cli.main([str(a) for a in argv])


def rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    assert run("reduce", CASE6, "--zones", ZONES6, "-o", d / "red.json") == 0
    assert run("gen", CASE6, "--count", 300, "--split", "250/50", "--seed", 9, "-o", d / "scen.csv") == 0
    assert run("dataset", CASE6, d / "scen.csv", "--zones", ZONES6, "-o", d / "ds.csv") == 0
    assert run("train", d / "ds.csv", "--method", "lbfgs", "--batch-size", 0, "-o", d / "ckpt.json") == 0
    return d


def test_reduce_118_reports_43_zones(tmp_path, capsys):
    assert run("reduce", CASE118, "--zones", ZONES118, "-o", tmp_path / "b.json") == 0
    out = capsys.readouterr().out
    assert "zones: 43" in out and "tie-lines: 66" in out
    bundle = json.loads((tmp_path / "b.json").read_text())
    assert bundle["zone_count"] == 43 and len(bundle["tie_order"]) == 66
    assert bundle["tool_version"] == __version__
    assert bundle["case_sha256"] == gio.file_hash(CASE118)


def test_reduce_six_bus(tmp_path, capsys):
    assert run("reduce", CASE6, "--zones", ZONES6, "-o", tmp_path / "b.json") == 0
    assert "zones: 4  tie-lines: 5" in capsys.readouterr().out


def test_reduce_without_zones_warns(tmp_path, capsys):
    assert run("reduce", CASE6, "-o", tmp_path / "b.json") == 0
    captured = capsys.readouterr()
    assert "warning" in captured.err
    assert json.loads((tmp_path / "b.json").read_text())["zone_count"] == 6


def test_missing_case_exit_2(tmp_path, capsys):
    assert run("reduce", tmp_path / "missing.m", "-o", tmp_path / "b.json") == 2
    assert "cannot read" in capsys.readouterr().err


def test_dangling_branch_named_in_error(tmp_path, capsys):
    text = data_path("case6_zonal.m").read_text().replace("\t4\t5\t0\t0.1", "\t4\t9\t0\t0.1")
    bad = tmp_path / "bad.m"
    bad.write_text(text)
    assert run("reduce", bad, "-o", tmp_path / "b.json") == 2
    assert "unknown bus 9" in capsys.readouterr().err


def test_gen_split_rows(tmp_path):
    assert run("gen", CASE6, "--count", 10000, "--split", "8000/2000", "-o", tmp_path / "s.csv") == 0
    body = rows(tmp_path / "s.csv")[1:]
    assert sum(r[1] == "train" for r in body) == 8000
    assert sum(r[1] == "test" for r in body) == 2000
    meta = json.loads((tmp_path / "s.json").read_text())
    assert meta["seed"] == 0 and meta["sigma"] == 0.15 and meta["tool_version"] == __version__


def test_gen_sigma_zero_is_nominal(tmp_path):
    assert run("gen", CASE6, "--count", 3, "--sigma", 0, "-o", tmp_path / "s.csv") == 0
    scen = gio.read_scenarios(tmp_path / "s.csv")
    np.testing.assert_array_equal(scen.injections, np.tile([-4.0, 1.0, 2.0, 0.5, 0.3, 0.2], (3, 1)))


@pytest.mark.invariants
def test_gen_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert run("gen", CASE118, "--count", 50, "--seed", 4, "-o", tmp_path / f"{name}.csv") == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_config_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"sigma": 0.0, "seed": 21, "count": 4}))
    assert run("gen", CASE6, "--config", cfg, "-o", tmp_path / "a.csv") == 0
    meta = json.loads((tmp_path / "a.json").read_text())
    assert (meta["sigma"], meta["seed"], sum(meta["split"])) == (0.0, 21, 4)
    assert run("gen", CASE6, "--config", cfg, "--sigma", 0.1, "-o", tmp_path / "b.csv") == 0
    meta = json.loads((tmp_path / "b.json").read_text())
    assert (meta["sigma"], meta["seed"]) == (0.1, 21)
    cfg.write_text(json.dumps({"sigmaa": 0.1}))
    assert run("gen", CASE6, "--config", cfg, "-o", tmp_path / "c.csv") == 2


def test_bad_split_exit_2(tmp_path):
    assert run("gen", CASE6, "--split", "80-20", "-o", tmp_path / "s.csv") == 2
    assert run("gen", CASE6, "--count", 5, "--split", "3/3", "-o", tmp_path / "s.csv") == 2


def test_dataset_round_trip(six, tmp_path):
    scen = generate_scenarios(six.net, 12, seed=1)
    ds = build_dataset(six.net, six.partition, scen)
    gio.write_dataset(ds, tmp_path / "d.csv")
    back = gio.read_dataset(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.P_R, ds.P_R)
    np.testing.assert_array_equal(back.targets, ds.targets)
    np.testing.assert_array_equal(back.is_train, ds.is_train)
    assert back.tie_order == ds.tie_order and back.zone_hash == ds.zone_hash
    assert back.baseline == ds.baseline
    assert back.meta["seed"] == 1


def test_pipeline_trained_beats_baseline(pipeline, tmp_path):
    d = pipeline
    assert run("eval", d / "ds.csv", d / "red.json", "-o", tmp_path / "base") == 0
    assert run("eval", d / "ds.csv", d / "ckpt.json", "-o", tmp_path / "trained") == 0
    base = json.loads((tmp_path / "base" / "metrics.json").read_text())
    trained = json.loads((tmp_path / "trained" / "metrics.json").read_text())
    assert trained["sq_two_norm_loss"] < base["sq_two_norm_loss"]
    assert len(trained["mae_mw_per_tie"]) == 5
    per_tie = rows(tmp_path / "trained" / "per_tie_mae.csv")
    assert per_tie[0] == ["from_zone", "to_zone", "mae_mw"] and len(per_tie) == 6
    curve = rows(tmp_path / "trained" / "cumulative_error.csv")
    assert len(curve) == 1 + 50 * 5
    assert float(curve[-1][1]) == 1.0


def test_checkpoint_contents(pipeline):
    ck = json.loads((pipeline / "ckpt.json").read_text())
    assert {"b", "gamma", "rho", "tie_order", "ref_zone", "zone_hash", "tool_version", "seed"} <= set(ck)
    assert ck["tie_order"] == [[0, 1], [0, 3], [1, 2], [1, 3], [2, 3]]
    assert ck["method"] == "lbfgs"


@pytest.mark.invariants
def test_pipeline_idempotent(pipeline, tmp_path):
    d = pipeline
    assert run("dataset", CASE6, d / "scen.csv", "--zones", ZONES6, "-o", tmp_path / "ds.csv") == 0
    assert (tmp_path / "ds.csv").read_bytes() == (d / "ds.csv").read_bytes()
    assert (tmp_path / "ds.json").read_bytes() == (d / "ds.json").read_bytes()
    assert run("train", d / "ds.csv", "--method", "lbfgs", "--batch-size", 0, "-o", tmp_path / "ck.json") == 0
    assert (tmp_path / "ck.json").read_bytes() == (d / "ckpt.json").read_bytes()


def test_base_case_only_training_reaches_zero_mae(tmp_path):
    assert run("gen", CASE6, "--count", 1, "--split", "1/0", "--sigma", 0, "-o", tmp_path / "s.csv") == 0
    assert run("dataset", CASE6, tmp_path / "s.csv", "--zones", ZONES6, "-o", tmp_path / "d.csv") == 0
    assert run("train", tmp_path / "d.csv", "--batch-size", 0, "-o", tmp_path / "c.json") == 0
    assert run("eval", tmp_path / "d.csv", tmp_path / "c.json", "--split", "train", "-o", tmp_path / "e") == 0
    metrics = json.loads((tmp_path / "e" / "metrics.json").read_text())
    assert metrics["mae_mw"] <= 0.01


def test_hash_mismatch(pipeline, tmp_path, capsys):
    assert run("reduce", CASE6, "-o", tmp_path / "single.json") == 0
    capsys.readouterr()
    assert run("eval", pipeline / "ds.csv", tmp_path / "single.json", "-o", tmp_path / "e") == 2
    assert "HashMismatch" in capsys.readouterr().err


def test_training_abort_exit_3(pipeline, tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise TrainingAborted("B' singular on 20 consecutive trial steps", {"where": "iteration 3"})

    monkeypatch.setattr(cli, "optimize", boom)
    assert run("train", pipeline / "ds.csv", "-o", tmp_path / "c.json") == 3
    err = capsys.readouterr().err
    assert "iteration 3" in err
    assert not (tmp_path / "c.json").exists()


def test_inspect(pipeline, capsys):
    assert run("inspect", CASE6) == 0
    assert "6 buses" in capsys.readouterr().out
    assert run("inspect", pipeline / "ds.csv") == 0
    out = capsys.readouterr().out
    assert "zone_hash" in out and "n_discarded: 0" in out


def test_version(capsys):
    with pytest.raises(SystemExit) as ei:
        cli.main(["--version"])
    assert ei.value.code == 0
    assert __version__ in capsys.readouterr().out
