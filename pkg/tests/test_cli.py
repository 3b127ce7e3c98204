import csv
import json

import numpy as np
import pytest

from dbgnn import cli


def run(tmp_path, *args):
    out = tmp_path / "out"
    code = cli.main([*args, "--out", str(out)])
    return code, out


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_spectrum_single_edge(tmp_path):
    code, out = run(tmp_path, "spectrum", "--preset", "single_edge")
    assert code == 0
    rows = read_csv(out / "spectrum.csv")
    assert rows[0] == ["index", "eigenvalue"]
    np.testing.assert_allclose([float(r[1]) for r in rows[1:]], [-1.5, 0.5, 1.5], atol=1e-12)
    man = json.loads((out / "manifest.json").read_text())
    assert man["subcommand"] == "spectrum" and man["results"]["gap_holds"] is True
    assert set(man["artifacts"]) == {"spectrum.csv"}


def test_spectrum_massless_not_gated(tmp_path):
    code, _ = run(tmp_path, "spectrum", "--preset", "single_edge", "--set", "beta=0.0")
    assert code == 0


def test_malformed_config_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"graph": {"family": "path", "n": 3}, "bogus": 1}))
    assert run(tmp_path, "spectrum", "--config", str(bad))[0] == 2
    bad.write_text("{not json")
    assert run(tmp_path, "spectrum", "--config", str(bad))[0] == 2
    bad.write_text(json.dumps({"b": "one"}))
    assert run(tmp_path, "spectrum", "--config", str(bad))[0] == 2
    assert run(tmp_path, "spectrum", "--set", "graph.n=1")[0] == 2
    assert cli.main(["nosuchcommand"]) == 2


def test_unknown_preset(tmp_path):
    assert run(tmp_path, "spread", "--preset", "fig99")[0] == 2


def test_spread_fig3_five_panels(tmp_path):
    code, out = run(tmp_path, "spread", "--preset", "fig3", "--set", "T=12")
    assert code == 0
    svgs = sorted(p.name for p in out.glob("*.svg"))
    assert len(svgs) == 5
    rows = read_csv(out / "spread_lindb.csv")
    assert rows[0] == ["step", "node_id", "activation"]
    assert len(rows) == 1 + 13 * 100


def test_spread_fig1_two_panels(tmp_path):
    code, out = run(tmp_path, "spread", "--preset", "fig1", "--set", "auto_horizon=false", "--set", "T=50")
    assert code == 0
    assert sorted(p.name for p in out.glob("*.svg")) == ["spread_lindb.svg", "spread_mpnn_linear.svg"]


def test_svg_does_not_affect_csv(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    cli.main(["spread", "--preset", "fig6", "--set", "T=20", "--out", str(a)])
    cli.main(["spread", "--preset", "fig6", "--set", "T=20", "--set", "svg_max_rows=3", "--out", str(b)])
    assert (a / "spread_db1s.csv").read_bytes() == (b / "spread_db1s.csv").read_bytes()
    assert (a / "spread_db1s.svg").read_bytes() != (b / "spread_db1s.svg").read_bytes()


def test_manifest_rerun_is_byte_identical(tmp_path):
    code, out = run(tmp_path, "spread", "--preset", "fig5", "--set", "T=15", "--seed", "3")
    assert code == 0
    again = tmp_path / "again"
    assert cli.main(["spread", "--config", str(out / "manifest.json"), "--out", str(again)]) == 0
    for p in out.glob("*.csv"):
        assert (again / p.name).read_bytes() == p.read_bytes()
    assert (again / "manifest.json").read_bytes() == (out / "manifest.json").read_bytes()


def test_manifest_for_wrong_subcommand(tmp_path):
    _, out = run(tmp_path, "spectrum", "--preset", "single_edge")
    assert cli.main(["spread", "--config", str(out / "manifest.json"), "--out", str(tmp_path / "x")]) == 2


def test_dirichlet_small(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seeds": [0, 1], "dbgnn_steps": 30, "gcn_layers": 10, "min_passing": 0}))
    code, out = run(tmp_path, "dirichlet", "--config", str(cfg))
    assert code == 0
    db = read_csv(out / "dirichlet_dbgnn.csv")
    gc = read_csv(out / "dirichlet_gcn.csv")
    assert db[0] == gc[0] == ["step", "dirichlet_energy", "seed"]
    assert len(db) == 1 + 60 and len(gc) == 1 + 20


def test_dirichlet_thread_env_does_not_change_output(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seeds": [0, 1, 2], "dbgnn_steps": 20, "gcn_layers": 5, "min_passing": 0}))
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["dirichlet", "--config", str(cfg), "--out", str(a)])
    monkeypatch.setenv("DBGNN_THREADS", "3")
    cli.main(["dirichlet", "--config", str(cfg), "--out", str(b)])
    assert (a / "dirichlet_dbgnn.csv").read_bytes() == (b / "dirichlet_dbgnn.csv").read_bytes()


SMALL_TRAIN = {"task": {"size": 10, "n_graphs": 10},
               "model": {"d_n_hidden": 4, "d_e_hidden": 4, "K": 1, "T": 2, "node_dropout": 0.0,
                         "edge_dropout": 0.0},
               "training": {"epochs": 3, "batch_size": 4, "max_lr": 0.01}}


def test_train_outputs_and_resume(tmp_path):
    cfg = tmp_path / "t.json"
    cfg.write_text(json.dumps({**SMALL_TRAIN, "de_trace": True}))
    code, out = run(tmp_path, "train", "--config", str(cfg))
    assert code == 0
    rows = read_csv(out / "train_report.csv")
    assert rows[0] == ["epoch", "train_loss", "val_loss", "metric", "lr"] and len(rows) == 4
    assert len(read_csv(out / "de_trace.csv")) == 1 + 3
    # resume with zero further epochs reproduces the stored best-model metrics
    res = {**SMALL_TRAIN, "resume": str(out / "checkpoint.npz"), "training": {**SMALL_TRAIN["training"], "epochs": 0}}
    cfg2 = tmp_path / "r.json"
    cfg2.write_text(json.dumps(res))
    out2 = tmp_path / "resumed"
    assert cli.main(["train", "--config", str(cfg2), "--out", str(out2)]) == 0
    first = dict(read_csv(out / "final_metrics.csv")[1:])
    second = dict(read_csv(out2 / "final_metrics.csv")[1:])
    for k in ("val_r2", "test_loss", "train_mae"):
        assert first[k] == second[k]


def test_train_lr_zero_flat(tmp_path):
    cfg = tmp_path / "t.json"
    cfg.write_text(json.dumps({**SMALL_TRAIN, "training": {**SMALL_TRAIN["training"], "max_lr": 0.0}}))
    code, out = run(tmp_path, "train", "--config", str(cfg))
    assert code == 0
    losses = np.array([float(r[1]) for r in read_csv(out / "train_report.csv")[1:]])
    np.testing.assert_allclose(losses, losses[0], rtol=1e-12)


def test_gradcheck_and_negative_control(tmp_path):
    cfg = {"model": {"d_n_hidden": 4, "d_e_hidden": 3, "K": 1, "T": 2, "node_dropout": 0.0, "edge_dropout": 0.0,
                     "spread": 0.3}}
    p = tmp_path / "g.json"
    p.write_text(json.dumps(cfg))
    code, out = run(tmp_path, "gradcheck", "--config", str(p))
    assert code == 0
    rows = read_csv(out / "gradcheck.csv")
    assert rows[0] == ["block", "rel_error", "passed"] and all(r[2] == "1" for r in rows[1:])
    p.write_text(json.dumps({**cfg, "break_adjoint": "tanh"}))
    code, out = run(tmp_path, "gradcheck", "--config", str(p))
    assert code == 1
    assert any(r[2] == "0" for r in read_csv(out / "gradcheck.csv")[1:])


def test_gradcheck_empty_model(tmp_path):
    assert run(tmp_path, "gradcheck", "--set", "model.K=0")[0] == 2


def test_numeric_failure_exit_3(tmp_path):
    code, _ = run(tmp_path, "spread", "--preset", "fig5", "--set", "spread=1e150", "--set", "T=40",
                  "--set", 'steppers=["lindb"]')
    assert code == 3


def test_strict_config_types():
    with pytest.raises(cli.ConfigError):
        cli.resolve_config("spread", None, None, None, ["d_n=2.5"])
    with pytest.raises(cli.ConfigError):
        cli.resolve_config("spread", None, None, None, ["oscillatory=1"])
    c = cli.resolve_config("train", None, "smoke", 4, ["model.T=3"])
    assert c.seed == 4 and c.model.T == 3 and c.task.size == 32


def test_overrides_do_not_leak_between_resolutions():
    a = cli.resolve_config("train", None, "smoke", None, ["task.size=10", "model.K=3"])
    b = cli.resolve_config("train", None, "smoke", None, [])
    assert (a.task.size, a.model.K, a.model.d_n_hidden) == (10, 3, 32)
    assert (b.task.size, b.model.K) == (32, 2)
    assert cli.PRESETS["train"]["smoke"]["task"] == {"size": 32, "n_graphs": 32}
