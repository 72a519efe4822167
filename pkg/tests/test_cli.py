import csv
import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from napbench import cli
from napbench.cli import emit_report, main, run_experiment
from napbench.config import ExperimentConfig, load_config, with_overrides
from napbench.eventlog import write_csv
from napbench.synthetic import grammar_log


@pytest.fixture(scope="module")
def log_path(tmp_path_factory):
    p = tmp_path_factory.mktemp("data") / "toy.csv"
    write_csv(grammar_log(30, seed=5), p)
    return p


def tiny_config(log_path, out, **kw):
    base = dict(log_path=str(log_path), folds=2, epochs=2, batch_size=32, out_dir=str(out))
    base.update(kw)
    return ExperimentConfig(**base)


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_load_config(tmp_path):
    (tmp_path / "exp.ini").write_text(
        "[log]\npath = logs/x.csv  ; relative\ndelimiter = semicolon\ntimestamp_format = %Y-%m-%d\n"
        "[filters]\nmax_trace_len = 20\n"
        "[experiment]\narchitectures = lstm, cnn\ntechniques = hash\nfolds = 5\nseed = 9\nout = res\n"
        "[training]\nepochs = 7\n"
    )
    c = load_config(tmp_path / "exp.ini")
    assert c.log_path == str(tmp_path / "logs" / "x.csv") and c.log_name == "x"
    assert c.out_dir == str(tmp_path / "res")
    assert c.delimiter == ";" and c.timestamp_format == "%Y-%m-%d"
    assert (c.architectures, c.techniques, c.folds, c.seed, c.epochs) == (("lstm", "cnn"), ("hash",), 5, 9, 7)
    assert c.max_trace_len == 20 and c.patience is None and c.max_values == 600
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "missing.ini")
    (tmp_path / "bad.ini").write_text("[experiment]\nfolds = 3\n")
    with pytest.raises(ValueError):
        load_config(tmp_path / "bad.ini")


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig("x.csv", architectures=())
    with pytest.raises(ValueError):
        ExperimentConfig("x.csv", techniques=("tfidf",))
    with pytest.raises(ValueError):
        ExperimentConfig("x.csv", folds=1)


SEMANTIC = {
    "log_path": "y.csv",
    "case_col": "case",
    "timestamp_format": "%Y",
    "max_values": 10,
    "sample_fraction": 0.5,
    "architectures": ("mlp",),
    "techniques": ("hash",),
    "folds": 3,
    "seed": 1,
    "epochs": 5,
    "batch_size": 16,
    "patience": 2,
}


@given(st.sampled_from(sorted(SEMANTIC)), st.sampled_from(["out/a", "out/b"]), st.integers(1, 4))
def test_config_hash_tracks_semantic_fields(field, out, jobs):
    base = ExperimentConfig("x.csv", log_name="x")
    assert replace(base, out_dir=out, jobs=jobs).hash() == base.hash()
    assert replace(base, **{field: SEMANTIC[field]}).hash() != base.hash()


def test_with_overrides_ignores_none():
    base = ExperimentConfig("x.csv")
    assert with_overrides(base, seed=None, folds=4) == replace(base, folds=4)


def test_single_cell_report(tmp_path, log_path):
    cfg = tiny_config(log_path, tmp_path / "out", architectures=("mlp",), techniques=("onehot",))
    report = run_experiment(cfg)
    assert report.ok and list(report.folds) == [("mlp", "onehot")]
    out = tmp_path / "out"
    folds = read_rows(out / "folds.csv")
    assert len(folds) == 2 and list(folds[0]) == list(cli.FOLD_COLUMNS)
    summary = read_rows(out / "summary.csv")
    assert len(summary) == 1 and summary[0]["status"] == "ok"
    for m in ("accuracy", "f1", "auc_pr"):
        vals = np.array([float(r[m]) for r in folds])
        assert summary[0][f"{m}_mean"] == format(np.mean(vals), ".12g")
        assert summary[0][f"{m}_std"] == format(np.std(vals), ".12g")
    plot = read_rows(out / "plotdata" / "accuracy.csv")
    assert [r["architecture"] for r in plot] == ["mlp"] and list(plot[0]) == ["architecture", "onehot"]
    stats = read_rows(out / "stats.csv")[0]
    assert (stats["instances"], stats["events"]) == ("30", str(sum(len(t) for t in grammar_log(30, seed=5))))
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_hash"] == cfg.hash()
    assert (out / "runs" / "mlp_onehot" / "fold1.ckpt").exists()
    assert "| mlp | onehot |" in (out / "summary.md").read_text()
    # one cell gives no significance section
    assert read_rows(out / "significance.csv") == []


def test_summary_row_format(tmp_path):
    from napbench.evaluate import FoldResult
    from napbench.eventlog import compute_statistics

    rep = cli.BenchmarkReport("toy", compute_statistics(grammar_log(5)), ("mlp",), ("hash",))
    rep.folds[("mlp", "hash")] = [FoldResult(0, 0.5, 0.5, 0.5, 1, 0.1), FoldResult(1, 0.7, 0.7, 0.7, 1, 0.1)]
    emit_report(rep, tmp_path)
    row = (tmp_path / "summary.csv").read_text().splitlines()[1]
    assert row.startswith("toy,mlp,hash,2,0.6,0.1,")


def test_stats_row_layout():
    from napbench.eventlog import Distribution, LogStats

    s = LogStats(4580, 226, 4580 / 226, 14, 21348, Distribution(2, 15, 4.66, 4), Distribution(2, 9, 3.6, 4), 3, 0, 3, {})
    assert ",".join(cli.stats_row("helpdesk", s)).startswith("helpdesk,4580,226,20.27,14,21348,2,15,4.66,4")


def test_failure_isolation(tmp_path, log_path, monkeypatch):
    real = cli.run_cross_validation

    def flaky(log, kind, technique, *a, **kw):
        if kind == "cnn":
            raise RuntimeError("boom")
        return real(log, kind, technique, *a, **kw)

    monkeypatch.setattr(cli, "run_cross_validation", flaky)
    cfg = tiny_config(log_path, tmp_path / "out", architectures=("mlp", "cnn"), techniques=("ordinal",))
    rep = run_experiment(cfg)
    assert not rep.ok and ("mlp", "ordinal") in rep.folds
    assert "boom" in rep.failures[("cnn", "ordinal")]
    status = {r["arch"]: r["status"] for r in read_rows(tmp_path / "out" / "summary.csv")}
    assert status["mlp"] == "ok" and status["cnn"].startswith("failed")
    code = main(["run", "--log", str(log_path), "--arch", "mlp,cnn", "--encoder", "ordinal",
                 "--folds", "2", "--epochs", "1", "--out", str(tmp_path / "cli")])  # fmt: skip
    assert code == 1


def test_grid_order_does_not_change_numbers(tmp_path, log_path):
    a = run_experiment(tiny_config(log_path, tmp_path / "a", architectures=("mlp", "lstm"), techniques=("hash", "binary")))
    b = run_experiment(tiny_config(log_path, tmp_path / "b", architectures=("lstm", "mlp"), techniques=("binary", "hash")))
    assert a.folds == b.folds
    assert set(a.significance) == {"accuracy", "f1", "auc_pr"}


def test_unreadable_log(tmp_path):
    with pytest.raises(FileNotFoundError):
        run_experiment(ExperimentConfig(str(tmp_path / "nope.csv"), out_dir=str(tmp_path)))


def test_cli_subcommands(tmp_path, capsys):
    g = tmp_path / "g.csv"
    assert main(["grammar", str(g), "--traces", "12", "--seed", "1"]) == 0
    assert main(["stats", str(g)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[1].startswith("g,12,")
    scores = tmp_path / "scores.csv"
    scores.write_text("a,b,c\n" + "\n".join(f"{0.9},{0.8},{0.7}" for _ in range(10)) + "\n")
    assert main(["significance", str(scores)]) == 0
    assert "chi2 = 20" in capsys.readouterr().out
    ini = tmp_path / "exp.ini"
    ini.write_text(f"[log]\npath = {g}\n[experiment]\narchitectures = mlp\ntechniques = ordinal\nfolds = 2\n")
    assert main(["run", "--config", str(ini), "--epochs", "1", "--out", str(tmp_path / "o"), "--seed", "3"]) == 0
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["config"]["seed"] == 3
    assert main(["run"]) == 2
