import csv
import io
import json

import numpy as np
import pytest

from rpls import bench
from rpls.cli import main
from rpls.dataset import generate_binomial, write_csv

SMALL = {
    "dataset": {"synthetic": {"n_rows": 60, "coefficients": [1.0, -0.5], "intercept": 0.0, "seed": 2}},
    "criteria": ["ppp", {"name": "prob_score", "label": "confidence"}],
    "unlabeled_fraction": 0.5,
    "test_fraction": 0.25,
    "repetitions": 3,
    "base_seed": 10,
    "loop": {"stopping": "max_rounds", "max_rounds": 3},
}


@pytest.fixture(scope="module")
def report():
    return bench.run_experiment(bench.ExperimentConfig.from_dict(SMALL), workers=1)


def test_cells_cover_every_criterion_and_repetition(report):
    assert report.criteria() == ["supervised", "ppp", "confidence"]
    assert len(report.cells) == 9
    assert all(c["error"] is None for c in report.cells)
    assert all(c["rounds"] == 3 for c in report.cells if c["criterion"] != "supervised")
    assert len(report.paired("ppp")) == 3


def test_paired_split_shares_baseline(report):
    base = {c["repetition"]: c["accuracy"] for c in report.cells if c["criterion"] == "supervised"}
    for c in report.cells:
        if c["criterion"] == "ppp":
            assert c["curve"][0] == base[c["repetition"]]


def test_csv_and_curves(report):
    rows = list(csv.reader(io.StringIO(bench.render(report, "csv"))))
    assert rows[0] == ["criterion", "repetition", "round", "accuracy"]
    assert len(rows) == 1 + 9
    curves = list(csv.reader(io.StringIO(bench.render(report, "curves"))))
    assert len(curves) == 1 + 3 * 1 + 6 * 4


def test_markdown_summary(report):
    lines = bench.render(report, "markdown").strip().splitlines()
    assert lines[0] == "| criterion | mean | sd | n |"
    assert len(lines) == 2 + 3
    s = report.summary()[1]
    acc = [c["accuracy"] for c in report.cells if c["criterion"] == "ppp"]
    assert s["mean"] == pytest.approx(np.mean(acc)) and s["sd"] == pytest.approx(np.std(acc, ddof=1))


def test_json_round_trip(report, tmp_path):
    path = bench.emit_report(report, "json", tmp_path / "r.json")
    assert bench.load_report(path) == report
    with pytest.raises(ValueError):
        bench.render(report, "xml")


def test_reports_are_byte_identical_across_worker_counts(report, monkeypatch):
    monkeypatch.setenv("RPLS_THREADS", "2")
    parallel = bench.run_experiment(bench.ExperimentConfig.from_dict(SMALL))
    assert bench.render(parallel, "json") == bench.render(report, "json")
    monkeypatch.setenv("RPLS_THREADS", "1")
    assert bench.worker_count(8) == 1


@pytest.mark.parametrize(
    "patch",
    [
        {"repetitions": 0},
        {"criteria": []},
        {"criteria": ["nope"]},
        {"criteria": ["ppp", "ppp"]},
        {"schema_version": 2},
        {"dataset": {}},
        {"colour": "red"},
        {"test_fraction": 1.0},
    ],
)
def test_bad_configs_rejected(patch):
    with pytest.raises(bench.ConfigError):
        bench.ExperimentConfig.from_dict({**SMALL, **patch})


def test_failed_cell_does_not_stop_sweep():
    cfg = {**SMALL, "repetitions": 1, "criteria": [{"name": "ppp", "loop": {"backend": "bogus"}}]}
    with pytest.raises(bench.ConfigError):
        bench.ExperimentConfig.from_dict(cfg)
    cfg = {**SMALL, "repetitions": 1, "loop": {"ridge": 0.0}, "criteria": ["ppp"],
           "dataset": {"synthetic": {"n_rows": 40, "coefficients": [8.0], "seed": 1}}}
    rep = bench.run_experiment(bench.ExperimentConfig.from_dict(cfg), workers=1)
    assert len(rep.cells) == 2
    assert any(c["error"] for c in rep.cells if c["criterion"] == "ppp")


def _config_file(tmp_path, cfg=SMALL):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


def test_cli_fit(tmp_path, capsys):
    data = generate_binomial(50, [1.0, 0.5], seed=1)
    write_csv(data, tmp_path / "d.csv")
    assert main(["fit", str(tmp_path / "d.csv"), "--features", "x1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["columns"] == ["intercept", "x1"]
    assert main(["fit", str(tmp_path / "d.csv"), "--features", "zz"]) == 1
    assert main(["fit", str(tmp_path / "missing.csv")]) == 1


def test_cli_selftrain_and_bench(tmp_path, capsys):
    cfg = _config_file(tmp_path)
    assert main(["selftrain", str(cfg), "--criterion", "confidence", "--out", str(tmp_path / "t.jsonl")]) == 0
    lines = (tmp_path / "t.jsonl").read_text().splitlines()
    assert len(lines) == 4 and json.loads(lines[-1])["summary"]
    assert main(["selftrain", str(cfg), "--criterion", "missing"]) == 1
    assert main(["bench", str(cfg), "--out-dir", str(tmp_path / "out"), "--workers", "1",
                 "--formats", "csv,json,markdown,curves"]) == 0
    assert {p.name for p in (tmp_path / "out").iterdir()} == {"report.csv", "report.json", "report.md",
                                                              "report.curves.csv"}
    assert main(["bench", str(cfg), "--out-dir", str(tmp_path / "o2"), "--formats", "pdf"]) == 1


def test_cli_gsd(tmp_path, capsys):
    p = tmp_path / "inst.json"
    p.write_text(json.dumps({"utilities": [[[1.0, 1.0]], [[0.2, 0.3]], [[0.0, 0.9]]], "candidates": ["a", "b", "c"]}))
    assert main(["gsd", str(p)]) == 0
    assert json.loads(capsys.readouterr().out)["nondominated"] == ["a"]
    assert main(["gsd", str(p), "--log-scale", "--solver", "highs"]) == 0
    p.write_text("{not json")
    assert main(["gsd", str(p)]) == 1


def test_cli_exit_codes(tmp_path, monkeypatch):
    assert main([]) == 1
    assert main(["bogus"]) == 1
    assert main(["oracle", "--problems", "3"]) == 0
    import rpls.cli as cli_mod

    def boom(args):
        raise RuntimeError("kaput")

    monkeypatch.setattr(cli_mod, "_cmd_oracle", boom)
    parser_main = cli_mod.main
    monkeypatch.setattr(cli_mod, "build_parser", _patched_parser(cli_mod, boom))
    assert parser_main(["oracle"]) == 2


def _patched_parser(cli_mod, func):
    original = cli_mod.build_parser

    def build():
        p = original()
        p._subparsers._group_actions[0].choices["oracle"].set_defaults(func=func)
        return p

    return build
