import json

import pytest

from fadl.cli import main


def test_train_synth_writes_metrics(tmp_path, capsys):
    metrics = tmp_path / "m.ndjson"
    rc = main([
        "train", "--synth", "n=120,m=15,density=0.4", "--loss", "logistic",
        "--lam", "0.5", "--nodes", "3", "--eps-g", "1e-4",
        "--metrics", str(metrics), "--run-id", "clitest",
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "status=converged" in out
    rows = [json.loads(line) for line in metrics.read_text().splitlines()]
    assert rows[0]["run_id"] == "clitest"
    assert rows[-1]["method"] == "fadl"


def test_train_sqm_and_table(tmp_path):
    table = tmp_path / "m.tsv"
    rc = main([
        "train", "--synth", "n=80,m=10,density=0.5", "--method", "sqm",
        "--lam", "0.3", "--nodes", "2", "--eps-g", "1e-3", "--table", str(table),
    ])
    assert rc == 0
    assert table.read_text().startswith("run_id\t")


def test_train_not_converged_exit_code():
    rc = main([
        "train", "--synth", "n=60,m=8,density=0.5", "--lam", "0.01",
        "--eps-g", "1e-12", "--max-outer", "3",
    ])
    assert rc == 2


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "opts.conf"
    cfg.write_text("lam = 0.5\nnodes = 2\nmax-outer = 150\n# comment\n")
    rc = main([
        "train", "--synth", "n=60,m=8,density=0.5", "--config", str(cfg),
        "--nodes", "3", "--eps-g", "1e-3",
    ])
    assert rc == 0


def test_config_file_unknown_key(tmp_path):
    cfg = tmp_path / "opts.conf"
    cfg.write_text("lambda = 0.5\n")
    with pytest.raises(SystemExit):
        main(["train", "--synth", "n=10,m=4", "--config", str(cfg)])


def test_bad_synth_spec():
    with pytest.raises(SystemExit):
        main(["train", "--synth", "n=10,q=4"])


def test_missing_data_source():
    with pytest.raises(SystemExit):
        main(["train"])


def test_cost_sweep_lists_benchmarks(capsys):
    rc = main(["cost-sweep", "--nodes", "8", "--khat", "10"])
    assert rc == 0
    out = capsys.readouterr().out
    for name in ("kdd2010", "url", "webspam", "mnist8m", "rcv"):
        assert name in out


def test_verify_subcommand_single_property(capsys):
    rc = main(["verify", "linesearch-interval"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "[PASS] linesearch-interval" in out


def test_verify_unknown_property():
    with pytest.raises(SystemExit):
        main(["verify", "no-such-property"])


def test_compare_small(capsys):
    rc = main([
        "compare", "--synth", "n=100,m=12,density=0.5", "--lam", "0.5",
        "--nodes", "2", "--rel-gap", "1e-3", "--eps-g", "1e-7",
        "--max-outer", "200",
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "fadl" in out and "sqm" in out and "comm ratio" in out


def test_train_reads_libsvm(tmp_path):
    data = tmp_path / "toy.svm"
    data.write_text("+1 1:1.5 3:-0.5\n-1 2:2.0\n+1 1:0.5 2:1.0\n-1 3:1.0\n")
    rc = main([
        "train", "--data", str(data), "--lam", "1.0", "--nodes", "2",
        "--eps-g", "1e-3",
    ])
    assert rc == 0
