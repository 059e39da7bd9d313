import csv
import json

import numpy as np
import pytest

from comrom.cli import EXIT_CONFIG, main
from comrom.descriptions import fin_description
from comrom.thermal_fin import reference_spec


@pytest.fixture(scope="session")
def cli_workspace(tmp_path_factory):
    """One tiny CLI-trained library shared by the command tests."""
    out = tmp_path_factory.mktemp("cli")
    config = {"seed": 321, "n_sample": 6, "nu": 0.8}
    cfg_path = out / "train.json"
    cfg_path.write_text(json.dumps(config))
    code = main(["train", "--config", str(cfg_path), "--out", str(out)])
    assert code == 0
    sys_path = out / "fin2.json"
    sys_path.write_text(json.dumps(fin_description(reference_spec(2, hot_cross=(1, 1)))))
    return out


def test_train_outputs_exist(cli_workspace):
    assert (cli_workspace / "library.npz").exists()
    report = json.loads((cli_workspace / "training_report.json").read_text())
    assert report["n_failed_solves"] == 0
    assert "library_checksum" in report
    for comp in report["components"].values():
        assert comp["eta_stats"]["min"] >= 0.0


def test_train_bad_config_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"nu": 7}')
    code = main(["train", "--config", str(bad), "--out", str(tmp_path)])
    assert code == EXIT_CONFIG


def test_adapt_writes_csv_and_summary(cli_workspace):
    out = cli_workspace / "adapt"
    code = main([
        "adapt", "--library", str(cli_workspace / "library.npz"),
        "--system", str(cli_workspace / "fin2.json"),
        "--tol", "0.05", "--nref", "3", "--out", str(out),
    ])
    assert code == 0
    summary = json.loads((out / "summary_adaptive.json").read_text())
    assert summary["mode"] == "adaptive"
    assert summary["n_rb"] > 0
    with open(out / "iterations_adaptive.csv") as fh:
        rows = [r for r in fh if not r.startswith("#")]
    reader = csv.DictReader(rows)
    parsed = list(reader)
    assert len(parsed) == summary["iterations"]
    # numeric columns round-trip losslessly at 17 significant digits
    val = parsed[0]["estimate"]
    assert f"{float(val):.17g}" == val


def test_adapt_uniform_flag(cli_workspace):
    out = cli_workspace / "uniform"
    code = main([
        "adapt", "--library", str(cli_workspace / "library.npz"),
        "--system", str(cli_workspace / "fin2.json"),
        "--tol", "0.05", "--nref", "2", "--uniform", "--out", str(out),
    ])
    assert code == 0
    assert (out / "summary_uniform.json").exists()
    assert (out / "fidelity_map_uniform.csv").exists()


def test_adapt_missing_library_exit_code(cli_workspace, tmp_path):
    code = main([
        "adapt", "--library", str(tmp_path / "nope.npz"),
        "--system", str(cli_workspace / "fin2.json"), "--out", str(tmp_path),
    ])
    assert code == EXIT_CONFIG


def test_bench_rejects_empty_nfin(cli_workspace, tmp_path):
    code = main([
        "bench", "--library", str(cli_workspace / "library.npz"),
        "--nfin", ",", "--out", str(tmp_path),
    ])
    assert code == EXIT_CONFIG


def test_bench_smoke_single_sample(cli_workspace):
    out = cli_workspace / "bench"
    code = main([
        "bench", "--library", str(cli_workspace / "library.npz"),
        "--nfin", "2", "--samples", "1", "--seed", "5",
        "--tol", "0.05", "--nref", "2", "--out", str(out),
    ])
    assert code == 0
    content = (out / "bench.csv").read_text()
    assert "test1" in content and "test2" in content
    summary = json.loads((out / "bench_summary.json").read_text())
    assert summary["failures"] == []
