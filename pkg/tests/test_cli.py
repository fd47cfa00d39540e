import json
from pathlib import Path

import pandas as pd
import pytest
from typer.testing import CliRunner

from conftest import write_config
from panel_cf import __version__
from panel_cf.cli import app

runner = CliRunner()


def _config(tmp_path: Path, panel: Path, body: str, seed: int = 1) -> Path:
    text = (
        f"seed = {seed}\n[paths]\npanel = \"{panel.as_posix()}\"\n"
        f"out = \"{(tmp_path / 'out').as_posix()}\"\n" + body
    )
    return write_config(tmp_path / "run.toml", text)


def _toy(tmp_path, fixtures_dir, estimator="did") -> Path:
    body = f'[mask]\ntreated = ["b"]\nt0 = 1\n[estimator]\nname = "{estimator}"\n'
    return _config(tmp_path, fixtures_dir / "did_toy.csv", body)


def _small(tmp_path, fixtures_dir, extra="") -> Path:
    body = (
        '[panel]\ndrop_units = ["c4"]\n'
        '[mask]\ntreated = ["t1"]\nt0_label = 2004\n'
        "[inference]\nn_delta = 50\n" + extra
    )
    return _config(tmp_path, fixtures_dir / "panel_small.csv", body)


def test_version():
    result = runner.invoke(app, ["--version"])
    assert result.exit_code == 0
    assert f"panel-cf {__version__}" in result.output
    assert "config schema 1" in result.output


def test_estimate_did_toy(tmp_path, fixtures_dir):
    cfg = _toy(tmp_path, fixtures_dir)
    result = runner.invoke(app, ["--config", str(cfg), "estimate"])
    assert result.exit_code == 0, result.output
    out = tmp_path / "out"
    phi = pd.read_csv(out / "phi_bar.csv", comment="#")
    assert phi["phi_bar"].tolist() == [1.0]
    effects = pd.read_csv(out / "effects.csv", comment="#")
    assert effects["unit"].tolist() == ["b"]
    diag = json.loads((out / "diagnostics.json").read_text(encoding="utf-8"))
    assert diag["estimator"] == "did" and diag["att"] == pytest.approx(1.0)
    for name in ("effects.csv", "phi_bar.csv"):
        first = (out / name).read_text(encoding="utf-8").splitlines()[0]
        assert first == f"# config_hash={diag['config_hash']} seed=1"


def test_estimate_is_byte_identical(tmp_path, fixtures_dir):
    cfg = _toy(tmp_path, fixtures_dir, estimator="scm")
    out = tmp_path / "out"
    names = ("effects.csv", "phi_bar.csv", "diagnostics.json")
    assert runner.invoke(app, ["--config", str(cfg), "estimate"]).exit_code == 0
    first = {n: (out / n).read_bytes() for n in names}
    assert runner.invoke(app, ["--config", str(cfg), "estimate"]).exit_code == 0
    assert first == {n: (out / n).read_bytes() for n in names}


def test_missing_panel_exits_1(tmp_path):
    cfg = _config(tmp_path, tmp_path / "hilang.csv", '[mask]\ntreated = ["b"]\nt0 = 1\n')
    result = runner.invoke(app, ["--config", str(cfg), "estimate"])
    assert result.exit_code == 1


def test_missing_config_option_exits_1():
    assert runner.invoke(app, ["estimate"]).exit_code == 1


def test_unknown_estimator_exits_1(tmp_path, fixtures_dir):
    cfg = _toy(tmp_path, fixtures_dir, estimator="lasso")
    result = runner.invoke(app, ["--config", str(cfg), "estimate"])
    assert result.exit_code == 1
    assert "lasso" in result.output


def test_unknown_treated_unit_exits_1(tmp_path, fixtures_dir):
    body = '[mask]\ntreated = ["zz"]\nt0 = 1\n'
    cfg = _config(tmp_path, fixtures_dir / "did_toy.csv", body)
    assert runner.invoke(app, ["--config", str(cfg), "estimate"]).exit_code == 1


def test_placebo_oracle(tmp_path, fixtures_dir):
    body = '[placebo]\nestimators = ["oracle", "did"]\nn_trials = 2\n'
    cfg = _config(tmp_path, fixtures_dir / "panel_small.csv", body)
    result = runner.invoke(app, ["--config", str(cfg), "placebo"])
    assert result.exit_code == 0, result.output
    trials = pd.read_csv(tmp_path / "out" / "benchmark_trials.csv", comment="#")
    assert len(trials) == 4
    assert (trials.loc[trials["estimator"] == "oracle", "rmse"] == 0.0).all()
    summary = pd.read_csv(tmp_path / "out" / "benchmark_summary.csv", comment="#")
    assert set(summary["estimator"]) == {"oracle", "did"}


def test_placebo_unknown_estimator(tmp_path, fixtures_dir):
    body = '[placebo]\nestimators = ["nope"]\nn_trials = 1\n'
    cfg = _config(tmp_path, fixtures_dir / "panel_small.csv", body)
    result = runner.invoke(app, ["--config", str(cfg), "placebo"])
    assert result.exit_code == 1
    assert "nope" in result.output


def test_infer_three_controls(tmp_path, fixtures_dir):
    cfg = _small(tmp_path, fixtures_dir)
    result = runner.invoke(app, ["--config", str(cfg), "infer"])
    assert result.exit_code == 0, result.output
    out = tmp_path / "out"
    lines = (out / "placebo_mu.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# config_hash=")
    assert len(lines) == 2 + 6
    report = json.loads((out / "inference.json").read_text(encoding="utf-8"))
    assert report["q_nominal"] == report["q_eff"] == 6
    assert report["propensity_weighted"] is False
    assert report["placebo_mean_bias"] == pytest.approx(
        pd.read_csv(out / "placebo_mu.csv", comment="#").iloc[:, 1:].to_numpy().mean()
    )
    assert isinstance(report["ci_p_value_disagree"], bool)
    assert len(report["p_values"]) == 2
    again = runner.invoke(app, ["--config", str(cfg), "infer"])
    assert again.exit_code == 0
    assert json.loads((out / "inference.json").read_text(encoding="utf-8")) == report


def test_infer_alpha_out_of_range(tmp_path, fixtures_dir):
    cfg = _small(tmp_path, fixtures_dir, extra="alpha = 1.5\n")
    assert runner.invoke(app, ["--config", str(cfg), "infer"]).exit_code == 1


def test_seed_and_out_overrides(tmp_path, fixtures_dir):
    cfg = _toy(tmp_path, fixtures_dir)
    other = tmp_path / "lain"
    result = runner.invoke(app, ["--config", str(cfg), "--seed", "5", "--out", str(other), "estimate"])
    assert result.exit_code == 0, result.output
    diag = json.loads((other / "diagnostics.json").read_text(encoding="utf-8"))
    assert diag["seed"] == 5


def test_ingest_imputes(tmp_path, fixtures_dir):
    cfg = _config(tmp_path, fixtures_dir / "panel_missing.csv", "[panel]\nimpute = true\n")
    result = runner.invoke(app, ["--config", str(cfg), "ingest"])
    assert result.exit_code == 0, result.output
    out = tmp_path / "out"
    clean = pd.read_csv(out / "panel_clean.csv", comment="#")
    assert not clean.isna().any().any()
    info = json.loads((out / "ingest.json").read_text(encoding="utf-8"))
    assert info["imputed_cells"] == 4
    assert info["n_units"] == 3


def test_ingest_without_impute_rejects_missing(tmp_path, fixtures_dir):
    cfg = _config(tmp_path, fixtures_dir / "panel_missing.csv", "")
    assert runner.invoke(app, ["--config", str(cfg), "ingest"]).exit_code == 1


def test_report_after_runs(tmp_path, fixtures_dir):
    cfg = _small(tmp_path, fixtures_dir)
    assert runner.invoke(app, ["--config", str(cfg), "estimate"]).exit_code == 0
    assert runner.invoke(app, ["--config", str(cfg), "infer"]).exit_code == 0
    result = runner.invoke(app, ["report", "--run-dir", str(tmp_path / "out")])
    assert result.exit_code == 0, result.output
    html = (tmp_path / "out" / "report.html").read_text(encoding="utf-8")
    assert "Inferensi randomisasi" in html
    assert "Estimasi efek (did)" in html


def test_report_empty_dir_exits_1(tmp_path):
    empty = tmp_path / "kosong"
    empty.mkdir()
    assert runner.invoke(app, ["report", "--run-dir", str(empty)]).exit_code == 1
