import json

import pytest

from panel_cf.report import _ci_text, _significance_label, run


def test_significance_thresholds():
    assert _significance_label(0.001) == "sangat signifikan"
    assert _significance_label(0.03) == "signifikan"
    assert _significance_label(0.07) == "signifikan lemah"
    assert _significance_label(0.5) == "tidak signifikan"
    assert _significance_label(None) == "tidak diketahui"
    assert _significance_label(float("nan")) == "tidak diketahui"


def test_ci_text():
    assert _ci_text([-0.19, 2.01]) == "[-0.1900, 2.0100]"
    assert "kosong" in _ci_text([None, None])
    assert "kosong" in _ci_text([0.1, 0.2], empty=True)


def test_render_from_artifacts(tmp_path):
    (tmp_path / "diagnostics.json").write_text(
        json.dumps({"config_hash": "abc123", "seed": 4, "estimator": "scm", "att": 0.69}),
        encoding="utf-8",
    )
    (tmp_path / "phi_bar.csv").write_text(
        "# config_hash=abc123 seed=4\nperiod,phi_bar\n2004,0.5\n2005,0.88\n", encoding="utf-8"
    )
    (tmp_path / "inference.json").write_text(
        json.dumps(
            {
                "config_hash": "abc123",
                "seed": 4,
                "p_values": [0.2, 0.01],
                "phi_bar": [0.5, 0.88],
                "p_value_mean": 0.04,
                "ci": [0.13, 1.24],
                "ci_empty": False,
                "alpha": 0.05,
                "q_nominal": 6,
                "q_eff": 6,
            }
        ),
        encoding="utf-8",
    )
    out = run(tmp_path)
    html = out.read_text(encoding="utf-8")
    assert out == tmp_path / "report.html"
    assert "abc123" in html
    assert "0.6900" in html
    assert "[0.1300, 1.2400]" in html
    assert "signifikan" in html
    assert "Interval 95%" in html


def test_custom_output_path(tmp_path):
    (tmp_path / "ingest.json").write_text(
        json.dumps({"config_hash": "x", "seed": 1, "n_units": 3, "n_periods": 4,
                    "dropped_units": [], "imputed_cells": 2}),
        encoding="utf-8",
    )
    out = run(tmp_path, output=tmp_path / "laporan" / "r.html")
    assert out.exists()
    assert "Sel yang diimputasi: 2" in out.read_text(encoding="utf-8")


def test_missing_run_dir(tmp_path):
    with pytest.raises(FileNotFoundError):
        run(tmp_path / "tidak-ada")
    with pytest.raises(FileNotFoundError):
        run(tmp_path)
