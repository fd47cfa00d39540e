from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Any, Optional

import pandas as pd
from jinja2 import Environment, FileSystemLoader, Template, select_autoescape

LOG = logging.getLogger(__name__)

TPL_DIR = Path(__file__).parent / "templates"
TPL_FILE = TPL_DIR / "report.html"

FALLBACK_TEMPLATE = """
<!doctype html><meta charset="utf-8"><title>Ringkasan run {{ run_name }}</title>
<h1>Ringkasan run {{ run_name }}</h1>
<p>config_hash {{ config_hash or "-" }}, seed {{ seed }}</p>
{% if estimate %}<h2>Estimasi ({{ estimate.estimator }})</h2>
<p>ATT: {{ "%.4f" | format(estimate.att) }}</p>{{ phi_bar_table | safe }}{% endif %}
{% if inference %}<h2>Inferensi</h2><p>p-value: {{ inference.p_value_mean }} ({{ significance }}),
interval: {{ ci_text }}</p>{{ p_value_table | safe }}{% endif %}
{% if benchmark_table %}<h2>Benchmark placebo</h2>{{ benchmark_table | safe }}{% endif %}
"""


def _ensure_template_exists() -> None:
    if not TPL_FILE.exists():
        LOG.warning("Template not found at %s, using the built-in minimal one", TPL_FILE)


def _significance_label(p: Optional[float]) -> str:
    if p is None or (isinstance(p, float) and math.isnan(p)):
        return "tidak diketahui"
    if p < 0.01:
        return "sangat signifikan"
    if p < 0.05:
        return "signifikan"
    if p < 0.10:
        return "signifikan lemah"
    return "tidak signifikan"


def _ci_text(ci: Optional[list], empty: bool = False) -> str:
    if empty or not ci or ci[0] is None or ci[1] is None:
        return "kosong (tidak ada Δ yang lolos)"
    return f"[{ci[0]:.4f}, {ci[1]:.4f}]"


def _read_json(path: Path) -> Optional[dict[str, Any]]:
    return json.loads(path.read_text(encoding="utf-8")) if path.exists() else None


def _read_csv(path: Path) -> Optional[pd.DataFrame]:
    return pd.read_csv(path, comment="#") if path.exists() else None


def _table(df: Optional[pd.DataFrame]) -> str:
    if df is None or df.empty:
        return ""
    return df.to_html(index=False, float_format=lambda v: f"{v:.4f}", border=0)


def run(run_dir: str | Path, output: Optional[str | Path] = None) -> Path:
    """Render report.html dari artefak yang ada di folder run."""
    base = Path(run_dir)
    if not base.is_dir():
        raise FileNotFoundError(f"folder run tidak ditemukan: {base}")

    ingest = _read_json(base / "ingest.json")
    estimate = _read_json(base / "diagnostics.json")
    inference = _read_json(base / "inference.json")
    phi_bar = _read_csv(base / "phi_bar.csv")
    summary = _read_csv(base / "benchmark_summary.csv")
    if not any(x is not None for x in (ingest, estimate, inference, summary)):
        raise FileNotFoundError(f"tidak ada artefak run di {base}; jalankan perintah lain dulu")

    first = estimate or inference or ingest or {}
    p_table = None
    if inference is not None:
        same_len = phi_bar is not None and len(phi_bar) == len(inference["phi_bar"])
        p_table = pd.DataFrame(
            {"phi_bar": inference["phi_bar"], "p_value": inference["p_values"]},
            index=phi_bar["period"] if same_len else None,
        ).reset_index(names="period")

    context = dict(
        run_name=base.resolve().name,
        config_hash=first.get("config_hash"),
        seed=first.get("seed"),
        ingest=ingest,
        estimate=estimate,
        inference=inference,
        phi_bar_table=_table(phi_bar),
        p_value_table=_table(p_table),
        benchmark_table=_table(summary),
        significance=_significance_label(inference.get("p_value_mean")) if inference else "",
        ci_text=_ci_text(inference.get("ci"), inference.get("ci_empty", False)) if inference else "",
    )

    _ensure_template_exists()
    if TPL_FILE.exists():
        env = Environment(
            loader=FileSystemLoader(str(TPL_DIR)),
            autoescape=select_autoescape(["html", "xml"]),
        )
        html = env.get_template("report.html").render(**context)
    else:
        html = Template(FALLBACK_TEMPLATE).render(**context)

    out_path = Path(output) if output else base / "report.html"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(html, encoding="utf-8")
    LOG.info("Saved report -> %s", out_path)
    return out_path
