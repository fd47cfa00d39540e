import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional, TypeVar

import numpy as np
import pandas as pd
import typer

from . import __version__
from .config import CONFIG_SCHEMA_VERSION, RunConfig, Settings, load_run_config
from .effects import EffectEstimate, build_estimator
from .inference import randomization_test, write_mu_csv
from .panel import (
    PanelMatrix,
    TreatmentMask,
    drop_units,
    drop_zero_variance_pre,
    impute_locf_nocb,
    log_transform,
    read_panel,
    save_panel,
)
from .placebo import PlaceboConfig, run_placebo_suite, write_results
from .propensity import PropensityScores, estimate_scores, read_covariates
from .report import run as report_run
from .utils import artifact_header, write_text

LOG = logging.getLogger(__name__)

app = typer.Typer(help="Estimasi counterfactual untuk data panel", no_args_is_help=True)

T = TypeVar("T")


@dataclass
class _State:
    config: Optional[Path]
    seed: Optional[int]
    out: Optional[Path]
    jobs: int


def _fail(msg: str, code: int = 1) -> None:
    typer.secho(msg, fg=typer.colors.RED, err=True)
    raise typer.Exit(code=code)


def _guard(action: Callable[[], T], what: str) -> T:
    # 1 = input/konfigurasi salah, 2 = gagal numerik saat estimasi
    try:
        return action()
    except typer.Exit:
        raise
    except np.linalg.LinAlgError as e:
        _fail(f"Gagal {what}: {e}", code=2)
    except (ValueError, FileNotFoundError) as e:
        _fail(f"Gagal {what}: {e}", code=1)
    except RuntimeError as e:
        _fail(f"Gagal {what}: {e}", code=2)
    raise AssertionError("unreachable")


def _version_callback(value: bool) -> None:
    if value:
        typer.echo(f"panel-cf {__version__} (config schema {CONFIG_SCHEMA_VERSION})")
        raise typer.Exit()


@app.callback()
def main(
    ctx: typer.Context,
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="File config TOML"),
    seed: Optional[int] = typer.Option(None, help="Override master seed di config"),
    out: Optional[Path] = typer.Option(None, help="Folder output (override paths.out)"),
    jobs: Optional[int] = typer.Option(None, help="Jumlah proses paralel (default PANEL_CF_JOBS)"),
    log_level: Optional[str] = typer.Option(None, help="Level logging (default PANEL_CF_LOG_LEVEL)"),
    version: bool = typer.Option(
        False, "--version", callback=_version_callback, is_eager=True, help="Tampilkan versi"
    ),
) -> None:
    settings = Settings()
    logging.getLogger().setLevel((log_level or settings.log_level).upper())
    ctx.obj = _State(config, seed, out, jobs if jobs is not None else settings.jobs)


# ---------------------------------------------------------------- helpers


def _load(ctx: typer.Context) -> tuple[RunConfig, Path]:
    state: _State = ctx.obj
    if state.config is None:
        _fail("Opsi --config wajib untuk perintah ini.")
    cfg = load_run_config(state.config, seed=state.seed)
    out = state.out or cfg.paths.out or Settings().out_dir
    return cfg, Path(out)


def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"tidak bisa serialisasi {type(obj).__name__}")


def _write_json(path: Path, payload: dict[str, Any]) -> Path:
    text = json.dumps(payload, indent=2, sort_keys=True, default=_json_default, ensure_ascii=False)
    write_text(path, text + "\n")
    LOG.info("Saved %s", path)
    return path


def _write_csv(path: Path, frame: pd.DataFrame, header: str) -> Path:
    write_text(path, header + frame.to_csv(index=False, float_format="%.17g"))
    LOG.info("Saved %s", path)
    return path


@dataclass
class _Prepared:
    panel: PanelMatrix
    mask: Optional[TreatmentMask]
    scores: Optional[PropensityScores]
    dropped: list[str]
    imputed_cells: int


def _prepare(cfg: RunConfig, need_mask: bool = True, with_scores: bool = True) -> _Prepared:
    """Baca panel dan jalankan preprocessing sesuai config, urut seperti di bawah."""
    panel = read_panel(cfg.paths.panel, cfg.panel.layout)
    dropped = list(cfg.panel.drop_units)
    if dropped:
        panel = drop_units(panel, dropped)

    mask_cfg = cfg.require_mask() if need_mask else cfg.mask
    t0: Optional[int] = None
    if mask_cfg is not None:
        t0 = mask_cfg.t0 if mask_cfg.t0 is not None else panel.time_index(mask_cfg.t0_label)

    imputed = int(np.isnan(panel.values).sum())
    if cfg.panel.impute:
        panel = impute_locf_nocb(panel, t0 if t0 is not None else panel.n_periods)
    panel.require_complete()
    if cfg.panel.log_transform:
        panel = log_transform(panel)

    mask = None
    if mask_cfg is not None and t0 is not None:
        mask = TreatmentMask.from_ids(panel, mask_cfg.treated, t0)
        if cfg.panel.drop_zero_variance:
            panel, gone = drop_zero_variance_pre(panel, mask)
            dropped += gone
            treated = [u for u in mask_cfg.treated if u in panel.unit_ids]
            if not treated:
                raise ValueError("semua unit treated ter-drop karena variansi nol")
            mask = TreatmentMask.from_ids(panel, treated, t0)

    scores = None
    if with_scores and cfg.paths.covariates is not None and mask is not None:
        cov = read_covariates(cfg.paths.covariates, panel.unit_ids)
        scores = estimate_scores(cov, mask.treated, panel.n_periods)
    return _Prepared(panel, mask, scores, dropped, imputed if cfg.panel.impute else 0)


def _estimate(cfg: RunConfig, prep: _Prepared) -> EffectEstimate:
    estimator = build_estimator(cfg.estimator.name, cfg.estimator.params)
    assert prep.mask is not None
    return estimator.fit_predict(prep.panel, prep.mask, seed=cfg.seed, scores=prep.scores)


def _effects_frame(est: EffectEstimate) -> pd.DataFrame:
    frame = pd.DataFrame(est.phi_hat, columns=[str(t) for t in est.post_labels])
    frame.insert(0, "unit", list(est.treated_ids))
    return frame


# ---------------------------------------------------------------- commands


@app.command()
def ingest(ctx: typer.Context) -> None:
    """Bersihkan panel (drop, imputasi, log) dan simpan panel_clean.csv."""

    def action() -> Path:
        cfg, out = _load(ctx)
        h = cfg.config_hash()
        prep = _prepare(cfg, need_mask=False)
        save_panel(prep.panel, out / "panel_clean.csv", artifact_header(h, cfg.seed))
        _write_json(
            out / "ingest.json",
            {
                "config_hash": h,
                "seed": cfg.seed,
                "n_units": prep.panel.n_units,
                "n_periods": prep.panel.n_periods,
                "dropped_units": prep.dropped,
                "imputed_cells": prep.imputed_cells,
                "t0": None if prep.mask is None else prep.mask.t0,
            },
        )
        return out

    out = _guard(action, "ingest")
    typer.echo(f"Panel bersih tersimpan -> {out / 'panel_clean.csv'}")


@app.command()
def estimate(ctx: typer.Context) -> None:
    """Estimasi counterfactual dan efek untuk unit treated."""

    def action() -> tuple[Path, EffectEstimate]:
        cfg, out = _load(ctx)
        h = cfg.config_hash()
        header = artifact_header(h, cfg.seed)
        prep = _prepare(cfg)
        est = _estimate(cfg, prep)
        _write_csv(out / "effects.csv", _effects_frame(est), header)
        _write_csv(
            out / "phi_bar.csv",
            pd.DataFrame({"period": [str(t) for t in est.post_labels], "phi_bar": est.phi_bar}),
            header,
        )
        _write_json(
            out / "diagnostics.json",
            {
                "config_hash": h,
                "seed": cfg.seed,
                "estimator": est.estimator_name,
                "att": est.att,
                "treated": list(est.treated_ids),
                "t0": prep.mask.t0 if prep.mask else None,
                "propensity_weighted": prep.scores is not None,
                "diagnostics": est.diagnostics,
            },
        )
        return out, est

    out, est = _guard(action, "estimasi")
    typer.echo(f"ATT ({est.estimator_name}) = {est.att:.6g}; hasil -> {out}")


@app.command()
def placebo(ctx: typer.Context) -> None:
    """Benchmark placebo: RMSE tiap estimator per setting dan trial."""

    def action() -> tuple[Path, int]:
        cfg, out = _load(ctx)
        state: _State = ctx.obj
        prep = _prepare(cfg, need_mask=False)
        pcfg = PlaceboConfig(
            estimators=tuple(cfg.placebo.estimators),
            t0_ratios=tuple(cfg.placebo.t0_ratios),
            n_trials=cfg.placebo.n_trials,
            seed=cfg.seed,
            subsample=tuple(cfg.placebo.subsample),
            estimator_params={n: cfg.estimator_params(n) for n in cfg.placebo.estimators},
            n_jobs=state.jobs,
        )
        result = run_placebo_suite(prep.panel, pcfg)
        write_results(result, out, artifact_header(cfg.config_hash(), cfg.seed))
        return out, result.n_failed

    out, n_failed = _guard(action, "benchmark placebo")
    suffix = f" ({n_failed} sel gagal, lihat log)" if n_failed else ""
    typer.echo(f"Benchmark tersimpan -> {out}{suffix}")


@app.command()
def infer(ctx: typer.Context) -> None:
    """Inferensi randomisasi: p-value per periode dan interval kepercayaan."""

    def action() -> tuple[Path, dict[str, Any]]:
        cfg, out = _load(ctx)
        state: _State = ctx.obj
        h = cfg.config_hash()
        # efek teramati dihitung tanpa bobot propensity, sama seperti subset placebo
        prep = _prepare(cfg, with_scores=False)
        inf = cfg.inference
        report, dist = randomization_test(
            build_estimator(cfg.estimator.name, cfg.estimator.params),
            prep.panel,
            prep.mask,
            None,
            alpha=inf.alpha,
            cap=inf.cap,
            n_delta=inf.n_delta,
            seed=cfg.seed,
            two_sided=inf.two_sided,
            corrected=inf.corrected,
            n_jobs=state.jobs,
        )
        payload = {"config_hash": h, **report.to_dict()}
        _write_json(out / "inference.json", payload)
        write_mu_csv(dist, out / "placebo_mu.csv", artifact_header(h, cfg.seed))
        return out, payload

    out, payload = _guard(action, "inferensi")
    typer.echo(
        f"p-value rata-rata = {payload['p_value_mean']}, CI = {payload['ci']}; hasil -> {out}"
    )


@app.command()
def report(
    ctx: typer.Context,
    run_dir: Optional[Path] = typer.Option(None, help="Folder run (default folder output)"),
    output: Optional[Path] = typer.Option(None, help="Path HTML (default <run_dir>/report.html)"),
) -> None:
    """Ringkasan HTML dari artefak sebuah run."""

    def action() -> Path:
        state: _State = ctx.obj
        base = run_dir or state.out
        if base is None and state.config is not None:
            _, base = _load(ctx)
        return report_run(base or Settings().out_dir, output=output)

    out = _guard(action, "membuat laporan")
    typer.echo(f"Laporan tersimpan -> {out}")


if __name__ == "__main__":
    app()
