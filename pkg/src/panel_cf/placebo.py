"""Placebo benchmarking: pseudo-treat half the units, score estimators by RMSE."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .effects import Estimator, build_estimator
from .panel import PanelMatrix, TreatmentMask, split
from .utils import derive_seed, make_rng

LOG = logging.getLogger(__name__)

TRIAL_COLUMNS = ["estimator", "setting", "trial", "rmse"]
SUMMARY_COLUMNS = ["estimator", "setting", "mean_rmse", "sd_rmse"]


def rmse(observed: np.ndarray, predicted: np.ndarray) -> float:
    a = np.asarray(observed, dtype=float)
    b = np.asarray(predicted, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"bentuk beda: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


# ---------------------------------------------------------------- synthetic data


@dataclass(frozen=True)
class SyntheticDgpConfig:
    """Latent factor panel Y = Λ Fᵀ + level + noise_sd·ε with AR(1) factors."""

    n_units: int
    n_periods: int
    n_factors: int = 1
    ar_coefficient: float = 0.5
    noise_sd: float = 1.0
    seed: int = 0
    loading_mean: float = 1.0
    loading_sd: float = 0.5
    level: float = 0.0

    def __post_init__(self) -> None:
        if self.n_units < 2 or self.n_periods < 2:
            raise ValueError("panel sintetis butuh N >= 2 dan T >= 2")
        if self.n_factors < 1:
            raise ValueError("n_factors harus >= 1")
        if not -1.0 < self.ar_coefficient < 1.0:
            raise ValueError("ar_coefficient harus di (-1, 1)")
        if self.noise_sd < 0 or self.loading_sd < 0:
            raise ValueError("simpangan baku tidak boleh negatif")


def generate_synthetic(cfg: SyntheticDgpConfig) -> PanelMatrix:
    """Null-effect panel; the observed series is its own counterfactual."""
    rng = make_rng(cfg.seed, "dgp")
    rho = cfg.ar_coefficient
    factors = np.empty((cfg.n_periods, cfg.n_factors))
    # mulai dari distribusi stasioner
    factors[0] = rng.standard_normal(cfg.n_factors) / np.sqrt(1.0 - rho * rho)
    shocks = rng.standard_normal((cfg.n_periods - 1, cfg.n_factors))
    for t in range(1, cfg.n_periods):
        factors[t] = rho * factors[t - 1] + shocks[t - 1]
    loadings = rng.normal(cfg.loading_mean, cfg.loading_sd, size=(cfg.n_units, cfg.n_factors))
    noise = rng.standard_normal((cfg.n_units, cfg.n_periods))
    values = loadings @ factors.T + cfg.level + cfg.noise_sd * noise
    width = len(str(cfg.n_units - 1))
    unit_ids = tuple(f"u{i:0{width}d}" for i in range(cfg.n_units))
    return PanelMatrix(values, unit_ids, tuple(range(cfg.n_periods)))


def subsample_panel(panel: PanelMatrix, n_sub: int, t_sub: int, seed: int) -> PanelMatrix:
    """First `t_sub` periods of `n_sub` distinct units drawn uniformly (kept in source order)."""
    if not 2 <= n_sub <= panel.n_units:
        raise ValueError(f"n_sub={n_sub} harus di [2, {panel.n_units}]")
    if not 2 <= t_sub <= panel.n_periods:
        raise ValueError(f"t_sub={t_sub} harus di [2, {panel.n_periods}]")
    rows = np.sort(make_rng(seed, "subsample").choice(panel.n_units, n_sub, replace=False))
    return panel.rows([int(i) for i in rows]).columns(t_sub)


# ---------------------------------------------------------------- suite


@dataclass(frozen=True)
class PlaceboConfig:
    estimators: tuple[str, ...]
    t0_ratios: tuple[float, ...] = (0.5,)
    n_trials: int = 10
    seed: int = 0
    subsample: tuple[tuple[int, int], ...] = ()
    estimator_params: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)
    n_jobs: int = 1

    def __post_init__(self) -> None:
        if not self.estimators:
            raise ValueError("daftar estimator kosong")
        if not self.t0_ratios:
            raise ValueError("t0_ratios kosong")
        bad = [r for r in self.t0_ratios if not 0.0 < r < 1.0]
        if bad:
            raise ValueError(f"rasio T0/T harus di (0, 1): {bad}")
        if self.n_trials < 1:
            raise ValueError("n_trials harus >= 1")
        object.__setattr__(self, "estimators", tuple(self.estimators))
        object.__setattr__(self, "t0_ratios", tuple(float(r) for r in self.t0_ratios))
        object.__setattr__(self, "subsample", tuple((int(n), int(t)) for n, t in self.subsample))

    def settings(self) -> list[tuple[str, Optional[tuple[int, int]], float]]:
        """(label, optional (N, T) sub-sample, ratio) for every configured cell."""
        shapes: list[Optional[tuple[int, int]]] = list(self.subsample) or [None]
        out = []
        for shape in shapes:
            for ratio in self.t0_ratios:
                parts = [] if shape is None else [f"N={shape[0]}", f"T={shape[1]}"]
                if shape is None or len(self.t0_ratios) > 1:
                    parts.append(f"ratio={ratio:g}")
                out.append((",".join(parts), shape, ratio))
        return out


def placebo_t0(ratio: float, n_periods: int) -> int:
    """⌈ratio·T⌉ clamped so both segments are nonempty."""
    return min(max(math.ceil(ratio * n_periods), 1), n_periods - 1)


def draw_pseudo_treated(n_units: int, seed: int, trial: int) -> np.ndarray:
    """⌊N/2⌋ pseudo-treated units for one trial, as a boolean vector."""
    rng = make_rng(seed, "trial", trial)
    treated = np.zeros(n_units, dtype=bool)
    treated[rng.choice(n_units, n_units // 2, replace=False)] = True
    return treated


@dataclass
class BenchmarkResult:
    rows: pd.DataFrame

    def aggregate(self) -> pd.DataFrame:
        """Mean and sample std (ddof=1) of RMSE per (estimator, setting); failed trials excluded."""
        grouped = self.rows.groupby(["estimator", "setting"], sort=False)["rmse"]
        out = grouped.agg(mean_rmse="mean", sd_rmse=lambda s: s.std(ddof=1)).reset_index()
        return out[SUMMARY_COLUMNS]

    @property
    def n_failed(self) -> int:
        return int(self.rows["failed"].sum())


def _run_cell(
    estimator: Estimator,
    name: str,
    panel: PanelMatrix,
    mask: TreatmentMask,
    label: str,
    trial: int,
    seed: int,
) -> dict[str, Any]:
    row: dict[str, Any] = {"estimator": name, "setting": label, "trial": trial}
    try:
        est = estimator.fit_predict(panel, mask, seed=seed)
        view = split(panel, mask)
        row.update(rmse=rmse(view.y_test, est.y_hat_test), phi_bar_mean=est.att, failed=False)
    except Exception as exc:  # noqa: BLE001 - sel gagal, suite jalan terus
        LOG.warning("Benchmark cell %s / %s / trial %d failed: %s", name, label, trial, exc)
        row.update(rmse=float("nan"), phi_bar_mean=float("nan"), failed=True, error=str(exc))
    return row


def run_placebo_suite(
    panel: PanelMatrix,
    cfg: PlaceboConfig,
    estimators: Optional[Mapping[str, Estimator]] = None,
) -> BenchmarkResult:
    """Run every (estimator, setting, trial) cell in placebo mode.

    `estimators` overrides the registry lookup by name (used for custom or
    pre-built estimators). Rows come back ordered by setting, trial and the
    configured estimator order, whatever `n_jobs` is.
    """
    panel.require_complete()
    built = dict(estimators or {})
    for name in cfg.estimators:
        if name not in built:
            built[name] = build_estimator(name, cfg.estimator_params.get(name))
    runners = {name: built[name].placebo_mode() for name in cfg.estimators}

    jobs = []
    for label, shape, ratio in cfg.settings():
        for trial in range(cfg.n_trials):
            data = panel
            if shape is not None:
                data = subsample_panel(panel, shape[0], shape[1], derive_seed(cfg.seed, "subsample", trial))
            mask = TreatmentMask(
                draw_pseudo_treated(data.n_units, cfg.seed, trial), placebo_t0(ratio, data.n_periods)
            )
            fit_seed = derive_seed(cfg.seed, "fit", trial)
            for name in cfg.estimators:
                jobs.append(delayed(_run_cell)(runners[name], name, data, mask, label, trial, fit_seed))
    LOG.info("Running %d benchmark cells", len(jobs))
    rows = Parallel(n_jobs=cfg.n_jobs)(jobs)
    frame = pd.DataFrame.from_records(rows)
    if "error" not in frame.columns:
        frame["error"] = ""
    result = BenchmarkResult(frame)
    if result.n_failed:
        LOG.warning("%d benchmark cells failed", result.n_failed)
    return result


def write_results(result: BenchmarkResult, out_dir: Union[str, Path], header: str = "") -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trials = out / "benchmark_trials.csv"
    summary = out / "benchmark_summary.csv"
    trials.write_text(
        header + result.rows[TRIAL_COLUMNS].to_csv(index=False, float_format="%.17g"), encoding="utf-8"
    )
    summary.write_text(
        header + result.aggregate().to_csv(index=False, float_format="%.17g"), encoding="utf-8"
    )
    LOG.info("Saved benchmark results -> %s, %s", trials, summary)
    return trials, summary
