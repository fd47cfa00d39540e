from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.special import expit

LOG = logging.getLogger(__name__)

SEPARATION_NORM = 1e3
DEFAULT_CLIP_EPS = 0.01


class DegenerateLabels(ValueError): ...


class SeparationDetected(RuntimeError): ...


@dataclass(frozen=True, eq=False)
class CovariateTable:
    z: np.ndarray
    names: tuple[str, ...]
    unit_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        z = np.array(self.z, dtype=float, copy=True)
        if z.ndim != 2 or z.shape[1] != len(self.names):
            raise ValueError(f"kovariat {z.shape} tidak cocok dengan {len(self.names)} nama")
        if not np.isfinite(z).all():
            raise ValueError("kovariat tidak boleh ada nilai kosong")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "unit_ids", tuple(self.unit_ids))


@dataclass(frozen=True, eq=False)
class PropensityScores:
    e_hat: np.ndarray
    clip_eps: float = DEFAULT_CLIP_EPS

    def train_weights(self, control_index: np.ndarray, t0: int) -> np.ndarray:
        """Ê^train: scores of the control rows over the post-period columns."""
        return self.e_hat[np.asarray(control_index), t0:]


def read_covariates(path: Union[str, Path], unit_ids: Sequence[str]) -> CovariateTable:
    """Baca CSV kovariat `unit,<nama1>,...` dan urutkan sesuai unit panel."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"CSV kovariat tidak ditemukan: {p}")
    df = pd.read_csv(p, dtype={"unit": str}, comment="#")
    if df.columns[0] != "unit":
        raise ValueError(f"kolom pertama kovariat harus 'unit', dapat {df.columns[0]!r}")
    df["unit"] = df["unit"].str.strip()
    if df["unit"].duplicated().any():
        raise ValueError("unit duplikat di CSV kovariat")
    if set(df["unit"]) != set(unit_ids):
        missing = sorted(set(unit_ids) - set(df["unit"]))
        extra = sorted(set(df["unit"]) - set(unit_ids))
        raise ValueError(f"unit kovariat tidak cocok; kurang={missing} lebih={extra}")
    df = df.set_index("unit").loc[list(unit_ids)]
    values = df.apply(pd.to_numeric, errors="raise").to_numpy(dtype=float)
    return CovariateTable(values, tuple(str(c) for c in df.columns), tuple(unit_ids))


def _design(z: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(z.shape[0]), z])


def fit_logistic(
    z: CovariateTable,
    labels: Sequence[bool],
    max_iter: int = 100,
    tol: float = 1e-8,
) -> np.ndarray:
    """Maximum-likelihood logistic fit by iteratively reweighted least squares.

    Returns the intercept followed by one coefficient per covariate. Each
    Newton step is solved with `lstsq`, so collinear columns (a constant
    covariate next to the intercept) get the minimum-norm solution instead of
    a singular-matrix failure.
    """
    y = np.asarray(labels, dtype=float)
    x = _design(z.z)
    n, k1 = x.shape
    if y.shape[0] != n:
        raise ValueError(f"{y.shape[0]} label untuk {n} unit")
    if n < k1 + 1:
        raise ValueError(f"butuh N >= K+2 unit, dapat N={n}, K={k1 - 1}")
    if y.min() == y.max():
        raise DegenerateLabels("label hanya punya satu kelas")

    beta = np.zeros(k1)
    for it in range(1, max_iter + 1):
        p = expit(x @ beta)
        w = p * (1.0 - p)
        if np.all(np.abs(p - y) < 1e-8) or np.linalg.norm(beta) > SEPARATION_NORM:
            raise SeparationDetected(
                f"separasi sempurna terdeteksi pada iterasi {it} (|beta|={np.linalg.norm(beta):.3g})"
            )
        sw = np.sqrt(np.maximum(w, 1e-300))
        step, *_ = np.linalg.lstsq(x * sw[:, None], (y - p) / sw, rcond=None)
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            LOG.debug("IRLS converged after %d iterations", it)
            break
    else:
        LOG.warning("IRLS did not converge in %d iterations", max_iter)
    if np.linalg.norm(beta) > SEPARATION_NORM:
        raise SeparationDetected(f"koefisien meledak (|beta|={np.linalg.norm(beta):.3g})")
    return beta


def predict_scores(
    weights: np.ndarray,
    z: CovariateTable,
    n_periods: int,
    clip_eps: float = DEFAULT_CLIP_EPS,
) -> PropensityScores:
    prob = expit(_design(z.z) @ np.asarray(weights, dtype=float))
    clipped = np.clip(prob, clip_eps, 1.0 - clip_eps)
    n_clipped = int((clipped != prob).sum())
    if n_clipped:
        LOG.warning("Clipped %d propensity scores to [%g, %g]", n_clipped, clip_eps, 1 - clip_eps)
    # kovariat tidak berubah terhadap waktu -> broadcast ke T kolom
    e_hat = np.repeat(clipped[:, None], n_periods, axis=1)
    return PropensityScores(e_hat, clip_eps)


def estimate_scores(
    z: CovariateTable,
    treated: Sequence[bool],
    n_periods: int,
    clip_eps: float = DEFAULT_CLIP_EPS,
) -> PropensityScores:
    weights = fit_logistic(z, treated)
    LOG.info("Propensity model: %s", dict(zip(("intercept", *z.names), np.round(weights, 4))))
    return predict_scores(weights, z, n_periods, clip_eps)


def weighted_mse(
    y: np.ndarray,
    y_hat: np.ndarray,
    e_hat_train: Optional[np.ndarray] = None,
    n_inputs: Optional[int] = None,
) -> float:
    """Σ (y − ŷ)² · Ê / |X|.

    `n_inputs` is |X^train|, the number of training input cells (J × T₀).
    Without `e_hat_train` every weight is one and, if `n_inputs` is also
    omitted, this is the plain mean squared error.
    """
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ValueError(f"bentuk beda: y {y.shape} vs y_hat {y_hat.shape}")
    weights = np.ones_like(y) if e_hat_train is None else np.asarray(e_hat_train, dtype=float)
    if weights.shape != y.shape:
        raise ValueError(f"bentuk bobot {weights.shape} beda dengan y {y.shape}")
    denom = y.size if n_inputs is None else int(n_inputs)
    return float(np.sum((y - y_hat) ** 2 * weights) / denom)
