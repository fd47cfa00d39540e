"""Comparison estimators: DID, SCM (exponentiated gradient), VT-EN and MC-NNM.

All of them follow the `effects.Estimator` contract and only ever look at
cells in the observed set O when fitting.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, ClassVar, Optional, Sequence

import numpy as np

from .effects import BaseEstimator, EffectEstimate
from .panel import PanelMatrix, SplitView, TreatmentMask, split
from .utils import make_rng

LOG = logging.getLogger(__name__)


class NumericalDivergence(RuntimeError): ...


# ---------------------------------------------------------------- DID


def twfe_coefficient(panel: PanelMatrix, mask: TreatmentMask) -> float:
    """Coefficient on W from a least-squares fit of Y on W plus unit and time dummies."""
    n, t = panel.values.shape
    w = mask.expand(t).astype(float).ravel()
    unit = np.kron(np.eye(n), np.ones((t, 1)))
    time = np.kron(np.ones((n, 1)), np.eye(t))[:, 1:]
    design = np.column_stack([w, unit, time])
    coef, *_ = np.linalg.lstsq(design, panel.values.ravel(), rcond=None)
    return float(coef[0])


@dataclass
class DidEstimator(BaseEstimator):
    """Two-way fixed effects under simultaneous adoption, in closed form.

    ŷ_gt = mean_pre(Y_g) + (mean_C(Y_·t) − mean_C,pre(Y)), so the time average
    of φ̄ is the treated change minus the control change.
    """

    name: ClassVar[str] = "did"
    twfe_check: bool = False

    def _predict(self, panel, mask, view, *, seed, scores):
        treated_pre = view.x_test.mean(axis=1)
        control_change = view.y_train.mean(axis=0) - view.x_train.mean()
        y_hat = treated_pre[:, None] + control_change[None, :]
        att = float(
            (view.y_test.mean() - view.x_test.mean())
            - (view.y_train.mean() - view.x_train.mean())
        )
        diagnostics: dict[str, Any] = {"att": att}
        if self.twfe_check:
            diagnostics["twfe_att"] = twfe_coefficient(panel, mask)
        return y_hat, diagnostics


def did_estimate(panel: PanelMatrix, mask: TreatmentMask) -> EffectEstimate:
    return DidEstimator().fit_predict(panel, mask)


# ---------------------------------------------------------------- SCM


@dataclass(frozen=True, eq=False)
class ScmWeights:
    w: np.ndarray
    objective_path: tuple[float, ...] = ()
    iterations: int = 0
    final_lr: float = 0.0


def scm_fit(
    view: SplitView,
    treated_row: int,
    lr: float = 0.1,
    iters: int = 10_000,
    tol: float = 1e-12,
    callback: Optional[Callable[[int, np.ndarray, float], None]] = None,
) -> ScmWeights:
    """Simplex-constrained least squares by exponentiated gradient descent.

    Loss is the mean squared pre-period gap. A step that would raise the loss
    is retried with half the learning rate, so the objective path never goes up.
    """
    x0 = view.x_train
    x1 = view.x_test[treated_row]
    n_controls, t0 = x0.shape
    if n_controls < 1 or t0 < 1:
        raise ValueError("SCM butuh minimal satu kontrol dan satu pre-period")
    if n_controls == 1:
        return ScmWeights(np.ones(1), (float(np.mean((x0[0] - x1) ** 2)),), 0, lr)

    def objective(w: np.ndarray) -> float:
        r = w @ x0 - x1
        return float(r @ r) / t0

    w = np.full(n_controls, 1.0 / n_controls)
    f = objective(w)
    path = [f]
    step = lr
    it = 0
    while it < iters:
        it += 1
        grad = (2.0 / t0) * (x0 @ (w @ x0 - x1))
        if not np.all(np.isfinite(grad)):
            raise NumericalDivergence(f"gradien SCM non-finite pada iterasi {it}")
        while True:
            expo = -step * grad
            cand = w * np.exp(expo - expo.max())
            cand /= cand.sum()
            f_new = objective(cand)
            if f_new <= f or step < 1e-16:
                break
            step *= 0.5
        if f_new > f:
            # step sudah terlalu kecil untuk memperbaiki objektif
            break
        improvement = f - f_new
        w, f = cand, f_new
        path.append(f)
        if callback is not None:
            callback(it, w, f)
        if improvement < tol:
            break
    return ScmWeights(w, tuple(path), it, step)


def scm_predict(weights: ScmWeights, control_post: np.ndarray) -> np.ndarray:
    return weights.w @ np.asarray(control_post, dtype=float)


@dataclass
class ScmEstimator(BaseEstimator):
    name: ClassVar[str] = "scm"
    lr: float = 0.1
    iters: int = 10_000
    tol: float = 1e-12

    def _predict(self, panel, mask, view, *, seed, scores):
        y_hat = np.empty_like(view.y_test)
        weights: dict[str, dict[str, float]] = {}
        pre_rmse: dict[str, float] = {}
        for g in range(view.n_treated):
            fit = scm_fit(view, g, self.lr, self.iters, self.tol)
            y_hat[g] = scm_predict(fit, view.y_train)
            unit = view.treated_ids[g]
            weights[unit] = {c: float(v) for c, v in zip(view.control_ids, fit.w)}
            pre_rmse[unit] = float(np.sqrt(fit.objective_path[-1]))
        return y_hat, {"weights": weights, "pre_rmse": pre_rmse}


# ---------------------------------------------------------------- VT-EN

DEFAULT_ALPHA_GRID = (0.1, 0.5, 0.9, 1.0)
# caps for the CV fits; the final refit uses the caller tolerance
CV_MAX_SWEEPS = 2_000
CV_TOL = 1e-8


def _soft(value: float, threshold: float) -> float:
    if value > threshold:
        return value - threshold
    if value < -threshold:
        return value + threshold
    return 0.0


def elastic_net(
    x: np.ndarray,
    y: np.ndarray,
    lam: float,
    alpha: float,
    max_iter: int = 100_000,
    tol: float = 1e-10,
    beta_init: Optional[np.ndarray] = None,
) -> tuple[float, np.ndarray, int]:
    """Coordinate descent for (1/2n)‖y − b₀ − Xβ‖² + λ(α‖β‖₁ + (1−α)‖β‖²/2).

    The intercept is unpenalized and handled by centering. Returns
    (intercept, beta, sweeps).
    """
    n, p = x.shape
    x_mean = x.mean(axis=0)
    y_mean = float(y.mean())
    xc = x - x_mean
    yc = y - y_mean
    gram = xc.T @ xc / n
    xty = xc.T @ yc / n
    beta = np.zeros(p) if beta_init is None else np.array(beta_init, dtype=float)
    # gram @ beta, updated column by column
    fitted = gram @ beta
    l1 = lam * alpha
    l2 = lam * (1.0 - alpha)
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        max_delta = 0.0
        for j in range(p):
            old = beta[j]
            denom = gram[j, j] + l2
            if denom <= 0.0:
                new = 0.0
            else:
                rho = xty[j] - fitted[j] + gram[j, j] * old
                new = _soft(rho, l1) / denom
            if new != old:
                fitted += gram[:, j] * (new - old)
                beta[j] = new
                max_delta = max(max_delta, abs(new - old))
        if max_delta < tol:
            break
    return y_mean - float(x_mean @ beta), beta, sweeps


def _lambda_max_enet(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean(axis=0)
    yc = y - y.mean()
    lam = float(np.max(np.abs(xc.T @ yc))) / x.shape[0]
    return lam if lam > 0 else 1.0


def vten_fit(
    view: SplitView,
    treated_row: int,
    lambda_grid: Optional[Sequence[float]] = None,
    alpha_grid: Optional[Sequence[float]] = DEFAULT_ALPHA_GRID,
    folds: int = 5,
    tol: float = 1e-10,
) -> tuple[np.ndarray, dict[str, Any]]:
    """Vertical elastic-net regression of one treated unit on the controls.

    Rows are the T₀ pre-periods, columns the J controls. (λ, α) are chosen by
    k-fold CV over contiguous blocks of time. Returns [intercept, β₁..β_J].
    """
    x = view.x_train.T
    y = view.x_test[treated_row]
    t0 = x.shape[0]
    if alpha_grid is None or len(alpha_grid) == 0:
        raise ValueError("alpha_grid kosong")
    if lambda_grid is not None and len(lambda_grid) == 0:
        raise ValueError("lambda_grid kosong")
    if not 2 <= folds <= t0:
        raise ValueError(f"butuh T0 >= folds >= 2, dapat T0={t0}, folds={folds}")
    if lambda_grid is None:
        lam_max = _lambda_max_enet(x, y)
        lambda_grid = np.geomspace(lam_max, 1e-4 * lam_max, 10)
    lambdas = [float(v) for v in lambda_grid]
    alphas = [float(a) for a in alpha_grid]
    order = sorted(range(len(lambdas)), key=lambda i: -lambdas[i])

    cv_err = np.zeros((len(alphas), len(lambdas)))
    if len(alphas) * len(lambdas) > 1:
        for block in np.array_split(np.arange(t0), folds):
            train = np.setdiff1d(np.arange(t0), block)
            for a_i, alpha in enumerate(alphas):
                beta = None
                for l_i in order:
                    b0, beta, _ = elastic_net(
                        x[train],
                        y[train],
                        lambdas[l_i],
                        alpha,
                        max_iter=CV_MAX_SWEEPS,
                        tol=max(tol, CV_TOL),
                        beta_init=beta,
                    )
                    pred = b0 + x[block] @ beta
                    cv_err[a_i, l_i] += float(np.mean((y[block] - pred) ** 2)) / folds
    a_best, l_best = np.unravel_index(int(np.argmin(cv_err)), cv_err.shape)
    lam, alpha = lambdas[l_best], alphas[a_best]
    b0, beta, sweeps = elastic_net(x, y, lam, alpha, tol=tol)
    diagnostics = {
        "lambda": lam,
        "alpha": alpha,
        "cv_mse": float(cv_err[a_best, l_best]),
        "sweeps": int(sweeps),
        "cv_grid": {
            "lambdas": lambdas,
            "alphas": alphas,
            "mse": cv_err.round(12).tolist(),
        },
    }
    return np.concatenate([[b0], beta]), diagnostics


@dataclass
class VtenEstimator(BaseEstimator):
    name: ClassVar[str] = "vten"
    lambda_grid: Optional[list[float]] = None
    alpha_grid: list[float] = field(default_factory=lambda: list(DEFAULT_ALPHA_GRID))
    folds: int = 5

    def _predict(self, panel, mask, view, *, seed, scores):
        folds = min(self.folds, view.t0)
        y_hat = np.empty_like(view.y_test)
        per_unit: dict[str, Any] = {}
        for g in range(view.n_treated):
            coef, diag = vten_fit(view, g, self.lambda_grid, self.alpha_grid, folds)
            y_hat[g] = coef[0] + view.y_train.T @ coef[1:]
            diag.pop("cv_grid")
            per_unit[view.treated_ids[g]] = diag
        return y_hat, {"per_unit": per_unit}


# ---------------------------------------------------------------- MC-NNM


@dataclass(frozen=True, eq=False)
class SoftImputeResult:
    completed: np.ndarray
    iterations: int
    converged: bool
    objective_path: tuple[float, ...]
    singular_values: np.ndarray


def singular_value_threshold(z: np.ndarray, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Shrink every singular value by λ (σ → max(σ − λ, 0)) and rebuild."""
    u, s, vt = np.linalg.svd(z, full_matrices=False)
    shrunk = np.maximum(s - lam, 0.0)
    return (u * shrunk) @ vt, shrunk


def nnm_objective(y: np.ndarray, observed: np.ndarray, low_rank: np.ndarray, lam: float) -> float:
    resid = np.where(observed, y - low_rank, 0.0)
    nuclear = float(np.linalg.svd(low_rank, compute_uv=False).sum())
    return 0.5 * float((resid**2).sum()) + lam * nuclear


def soft_impute(
    y: np.ndarray,
    observed: np.ndarray,
    lam: float,
    *,
    init: Optional[np.ndarray] = None,
    max_iter: int = 1000,
    tol: float = 1e-9,
) -> SoftImputeResult:
    """Fill M with the current estimate, SVD, soft-threshold, repeat."""
    y_obs = np.where(observed, y, 0.0)
    low_rank = np.zeros_like(y_obs) if init is None else np.array(init, dtype=float)
    shrunk = np.linalg.svd(low_rank, compute_uv=False)
    path = [0.5 * float((np.where(observed, y_obs - low_rank, 0.0) ** 2).sum()) + lam * float(shrunk.sum())]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        filled = np.where(observed, y_obs, low_rank)
        new, shrunk = singular_value_threshold(filled, lam)
        resid = np.where(observed, y_obs - new, 0.0)
        path.append(0.5 * float((resid**2).sum()) + lam * float(shrunk.sum()))
        change = float(((new - low_rank) ** 2).sum()) / max(float((low_rank**2).sum()), 1e-12)
        low_rank = new
        if change < tol:
            converged = True
            break
    return SoftImputeResult(low_rank, it, converged, tuple(path), shrunk)


def _lambda_path(grid: Sequence[float], sigma_max: float, steps: int = 20) -> list[float]:
    target = min(grid)
    lams = set(float(v) for v in grid)
    if 0 < target < sigma_max:
        lams.update(float(v) for v in np.geomspace(sigma_max, target, steps))
    return sorted(lams, reverse=True)


def _solve_path(
    y: np.ndarray,
    observed: np.ndarray,
    grid: Sequence[float],
    max_iter: int,
    tol: float,
) -> dict[float, SoftImputeResult]:
    sigma_max = float(np.linalg.svd(np.where(observed, y, 0.0), compute_uv=False)[0])
    fits: dict[float, SoftImputeResult] = {}
    init = None
    for lam in _lambda_path(grid, sigma_max):
        res = soft_impute(y, observed, lam, init=init, max_iter=max_iter, tol=tol)
        fits[lam] = res
        init = res.completed
    return fits


def mcnnm_fit(
    panel: PanelMatrix,
    mask: TreatmentMask,
    lambda_grid: Optional[Sequence[float]] = None,
    folds: int = 3,
    max_iter: int = 1000,
    tol: float = 1e-9,
    *,
    seed: int = 0,
    cv_fraction: float = 0.1,
) -> EffectEstimate:
    """Matrix completion by nuclear-norm regularized least squares.

    Pre-period cells of treated units stay in O. λ is picked by hiding a
    random `cv_fraction` of observed control cells per fold; with a single
    grid value (or folds < 1) CV is skipped.
    """
    panel.require_complete()
    mask.validate(panel)
    view = split(panel, mask)
    y = panel.values
    observed = mask.observed(panel.n_periods)
    if lambda_grid is None:
        sigma_max = float(np.linalg.svd(np.where(observed, y, 0.0), compute_uv=False)[0])
        lambda_grid = np.geomspace(sigma_max, 1e-4 * sigma_max, 10)
    grid = [float(v) for v in lambda_grid]
    if not grid:
        raise ValueError("lambda_grid kosong")

    cv_mse = {lam: 0.0 for lam in grid}
    if len(grid) > 1 and folds >= 1:
        rng = make_rng(seed, "cv")
        control_cells = np.argwhere(observed & ~mask.treated[:, None])
        n_hide = max(1, int(round(cv_fraction * len(control_cells))))
        for _ in range(folds):
            pick = control_cells[rng.choice(len(control_cells), n_hide, replace=False)]
            hidden = np.zeros_like(observed)
            hidden[pick[:, 0], pick[:, 1]] = True
            fits = _solve_path(y, observed & ~hidden, grid, max_iter, tol)
            for lam in grid:
                err = (y - fits[lam].completed)[hidden]
                cv_mse[lam] += float(np.mean(err**2)) / folds
    best = min(grid, key=lambda lam: (cv_mse[lam], -lam))

    fits = _solve_path(y, observed, [best], max_iter, tol)
    res = fits[best]
    diagnostics: dict[str, Any] = {
        "lambda": best,
        "iterations": res.iterations,
        "converged": res.converged,
        "rank": int((res.singular_values > 0).sum()),
        "cv_mse": {repr(lam): mse for lam, mse in cv_mse.items()},
        "objective_path": list(res.objective_path),
    }
    if not res.converged:
        msg = f"soft-impute belum konvergen setelah {max_iter} iterasi (lambda={best:.4g})"
        LOG.warning(msg)
        diagnostics["warning"] = msg
    y_hat = res.completed[np.ix_(mask.treated_index, np.arange(mask.t0, panel.n_periods))]
    return EffectEstimate.from_prediction(view, y_hat, "mcnnm", diagnostics)


@dataclass
class McnnmEstimator(BaseEstimator):
    name: ClassVar[str] = "mcnnm"
    lambda_grid: Optional[list[float]] = None
    folds: int = 3
    max_iter: int = 1000
    tol: float = 1e-9
    cv_fraction: float = 0.1

    def fit_predict(self, panel, mask, *, seed=0, scores=None):
        return mcnnm_fit(
            panel,
            mask,
            self.lambda_grid,
            self.folds,
            self.max_iter,
            self.tol,
            seed=seed,
            cv_fraction=self.cv_fraction,
        )
