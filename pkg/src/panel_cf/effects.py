from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Protocol, runtime_checkable

import numpy as np

from .panel import PanelMatrix, SplitView, TimeLabel, TreatmentMask, split
from .propensity import PropensityScores

LOG = logging.getLogger(__name__)


class UnknownEstimator(ValueError):
    def __init__(self, name: str) -> None:
        super().__init__(f"estimator tidak dikenal: {name!r} (pilihan: {', '.join(available())})")
        self.name = name


@dataclass(frozen=True, eq=False)
class EffectEstimate:
    """Counterfactual predictions for the treated block and the implied effects.

    phi_hat = y_test − y_hat_test cell by cell; phi_bar is its mean over the
    treated units, one value per post-period.
    """

    y_hat_test: np.ndarray
    phi_hat: np.ndarray
    phi_bar: np.ndarray
    estimator_name: str
    diagnostics: dict[str, Any] = field(default_factory=dict)
    treated_ids: tuple[str, ...] = ()
    post_labels: tuple[TimeLabel, ...] = ()

    @classmethod
    def from_prediction(
        cls,
        view: SplitView,
        y_hat_test: np.ndarray,
        name: str,
        diagnostics: Optional[Mapping[str, Any]] = None,
    ) -> "EffectEstimate":
        y_hat = np.asarray(y_hat_test, dtype=float).reshape(view.y_test.shape)
        phi_hat = view.y_test - y_hat
        return cls(
            y_hat_test=y_hat,
            phi_hat=phi_hat,
            phi_bar=phi_hat.mean(axis=0),
            estimator_name=name,
            diagnostics=dict(diagnostics or {}),
            treated_ids=view.treated_ids,
            post_labels=view.post_labels,
        )

    @property
    def att(self) -> float:
        return float(self.phi_bar.mean())


@runtime_checkable
class Estimator(Protocol):
    name: str

    def fit_predict(
        self,
        panel: PanelMatrix,
        mask: TreatmentMask,
        *,
        seed: int = 0,
        scores: Optional[PropensityScores] = None,
    ) -> EffectEstimate: ...

    def placebo_mode(self) -> "Estimator": ...


class BaseEstimator:
    """Shared plumbing: validate inputs, split, delegate to `_predict`."""

    name = "base"

    def fit_predict(
        self,
        panel: PanelMatrix,
        mask: TreatmentMask,
        *,
        seed: int = 0,
        scores: Optional[PropensityScores] = None,
    ) -> EffectEstimate:
        panel.require_complete()
        mask.validate(panel)
        view = split(panel, mask)
        y_hat, diagnostics = self._predict(panel, mask, view, seed=seed, scores=scores)
        est = EffectEstimate.from_prediction(view, y_hat, self.name, diagnostics)
        LOG.debug("%s: ATT=%.6g over %d treated units", self.name, est.att, view.n_treated)
        return est

    def _predict(
        self,
        panel: PanelMatrix,
        mask: TreatmentMask,
        view: SplitView,
        *,
        seed: int,
        scores: Optional[PropensityScores],
    ) -> tuple[np.ndarray, dict[str, Any]]:
        raise NotImplementedError

    def placebo_mode(self) -> "BaseEstimator":
        return self


class OracleEstimator(BaseEstimator):
    """Returns the observed treated outcomes; a zero-error reference for the harness."""

    name = "oracle"

    def _predict(self, panel, mask, view, *, seed, scores):
        return view.y_test.copy(), {}


def available() -> list[str]:
    return ["did", "scm", "vten", "mcnnm", "ed", "rvae", "oracle"]


def build_estimator(name: str, params: Optional[Mapping[str, Any]] = None) -> Estimator:
    """Bangun estimator dari nama + parameter (mis. dari file config)."""
    params = dict(params or {})
    key = name.strip().lower()
    if key == "oracle":
        return OracleEstimator()
    if key in ("did", "scm", "vten", "mcnnm"):
        from . import classical

        cls = {
            "did": classical.DidEstimator,
            "scm": classical.ScmEstimator,
            "vten": classical.VtenEstimator,
            "mcnnm": classical.McnnmEstimator,
        }[key]
        try:
            return cls(**params)
        except TypeError as exc:
            raise ValueError(f"parameter tidak valid untuk {key}: {exc}") from exc
    if key in ("ed", "rvae"):
        from . import neural

        cls = neural.EncoderDecoderEstimator if key == "ed" else neural.RvaeEstimator
        return cls.from_params(params)
    raise UnknownEstimator(name)
