"""Randomization inference from placebo re-runs on the control units.

Every nonempty proper subset of controls (or a seeded sample of them when
there are too many) is relabeled treated, the estimator is re-run, and the
subset-averaged effect path becomes one row of the placebo matrix mu.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .effects import EffectEstimate, Estimator
from .panel import PanelMatrix, TimeLabel, TreatmentMask
from .utils import derive_seed, make_rng

LOG = logging.getLogger(__name__)

DEFAULT_CAP = 10_000
ENUMERATE_MAX_J = 16
TIE_RTOL = 1e-12


def count_placebos(n_controls: int) -> int:
    """Σ_{g=1}^{J−1} C(J, g) = 2^J − 2."""
    if n_controls < 2:
        raise ValueError(f"butuh minimal 2 unit kontrol, dapat {n_controls}")
    return 2**n_controls - 2


@dataclass(frozen=True, eq=False)
class PlaceboDistribution:
    mu: np.ndarray
    subset_ids: tuple[tuple[str, ...], ...]
    q_nominal: int
    q_eff: int
    sampled: bool
    failed: tuple[tuple[str, ...], ...] = ()
    post_labels: tuple[TimeLabel, ...] = ()

    @property
    def mu_mean(self) -> np.ndarray:
        """Time-averaged placebo effect per subset."""
        return self.mu.mean(axis=1)

    def to_frame(self) -> pd.DataFrame:
        labels = [str(t) for t in self.post_labels] or [f"t{i}" for i in range(self.mu.shape[1])]
        frame = pd.DataFrame(self.mu, columns=labels)
        frame.insert(0, "subset", [";".join(s) for s in self.subset_ids])
        return frame


def enumerate_subsets(n_controls: int) -> list[tuple[int, ...]]:
    """All nonempty proper subsets, by size then lexicographically."""
    return [
        combo
        for size in range(1, n_controls)
        for combo in itertools.combinations(range(n_controls), size)
    ]


def sample_subsets(n_controls: int, count: int, seed: int) -> list[tuple[int, ...]]:
    """`count` distinct nonempty proper subsets drawn uniformly without replacement."""
    count = min(count, count_placebos(n_controls))
    rng = make_rng(seed, "subsets")
    seen: set[bytes] = set()
    out: list[tuple[int, ...]] = []
    while len(out) < count:
        draw = rng.random(n_controls) < 0.5
        size = int(draw.sum())
        if size == 0 or size == n_controls:
            continue
        key = np.packbits(draw).tobytes()
        if key in seen:
            continue
        seen.add(key)
        out.append(tuple(int(i) for i in np.flatnonzero(draw)))
    return out


def _run_subset(
    estimator: Estimator, panel: PanelMatrix, subset: tuple[int, ...], t0: int, seed: int
) -> Optional[np.ndarray]:
    treated = np.zeros(panel.n_units, dtype=bool)
    treated[list(subset)] = True
    try:
        est = estimator.fit_predict(panel, TreatmentMask(treated, t0), seed=seed)
    except Exception as exc:  # noqa: BLE001 - subset gagal dicatat, bukan dilempar
        LOG.warning("Placebo subset %s failed: %s", subset, exc)
        return None
    return est.phi_bar


def placebo_distribution(
    estimator: Estimator,
    controls: PanelMatrix,
    t0: int,
    cap: int = DEFAULT_CAP,
    seed: int = 0,
    *,
    n_jobs: int = 1,
    force_sampling: bool = False,
) -> PlaceboDistribution:
    """Re-run `estimator` with each placebo subset of `controls` treated at `t0`.

    Subsets are enumerated when J ≤ 16 or Q ≤ cap, otherwise `cap` distinct
    subsets are sampled. The subset list is fixed before any job runs, so the
    result does not depend on `n_jobs`.
    """
    n_controls = controls.n_units
    q_nominal = count_placebos(n_controls)
    if cap < 1:
        raise ValueError("cap harus >= 1")
    sampled = force_sampling or (n_controls > ENUMERATE_MAX_J and q_nominal > cap)
    subsets = sample_subsets(n_controls, cap, seed) if sampled else enumerate_subsets(n_controls)
    LOG.info(
        "Running %d placebo subsets of %d controls (%s)",
        len(subsets),
        n_controls,
        "sampled" if sampled else "enumerated",
    )
    rows = Parallel(n_jobs=n_jobs)(
        delayed(_run_subset)(estimator, controls, s, t0, derive_seed(seed, "placebo", k))
        for k, s in enumerate(subsets)
    )
    ok = [(s, r) for s, r in zip(subsets, rows) if r is not None]
    failed = tuple(
        tuple(controls.unit_ids[i] for i in s) for s, r in zip(subsets, rows) if r is None
    )
    if failed:
        LOG.warning("%d of %d placebo subsets failed and were excluded", len(failed), len(subsets))
    t_post = controls.n_periods - t0
    mu = np.array([r for _, r in ok], dtype=float).reshape(len(ok), t_post)
    return PlaceboDistribution(
        mu=mu,
        subset_ids=tuple(tuple(controls.unit_ids[i] for i in s) for s, _ in ok),
        q_nominal=q_nominal,
        q_eff=len(ok),
        sampled=sampled,
        failed=failed,
        post_labels=tuple(controls.time_labels[t0:]),
    )


def _exceedance(stat: np.ndarray, observed: np.ndarray, q: int, corrected: bool) -> np.ndarray:
    tol = TIE_RTOL * np.maximum(1.0, np.abs(observed))
    count = (stat >= observed - tol).sum(axis=0)
    if corrected:
        return (1.0 + count) / (1.0 + q)
    return count / q


def p_values(
    dist: PlaceboDistribution,
    phi_bar: Sequence[float],
    two_sided: bool = True,
    corrected: bool = False,
) -> np.ndarray:
    """Per-period share of placebo rows at least as extreme as the observed effect.

    Two-sided compares absolute values. The default divides by Q and can be
    0; `corrected` gives (1 + count) / (1 + Q).
    """
    observed = np.asarray(phi_bar, dtype=float)
    if dist.q_eff == 0:
        raise ValueError("distribusi placebo kosong (q_eff = 0)")
    if observed.shape != (dist.mu.shape[1],):
        raise ValueError(f"phi_bar punya {observed.shape} kolom, mu punya {dist.mu.shape[1]}")
    stat = dist.mu
    if two_sided:
        stat, observed = np.abs(stat), np.abs(observed)
    return _exceedance(stat, observed[None, :], dist.q_eff, corrected)


def p_value_of_mean(
    dist: PlaceboDistribution,
    phi_bar_mean: float,
    two_sided: bool = True,
    corrected: bool = False,
) -> float:
    if dist.q_eff == 0:
        raise ValueError("distribusi placebo kosong (q_eff = 0)")
    stat = dist.mu_mean
    observed = np.array([phi_bar_mean], dtype=float)
    if two_sided:
        stat, observed = np.abs(stat), np.abs(observed)
    return float(_exceedance(stat[:, None], observed[None, :], dist.q_eff, corrected)[0])


@dataclass(frozen=True, eq=False)
class ConfidenceInterval:
    lower: float
    upper: float
    delta_samples: np.ndarray
    retained: np.ndarray
    empty: bool = False
    search_range: tuple[float, float] = (float("nan"), float("nan"))


def confidence_interval(
    dist: PlaceboDistribution,
    phi_bar_mean: float,
    alpha: float = 0.05,
    n_delta: int = 500,
    seed: int = 0,
    corrected: bool = False,
) -> ConfidenceInterval:
    """Invert the randomization test for a constant additive effect Δ.

    Δ is sampled uniformly on observed ± 4·sd of the time-averaged placebo
    effects, endpoints included. Δ is kept when the share of placebo means
    whose distance from their own centre is at least |observed − Δ| is ≥ α.
    """
    if dist.q_eff < 1:
        raise ValueError("distribusi placebo kosong (q_eff = 0)")
    if n_delta < 2:
        raise ValueError("n_delta harus >= 2")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha harus di [0, 1]")
    means = dist.mu_mean
    spread = float(np.std(means, ddof=1)) if means.size > 1 else 0.0
    lo, hi = phi_bar_mean - 4.0 * spread, phi_bar_mean + 4.0 * spread
    inner = make_rng(seed, "delta").uniform(0.0, 1.0, n_delta - 2)
    deltas = np.sort(np.concatenate([[lo, hi], lo + (hi - lo) * inner]))

    centred = np.abs(means - means.mean())
    gap = np.abs(phi_bar_mean - deltas)
    p = _exceedance(centred[:, None], gap[None, :], dist.q_eff, corrected)
    retained = p >= alpha
    if not retained.any():
        LOG.warning("No Δ retained at alpha=%g; confidence interval is empty", alpha)
        return ConfidenceInterval(float("nan"), float("nan"), deltas, retained, True, (lo, hi))
    kept = deltas[retained]
    return ConfidenceInterval(float(kept.min()), float(kept.max()), deltas, retained, False, (lo, hi))


@dataclass(frozen=True, eq=False)
class RandomizationReport:
    p_values: np.ndarray
    phi_bar: np.ndarray
    ci_lower: float
    ci_upper: float
    alpha: float
    delta_samples: np.ndarray
    q_nominal: int = 0
    q_eff: int = 0
    seed: int = 0
    p_value_mean: float = float("nan")
    ci_empty: bool = False
    two_sided: bool = True
    corrected: bool = False
    estimator: str = ""
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        def finite_or_none(v: float) -> Optional[float]:
            return float(v) if np.isfinite(v) else None

        return {
            "estimator": self.estimator,
            "p_values": [float(v) for v in self.p_values],
            "phi_bar": [float(v) for v in self.phi_bar],
            "p_value_mean": finite_or_none(self.p_value_mean),
            "ci": [finite_or_none(self.ci_lower), finite_or_none(self.ci_upper)],
            "ci_empty": self.ci_empty,
            "alpha": self.alpha,
            "q_nominal": self.q_nominal,
            "q_eff": self.q_eff,
            "seed": self.seed,
            "two_sided": self.two_sided,
            "corrected": self.corrected,
            "n_delta": int(self.delta_samples.size),
            **self.extra,
        }


def randomization_test(
    estimator: Estimator,
    panel: PanelMatrix,
    mask: TreatmentMask,
    observed: Optional[EffectEstimate] = None,
    *,
    alpha: float = 0.05,
    cap: int = DEFAULT_CAP,
    n_delta: int = 500,
    seed: int = 0,
    two_sided: bool = True,
    corrected: bool = False,
    n_jobs: int = 1,
) -> tuple[RandomizationReport, PlaceboDistribution]:
    """Placebo distribution on the controls, p-values and CI for `observed`.

    Placebo subsets are fit without propensity scores. When `observed` is
    None it is fit the same way (`estimator` on `panel`, no scores), so the
    observed effect and the placebo effects come from one loss.
    """
    mask.validate(panel)
    if observed is None:
        observed = estimator.fit_predict(panel, mask, seed=seed)
    weighted = bool(observed.diagnostics.get("weighted", False))
    if weighted:
        LOG.warning("Observed effect was fit with propensity weights; placebo effects are not")
    controls = panel.rows(mask.control_index)
    dist = placebo_distribution(estimator, controls, mask.t0, cap, seed, n_jobs=n_jobs)
    pv = p_values(dist, observed.phi_bar, two_sided, corrected)
    ci = confidence_interval(dist, observed.att, alpha, n_delta, seed, corrected)
    p_mean = p_value_of_mean(dist, observed.att, two_sided, corrected)

    # p_value_mean membandingkan |mu_mean| apa adanya, CI memakai mu_mean yang dipusatkan
    bias = float(dist.mu_mean.mean())
    covers_zero = (not ci.empty) and ci.lower <= 0.0 <= ci.upper
    disagree = (p_mean >= alpha) != covers_zero
    if disagree:
        LOG.warning(
            "p_value_mean=%.4g and the %g-level interval disagree on zero effect (placebo bias %.4g)",
            p_mean,
            alpha,
            bias,
        )
    report = RandomizationReport(
        p_values=pv,
        phi_bar=observed.phi_bar,
        ci_lower=ci.lower,
        ci_upper=ci.upper,
        alpha=alpha,
        delta_samples=ci.delta_samples,
        q_nominal=dist.q_nominal,
        q_eff=dist.q_eff,
        seed=seed,
        p_value_mean=p_mean,
        ci_empty=ci.empty,
        two_sided=two_sided,
        corrected=corrected,
        estimator=observed.estimator_name,
        extra={
            "sampled": dist.sampled,
            "n_failed": len(dist.failed),
            "propensity_weighted": weighted,
            "placebo_mean_bias": bias,
            "ci_p_value_disagree": bool(disagree),
        },
    )
    return report, dist


def write_mu_csv(dist: PlaceboDistribution, path: Union[str, Path], header: str = "") -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(header + dist.to_frame().to_csv(index=False, float_format="%.17g"), encoding="utf-8")
    LOG.info("Saved placebo matrix (%d x %d) -> %s", dist.mu.shape[0], dist.mu.shape[1], p)
    return p
