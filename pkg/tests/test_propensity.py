import numpy as np
import pytest
from scipy.special import expit

from panel_cf.propensity import (
    CovariateTable,
    DegenerateLabels,
    SeparationDetected,
    estimate_scores,
    fit_logistic,
    predict_scores,
    read_covariates,
    weighted_mse,
)


def _overlapping_table(seed: int = 0, n: int = 200):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(n, 2))
    true = np.array([-0.3, 1.0, -0.7])
    labels = rng.random(n) < expit(true[0] + z @ true[1:])
    return CovariateTable(z, ("z1", "z2")), labels, true


def test_fit_logistic_recovers_coefficients():
    table, labels, true = _overlapping_table(n=4000)
    beta = fit_logistic(table, labels)
    np.testing.assert_allclose(beta, true, atol=0.15)


def test_fit_logistic_single_class():
    table, _, _ = _overlapping_table()
    with pytest.raises(DegenerateLabels):
        fit_logistic(table, np.zeros(table.z.shape[0], dtype=bool))


def test_fit_logistic_separation():
    z = np.array([[-2.0], [-1.0], [-0.5], [0.5], [1.0], [2.0]])
    labels = z[:, 0] > 0
    with pytest.raises(SeparationDetected):
        fit_logistic(CovariateTable(z, ("x",)), labels)


def test_predict_scores_clipping_and_broadcast():
    table = CovariateTable(np.array([[10.0], [-10.0], [0.0]]), ("x",))
    scores = predict_scores(np.array([0.0, 1.0]), table, n_periods=4, clip_eps=0.01)
    assert scores.e_hat.shape == (3, 4)
    assert scores.e_hat.max() == pytest.approx(0.99)
    assert scores.e_hat.min() == pytest.approx(0.01)
    np.testing.assert_allclose(scores.e_hat[2], 0.5)


def test_train_weights_slice():
    table = CovariateTable(np.array([[0.0], [1.0], [2.0]]), ("x",))
    scores = predict_scores(np.array([0.0, 0.5]), table, n_periods=5)
    w = scores.train_weights(np.array([0, 2]), t0=3)
    assert w.shape == (2, 2)


def test_read_covariates_aligns_to_panel_order(fixtures_dir):
    table = read_covariates(fixtures_dir / "covariates.csv", ["t1", "c1", "c2", "c3", "c4"])
    assert table.unit_ids[0] == "t1"
    np.testing.assert_allclose(table.z[0], [0.7, 0.4])
    assert table.names == ("income", "urban")


def test_read_covariates_unit_mismatch(fixtures_dir):
    with pytest.raises(ValueError):
        read_covariates(fixtures_dir / "covariates.csv", ["c1", "c2"])


def test_estimate_scores_fixture(fixtures_dir):
    units = ["c1", "c2", "c3", "c4", "t1"]
    table = read_covariates(fixtures_dir / "covariates.csv", units)
    scores = estimate_scores(table, [False, False, False, False, True], n_periods=3)
    assert scores.e_hat.shape == (5, 3)
    assert np.all((scores.e_hat >= 0.01) & (scores.e_hat <= 0.99))


def test_weighted_mse_reduces_to_mse():
    y = np.array([[1.0, 2.0], [3.0, 4.0]])
    y_hat = np.array([[1.0, 1.0], [2.0, 4.0]])
    assert weighted_mse(y, y_hat) == pytest.approx(0.5)


def test_weighted_mse_uses_input_count():
    y = np.array([[1.0, 2.0]])
    y_hat = np.array([[0.0, 0.0]])
    w = np.array([[0.5, 0.25]])
    # (1*0.5 + 4*0.25) / 3
    assert weighted_mse(y, y_hat, w, n_inputs=3) == pytest.approx(0.5)


def test_weighted_mse_shape_mismatch():
    with pytest.raises(ValueError):
        weighted_mse(np.zeros((2, 2)), np.zeros((2, 3)))


def test_predict_scores_logit_of_point_seven():
    table = CovariateTable(np.array([[0.3], [-1.2], [2.0]]), ("z1",))
    scores = predict_scores(np.array([np.log(0.7 / 0.3), 0.0]), table, n_periods=4)
    np.testing.assert_allclose(scores.e_hat, 0.7, atol=1e-9)
    # intercept 0, koefisien 1: logit(0.7) tepat di nilai kovariat
    at_logit = CovariateTable(np.array([[np.log(7 / 3)]]), ("z1",))
    assert predict_scores(np.array([0.0, 1.0]), at_logit, 1).e_hat[0, 0] == pytest.approx(0.7, abs=1e-9)


def test_predict_scores_monotone_in_linear_index():
    z = np.linspace(-3.0, 3.0, 25)[:, None]
    table = CovariateTable(z, ("z1",))
    up = predict_scores(np.array([0.2, 1.5]), table, 1, clip_eps=1e-6).e_hat[:, 0]
    down = predict_scores(np.array([0.2, -1.5]), table, 1, clip_eps=1e-6).e_hat[:, 0]
    assert np.all(np.diff(up) > 0)
    assert np.all(np.diff(down) < 0)
