"""Encoder-decoder RNN and recurrent VAE counterfactual estimators.

Each unit is one sample, time is the sequence axis and there is a single
feature. Inputs are standardized with one scalar mean/scale learned from the
training inputs; all logged losses are in that standardized space.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, ClassVar, Literal, Mapping, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from . import nn
from .effects import BaseEstimator
from .panel import SplitView
from .utils import make_rng

LOG = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "panel-cf/checkpoint"
CHECKPOINT_VERSION = 1
PLACEBO_EPOCHS = 500


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, loss: float = float("nan")) -> None:
        super().__init__(f"training divergen pada epoch {epoch} (loss={loss})")
        self.epoch = epoch


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    learning_rate: float = Field(5e-4, gt=0)
    epochs: int = Field(1000, ge=0)
    batch_size: Optional[int] = Field(None, ge=1)
    input_dropout_rate: float = 0.2
    l2_coeff: float = Field(1e-4, ge=0)
    validation_fraction: float = 0.2
    seed: int = 0
    optimizer: Literal["adam", "sgd"] = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # False = MSE biasa (mode placebo)
    weighted: bool = True
    activation: Literal["linear", "tanh"] = "linear"

    hidden_size: int = Field(128, ge=1)
    encoder_layers: int = Field(2, ge=1)

    rvae_hidden: int = Field(32, ge=1)
    latent_dim: int = Field(200, ge=1)
    rvae_decoder_hidden: tuple[int, Optional[int]] = (32, None)
    n_samples: int = Field(128, ge=1)

    @field_validator("input_dropout_rate")
    @classmethod
    def _check_dropout(cls, v: float) -> float:
        if not 0.0 <= v < 1.0:
            raise ValueError("input_dropout_rate harus di [0, 1)")
        return v

    @field_validator("validation_fraction")
    @classmethod
    def _check_validation(cls, v: float) -> float:
        if not 0.0 < v < 1.0:
            raise ValueError("validation_fraction harus di (0, 1)")
        return v


@dataclass
class TrainingLog:
    records: list[dict[str, float]] = field(default_factory=list)

    def append(self, **row: float) -> None:
        self.records.append(row)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def final(self) -> dict[str, float]:
        return dict(self.records[-1]) if self.records else {}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame.from_records(self.records)


def _split_validation(n_units: int, fraction: float) -> int:
    """Number of trailing units held out: ⌈fraction·n⌉, leaving at least one to train on."""
    return min(math.ceil(fraction * n_units), n_units - 1)


def _scaler(x: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(x))
    scale = float(np.std(x))
    return mean, (scale if scale > 1e-12 else 1.0)


def _as_batch(a: Any) -> tuple[np.ndarray, bool]:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    return arr, False


def _columns(a: np.ndarray) -> list[np.ndarray]:
    return [a[:, t : t + 1] for t in range(a.shape[1])]


def _data_loss(
    pred: np.ndarray, target: np.ndarray, weights: Optional[np.ndarray], n_inputs: int
) -> tuple[float, np.ndarray]:
    """WMSE (weights given, denominator n_inputs) or plain MSE, and d loss / d pred."""
    diff = pred - target
    if weights is None:
        n = diff.size
        return float(np.sum(diff * diff)) / n, 2.0 * diff / n
    return float(np.sum(diff * diff * weights)) / n_inputs, 2.0 * diff * weights / n_inputs


def gaussian_nll(
    y: np.ndarray, y_hat: np.ndarray, weights: Optional[np.ndarray] = None, sigma: float = 1.0
) -> float:
    """Weighted Gaussian negative log-likelihood with fixed σ."""
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    resid = (y - np.asarray(y_hat, dtype=float)) ** 2 / (2.0 * sigma**2)
    return float(np.sum(w * (resid + 0.5 * np.log(2.0 * np.pi * sigma**2))))


# ---------------------------------------------------------------- encoder-decoder


@dataclass(eq=False)
class EncoderDecoderNet:
    params: nn.Params
    config: TrainConfig
    x_mean: float = 0.0
    x_scale: float = 1.0
    kind: ClassVar[str] = "ed"

    def standardize(self, a: np.ndarray) -> np.ndarray:
        return (a - self.x_mean) / self.x_scale

    def restore(self, a: np.ndarray) -> np.ndarray:
        return a * self.x_scale + self.x_mean


def init_encoder_decoder(cfg: TrainConfig, seed: Optional[int] = None) -> EncoderDecoderNet:
    rng = make_rng(cfg.seed if seed is None else seed, "init")
    hidden = cfg.hidden_size
    params: nn.Params = {}
    for k in range(cfg.encoder_layers):
        n_in = 1 if k == 0 else hidden
        params.update(nn.prefixed(f"enc{k}", nn.init_lstm(rng, n_in, hidden)))
    params.update(nn.prefixed("dec", nn.init_gru(rng, 1, hidden)))
    params.update(nn.prefixed("out", nn.init_dense(rng, hidden, 1)))
    return EncoderDecoderNet(params, cfg)


def _encode(params: nn.Params, cfg: TrainConfig, x: np.ndarray, drop: Optional[np.ndarray]):
    inputs = _columns(x if drop is None else x * drop)
    caches = []
    for k in range(cfg.encoder_layers):
        hs, cache = nn.lstm_sequence(nn.layer(params, f"enc{k}"), inputs, cfg.hidden_size, cfg.activation)
        caches.append(cache)
        inputs = hs
    return inputs[-1], caches


def _encode_backward(dh_top: np.ndarray, caches: list, cfg: TrainConfig) -> nn.Params:
    grads: nn.Params = {}
    steps = len(caches[0])
    dhs: list[Optional[np.ndarray]] = [None] * (steps - 1) + [dh_top]
    for k in range(cfg.encoder_layers - 1, -1, -1):
        dxs, g = nn.lstm_sequence_backward(dhs, caches[k])
        nn.accumulate(grads, nn.prefixed(f"enc{k}", g))
        dhs = list(dxs)
    return grads


def _decode(params: nn.Params, cfg: TrainConfig, h: np.ndarray, first: np.ndarray,
            teacher: Optional[np.ndarray], steps: int):
    dec, out = nn.layer(params, "dec"), nn.layer(params, "out")
    u = first
    preds, caches = [], []
    for t in range(steps):
        h, gcache = nn.gru_forward(dec, h, u, cfg.activation)
        y, dcache = nn.dense_forward(out, h)
        preds.append(y)
        caches.append((gcache, dcache))
        u = y if teacher is None else teacher[:, t : t + 1]
    if not preds:
        return np.zeros((first.shape[0], 0)), caches
    return np.concatenate(preds, axis=1), caches


def _ed_loss(
    params: nn.Params,
    cfg: TrainConfig,
    x: np.ndarray,
    y: np.ndarray,
    weights: Optional[np.ndarray],
    drop: Optional[np.ndarray] = None,
) -> tuple[float, nn.Params]:
    """Teacher-forced loss plus L2 and the full gradient (standardized inputs)."""
    h_top, enc_caches = _encode(params, cfg, x, drop)
    pred, dec_caches = _decode(params, cfg, h_top, x[:, -1:], y, y.shape[1])
    loss, dpred = _data_loss(pred, y, weights, x.size)
    grads: nn.Params = {}
    dh_next = np.zeros_like(h_top)
    for t in range(len(dec_caches) - 1, -1, -1):
        gcache, dcache = dec_caches[t]
        dh_dense, g_out = nn.dense_backward(dpred[:, t : t + 1], dcache)
        nn.accumulate(grads, nn.prefixed("out", g_out))
        _, dh_next, g_dec = nn.gru_backward(dh_next + dh_dense, gcache)
        nn.accumulate(grads, nn.prefixed("dec", g_dec))
    nn.accumulate(grads, _encode_backward(dh_next, enc_caches, cfg))
    nn.accumulate(grads, nn.l2_grads(params, cfg.l2_coeff))
    return loss + nn.l2_penalty(params, cfg.l2_coeff), grads


def encoder_decoder_loss(
    net: EncoderDecoderNet,
    x: np.ndarray,
    y: np.ndarray,
    weights: Optional[np.ndarray] = None,
) -> tuple[float, nn.Params]:
    """Loss and gradients of `net` on raw (unstandardized) x/y, no dropout."""
    xb, _ = _as_batch(x)
    yb, _ = _as_batch(y)
    return _ed_loss(net.params, net.config, net.standardize(xb), net.standardize(yb), weights)


def forward_teacher_forced(net: EncoderDecoderNet, x_seq: Any, y_seq: Any) -> np.ndarray:
    x, single = _as_batch(x_seq)
    y, _ = _as_batch(y_seq)
    h_top, _ = _encode(net.params, net.config, net.standardize(x), None)
    ys = net.standardize(y)
    pred, _ = _decode(net.params, net.config, h_top, net.standardize(x[:, -1:]), ys, ys.shape[1])
    out = net.restore(pred)
    return out[0] if single else out


def _autoregressive(params: nn.Params, cfg: TrainConfig, x_std: np.ndarray, steps: int) -> np.ndarray:
    h_top, _ = _encode(params, cfg, x_std, None)
    pred, _ = _decode(params, cfg, h_top, x_std[:, -1:], None, steps)
    return pred


def forward_autoregressive(net: EncoderDecoderNet, x_seq: Any, steps: int) -> np.ndarray:
    x, single = _as_batch(x_seq)
    if steps < 0:
        raise ValueError("steps tidak boleh negatif")
    out = net.restore(_autoregressive(net.params, net.config, net.standardize(x), steps))
    return out[0] if single else out


def train_encoder_decoder(
    view: SplitView,
    e_hat_train: Optional[np.ndarray],
    cfg: TrainConfig,
) -> tuple[EncoderDecoderNet, TrainingLog]:
    """Train on control pairs (x_train → y_train) with teacher forcing.

    `e_hat_train` is Ê^train (J × T★). It is ignored when `cfg.weighted` is
    False or when it is None; the loss is then the plain MSE. The last
    ⌈validation_fraction·J⌉ controls are held out and scored in generation
    mode after every epoch. Final-epoch parameters are returned.
    """
    n_units, t0 = view.x_train.shape
    if n_units < 2 or t0 < 2:
        raise ValueError(f"encoder-decoder butuh J >= 2 dan T0 >= 2, dapat J={n_units}, T0={t0}")
    n_val = _split_validation(n_units, cfg.validation_fraction)
    n_train = n_units - n_val
    weights = None
    if cfg.weighted and e_hat_train is not None:
        weights = np.asarray(e_hat_train, dtype=float)
        if weights.shape != view.y_train.shape:
            raise ValueError(f"bentuk E_train {weights.shape} beda dengan y_train {view.y_train.shape}")

    net = init_encoder_decoder(cfg)
    net.x_mean, net.x_scale = _scaler(view.x_train[:n_train])
    xs = net.standardize(view.x_train)
    ys = net.standardize(view.y_train)
    log = TrainingLog()
    if cfg.epochs == 0:
        return net, log

    opt = nn.Optimizer(cfg.optimizer, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    shuffle_rng = make_rng(cfg.seed, "shuffle")
    drop_rng = make_rng(cfg.seed, "dropout")
    batch = min(cfg.batch_size or 32, n_train)
    params = net.params
    val = slice(n_train, n_units)
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n_train)
        total = 0.0
        for start in range(0, n_train, batch):
            idx = order[start : start + batch]
            drop = nn.dropout_mask(drop_rng, (len(idx), t0), cfg.input_dropout_rate)
            w = None if weights is None else weights[idx]
            loss, grads = _ed_loss(params, cfg, xs[idx], ys[idx], w, drop)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, loss)
            params = opt.step(params, grads)
            total += loss * len(idx)
        pred = _autoregressive(params, cfg, xs[val], ys.shape[1])
        val_loss, _ = _data_loss(pred, ys[val], None if weights is None else weights[val], xs[val].size)
        if not np.isfinite(val_loss):
            raise TrainingDiverged(epoch, val_loss)
        log.append(epoch=epoch, train_loss=total / n_train, val_loss=val_loss)
        LOG.debug("ed epoch %d: train=%.6g val=%.6g", epoch, total / n_train, val_loss)
    net.params = params
    LOG.info("Trained encoder-decoder for %d epochs (final val=%.4g)", cfg.epochs, log.final["val_loss"])
    return net, log


# ---------------------------------------------------------------- RVAE


@dataclass(eq=False)
class RvaeNet:
    """Recurrent VAE.

    The latent head outputs a Gaussian (mu, logvar) over the log of a
    log-normal latent; the prior is standard normal in that log space.
    """

    params: nn.Params
    config: TrainConfig
    x_mean: float = 0.0
    x_scale: float = 1.0
    kind: ClassVar[str] = "rvae"

    standardize = EncoderDecoderNet.standardize
    restore = EncoderDecoderNet.restore


def gaussian_kl(mu: np.ndarray, logvar: np.ndarray) -> np.ndarray:
    """KL(N(mu, exp(logvar)) ‖ N(0, I)) per row."""
    return -0.5 * np.sum(1.0 + logvar - mu * mu - np.exp(logvar), axis=-1)


def init_rvae(cfg: TrainConfig, seed: Optional[int] = None) -> RvaeNet:
    rng = make_rng(cfg.seed if seed is None else seed, "init")
    first, second = cfg.rvae_decoder_hidden
    second = 1 if second is None else second
    params: nn.Params = {}
    params.update(nn.prefixed("renc", nn.init_lstm(rng, 1, cfg.rvae_hidden)))
    params.update(nn.prefixed("latent", nn.init_dense(rng, cfg.rvae_hidden, 2 * cfg.latent_dim)))
    params.update(nn.prefixed("rdec0", nn.init_lstm(rng, cfg.latent_dim, first)))
    params.update(nn.prefixed("rdec1", nn.init_lstm(rng, first, second)))
    return RvaeNet(params, cfg)


def _rvae_encode(params: nn.Params, cfg: TrainConfig, x: np.ndarray, drop: Optional[np.ndarray]):
    hs, enc_cache = nn.lstm_sequence(
        nn.layer(params, "renc"), _columns(x if drop is None else x * drop), cfg.rvae_hidden, cfg.activation
    )
    stats, head_cache = nn.dense_forward(nn.layer(params, "latent"), hs[-1])
    mu, logvar = stats[:, : cfg.latent_dim], stats[:, cfg.latent_dim :]
    return mu, logvar, (enc_cache, head_cache)


def _rvae_decode(params: nn.Params, cfg: TrainConfig, z: np.ndarray, steps: int):
    first, second = cfg.rvae_decoder_hidden
    second = 1 if second is None else second
    hs0, c0 = nn.lstm_sequence(nn.layer(params, "rdec0"), [z] * steps, first, cfg.activation)
    hs1, c1 = nn.lstm_sequence(nn.layer(params, "rdec1"), hs0, second, cfg.activation)
    # output = kolom pertama lapisan terakhir (F=1)
    out = np.concatenate([h[:, :1] for h in hs1], axis=1)
    return out, (c0, c1, second)


def _rvae_loss(
    params: nn.Params,
    cfg: TrainConfig,
    x: np.ndarray,
    eps: np.ndarray,
    drop: Optional[np.ndarray] = None,
) -> tuple[float, float, nn.Params]:
    """Returns (reconstruction, kl, grads); both terms are per-sample means."""
    batch, steps = x.shape
    mu, logvar, (enc_cache, head_cache) = _rvae_encode(params, cfg, x, drop)
    sd = np.exp(0.5 * logvar)
    z = mu + sd * eps
    out, (c0, c1, second) = _rvae_decode(params, cfg, z, steps)
    diff = out - x
    recon = 0.5 * float(np.sum(diff * diff)) / batch
    kl = float(np.sum(gaussian_kl(mu, logvar))) / batch

    grads: nn.Params = {}
    dout = diff / batch
    dhs1 = []
    for t in range(steps):
        dh = np.zeros((batch, second))
        dh[:, :1] = dout[:, t : t + 1]
        dhs1.append(dh)
    dxs1, g1 = nn.lstm_sequence_backward(dhs1, c1)
    nn.accumulate(grads, nn.prefixed("rdec1", g1))
    dxs0, g0 = nn.lstm_sequence_backward(dxs1, c0)
    nn.accumulate(grads, nn.prefixed("rdec0", g0))
    dz = np.sum(dxs0, axis=0)
    dmu = dz + mu / batch
    dlogvar = dz * eps * 0.5 * sd + 0.5 * (np.exp(logvar) - 1.0) / batch
    dh_enc, g_head = nn.dense_backward(np.concatenate([dmu, dlogvar], axis=1), head_cache)
    nn.accumulate(grads, nn.prefixed("latent", g_head))
    _, g_enc = nn.lstm_sequence_backward([None] * (steps - 1) + [dh_enc], enc_cache)
    nn.accumulate(grads, nn.prefixed("renc", g_enc))
    nn.accumulate(grads, nn.l2_grads(params, cfg.l2_coeff))
    return recon, kl, grads


def rvae_loss(net: RvaeNet, x: np.ndarray, eps: np.ndarray) -> tuple[float, float, nn.Params]:
    xb, _ = _as_batch(x)
    return _rvae_loss(net.params, net.config, net.standardize(xb), eps)


def train_rvae(x_all_pre: np.ndarray, cfg: TrainConfig) -> tuple[RvaeNet, TrainingLog]:
    """Self-supervised training on pre-period sequences of every unit.

    Logged ``total`` is exactly ``recon + kl``; the L2 penalty is logged
    separately and only enters the gradient.
    """
    x_all = np.asarray(x_all_pre, dtype=float)
    n_units, t0 = x_all.shape
    if n_units < 2 or t0 < 2:
        raise ValueError(f"RVAE butuh N >= 2 dan T0 >= 2, dapat N={n_units}, T0={t0}")
    n_val = _split_validation(n_units, cfg.validation_fraction)
    n_train = n_units - n_val

    net = init_rvae(cfg)
    net.x_mean, net.x_scale = _scaler(x_all[:n_train])
    xs = net.standardize(x_all)
    log = TrainingLog()
    if cfg.epochs == 0:
        return net, log

    opt = nn.Optimizer(cfg.optimizer, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    shuffle_rng = make_rng(cfg.seed, "shuffle")
    drop_rng = make_rng(cfg.seed, "dropout")
    latent_rng = make_rng(cfg.seed, "latent")
    batch = min(cfg.batch_size or 32, n_train)
    params = net.params
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n_train)
        recon_sum = kl_sum = 0.0
        for start in range(0, n_train, batch):
            idx = order[start : start + batch]
            drop = nn.dropout_mask(drop_rng, (len(idx), t0), cfg.input_dropout_rate)
            eps = latent_rng.standard_normal((len(idx), cfg.latent_dim))
            recon, kl, grads = _rvae_loss(params, cfg, xs[idx], eps, drop)
            if not np.isfinite(recon + kl):
                raise TrainingDiverged(epoch, recon + kl)
            params = opt.step(params, grads)
            recon_sum += recon * len(idx)
            kl_sum += kl * len(idx)
        recon_ep, kl_ep = recon_sum / n_train, kl_sum / n_train
        mu, _, _ = _rvae_encode(params, cfg, xs[n_train:], None)
        val_out, _ = _rvae_decode(params, cfg, mu, t0)
        val_recon = 0.5 * float(np.sum((val_out - xs[n_train:]) ** 2)) / n_val
        log.append(
            epoch=epoch,
            recon=recon_ep,
            kl=kl_ep,
            total=recon_ep + kl_ep,
            l2=nn.l2_penalty(params, cfg.l2_coeff),
            val_recon=val_recon,
        )
        LOG.debug("rvae epoch %d: recon=%.6g kl=%.6g val=%.6g", epoch, recon_ep, kl_ep, val_recon)
    net.params = params
    LOG.info("Trained RVAE for %d epochs (final total=%.4g)", cfg.epochs, log.final["total"])
    return net, log


def rvae_predict(
    net: RvaeNet,
    x_test_pre: np.ndarray,
    horizon: int,
    n_samples: int,
    seed: int,
) -> np.ndarray:
    """Mean over latent draws of the last `horizon` steps of a T₀+horizon decode."""
    x, _ = _as_batch(x_test_pre)
    n_units, t0 = x.shape
    if horizon <= 0:
        return np.zeros((n_units, 0))
    if n_samples < 1:
        raise ValueError("n_samples harus >= 1")
    cfg = net.config
    mu, logvar, _ = _rvae_encode(net.params, cfg, net.standardize(x), None)
    eps = make_rng(seed, "latent").standard_normal((n_samples, n_units, cfg.latent_dim))
    z = (mu[None] + np.exp(0.5 * logvar)[None] * eps).reshape(n_samples * n_units, cfg.latent_dim)
    out, _ = _rvae_decode(net.params, cfg, z, t0 + horizon)
    draws = out[:, t0:].reshape(n_samples, n_units, horizon)
    return net.restore(draws.mean(axis=0))


# ---------------------------------------------------------------- checkpoints

Net = Union[EncoderDecoderNet, RvaeNet]


def save_checkpoint(net: Net, path: Union[str, Path]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": net.kind,
        "config": net.config.model_dump(mode="json"),
        "x_mean": net.x_mean,
        "x_scale": net.x_scale,
        "shapes": {k: list(v.shape) for k, v in net.params.items()},
    }
    arrays = {k: np.ascontiguousarray(v, dtype=np.float64) for k, v in net.params.items()}
    with p.open("wb") as fh:
        np.savez(fh, __header__=np.array(json.dumps(header, sort_keys=True)), **arrays)
    LOG.info("Saved %s checkpoint -> %s", net.kind, p)
    return p


def load_checkpoint(path: Union[str, Path]) -> Net:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"checkpoint tidak ditemukan: {p}")
    with np.load(p, allow_pickle=False) as data:
        header = json.loads(str(data["__header__"]))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"bukan checkpoint panel-cf: {p}")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"versi checkpoint {header.get('version')} tidak didukung")
        params = {k: np.array(data[k]) for k in header["shapes"]}
    for k, shape in header["shapes"].items():
        if list(params[k].shape) != shape:
            raise ValueError(f"bentuk {k} {params[k].shape} != header {shape}")
    cls = EncoderDecoderNet if header["kind"] == "ed" else RvaeNet
    cfg = TrainConfig.model_validate(header["config"])
    return cls(params, cfg, float(header["x_mean"]), float(header["x_scale"]))


# ---------------------------------------------------------------- estimators


@dataclass
class EncoderDecoderEstimator(BaseEstimator):
    """Training seed is the `seed` passed to fit_predict."""

    name: ClassVar[str] = "ed"
    config: TrainConfig = field(default_factory=TrainConfig)

    @classmethod
    def from_params(cls, params: Mapping[str, Any]) -> "EncoderDecoderEstimator":
        return cls(TrainConfig(**dict(params)))

    def placebo_mode(self) -> "EncoderDecoderEstimator":
        return replace(
            self, config=self.config.model_copy(update={"epochs": PLACEBO_EPOCHS, "weighted": False})
        )

    def _predict(self, panel, mask, view, *, seed, scores):
        cfg = self.config.model_copy(update={"seed": int(seed)})
        e_train = None
        if scores is not None and cfg.weighted:
            e_train = scores.train_weights(mask.control_index, mask.t0)
        net, log = train_encoder_decoder(view, e_train, cfg)
        y_hat = forward_autoregressive(net, view.x_test, view.t_post)
        return np.atleast_2d(y_hat), {"epochs": cfg.epochs, "weighted": e_train is not None, **log.final}


@dataclass
class RvaeEstimator(BaseEstimator):
    name: ClassVar[str] = "rvae"
    config: TrainConfig = field(
        default_factory=lambda: TrainConfig(epochs=5000, optimizer="sgd")
    )

    @classmethod
    def from_params(cls, params: Mapping[str, Any]) -> "RvaeEstimator":
        return cls(TrainConfig(**{"epochs": 5000, "optimizer": "sgd", **dict(params)}))

    def placebo_mode(self) -> "RvaeEstimator":
        return replace(self, config=self.config.model_copy(update={"epochs": PLACEBO_EPOCHS}))

    def _predict(self, panel, mask, view, *, seed, scores):
        cfg = self.config.model_copy(update={"seed": int(seed)})
        net, log = train_rvae(panel.values[:, : mask.t0], cfg)
        y_hat = rvae_predict(net, view.x_test, view.t_post, cfg.n_samples, seed)
        return y_hat, {"epochs": cfg.epochs, "n_samples": cfg.n_samples, **log.final}
