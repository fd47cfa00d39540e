"""Small recurrent-network toolkit on plain numpy.

Parameters live in flat dicts keyed ``"<layer>.<name>"`` (``"enc0.Wx"``).
Every layer has a ``*_forward`` returning a cache and a ``*_backward``
consuming it. Arrays are batch-major: ``x`` is (B, D) and ``h`` is (B, H).

LSTM gate order in the packed matrices is i, f, g, o. GRU order is z, r, n,
with ``h = (1 − z)·h_prev + z·n``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Mapping, MutableMapping, Optional

import numpy as np
from scipy.special import expit

LOG = logging.getLogger(__name__)

Params = dict[str, np.ndarray]
Activation = Literal["linear", "tanh"]

FORGET_BIAS = 1.0


def _act(name: str, v: np.ndarray) -> np.ndarray:
    return v if name == "linear" else np.tanh(v)


def _act_grad(name: str, v: np.ndarray) -> np.ndarray:
    if name == "linear":
        return np.ones_like(v)
    t = np.tanh(v)
    return 1.0 - t * t


# ---------------------------------------------------------------- init


def xavier_init(
    fan_in: int,
    fan_out: int,
    seed: Optional[int] = None,
    *,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Uniform on ±√(6 / (fan_in + fan_out))."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"dimensi harus positif, dapat ({fan_in}, {fan_out})")
    gen = rng if rng is not None else np.random.default_rng(seed)
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return gen.uniform(-bound, bound, size=(fan_in, fan_out))


def init_dense(rng: np.random.Generator, n_in: int, n_out: int) -> Params:
    return {"W": xavier_init(n_in, n_out, rng=rng), "b": np.zeros(n_out)}


def init_lstm(rng: np.random.Generator, n_in: int, hidden: int) -> Params:
    b = np.zeros(4 * hidden)
    b[hidden : 2 * hidden] = FORGET_BIAS
    return {
        "Wx": xavier_init(n_in, 4 * hidden, rng=rng),
        "Wh": xavier_init(hidden, 4 * hidden, rng=rng),
        "b": b,
    }


def init_gru(rng: np.random.Generator, n_in: int, hidden: int) -> Params:
    return {
        "Wx": xavier_init(n_in, 3 * hidden, rng=rng),
        "Wh": xavier_init(hidden, 3 * hidden, rng=rng),
        "b": np.zeros(3 * hidden),
    }


def layer(params: Mapping[str, np.ndarray], prefix: str) -> Params:
    """View of one layer's entries with the prefix stripped."""
    head = prefix + "."
    return {k[len(head) :]: v for k, v in params.items() if k.startswith(head)}


def prefixed(prefix: str, grads: Mapping[str, np.ndarray]) -> Params:
    return {f"{prefix}.{k}": v for k, v in grads.items()}


def accumulate(total: MutableMapping[str, np.ndarray], part: Mapping[str, np.ndarray]) -> None:
    for k, v in part.items():
        if k in total:
            total[k] = total[k] + v
        else:
            total[k] = v.copy()


# ---------------------------------------------------------------- dense


def dense_forward(p: Mapping[str, np.ndarray], x: np.ndarray) -> tuple[np.ndarray, tuple]:
    return x @ p["W"] + p["b"], (p, x)


def dense_backward(dy: np.ndarray, cache: tuple) -> tuple[np.ndarray, Params]:
    p, x = cache
    return dy @ p["W"].T, {"W": x.T @ dy, "b": dy.sum(axis=0)}


# ---------------------------------------------------------------- LSTM


def lstm_forward(
    p: Mapping[str, np.ndarray],
    h_prev: np.ndarray,
    c_prev: np.ndarray,
    x: np.ndarray,
    activation: Activation = "linear",
) -> tuple[np.ndarray, np.ndarray, tuple]:
    hidden = h_prev.shape[-1]
    a = x @ p["Wx"] + h_prev @ p["Wh"] + p["b"]
    i = expit(a[..., :hidden])
    f = expit(a[..., hidden : 2 * hidden])
    g = np.tanh(a[..., 2 * hidden : 3 * hidden])
    o = expit(a[..., 3 * hidden :])
    c = f * c_prev + i * g
    h = o * _act(activation, c)
    return h, c, (p, x, h_prev, c_prev, i, f, g, o, c, activation)


def lstm_backward(
    dh: np.ndarray, dc_next: np.ndarray, cache: tuple
) -> tuple[np.ndarray, np.ndarray, np.ndarray, Params]:
    """Returns (dx, dh_prev, dc_prev, grads)."""
    p, x, h_prev, c_prev, i, f, g, o, c, activation = cache
    dc = dc_next + dh * o * _act_grad(activation, c)
    do = dh * _act(activation, c)
    da = np.concatenate(
        [
            dc * g * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dc * i * (1.0 - g * g),
            do * o * (1.0 - o),
        ],
        axis=-1,
    )
    grads = {"Wx": x.T @ da, "Wh": h_prev.T @ da, "b": da.sum(axis=0)}
    return da @ p["Wx"].T, da @ p["Wh"].T, dc * f, grads


def lstm_step(
    p: Mapping[str, np.ndarray],
    h_prev: np.ndarray,
    c_prev: np.ndarray,
    x: np.ndarray,
    activation: Activation = "linear",
) -> tuple[np.ndarray, np.ndarray]:
    h, c, _ = lstm_forward(p, h_prev, c_prev, x, activation)
    return h, c


# ---------------------------------------------------------------- GRU


def gru_forward(
    p: Mapping[str, np.ndarray],
    h_prev: np.ndarray,
    x: np.ndarray,
    activation: Activation = "linear",
) -> tuple[np.ndarray, tuple]:
    hidden = h_prev.shape[-1]
    wx, wh, b = p["Wx"], p["Wh"], p["b"]
    ax = x @ wx + b
    ah = h_prev @ wh[:, : 2 * hidden]
    z = expit(ax[..., :hidden] + ah[..., :hidden])
    r = expit(ax[..., hidden : 2 * hidden] + ah[..., hidden:])
    rh = r * h_prev
    an = ax[..., 2 * hidden :] + rh @ wh[:, 2 * hidden :]
    n = _act(activation, an)
    h = (1.0 - z) * h_prev + z * n
    return h, (p, x, h_prev, z, r, rh, an, n, activation)


def gru_backward(dh: np.ndarray, cache: tuple) -> tuple[np.ndarray, np.ndarray, Params]:
    """Returns (dx, dh_prev, grads)."""
    p, x, h_prev, z, r, rh, an, n, activation = cache
    hidden = h_prev.shape[-1]
    wh = p["Wh"]
    dz = dh * (n - h_prev)
    dan = dh * z * _act_grad(activation, an)
    drh = dan @ wh[:, 2 * hidden :].T
    dr = drh * h_prev
    daz = dz * z * (1.0 - z)
    dar = dr * r * (1.0 - r)
    dzr = np.concatenate([daz, dar], axis=-1)
    dh_prev = dh * (1.0 - z) + drh * r + dzr @ wh[:, : 2 * hidden].T
    da = np.concatenate([daz, dar, dan], axis=-1)
    grads = {
        "Wx": x.T @ da,
        "Wh": np.concatenate([h_prev.T @ dzr, rh.T @ dan], axis=1),
        "b": da.sum(axis=0),
    }
    return da @ p["Wx"].T, dh_prev, grads


def gru_step(
    p: Mapping[str, np.ndarray],
    h_prev: np.ndarray,
    x: np.ndarray,
    activation: Activation = "linear",
) -> np.ndarray:
    h, _ = gru_forward(p, h_prev, x, activation)
    return h


# ---------------------------------------------------------------- sequences


def lstm_sequence(
    p: Mapping[str, np.ndarray],
    xs: list[np.ndarray],
    hidden: int,
    activation: Activation = "linear",
) -> tuple[list[np.ndarray], list[tuple]]:
    """Run an LSTM over a list of (B, D) inputs from a zero state."""
    batch = xs[0].shape[0]
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    hs, caches = [], []
    for x in xs:
        h, c, cache = lstm_forward(p, h, c, x, activation)
        hs.append(h)
        caches.append(cache)
    return hs, caches


def lstm_sequence_backward(
    dhs: list[Optional[np.ndarray]], caches: list[tuple]
) -> tuple[list[np.ndarray], Params]:
    """Backprop through time; ``dhs[t]`` is the loss gradient w.r.t. h_t (or None)."""
    grads: Params = {}
    dxs: list[np.ndarray] = [None] * len(caches)  # type: ignore[list-item]
    h_shape = caches[-1][2].shape
    dh_next = np.zeros(h_shape)
    dc_next = np.zeros(h_shape)
    for t in range(len(caches) - 1, -1, -1):
        dh = dh_next if dhs[t] is None else dh_next + dhs[t]
        dx, dh_next, dc_next, g = lstm_backward(dh, dc_next, caches[t])
        dxs[t] = dx
        accumulate(grads, g)
    return dxs, grads


# ---------------------------------------------------------------- regularization


def dropout_mask(rng: np.random.Generator, shape: tuple[int, ...], rate: float) -> np.ndarray:
    """Inverted dropout: kept entries are scaled by 1/(1 − rate)."""
    if rate <= 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def is_weight(key: str) -> bool:
    return key.rsplit(".", 1)[-1].startswith("W")


def l2_penalty(params: Mapping[str, np.ndarray], coeff: float) -> float:
    """c·Σ‖W‖² over weight matrices; biases are not penalized."""
    if coeff == 0.0:
        return 0.0
    return coeff * float(sum(np.sum(v * v) for k, v in params.items() if is_weight(k)))


def l2_grads(params: Mapping[str, np.ndarray], coeff: float) -> Params:
    return {k: 2.0 * coeff * v for k, v in params.items() if is_weight(k)}


# ---------------------------------------------------------------- optimizers


@dataclass
class AdamState:
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[Params, AdamState]:
    t = state.t + 1
    new_params: Params = {}
    m_new: Params = {}
    v_new: Params = {}
    for k, w in params.items():
        g = grads.get(k)
        if g is None:
            new_params[k] = w
            continue
        m = beta1 * state.m.get(k, 0.0) + (1.0 - beta1) * g
        v = beta2 * state.v.get(k, 0.0) + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new_params[k] = w - lr * m_hat / (np.sqrt(v_hat) + eps)
        m_new[k], v_new[k] = m, v
    return new_params, AdamState({**state.m, **m_new}, {**state.v, **v_new}, t)


def sgd_step(
    params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], lr: float
) -> Params:
    return {k: (w - lr * grads[k]) if k in grads else w for k, w in params.items()}


class Optimizer:
    """Stateful wrapper so training loops don't care which rule is in use."""

    def __init__(
        self,
        kind: str,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        if kind not in ("adam", "sgd"):
            raise ValueError(f"optimizer tidak dikenal: {kind!r}")
        self.kind = kind
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state = AdamState()

    def step(self, params: Params, grads: Mapping[str, np.ndarray]) -> Params:
        if self.kind == "sgd":
            return sgd_step(params, grads, self.lr)
        params, self.state = adam_step(
            params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps
        )
        return params
