"""Numerical kernel: LSTM cell, self-attention, dense head, dropout,
mean-squared-error loss, analytic gradients (backpropagation through
time, including through the attention block and the decoder's
autoregressive feedback), Adam, and a central-finite-difference checker.

Everything is double precision. Forward passes are deterministic given
parameters; dropout is the only stochastic element and takes an explicit
generator. Masks are sampled once per sequence (recurrent and input
connections alike) and recorded, so gradients are exact for the sampled
graph.

Gate order in all fused arrays: forget, input, candidate, output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, DimensionError, NumericError

GATE_NAMES = ("forget", "input", "candidate", "output")


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-subtracted softmax; rows sum to 1 for any finite input."""
    v = np.asarray(v, dtype=float)
    if not np.isfinite(v).all():
        raise NumericError("softmax input contains non-finite values")
    shifted = v - v.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _act(name: str, pre: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(pre, 0.0)
    if name == "sigmoid":
        return sigmoid(pre)
    if name == "tanh":
        return np.tanh(pre)
    if name == "identity":
        return pre
    raise ConfigError(f"unknown activation {name!r}")


def _act_grad(name: str, pre: np.ndarray, out: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (pre > 0).astype(float)
    if name == "sigmoid":
        return out * (1.0 - out)
    if name == "tanh":
        return 1.0 - out * out
    if name == "identity":
        return np.ones_like(pre)
    raise ConfigError(f"unknown activation {name!r}")


@dataclass
class LstmParams:
    """Per-gate weights stored fused along the last axis (4 blocks).

    w_x: (input_size, 4*hidden), w_h: (hidden, 4*hidden), b: (4*hidden,).
    """

    w_x: np.ndarray
    w_h: np.ndarray
    b: np.ndarray

    @property
    def input_size(self) -> int:
        return self.w_x.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.w_h.shape[0]

    def gate(self, which: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Views of (w_x, w_h, b) for one named gate."""
        g = GATE_NAMES.index(which)
        d = self.hidden_size
        sl = slice(g * d, (g + 1) * d)
        return self.w_x[:, sl], self.w_h[:, sl], self.b[sl]

    def check(self) -> None:
        d = self.hidden_size
        if self.w_x.shape[1] != 4 * d or self.b.shape != (4 * d,):
            raise DimensionError("inconsistent LSTM parameter shapes")


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape: tuple) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_lstm(input_size: int, hidden_size: int, rng: np.random.Generator) -> LstmParams:
    """Glorot-uniform weights per gate; forget-gate bias 1, others 0."""
    w_x = np.empty((input_size, 4 * hidden_size))
    w_h = np.empty((hidden_size, 4 * hidden_size))
    for g in range(4):
        sl = slice(g * hidden_size, (g + 1) * hidden_size)
        w_x[:, sl] = glorot_uniform(rng, input_size, hidden_size, (input_size, hidden_size))
        w_h[:, sl] = glorot_uniform(rng, hidden_size, hidden_size, (hidden_size, hidden_size))
    b = np.zeros(4 * hidden_size)
    b[: hidden_size] = 1.0
    return LstmParams(w_x, w_h, b)


def _step(
    p: LstmParams, x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray
) -> tuple[np.ndarray, np.ndarray, tuple]:
    d = p.hidden_size
    z = x @ p.w_x + h_prev @ p.w_h + p.b
    f = sigmoid(z[..., :d])
    i = sigmoid(z[..., d : 2 * d])
    s = np.tanh(z[..., 2 * d : 3 * d])
    o = sigmoid(z[..., 3 * d :])
    c = f * c_prev + i * s
    tc = np.tanh(c)
    h = tc * o
    return h, c, (x, h_prev, c_prev, f, i, s, o, tc)


def _step_backward(
    p: LstmParams,
    cache: tuple,
    dh: np.ndarray,
    dc_in: np.ndarray,
    grads: dict[str, np.ndarray],
    prefix: str,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One-step BPTT. Returns (dx, dh_prev, dc_prev); accumulates into grads."""
    x, h_prev, c_prev, f, i, s, o, tc = cache
    dc = dc_in + dh * o * (1.0 - tc * tc)
    do = dh * tc
    dzf = (dc * c_prev) * f * (1.0 - f)
    dzi = (dc * s) * i * (1.0 - i)
    dzs = (dc * i) * (1.0 - s * s)
    dzo = do * o * (1.0 - o)
    dz = np.concatenate([dzf, dzi, dzs, dzo], axis=-1)
    x2 = x if x.ndim == 2 else x[None, :]
    h2 = h_prev if h_prev.ndim == 2 else h_prev[None, :]
    dz2 = dz if dz.ndim == 2 else dz[None, :]
    grads[prefix + ".w_x"] += x2.T @ dz2
    grads[prefix + ".w_h"] += h2.T @ dz2
    grads[prefix + ".b"] += dz2.sum(axis=0)
    dx = dz @ p.w_x.T
    dh_prev = dz @ p.w_h.T
    dc_prev = dc * f
    return dx, dh_prev, dc_prev


def lstm_step(
    p: LstmParams, x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Single gated update; accepts vectors or (batch, dim) arrays."""
    x = np.asarray(x, dtype=float)
    h_prev = np.asarray(h_prev, dtype=float)
    c_prev = np.asarray(c_prev, dtype=float)
    if x.shape[-1] != p.input_size or h_prev.shape[-1] != p.hidden_size:
        raise DimensionError(
            f"lstm_step: got input {x.shape}, hidden {h_prev.shape} for "
            f"sizes ({p.input_size}, {p.hidden_size})"
        )
    if h_prev.shape != c_prev.shape:
        raise DimensionError("h_prev and c_prev shapes differ")
    h, c, _ = _step(p, x, h_prev, c_prev)
    return h, c


def lstm_forward(
    p: LstmParams, xs: np.ndarray
) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray]]:
    """Run the cell over a (T, input_size) sequence from a zero state.

    Returns the (T, hidden) stack of hidden states and the final (h, c).
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2:
        raise DimensionError("lstm_forward expects a (T, input_size) array")
    if xs.shape[0] == 0:
        raise DimensionError("empty sequence")
    d = p.hidden_size
    h = np.zeros(d)
    c = np.zeros(d)
    rows = []
    for t in range(xs.shape[0]):
        h, c = lstm_step(p, xs[t], h, c)
        rows.append(h)
    return np.stack(rows), (h, c)


def self_attention(h_seq: np.ndarray) -> np.ndarray:
    """softmax(H Hᵀ / sqrt(d)) H over a (T, d) hidden-state sequence."""
    h_seq = np.asarray(h_seq, dtype=float)
    if h_seq.ndim != 2:
        raise DimensionError("self_attention expects a (T, d) matrix")
    if not np.isfinite(h_seq).all():
        raise NumericError("self_attention input contains non-finite values")
    scores = h_seq @ h_seq.T / math.sqrt(h_seq.shape[1])
    return softmax(scores, axis=-1) @ h_seq


def _self_attention_batch(h_seq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(B, T, d) variant returning (output, attention weights)."""
    scores = h_seq @ h_seq.transpose(0, 2, 1) / math.sqrt(h_seq.shape[2])
    weights = softmax(scores, axis=-1)
    return weights @ h_seq, weights


def _self_attention_backward(
    h_seq: np.ndarray, weights: np.ndarray, d_out: np.ndarray
) -> np.ndarray:
    """Gradient w.r.t. H of softmax(H Hᵀ/√d) H, batched over axis 0."""
    scale = 1.0 / math.sqrt(h_seq.shape[2])
    dh = weights.transpose(0, 2, 1) @ d_out
    dw = d_out @ h_seq.transpose(0, 2, 1)
    inner = (dw * weights).sum(axis=-1, keepdims=True)
    ds = weights * (dw - inner)
    dh += (ds + ds.transpose(0, 2, 1)) @ h_seq * scale
    return dh


@dataclass
class DenseParams:
    """Fully-connected layer: out = activation(x @ weight + bias)."""

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "identity"


def dense_forward(p: DenseParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != p.weight.shape[0]:
        raise DimensionError(
            f"dense_forward: input width {x.shape[-1]} != weight rows {p.weight.shape[0]}"
        )
    return _act(p.activation, x @ p.weight + p.bias)


def dropout_mask(
    shape: tuple, rate: float, rng: np.random.Generator
) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability rate, else 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError("dropout rate must be in [0, 1)")
    if rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep.astype(float) / (1.0 - rate)


def dropout(
    x: np.ndarray, rate: float, training: bool, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Zero units with probability ``rate`` and rescale; identity at inference."""
    x = np.asarray(x, dtype=float)
    if not 0.0 <= rate < 1.0:
        raise ConfigError("dropout rate must be in [0, 1)")
    if not training or rate == 0.0:
        return x.copy()
    if rng is None:
        raise ConfigError("training-mode dropout needs a random generator")
    return x * dropout_mask(x.shape, rate, rng)


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise DimensionError(f"mse: shapes {pred.shape} and {target.shape} differ")
    return float(np.mean((pred - target) ** 2))


@dataclass(frozen=True)
class DropoutRates:
    """The three dropout sites: LSTM inputs, hidden-to-hidden, post-attention."""

    lstm: float = 0.0
    recurrent: float = 0.0
    layer: float = 0.0

    def any(self) -> bool:
        return self.lstm > 0 or self.recurrent > 0 or self.layer > 0


def _masks(
    shape_b: int,
    n_features: int,
    enc_hidden: int,
    dec_input: int,
    seq_len: int,
    rates: DropoutRates,
    training: bool,
    rng: np.random.Generator | None,
) -> dict[str, np.ndarray]:
    if not training or not rates.any():
        return {
            "enc_in": np.ones((shape_b, n_features)),
            "enc_rec": np.ones((shape_b, enc_hidden)),
            "dec_in": np.ones((shape_b, dec_input)),
            "dec_rec": np.ones((shape_b, enc_hidden)),
            "layer": np.ones((shape_b, seq_len, enc_hidden)),
        }
    if rng is None:
        raise ConfigError("training with dropout needs a random generator")
    return {
        "enc_in": dropout_mask((shape_b, n_features), rates.lstm, rng),
        "enc_rec": dropout_mask((shape_b, enc_hidden), rates.recurrent, rng),
        "dec_in": dropout_mask((shape_b, dec_input), rates.lstm, rng),
        "dec_rec": dropout_mask((shape_b, enc_hidden), rates.recurrent, rng),
        "layer": dropout_mask((shape_b, seq_len, enc_hidden), rates.layer, rng),
    }


def attn_ed_forward(
    enc: LstmParams,
    dec: LstmParams,
    head: DenseParams,
    x: np.ndarray,
    horizon: int,
    *,
    usage_index: int = 0,
    rates: DropoutRates = DropoutRates(),
    training: bool = False,
    rng: np.random.Generator | None = None,
    want_cache: bool = False,
) -> tuple[np.ndarray, dict | None]:
    """Forward pass of the attention encoder-decoder over (B, L, F) input.

    The encoder consumes the window; its hidden-state sequence goes
    through parameter-free self-attention, and the mean-pooled context is
    concatenated with the previous scalar prediction (seeded with the
    window's last usage value) as the decoder input at every step. Each
    decoder state maps through the dense head to one scalar.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 3:
        raise DimensionError("attn_ed_forward expects a (B, L, F) array")
    b, seq_len, n_feat = x.shape
    if n_feat != enc.input_size:
        raise DimensionError(f"window has {n_feat} features, encoder expects {enc.input_size}")
    d = enc.hidden_size
    if dec.input_size != d + 1 or dec.hidden_size != d:
        raise DimensionError("decoder shapes must be (hidden+1) -> hidden")

    masks = _masks(b, n_feat, d, d + 1, seq_len, rates, training, rng)

    h = np.zeros((b, d))
    c = np.zeros((b, d))
    enc_caches = []
    h_rows = np.empty((b, seq_len, d))
    for t in range(seq_len):
        x_t = x[:, t, :] * masks["enc_in"]
        h, c, cache = _step(enc, x_t, h * masks["enc_rec"], c)
        h_rows[:, t, :] = h
        if want_cache:
            enc_caches.append(cache)

    att_out, att_weights = _self_attention_batch(h_rows)
    att_dropped = att_out * masks["layer"]
    ctx = att_dropped.mean(axis=1)

    y_prev = x[:, seq_len - 1, usage_index]
    preds = np.empty((b, horizon))
    dec_caches = []
    head_pres = []
    h_dec, c_dec = h, c  # decoder starts from the encoder's final state
    for t in range(horizon):
        u = np.concatenate([ctx, y_prev[:, None]], axis=1) * masks["dec_in"]
        h_dec, c_dec, cache = _step(dec, u, h_dec * masks["dec_rec"], c_dec)
        pre = h_dec @ head.weight[:, 0] + head.bias[0]
        y_prev = _act(head.activation, pre)
        preds[:, t] = y_prev
        if want_cache:
            dec_caches.append(cache)
            head_pres.append(pre)

    if not want_cache:
        return preds, None
    cache_all = {
        "x": x,
        "masks": masks,
        "enc_caches": enc_caches,
        "h_rows": h_rows,
        "att_weights": att_weights,
        "att_out": att_out,
        "dec_caches": dec_caches,
        "head_pres": head_pres,
        "preds": preds,
    }
    return preds, cache_all


def attn_ed_param_template(
    enc: LstmParams, dec: LstmParams, head: DenseParams
) -> dict[str, np.ndarray]:
    return {
        "enc.w_x": enc.w_x,
        "enc.w_h": enc.w_h,
        "enc.b": enc.b,
        "dec.w_x": dec.w_x,
        "dec.w_h": dec.w_h,
        "dec.b": dec.b,
        "head.w": head.weight,
        "head.b": head.bias,
    }


def attn_ed_loss_and_grads(
    enc: LstmParams,
    dec: LstmParams,
    head: DenseParams,
    x: np.ndarray,
    y: np.ndarray,
    *,
    usage_index: int = 0,
    rates: DropoutRates = DropoutRates(),
    training: bool = True,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean-squared-error loss and analytic gradients for every parameter.

    Backpropagates through the decoder recurrence (including the
    autoregressive feedback of each prediction into the next decoder
    input), the mean-pooled attention context, the attention block
    itself, and the encoder recurrence.
    """
    y = np.asarray(y, dtype=float)
    preds, cache = attn_ed_forward(
        enc,
        dec,
        head,
        x,
        y.shape[1],
        usage_index=usage_index,
        rates=rates,
        training=training,
        rng=rng,
        want_cache=True,
    )
    assert cache is not None
    if not np.isfinite(preds).all():
        raise NumericError("non-finite predictions in forward pass")
    b, horizon = y.shape
    loss = mse(preds, y)
    dpred = 2.0 * (preds - y) / preds.size

    masks = cache["masks"]
    grads = {name: np.zeros_like(arr) for name, arr in attn_ed_param_template(enc, dec, head).items()}

    d = enc.hidden_size
    dctx = np.zeros((b, d))
    dh = np.zeros((b, d))
    dc = np.zeros((b, d))
    dy_next = np.zeros(b)  # gradient flowing into y_t via the next step's input
    for t in range(horizon - 1, -1, -1):
        dy = dpred[:, t] + dy_next
        pre = cache["head_pres"][t]
        out = cache["preds"][:, t]
        dz_head = dy * _act_grad(head.activation, pre, out)
        # h_t = tanh(c_t) * o_t, recovered from the step's own cache
        _, _, _, _, _, _, o_t, tc_t = cache["dec_caches"][t]
        h_t = tc_t * o_t
        grads["head.w"][:, 0] += h_t.T @ dz_head
        grads["head.b"][0] += dz_head.sum()
        dh = dh + dz_head[:, None] * head.weight[:, 0][None, :]

        du, dh_prev, dc_prev = _step_backward(dec, cache["dec_caches"][t], dh, dc, grads, "dec")
        du = du * masks["dec_in"]
        dctx += du[:, :d]
        dy_next = du[:, d]
        dh = dh_prev * masks["dec_rec"]
        dc = dc_prev

    # the seed y_0 comes from the input window, not from parameters
    d_att_dropped = np.repeat(dctx[:, None, :] / cache["h_rows"].shape[1], cache["h_rows"].shape[1], axis=1)
    d_att_out = d_att_dropped * masks["layer"]
    d_h_rows = _self_attention_backward(cache["h_rows"], cache["att_weights"], d_att_out)

    seq_len = cache["h_rows"].shape[1]
    dh_enc = dh  # decoder initial h
    dc_enc = dc  # decoder initial c
    for t in range(seq_len - 1, -1, -1):
        dh_total = dh_enc + d_h_rows[:, t, :]
        _, dh_prev, dc_prev = _step_backward(enc, cache["enc_caches"][t], dh_total, dc_enc, grads, "enc")
        dh_enc = dh_prev * masks["enc_rec"]
        dc_enc = dc_prev

    return loss, grads


def vanilla_forward(
    lstm: LstmParams,
    head: DenseParams,
    x: np.ndarray,
    *,
    want_cache: bool = False,
) -> tuple[np.ndarray, dict | None]:
    """Single LSTM over the window; dense head on the final hidden state."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 3:
        raise DimensionError("vanilla_forward expects a (B, L, F) array")
    b, seq_len, n_feat = x.shape
    if n_feat != lstm.input_size:
        raise DimensionError(f"window has {n_feat} features, LSTM expects {lstm.input_size}")
    d = lstm.hidden_size
    h = np.zeros((b, d))
    c = np.zeros((b, d))
    caches = []
    for t in range(seq_len):
        h, c, cache = _step(lstm, x[:, t, :], h, c)
        if want_cache:
            caches.append(cache)
    pre = h @ head.weight + head.bias
    preds = _act(head.activation, pre)
    if not want_cache:
        return preds, None
    return preds, {"caches": caches, "h_final": h, "pre": pre, "preds": preds}


def vanilla_param_template(lstm: LstmParams, head: DenseParams) -> dict[str, np.ndarray]:
    return {
        "lstm.w_x": lstm.w_x,
        "lstm.w_h": lstm.w_h,
        "lstm.b": lstm.b,
        "head.w": head.weight,
        "head.b": head.bias,
    }


def vanilla_loss_and_grads(
    lstm: LstmParams, head: DenseParams, x: np.ndarray, y: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    y = np.asarray(y, dtype=float)
    preds, cache = vanilla_forward(lstm, head, x, want_cache=True)
    assert cache is not None
    if not np.isfinite(preds).all():
        raise NumericError("non-finite predictions in forward pass")
    loss = mse(preds, y)
    dpred = 2.0 * (preds - y) / preds.size
    dz = dpred * _act_grad(head.activation, cache["pre"], cache["preds"])
    grads = {name: np.zeros_like(arr) for name, arr in vanilla_param_template(lstm, head).items()}
    grads["head.w"] += cache["h_final"].T @ dz
    grads["head.b"] += dz.sum(axis=0)
    dh = dz @ head.weight.T
    dc = np.zeros_like(dh)
    for t in range(len(cache["caches"]) - 1, -1, -1):
        _, dh, dc = _step_backward(lstm, cache["caches"][t], dh, dc, grads, "lstm")
    return loss, grads


@dataclass
class AdamState:
    """Bias-corrected first/second-moment optimizer state."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_adam(params: dict[str, np.ndarray], lr: float, **kwargs) -> AdamState:
    state = AdamState(lr=lr, **kwargs)
    state.m = {k: np.zeros_like(p) for k, p in params.items()}
    state.v = {k: np.zeros_like(p) for k, p in params.items()}
    return state


def adam_update(
    params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState
) -> None:
    """One in-place Adam step over every parameter array."""
    state.step += 1
    t = state.step
    for k, p in params.items():
        g = grads[k]
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g
        m_hat = state.m[k] / (1.0 - state.beta1**t)
        v_hat = state.v[k] / (1.0 - state.beta2**t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm and total > 0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


@dataclass(slots=True)
class FiniteDiffResult:
    name: str
    max_rel_err: float
    max_abs_err: float
    passed: bool


def finite_diff_check(
    loss_fn: Callable[[], float],
    params: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    *,
    step: float = 1e-5,
    tol: float = 1e-4,
) -> dict[str, FiniteDiffResult]:
    """Compare analytic gradients against central finite differences.

    ``loss_fn`` must recompute the loss from the current (mutated)
    parameter values; every element of every array is perturbed in place
    and restored. Relative error uses max(|a|, |fd|, 1e-6) in the
    denominator so near-zero gradients do not blow up the ratio.
    """
    report: dict[str, FiniteDiffResult] = {}
    for name, p in params.items():
        a = analytic[name]
        max_rel = 0.0
        max_abs = 0.0
        flat = p.reshape(-1)
        a_flat = a.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            loss_plus = loss_fn()
            flat[idx] = orig - step
            loss_minus = loss_fn()
            flat[idx] = orig
            fd = (loss_plus - loss_minus) / (2.0 * step)
            abs_err = abs(a_flat[idx] - fd)
            rel_err = abs_err / max(abs(a_flat[idx]), abs(fd), 1e-6)
            max_rel = max(max_rel, rel_err)
            max_abs = max(max_abs, abs_err)
        report[name] = FiniteDiffResult(name, max_rel, max_abs, max_rel < tol)
    return report
