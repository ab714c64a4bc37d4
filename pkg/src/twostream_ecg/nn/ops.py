"""Differentiable layers used by the two streams.

Every op accepts an optional leading batch axis: conv/pool take [C, L] or
[B, C, L]; dense ops take [D] or [B, D].
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ParameterError, ShapeError
from .tensor import Tensor, as_tensor, concat, make

POOL_SIZE = 3
POOL_STRIDE = 2


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Valid, stride-1 cross-correlation:
    out[k, i] = bias[k] + sum_c sum_n kernels[k, c, n] * x[c, i + n]."""
    squeeze = x.data.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3:
        raise ShapeError(f"conv1d input must be [C, L] or [B, C, L], got {x.shape}")
    B, C, L = xd.shape
    O, Ck, K = kernels.shape
    if Ck != C:
        raise ShapeError(f"conv1d: input has {C} channels, kernels expect {Ck}")
    if bias.shape != (O,):
        raise ShapeError(f"conv1d: bias shape {bias.shape}, expected ({O},)")
    if L < K:
        raise ShapeError(f"conv1d: input length {L} shorter than kernel {K}")
    Lo = L - K + 1
    cols = sliding_window_view(xd, K, axis=2).transpose(0, 2, 1, 3).reshape(B * Lo, C * K)
    wm = kernels.data.reshape(O, C * K)
    out = (cols @ wm.T + bias.data).reshape(B, Lo, O).transpose(0, 2, 1)
    if squeeze:
        out = out[0]

    def backward(g):
        g3 = g[None] if squeeze else g
        g2 = g3.transpose(0, 2, 1).reshape(B * Lo, O)
        if kernels.requires_grad:
            kernels.accumulate((g2.T @ cols).reshape(O, C, K))
        if bias.requires_grad:
            bias.accumulate(g3.sum(axis=(0, 2)))
        if x.requires_grad:
            dcols = (g2 @ wm).reshape(B, Lo, C, K)
            dx = np.zeros((B, C, L))
            for n in range(K):
                dx[:, :, n : n + Lo] += dcols[:, :, :, n].transpose(0, 2, 1)
            x.accumulate(dx[0] if squeeze else dx)

    return make(np.ascontiguousarray(out), (x, kernels, bias), backward)


def pool_length(L: int) -> int:
    return (L - POOL_SIZE) // POOL_STRIDE + 1


def avgpool1d(x: Tensor) -> Tensor:
    """Mean over windows of 3 with stride 2 along the last axis."""
    L = x.shape[-1]
    if L < POOL_SIZE:
        raise ShapeError(f"avgpool1d: length {L} shorter than window {POOL_SIZE}")
    Lo = pool_length(L)
    end = POOL_STRIDE * (Lo - 1) + 1
    d = x.data
    out = sum(d[..., j : j + end : POOL_STRIDE] for j in range(POOL_SIZE)) / POOL_SIZE

    def backward(g):
        dx = np.zeros_like(d)
        for j in range(POOL_SIZE):
            dx[..., j : j + end : POOL_STRIDE] += g / POOL_SIZE
        x.accumulate(dx)

    return make(out, (x,), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0  # subgradient at 0 is 0

    def backward(g):
        x.accumulate(g * mask)

    return make(x.data * mask, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    s = np.empty_like(x.data)
    pos = x.data >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    e = np.exp(x.data[~pos])
    s[~pos] = e / (1.0 + e)

    def backward(g):
        x.accumulate(g * s * (1.0 - s))

    return make(s, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)

    def backward(g):
        x.accumulate(g * (1.0 - t * t))

    return make(t, (x,), backward)


def fully_connected(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight.T + bias`` for x of shape [D] or [B, D]."""
    O, D = weight.shape
    if x.shape[-1] != D or x.data.ndim not in (1, 2):
        raise ShapeError(f"fully_connected: input {x.shape} does not match weight {weight.shape}")
    if bias.shape != (O,):
        raise ShapeError(f"fully_connected: bias {bias.shape}, expected ({O},)")
    out = x.data @ weight.data.T + bias.data

    def backward(g):
        if weight.requires_grad:
            weight.accumulate(np.outer(g, x.data) if g.ndim == 1 else g.T @ x.data)
        if bias.requires_grad:
            bias.accumulate(g if g.ndim == 1 else g.sum(axis=0))
        if x.requires_grad:
            x.accumulate(g @ weight.data)

    return make(out, (x, weight, bias), backward)


def flatten(x: Tensor) -> Tensor:
    """[C, L] -> [C*L]; [B, C, L] -> [B, C*L]."""
    shape = (-1,) if x.data.ndim <= 2 else (x.shape[0], -1)
    return x.reshape(shape)


def dropout(x: Tensor, p: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1-p) so eval is the identity."""
    if not 0 <= p < 1:
        raise ParameterError(f"dropout probability must be in [0, 1), got {p}")
    if not train or p == 0:
        return x
    if rng is None:
        raise ParameterError("training-mode dropout needs an rng")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)

    def backward(g):
        x.accumulate(g * mask)

    return make(x.data * mask, (x,), backward)


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, target) -> tuple[Tensor, np.ndarray]:
    """Mean cross-entropy of softmax(logits) against integer targets.

    Returns the scalar loss tensor and the probabilities.
    """
    z = logits.data
    C = z.shape[-1]
    if C < 2:
        raise ShapeError("softmax_cross_entropy needs at least 2 classes")
    single = z.ndim == 1
    z2 = z[None] if single else z
    t = np.atleast_1d(np.asarray(target, dtype=np.int64))
    if t.shape != (z2.shape[0],):
        raise ShapeError(f"{t.shape[0]} targets for {z2.shape[0]} rows of logits")
    if np.any((t < 0) | (t >= C)):
        raise IndexError(f"target class out of range [0, {C})")
    shifted = z2 - z2.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(t.size)
    loss = float(np.mean(lse - shifted[rows, t]))
    probs = np.exp(shifted - lse[:, None])

    def backward(g):
        d = probs.copy()
        d[rows, t] -= 1.0
        d *= g / t.size
        logits.accumulate(d[0] if single else d)

    return make(np.array(loss), (logits,), backward), (probs[0] if single else probs)


LSTM_GATES = ("f", "i", "C", "o")


def lstm_step(x_t: Tensor, h_prev: Tensor, c_prev: Tensor, params: dict) -> tuple[Tensor, Tensor]:
    """One LSTM step.  ``params`` maps W_f, W_i, W_C, W_o (each [H, H+D],
    acting on [h_prev, x_t]) and b_f, b_i, b_C, b_o (each [H])."""
    z = concat([h_prev, x_t], axis=-1)
    f = sigmoid(fully_connected(z, params["W_f"], params["b_f"]))
    i = sigmoid(fully_connected(z, params["W_i"], params["b_i"]))
    c_tilde = tanh(fully_connected(z, params["W_C"], params["b_C"]))
    c_t = f * c_prev + i * c_tilde
    o = sigmoid(fully_connected(z, params["W_o"], params["b_o"]))
    h_t = o * tanh(c_t)
    return h_t, c_t


__all__ = [
    "conv1d", "avgpool1d", "relu", "sigmoid", "tanh", "fully_connected", "flatten",
    "dropout", "softmax", "softmax_cross_entropy", "lstm_step", "concat", "as_tensor",
]
