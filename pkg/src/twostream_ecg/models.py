"""Identified stream (1D CNN), temporal stream (LSTM) and late fusion."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError, ShapeError
from .framing import FRAME_LEN, SEQ_LEN
from .nn.ops import (avgpool1d, conv1d, dropout, flatten, fully_connected, lstm_step,
                     pool_length, relu, softmax)
from .nn.tensor import Tensor
from .rng import make_rng

MODEL_KINDS = ("identified", "temporal", "fusion_avg", "fusion_fc")


@dataclass(frozen=True)
class IdentifiedStreamSpec:
    channels: tuple[int, ...] = (16, 32, 64, 64)
    kernel: int = 5
    pooled_convs: int = 3
    dropout: float = 0.5
    hidden: int = 128
    input_len: int = FRAME_LEN

    def conv_lengths(self) -> list[int]:
        """Length after each conv (and its pooling, when pooled)."""
        out, L = [], self.input_len
        for i in range(len(self.channels)):
            L = L - self.kernel + 1
            if i < self.pooled_convs:
                L = pool_length(L)
            out.append(L)
        return out

    @property
    def flatten_dim(self) -> int:
        return self.channels[-1] * self.conv_lengths()[-1]


@dataclass(frozen=True)
class TemporalStreamSpec:
    input_size: int = FRAME_LEN
    hidden: int = 128
    steps: int = SEQ_LEN
    forget_bias: float = 1.0


class Module:
    """Named parameter container."""

    kind = "module"

    def __init__(self):
        self.params: dict[str, Tensor] = {}

    def _add(self, name: str, data: np.ndarray) -> None:
        self.params[name] = Tensor(data, requires_grad=True, name=name)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def freeze(self) -> None:
        for p in self.params.values():
            p.requires_grad = False
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if missing or extra:
            raise CheckpointError(f"parameter mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, p in self.params.items():
            a = np.asarray(state[k], dtype=np.float64)
            if a.shape != p.shape:
                raise CheckpointError(f"{k}: checkpoint shape {a.shape} != model shape {p.shape}")
            p.data = a.copy()

    def zero_(self) -> "Module":
        for p in self.params.values():
            p.data = np.zeros_like(p.data)
        return self

    def probs(self, x, **kw) -> np.ndarray:
        return softmax(self.logits(x, **kw)[0].data)

    def logits(self, x, train=False, rng=None):  # pragma: no cover - interface
        raise NotImplementedError


def _he_uniform(rng, shape, fan_in):
    lim = np.sqrt(6.0 / fan_in)
    return rng.uniform(-lim, lim, size=shape)


def _head(rng, n_out, n_in):
    return rng.normal(0.0, 0.01, size=(n_out, n_in))


class IdentifiedStream(Module):
    """C-P-C-P-C-P-C, dropout, FC(128)+ReLU, FC(C).  Input [B, 300] or [300]."""

    kind = "identified"

    def __init__(self, n_classes: int, spec: IdentifiedStreamSpec = IdentifiedStreamSpec(), seed: int = 0):
        super().__init__()
        self.spec = spec
        self.n_classes = n_classes
        rng = make_rng(seed, 1)
        c_in = 1
        for i, c in enumerate(spec.channels, start=1):
            fan = c_in * spec.kernel
            self._add(f"conv{i}.W", _he_uniform(rng, (c, c_in, spec.kernel), fan))
            self._add(f"conv{i}.b", np.zeros(c))
            c_in = c
        self._add("fc1.W", _he_uniform(rng, (spec.hidden, spec.flatten_dim), spec.flatten_dim))
        self._add("fc1.b", np.zeros(spec.hidden))
        self._add("fc2.W", _head(rng, n_classes, spec.hidden))
        self._add("fc2.b", np.zeros(n_classes))

    def replace_head(self, n_classes: int, seed: int = 0) -> None:
        """Swap the output layer, e.g. after identity pre-training."""
        rng = make_rng(seed, 2)
        self.n_classes = n_classes
        self._add("fc2.W", _head(rng, n_classes, self.spec.hidden))
        self._add("fc2.b", np.zeros(n_classes))

    def features(self, x, train=False, rng=None) -> Tensor:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.spec.input_len or x.ndim not in (1, 2):
            raise ShapeError(f"identified stream expects [B, {self.spec.input_len}] input, got {x.shape}")
        h = Tensor(x[..., None, :])
        P = self.params
        for i in range(1, len(self.spec.channels) + 1):
            h = relu(conv1d(h, P[f"conv{i}.W"], P[f"conv{i}.b"]))
            if i <= self.spec.pooled_convs:
                h = avgpool1d(h)
        h = dropout(flatten(h), self.spec.dropout, train, rng)
        return relu(fully_connected(h, P["fc1.W"], P["fc1.b"]))

    def logits(self, x, train=False, rng=None):
        pen = self.features(x, train, rng)
        return fully_connected(pen, self.params["fc2.W"], self.params["fc2.b"]), pen


class TemporalStream(Module):
    """LSTM over 10 frames; the final hidden state feeds FC(C).
    Input [B, 10, 300] or [10, 300]."""

    kind = "temporal"

    def __init__(self, n_classes: int, spec: TemporalStreamSpec = TemporalStreamSpec(), seed: int = 0):
        super().__init__()
        self.spec = spec
        self.n_classes = n_classes
        rng = make_rng(seed, 3)
        H, D = spec.hidden, spec.input_size
        lim = 1.0 / np.sqrt(H)
        for gate in ("f", "i", "C", "o"):
            self._add(f"W_{gate}", rng.uniform(-lim, lim, size=(H, H + D)))
            self._add(f"b_{gate}", np.full(H, spec.forget_bias if gate == "f" else 0.0))
        self._add("fc.W", _head(rng, n_classes, H))
        self._add("fc.b", np.zeros(n_classes))

    def features(self, x, train=False, rng=None) -> Tensor:
        x = np.asarray(x, dtype=float)
        if x.shape[-2:] != (self.spec.steps, self.spec.input_size) or x.ndim not in (2, 3):
            raise ShapeError(
                f"temporal stream expects [B, {self.spec.steps}, {self.spec.input_size}] input, got {x.shape}"
            )
        lead = x.shape[:-2]
        h = Tensor(np.zeros(lead + (self.spec.hidden,)))
        c = Tensor(np.zeros(lead + (self.spec.hidden,)))
        for t in range(self.spec.steps):
            h, c = lstm_step(Tensor(x[..., t, :]), h, c, self.params)
        return h

    def logits(self, x, train=False, rng=None):
        pen = self.features(x, train, rng)
        return fully_connected(pen, self.params["fc.W"], self.params["fc.b"]), pen


class FusionFC(Module):
    """Softmax layer over the stacked penultimate features of both streams."""

    kind = "fusion_fc"

    def __init__(self, n_classes: int, feature_dim: int = 256, seed: int = 0):
        super().__init__()
        self.n_classes = n_classes
        rng = make_rng(seed, 4)
        self._add("fuse.W", _head(rng, n_classes, feature_dim))
        self._add("fuse.b", np.zeros(n_classes))

    def logits(self, x, train=False, rng=None):
        feats = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=float))
        return fully_connected(feats, self.params["fuse.W"], self.params["fuse.b"]), feats


def stacked_features(identified: IdentifiedStream, temporal: TemporalStream,
                     first_frames, sequences) -> np.ndarray:
    """Eval-mode penultimate features of both streams, concatenated: [B, 256]."""
    f1 = identified.features(first_frames).data
    f2 = temporal.features(sequences).data
    return np.concatenate([f1, f2], axis=-1)


def fuse_fc_forward(pen1: Tensor, pen2: Tensor, fusion: FusionFC) -> np.ndarray:
    from .nn.tensor import concat

    logits, _ = fusion.logits(concat([pen1, pen2], axis=-1))
    return softmax(logits.data)


def fuse_average(p1, p2) -> np.ndarray:
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if p1.shape != p2.shape:
        raise ShapeError(f"cannot average probabilities of shapes {p1.shape} and {p2.shape}")
    return (p1 + p2) / 2


def identified_forward(frame, model: IdentifiedStream, train=False, rng=None):
    """(probs, penultimate) for one frame or a batch."""
    logits, pen = model.logits(getattr(frame, "samples", frame), train, rng)
    return softmax(logits.data), pen


def temporal_forward(seq, model: TemporalStream, train=False, rng=None):
    x = seq.as_array() if hasattr(seq, "as_array") else seq
    logits, pen = model.logits(x, train, rng)
    return softmax(logits.data), pen


def build_model(kind: str, n_classes: int, seed: int = 0) -> Module:
    if kind == "identified":
        return IdentifiedStream(n_classes, seed=seed)
    if kind == "temporal":
        return TemporalStream(n_classes, seed=seed)
    if kind == "fusion_fc":
        return FusionFC(n_classes, seed=seed)
    raise ValueError(f"no trainable model of kind {kind!r}")
