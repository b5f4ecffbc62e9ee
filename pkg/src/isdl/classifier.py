"""Pluggable classifier contract and a small numpy reference network.

The reference model is a one-hidden-layer SiLU network with a softmax head
(``hidden_units=0`` gives multinomial logistic regression), trained on mean
cross-entropy with mini-batch Adam and a step-decay learning-rate schedule.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .data import LabeledDataset
from .errors import DivergenceError, EmptyDataset, ShapeError

__all__ = [
    "TrainConfig",
    "AdamState",
    "ClassifierModel",
    "MLPClassifier",
    "sigmoid",
    "silu",
    "softmax",
    "adam_step",
    "lr_at_epoch",
    "save_model",
    "load_model",
]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    base_lr: float = 1e-4
    decay_factor: float = 0.96
    decay_start_epoch: int = 50
    hidden_units: int = 16
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not self.base_lr > 0:
            raise ValueError("base_lr must be positive")
        if not 0 < self.decay_factor <= 1:
            raise ValueError("decay_factor must lie in (0, 1]")
        if self.decay_start_epoch < 1:
            raise ValueError("decay_start_epoch must be >= 1")
        if self.hidden_units < 0:
            raise ValueError("hidden_units must be >= 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x):
    """``x * sigmoid(x)``; returns a float for scalar input."""
    s = np.asarray(x, dtype=np.float64)
    out = s * sigmoid(s)
    return float(out) if out.ndim == 0 else out


def _silu_grad(x, sig):
    return sig * (1.0 + x * (1.0 - sig))


def softmax(logits):
    """Row-wise softmax with max subtraction."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(state: AdamState, grads, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns the new state and the parameter delta."""
    g = np.asarray(grads, dtype=np.float64)
    if g.shape != state.m.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match state {state.m.shape}")
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * g
    v = beta2 * state.v + (1.0 - beta2) * (g * g)
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    delta = -lr * m_hat / (np.sqrt(v_hat) + eps)
    return AdamState(m, v, t), delta


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Learning rate for a 1-based epoch: constant, then multiplied by the decay every epoch."""
    if epoch < 1:
        raise ValueError("epoch is 1-based")
    if epoch <= cfg.decay_start_epoch:
        return cfg.base_lr
    return cfg.base_lr * cfg.decay_factor ** (epoch - cfg.decay_start_epoch)


@runtime_checkable
class ClassifierModel(Protocol):
    """What the self-trainer needs from a classifier."""

    n_classes: int

    def fit(self, ds: LabeledDataset, cfg: TrainConfig, seed: int) -> list:
        ...

    def predict_proba(self, rows) -> np.ndarray:
        ...


class MLPClassifier:
    """One-hidden-layer SiLU network, or a linear softmax model when ``hidden_units == 0``.

    All parameters live in one flat float64 vector ``params``; the weight
    blocks (``W1, b1, W2, b2`` or ``W, b``) are row-major views into it.
    """

    def __init__(self, n_classes: int, n_features: int, hidden_units: int = 16):
        if n_classes < 2 or n_features < 1 or hidden_units < 0:
            raise ValueError("need n_classes >= 2, n_features >= 1, hidden_units >= 0")
        self.n_classes = int(n_classes)
        self.n_features = int(n_features)
        self.hidden_units = int(hidden_units)
        self.params = np.zeros(self.n_params)

    @property
    def layer_shapes(self):
        d, h, L = self.n_features, self.hidden_units, self.n_classes
        if h == 0:
            return [(d, L), (L,)]
        return [(d, h), (h,), (h, L), (L,)]

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.layer_shapes)

    def unpack(self, params=None):
        params = self.params if params is None else params
        blocks, start = [], 0
        for shape in self.layer_shapes:
            size = int(np.prod(shape))
            blocks.append(params[start:start + size].reshape(shape))
            start += size
        return blocks

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        params = np.zeros(self.n_params)
        for block in self.unpack(params):
            if block.ndim == 2:
                limit = np.sqrt(6.0 / (block.shape[0] + block.shape[1]))
                block[...] = rng.uniform(-limit, limit, size=block.shape)
        return params

    # -- forward / backward ---------------------------------------------------

    def _logits(self, X, params, contract=np.matmul):
        blocks = self.unpack(params)
        if self.hidden_units == 0:
            W, b = blocks
            return contract(X, W) + b, None
        W1, b1, W2, b2 = blocks
        pre = contract(X, W1) + b1
        sig = sigmoid(pre)
        act = pre * sig
        return contract(act, W2) + b2, (pre, sig, act)

    def loss_and_grad(self, params, X, y):
        """Mean cross-entropy and its gradient with respect to the flat parameter vector."""
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        n = X.shape[0]
        logits, cache = self._logits(X, params)
        logp = _log_softmax(logits)
        loss = -logp[np.arange(n), y].mean()
        dlogits = np.exp(logp)
        dlogits[np.arange(n), y] -= 1.0
        dlogits /= n
        grad = np.empty_like(params)
        gblocks = self.unpack(grad)
        if self.hidden_units == 0:
            gblocks[0][...] = X.T @ dlogits
            gblocks[1][...] = dlogits.sum(axis=0)
        else:
            _, _, W2, _ = self.unpack(params)
            pre, sig, act = cache
            gblocks[2][...] = act.T @ dlogits
            gblocks[3][...] = dlogits.sum(axis=0)
            dpre = (dlogits @ W2.T) * _silu_grad(pre, sig)
            gblocks[0][...] = X.T @ dpre
            gblocks[1][...] = dpre.sum(axis=0)
        return float(loss), grad

    # -- training / inference -------------------------------------------------

    def fit(self, ds: LabeledDataset, cfg: TrainConfig, seed: int) -> list:
        """Train from a fresh seeded initialization; returns the per-epoch mean loss."""
        if len(ds) == 0:
            raise EmptyDataset("cannot fit on an empty dataset")
        if ds.n_features != self.n_features:
            raise ShapeError(f"dataset has {ds.n_features} features, model expects {self.n_features}")
        if ds.labels.max() >= self.n_classes:
            raise ValueError("dataset labels exceed the model's class count")
        rng = np.random.default_rng(seed)
        params = self.init_params(rng)
        state = AdamState.zeros(params.size)
        X, y = ds.features, ds.labels
        n = len(ds)
        trace = []
        for epoch in range(1, cfg.epochs + 1):
            lr = lr_at_epoch(cfg, epoch)
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                loss, grad = self.loss_and_grad(params, X[idx], y[idx])
                if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                    raise DivergenceError(epoch)
                state, delta = adam_step(state, grad, lr, cfg.beta1, cfg.beta2, cfg.eps)
                params = params + delta
                total += loss * idx.size
            trace.append(total / n)
        self.params = params
        return trace

    def predict_proba(self, rows) -> np.ndarray:
        X = np.asarray(rows, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ShapeError(f"expected rows with {self.n_features} columns, got shape {X.shape}")
        # einsum keeps each row's arithmetic independent of the batch it sits in
        logits, _ = self._logits(X, self.params, contract=lambda a, w: np.einsum("nd,dk->nk", a, w))
        return softmax(logits)

    def predict(self, rows) -> np.ndarray:
        return np.argmax(self.predict_proba(rows), axis=1)


# --------------------------------------------------------------------------
# serialization

_MAGIC = b"ISDLMLP\0"
_VERSION = 1
_HEADER = struct.Struct("<8sIIII")


def save_model(model: MLPClassifier, path) -> None:
    """Flat binary dump: magic, version, (L, d, hidden_units), then row-major float64 blocks."""
    header = _HEADER.pack(_MAGIC, _VERSION, model.n_classes, model.n_features, model.hidden_units)
    Path(path).write_bytes(header + model.params.astype("<f8").tobytes())


def load_model(path) -> MLPClassifier:
    data = Path(path).read_bytes()
    magic, version, L, d, h = _HEADER.unpack_from(data)
    if magic != _MAGIC or version != _VERSION:
        raise ValueError(f"{path}: not a version-{_VERSION} model file")
    model = MLPClassifier(L, d, h)
    params = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if params.size != model.n_params:
        raise ShapeError(f"{path}: expected {model.n_params} parameters, found {params.size}")
    model.params = params.astype(np.float64)
    return model
