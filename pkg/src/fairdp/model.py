"""Softmax classifiers with exact per-sample gradients.

Two model kinds share a flat float64 parameter vector:

  softmax:  [W (input_dim x num_classes, row-major), bias (num_classes)]
  mlp:      [W1 (input_dim x hidden), b1 (hidden),
             W2 (hidden x num_classes), b2 (num_classes)]

The per-sample loss is cross-entropy plus an L2 penalty of (l2/2) times the
squared norm of the weight matrices (biases are not regularized). Because
the penalty is charged to every sample, the mean of per-sample gradients
equals the gradient of the regularized mean objective.

All arithmetic is 64-bit; logits go through a max-subtracted log-sum-exp so
extreme values neither overflow nor lose the probability normalization.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DataError

SOFTMAX = "softmax"
MLP = "mlp"

_PARAMS_HEADER = struct.Struct("<4Id")
_KIND_CODES = {SOFTMAX: 0, MLP: 1}


@dataclass(frozen=True)
class ModelSpec:
    """Architecture and regularization; parameter count is derived."""

    kind: str
    input_dim: int
    num_classes: int
    l2: float = 0.0
    hidden: int = 0

    def __post_init__(self):
        if self.kind not in (SOFTMAX, MLP):
            raise ValueError(f"unknown model kind '{self.kind}'")
        if self.input_dim < 1 or self.num_classes < 2:
            raise ValueError("need input_dim >= 1 and num_classes >= 2")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")
        if self.kind == MLP and self.hidden < 1:
            raise ValueError("mlp needs hidden >= 1")
        if self.kind == SOFTMAX and self.hidden != 0:
            raise ValueError("softmax takes no hidden size")

    @classmethod
    def softmax(cls, input_dim: int, num_classes: int, l2: float = 0.0) -> "ModelSpec":
        return cls(SOFTMAX, input_dim, num_classes, l2)

    @classmethod
    def mlp(cls, input_dim: int, hidden: int, num_classes: int, l2: float = 0.0) -> "ModelSpec":
        return cls(MLP, input_dim, num_classes, l2, hidden)

    @property
    def param_count(self) -> int:
        if self.kind == SOFTMAX:
            return (self.input_dim + 1) * self.num_classes
        return (self.input_dim + 1) * self.hidden + (self.hidden + 1) * self.num_classes


class PerSampleGrads(NamedTuple):
    """Per-example gradients (rows), their L2 norms, and losses."""

    grads: np.ndarray
    norms: np.ndarray
    losses: np.ndarray


def init_params(spec: ModelSpec, seed: int = 0) -> np.ndarray:
    """Zeros for softmax; Glorot-uniform weights with zero biases for mlp."""
    if spec.kind == SOFTMAX:
        return np.zeros(spec.param_count)
    rng = np.random.default_rng(seed)
    d, h, c = spec.input_dim, spec.hidden, spec.num_classes
    a1 = np.sqrt(6.0 / (d + h))
    a2 = np.sqrt(6.0 / (h + c))
    w1 = rng.uniform(-a1, a1, size=(d, h))
    w2 = rng.uniform(-a2, a2, size=(h, c))
    return np.concatenate([w1.ravel(), np.zeros(h), w2.ravel(), np.zeros(c)])


def _unpack(spec: ModelSpec, params: np.ndarray):
    if params.shape != (spec.param_count,):
        raise ValueError(f"params length {params.shape} != {spec.param_count}")
    d, c = spec.input_dim, spec.num_classes
    if spec.kind == SOFTMAX:
        w = params[: d * c].reshape(d, c)
        b = params[d * c:]
        return w, b
    h = spec.hidden
    off = 0
    w1 = params[off: off + d * h].reshape(d, h); off += d * h
    b1 = params[off: off + h]; off += h
    w2 = params[off: off + h * c].reshape(h, c); off += h * c
    b2 = params[off:]
    return w1, b1, w2, b2


def _logits(spec: ModelSpec, params: np.ndarray, x: np.ndarray):
    """Logits for a 2-D input batch; also returns the hidden pieces for mlp."""
    if spec.kind == SOFTMAX:
        w, b = _unpack(spec, params)
        return x @ w + b, None, None
    w1, b1, w2, b2 = _unpack(spec, params)
    z1 = x @ w1 + b1
    a1 = np.maximum(z1, 0.0)
    return a1 @ w2 + b2, z1, a1


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(spec: ModelSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Class probabilities for one sample (1-D x) or a batch (2-D x)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    logits, _, _ = _logits(spec, params, x[None, :] if single else x)
    probs = _softmax(logits)
    return probs[0] if single else probs


def _weight_penalty(spec: ModelSpec, params: np.ndarray) -> float:
    if spec.l2 == 0.0:
        return 0.0
    if spec.kind == SOFTMAX:
        w, _ = _unpack(spec, params)
        return 0.5 * spec.l2 * float(np.sum(w * w))
    w1, _, w2, _ = _unpack(spec, params)
    return 0.5 * spec.l2 * float(np.sum(w1 * w1) + np.sum(w2 * w2))


def per_sample_grads(spec: ModelSpec, params: np.ndarray, batch) -> PerSampleGrads:
    """Gradient of each sample's regularized loss w.r.t. the flat params.

    Args:
      batch: anything with ``features`` (b x input_dim) and ``labels`` (b).

    Returns:
      PerSampleGrads with a (b x param_count) gradient matrix, row norms,
      and per-sample losses.
    """
    x = np.asarray(batch.features, dtype=np.float64)
    y = np.asarray(batch.labels, dtype=np.int64)
    b = x.shape[0]
    rows = np.arange(b)
    logits, z1, a1 = _logits(spec, params, x)
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
    losses = lse - logits[rows, y] + _weight_penalty(spec, params)
    delta_out = _softmax(logits)
    delta_out[rows, y] -= 1.0

    grads = np.empty((b, spec.param_count))
    if spec.kind == SOFTMAX:
        w, _ = _unpack(spec, params)
        d, c = spec.input_dim, spec.num_classes
        gw = np.einsum("bi,bj->bij", x, delta_out).reshape(b, d * c)
        if spec.l2:
            gw += spec.l2 * w.ravel()
        grads[:, : d * c] = gw
        grads[:, d * c:] = delta_out
    else:
        w1, _, w2, _ = _unpack(spec, params)
        d, h, c = spec.input_dim, spec.hidden, spec.num_classes
        delta_hidden = (delta_out @ w2.T) * (z1 > 0.0)
        gw1 = np.einsum("bi,bj->bij", x, delta_hidden).reshape(b, d * h)
        gw2 = np.einsum("bi,bj->bij", a1, delta_out).reshape(b, h * c)
        if spec.l2:
            gw1 += spec.l2 * w1.ravel()
            gw2 += spec.l2 * w2.ravel()
        off = 0
        grads[:, off: off + d * h] = gw1; off += d * h
        grads[:, off: off + h] = delta_hidden; off += h
        grads[:, off: off + h * c] = gw2; off += h * c
        grads[:, off:] = delta_out
    norms = np.linalg.norm(grads, axis=1)
    return PerSampleGrads(grads, norms, losses)


def accuracy(spec: ModelSpec, params: np.ndarray, data) -> float:
    """Fraction of rows whose argmax probability matches the label.

    Ties break toward the lowest class index.
    """
    x = np.asarray(data.features, dtype=np.float64)
    if x.shape[0] == 0:
        raise DataError("cannot compute accuracy of an empty dataset")
    preds = np.argmax(forward(spec, params, x), axis=1)
    return float(np.mean(preds == np.asarray(data.labels)))


def save_params(path, spec: ModelSpec, params: np.ndarray) -> None:
    """Write the spec descriptor followed by the little-endian f64 values."""
    header = _PARAMS_HEADER.pack(_KIND_CODES[spec.kind], spec.input_dim,
                                 spec.num_classes, spec.hidden, spec.l2)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(params, dtype="<f8").tobytes())


def load_params(path) -> tuple[ModelSpec, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _PARAMS_HEADER.size:
        raise DataError(f"truncated params file: '{path}'")
    code, input_dim, num_classes, hidden, l2 = _PARAMS_HEADER.unpack_from(blob)
    kinds = {v: k for k, v in _KIND_CODES.items()}
    if code not in kinds:
        raise DataError(f"unknown model kind code {code} in '{path}'")
    spec = ModelSpec(kinds[code], input_dim, num_classes, l2, hidden)
    values = np.frombuffer(blob, dtype="<f8", offset=_PARAMS_HEADER.size)
    if values.shape != (spec.param_count,):
        raise DataError(f"params file has {values.size} values, expected {spec.param_count}")
    return spec, values.copy()
