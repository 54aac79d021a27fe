"""Stacked sigmoid autoencoder trained with plain backpropagation.

Every vector-valued function here also accepts a 2-D array holding one
sample per row; gradients over a batch are averaged so that they are the
gradients of the mean cost over that batch.
"""

from __future__ import annotations

import copy
import hashlib
import logging
import struct
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CorruptFileError, DimensionError, VersionMismatchError

__all__ = [
    "Layer",
    "SaeModel",
    "Activations",
    "TrainConfig",
    "sigmoid",
    "init_model",
    "forward",
    "output_delta",
    "hidden_delta",
    "gradients",
    "backprop",
    "cost",
    "pretrain",
    "fine_tune",
    "encode",
    "decode",
    "serialize_model",
    "deserialize_model",
    "save_model",
    "load_model",
    "model_id",
]

log = logging.getLogger(__name__)

MODEL_MAGIC = b"SAEM"
MODEL_VERSION = 1


def sigmoid(z):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


@dataclass(eq=False)
class Layer:
    """Affine map ``a -> W a + b``; ``weights`` is ``(out_dim, in_dim)``."""

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.float64, ndmin=2)
        self.biases = np.array(self.biases, dtype=np.float64, ndmin=1)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise DimensionError(
                f"weights {self.weights.shape} and biases {self.biases.shape} disagree"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.weights).all() and np.isfinite(self.biases).all())


@dataclass(eq=False)
class SaeModel:
    """Mirrored encoder/decoder stack, e.g. ``layer_dims = (64, 16, 4, 16, 64)``.

    ``layers[i]`` maps node level ``i`` to level ``i + 1``. The code layer
    sits at the middle level, so ``layer_dims`` must be an odd-length
    palindrome.
    """

    layer_dims: tuple
    layers: list

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        check_layer_dims(self.layer_dims)
        if len(self.layers) != len(self.layer_dims) - 1:
            raise DimensionError(
                f"{len(self.layers)} layers for dims {self.layer_dims}"
            )
        for i, layer in enumerate(self.layers):
            want = (self.layer_dims[i + 1], self.layer_dims[i])
            if layer.weights.shape != want:
                raise DimensionError(f"layer {i} has shape {layer.weights.shape}, expected {want}")

    @property
    def bottleneck_index(self) -> int:
        return (len(self.layer_dims) - 1) // 2

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    def code_dim(self, level: Optional[int] = None) -> int:
        return self.layer_dims[self._code_level(level)]

    def _code_level(self, level: Optional[int]) -> int:
        if level is None:
            return self.bottleneck_index
        if not 1 <= level <= self.bottleneck_index:
            raise ValueError(
                f"code level must be in 1..{self.bottleneck_index}, got {level}"
            )
        return level

    def copy(self) -> SaeModel:
        return copy.deepcopy(self)

    def __eq__(self, other):
        if not isinstance(other, SaeModel):
            return NotImplemented
        return self.layer_dims == other.layer_dims and all(
            np.array_equal(a.weights, b.weights) and np.array_equal(a.biases, b.biases)
            for a, b in zip(self.layers, other.layers)
        )


def check_layer_dims(dims: Sequence[int]) -> None:
    dims = list(dims)
    if len(dims) < 3 or len(dims) % 2 == 0:
        raise DimensionError(f"layer dims need an odd length >= 3, got {dims}")
    if dims != dims[::-1]:
        raise DimensionError(f"layer dims must be palindromic, got {dims}")
    if min(dims) < 1:
        raise DimensionError(f"layer widths must be positive, got {dims}")


@dataclass
class Activations:
    """Cached forward pass. ``activations[0]`` is the input itself."""

    pre_activations: list
    activations: list

    @property
    def output(self) -> np.ndarray:
        return self.activations[-1]


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    pretrain_epochs: int = 200
    finetune_epochs: int = 500
    batch_size: int = 32
    weight_decay: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.pretrain_epochs < 0 or self.finetune_epochs < 0:
            raise ValueError("epoch counts cannot be negative")
        if self.weight_decay < 0:
            raise ValueError("weight_decay cannot be negative")

    def rng(self, stream: int) -> np.random.Generator:
        return np.random.default_rng([self.rng_seed & 0xFFFFFFFFFFFFFFFF, stream])


def _glorot_layer(rng: np.random.Generator, fan_in: int, fan_out: int) -> Layer:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Layer(rng.uniform(-limit, limit, size=(fan_out, fan_in)), np.zeros(fan_out))


def init_model(layer_dims: Sequence[int], rng: np.random.Generator) -> SaeModel:
    """Randomly initialized model (Glorot-uniform weights, zero biases)."""
    check_layer_dims(layer_dims)
    layers = [_glorot_layer(rng, i, o) for i, o in zip(layer_dims[:-1], layer_dims[1:])]
    return SaeModel(tuple(layer_dims), layers)


# --------------------------------------------------------------------------
# forward and backward passes
# --------------------------------------------------------------------------


def _run(layers, x) -> Activations:
    a = np.asarray(x, dtype=np.float64)
    zs, acts = [], [a]
    for layer in layers:
        if a.shape[-1] != layer.in_dim:
            raise DimensionError(f"input width {a.shape[-1]}, layer expects {layer.in_dim}")
        z = a @ layer.weights.T + layer.biases
        a = sigmoid(z)
        zs.append(z)
        acts.append(a)
    return Activations(zs, acts)


def forward(model, x) -> Activations:
    """Forward pass through a model, or through a bare sequence of layers."""
    return _run(getattr(model, "layers", model), x)


def output_delta(a_out, y):
    """Error term at the output layer for the squared-error cost.

    ``-(y - a) * f'(z)``, with the sigmoid slope taken from the cached
    activation as ``a (1 - a)``.
    """
    a_out = np.asarray(a_out, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if a_out.shape != y.shape:
        raise DimensionError(f"output {a_out.shape} vs target {y.shape}")
    return -(y - a_out) * a_out * (1.0 - a_out)


def hidden_delta(layer: Layer, delta_next, a):
    """Propagate ``delta_next`` back through ``layer`` to the level feeding it.

    ``a`` is the activation at that feeding level.
    """
    delta_next = np.asarray(delta_next, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if delta_next.shape[-1] != layer.out_dim or a.shape[-1] != layer.in_dim:
        raise DimensionError("delta/activation widths do not match the layer")
    return (delta_next @ layer.weights) * a * (1.0 - a)


def gradients(delta_next, a):
    """Weight and bias gradients of one layer.

    For single vectors this is the outer product ``delta a^T`` and ``delta``;
    for row batches the per-sample gradients are averaged.
    """
    delta_next = np.asarray(delta_next, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if delta_next.ndim == 1:
        return np.outer(delta_next, a), delta_next.copy()
    m = delta_next.shape[0]
    return delta_next.T @ a / m, delta_next.mean(axis=0)


def backprop(model: SaeModel, x, y=None, weight_decay: float = 0.0):
    """Gradients of :func:`cost` for every layer, as ``[(dW, db), ...]``."""
    return _backprop(model.layers, x, x if y is None else y, weight_decay)


def _backprop(layers, x, y, weight_decay):
    acts = _run(layers, x).activations
    delta = output_delta(acts[-1], y)
    grads = [None] * len(layers)
    for l in range(len(layers) - 1, -1, -1):
        gw, gb = gradients(delta, acts[l])
        if weight_decay:
            gw = gw + weight_decay * layers[l].weights
        grads[l] = (gw, gb)
        if l > 0:
            delta = hidden_delta(layers[l], delta, acts[l])
    return grads


def _cost(layers, x, y, weight_decay):
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cost of an empty sample set")
    out = _run(layers, x).output
    resid = np.atleast_2d(out - np.asarray(y, dtype=np.float64))
    j = 0.5 * float(np.mean(np.sum(resid * resid, axis=1)))
    if weight_decay:
        j += 0.5 * weight_decay * sum(float(np.sum(l.weights**2)) for l in layers)
    return j


def cost(model: SaeModel, x, y=None, weight_decay: float = 0.0) -> float:
    """Mean over samples of ``0.5 * ||output - y||^2`` (``y`` defaults to ``x``).

    A nonzero ``weight_decay`` adds ``weight_decay / 2 * sum(W**2)``.
    """
    return _cost(model.layers, x, x if y is None else y, weight_decay)


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------

EpochCallback = Callable[[str, int, float], None]


def _descend(layers, x, cfg: TrainConfig, epochs: int, rng, stage: str, on_epoch):
    """Mini-batch gradient descent on reconstruction of ``x``.

    The learning rate halves after any epoch whose full-set cost rose.
    """
    n = x.shape[0]
    eta = cfg.learning_rate
    wd = cfg.weight_decay
    prev = _cost(layers, x, x, wd)
    if on_epoch:
        on_epoch(stage, 0, prev)
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = x[order[start : start + cfg.batch_size]]
            for layer, (gw, gb) in zip(layers, _backprop(layers, batch, batch, wd)):
                layer.weights -= eta * gw
                layer.biases -= eta * gb
        current = _cost(layers, x, x, wd)
        if not np.isfinite(current) or not all(l.is_finite() for l in layers):
            raise FloatingPointError(f"{stage}: training diverged at epoch {epoch}")
        if current > prev:
            eta *= 0.5
            log.debug("%s epoch %d: cost rose to %.6g, learning rate now %g", stage, epoch, current, eta)
        prev = current
        if on_epoch:
            on_epoch(stage, epoch, current)
    log.info("%s: final cost %.6g", stage, prev)
    return prev


def _samples(tiles) -> np.ndarray:
    x = getattr(tiles, "tiles", tiles)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training needs a non-empty 2-D array of tiles")
    return x


def pretrain(tiles, layer_dims: Sequence[int], cfg: TrainConfig,
             on_epoch: Optional[EpochCallback] = None) -> SaeModel:
    """Greedy layer-wise pretraining.

    Each encoder level is trained as a one-hidden-layer autoencoder on the
    codes of the level below. The decoder half of the returned model is the
    transposed encoder with zero biases.
    """
    check_layer_dims(layer_dims)
    x = _samples(tiles)
    if x.shape[1] != layer_dims[0]:
        raise DimensionError(f"tiles have length {x.shape[1]}, model input is {layer_dims[0]}")
    rng = cfg.rng(0)
    depth = (len(layer_dims) - 1) // 2
    encoders = []
    for k in range(depth):
        enc = _glorot_layer(rng, layer_dims[k], layer_dims[k + 1])
        dec = _glorot_layer(rng, layer_dims[k + 1], layer_dims[k])
        _descend([enc, dec], x, cfg, cfg.pretrain_epochs, rng, f"pretrain[{k}]", on_epoch)
        encoders.append(enc)
        x = sigmoid(x @ enc.weights.T + enc.biases)
    decoders = [Layer(enc.weights.T.copy(), np.zeros(enc.in_dim)) for enc in reversed(encoders)]
    return SaeModel(tuple(layer_dims), encoders + decoders)


def fine_tune(model: SaeModel, tiles, cfg: TrainConfig,
              on_epoch: Optional[EpochCallback] = None) -> SaeModel:
    """Backpropagate through the whole (untied) stack; returns a new model."""
    x = _samples(tiles)
    if x.shape[1] != model.input_dim:
        raise DimensionError(f"tiles have length {x.shape[1]}, model input is {model.input_dim}")
    tuned = model.copy()
    _descend(tuned.layers, x, cfg, cfg.finetune_epochs, cfg.rng(1), "fine-tune", on_epoch)
    return tuned


def train(tiles, layer_dims: Sequence[int], cfg: TrainConfig,
          on_epoch: Optional[EpochCallback] = None) -> SaeModel:
    return fine_tune(pretrain(tiles, layer_dims, cfg, on_epoch), tiles, cfg, on_epoch)


# --------------------------------------------------------------------------
# coding
# --------------------------------------------------------------------------


def encode(model: SaeModel, tile, level: Optional[int] = None) -> np.ndarray:
    """Activation at code ``level`` (default: the bottleneck)."""
    level = model._code_level(level)
    tile = np.asarray(tile, dtype=np.float64)
    if tile.shape[-1] != model.input_dim:
        raise DimensionError(f"tile length {tile.shape[-1]}, model input is {model.input_dim}")
    return _run(model.layers[:level], tile).output


def decode(model: SaeModel, code, level: Optional[int] = None) -> np.ndarray:
    """Map a code back to a tile through the mirrored decoder layers.

    A code taken at encoder level ``k`` enters the decoder at its mirror
    level ``len(layer_dims) - 1 - k``.
    """
    level = model._code_level(level)
    code = np.asarray(code, dtype=np.float64)
    if code.shape[-1] != model.layer_dims[level]:
        raise DimensionError(
            f"code length {code.shape[-1]}, level {level} has width {model.layer_dims[level]}"
        )
    start = len(model.layer_dims) - 1 - level
    return _run(model.layers[start:], code).output


# --------------------------------------------------------------------------
# model files
# --------------------------------------------------------------------------


def serialize_model(model: SaeModel) -> bytes:
    dims = model.layer_dims
    parts = [
        MODEL_MAGIC,
        struct.pack("<BI", MODEL_VERSION, len(model.layers)),
        struct.pack(f"<{len(dims)}I", *dims),
    ]
    for layer in model.layers:
        parts.append(layer.weights.astype("<f8").tobytes(order="C"))
        parts.append(layer.biases.astype("<f8").tobytes())
    return b"".join(parts)


def deserialize_model(raw: bytes) -> SaeModel:
    if len(raw) < 9 or raw[:4] != MODEL_MAGIC:
        raise CorruptFileError("not a SAEM model file")
    version, count = struct.unpack_from("<BI", raw, 4)
    if version != MODEL_VERSION:
        raise VersionMismatchError(f"model format version {version}, expected {MODEL_VERSION}")
    pos = 9
    if count < 1 or len(raw) < pos + 4 * (count + 1):
        raise CorruptFileError("truncated model header")
    dims = struct.unpack_from(f"<{count + 1}I", raw, pos)
    pos += 4 * (count + 1)
    need = sum(o * i + o for i, o in zip(dims[:-1], dims[1:])) * 8
    if len(raw) != pos + need:
        raise CorruptFileError(f"model payload is {len(raw) - pos} bytes, header promises {need}")
    layers = []
    for i, o in zip(dims[:-1], dims[1:]):
        w = np.frombuffer(raw, dtype="<f8", count=o * i, offset=pos).reshape(o, i)
        pos += 8 * o * i
        b = np.frombuffer(raw, dtype="<f8", count=o, offset=pos)
        pos += 8 * o
        layers.append(Layer(w.astype(np.float64), b.astype(np.float64)))
    try:
        return SaeModel(dims, layers)
    except DimensionError as exc:
        raise CorruptFileError(f"invalid model geometry: {exc}") from exc


def save_model(model: SaeModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_model(model))


def load_model(path) -> SaeModel:
    with open(path, "rb") as fh:
        return deserialize_model(fh.read())


def model_id(model: SaeModel) -> int:
    """64-bit BLAKE2b fingerprint of the serialized model."""
    digest = hashlib.blake2b(serialize_model(model), digest_size=8).digest()
    return int.from_bytes(digest, "little")
