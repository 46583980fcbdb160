"""Small deterministic network kernel.

Layers operate on numpy arrays. Sequence tensors are channels-last,
``(batch, length, channels)``; dense tensors are ``(batch, features)``.
``forward`` records a :class:`Tape` that ``backward`` consumes exactly once.

The default dtype is float32. Passing a float64 ``ParamStore`` (see
:meth:`ParamStore.astype`) runs the same code in float64, which is what the
gradient checks use.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LAYER_KINDS = ("conv1d", "dense", "relu", "maxpool1d", "flatten", "softmax")

PARAM_MAGIC = b"HARSSL01"
PARAM_FORMAT_VERSION = 1


class ShapeError(ValueError):
    """Raised when a tensor does not fit the layer it is fed to."""


class NumericError(FloatingPointError):
    """Raised on NaN/Inf in losses or gradients."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    name: str = ""
    in_size: int = 0
    out_size: int = 0
    kernel: int = 1
    stride: int = 1
    padding: str = "same"

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")

    @property
    def trainable(self) -> bool:
        return self.kind in ("conv1d", "dense")


def conv1d(name, in_channels, out_channels, kernel=5, stride=1, padding="same"):
    return LayerSpec("conv1d", name, in_channels, out_channels, kernel, stride, padding)


def dense(name, n_in, n_out):
    return LayerSpec("dense", name, n_in, n_out)


def relu(name=""):
    return LayerSpec("relu", name)


def maxpool1d(size=2, name=""):
    return LayerSpec("maxpool1d", name, kernel=size, stride=size)


def flatten(name=""):
    return LayerSpec("flatten", name)


def softmax(name=""):
    return LayerSpec("softmax", name)


def _conv_pads(layer: LayerSpec) -> tuple[int, int]:
    if layer.padding == "same":
        total = layer.kernel - 1
        return total // 2, total - total // 2
    if layer.padding == "valid":
        return 0, 0
    raise ValueError(f"layer {layer.name!r}: unknown padding {layer.padding!r}")


def layer_output_shape(layer: LayerSpec, shape: tuple[int, ...]) -> tuple[int, ...]:
    """Per-example output shape of ``layer`` for per-example input ``shape``."""
    label = layer.name or layer.kind
    if layer.kind == "conv1d":
        if len(shape) != 2 or shape[1] != layer.in_size:
            raise ShapeError(f"layer {label!r} expects (length, {layer.in_size}), got {shape}")
        left, right = _conv_pads(layer)
        n_out = (shape[0] + left + right - layer.kernel) // layer.stride + 1
        if n_out < 1:
            raise ShapeError(f"layer {label!r} reduces length {shape[0]} to {n_out}")
        return (n_out, layer.out_size)
    if layer.kind == "maxpool1d":
        if len(shape) != 2:
            raise ShapeError(f"layer {label!r} expects a sequence input, got {shape}")
        n_out = shape[0] // layer.kernel
        if n_out < 1:
            raise ShapeError(f"layer {label!r} reduces length {shape[0]} to 0")
        return (n_out, shape[1])
    if layer.kind == "flatten":
        return (int(np.prod(shape)),)
    if layer.kind == "dense":
        if len(shape) != 1 or shape[0] != layer.in_size:
            raise ShapeError(f"layer {label!r} expects ({layer.in_size},), got {shape}")
        return (layer.out_size,)
    return tuple(shape)


def output_shape(net: list[LayerSpec], shape: tuple[int, ...]) -> tuple[int, ...]:
    for layer in net:
        shape = layer_output_shape(layer, tuple(shape))
    return tuple(shape)


class ParamStore:
    """Ordered named parameters with gradients and optimizer state."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.step = 0
        self.frozen = False
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._moments: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self.params:
            raise KeyError(f"duplicate parameter name {name!r}")
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    @property
    def dtype(self):
        for value in self.params.values():
            return value.dtype
        return np.dtype(np.float32)

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0)

    def copy(self) -> "ParamStore":
        out = ParamStore(self.seed)
        out.step = self.step
        out.frozen = self.frozen
        for name, value in self.params.items():
            out.add(name, value.copy())
            out.grads[name][...] = self.grads[name]
        out._moments = {k: (m.copy(), v.copy()) for k, (m, v) in self._moments.items()}
        return out

    def astype(self, dtype) -> "ParamStore":
        """Copy with every tensor cast to ``dtype`` (optimizer state dropped)."""
        out = ParamStore(self.seed)
        out.step = self.step
        out.frozen = self.frozen
        for name, value in self.params.items():
            out.add(name, value.astype(dtype))
        return out

    def subset(self, prefix: str) -> "ParamStore":
        out = ParamStore(self.seed)
        out.step = self.step
        for name, value in self.params.items():
            if name.startswith(prefix):
                out.add(name, value.copy())
        return out

    def freeze(self) -> "ParamStore":
        self.frozen = True
        for value in self.params.values():
            value.flags.writeable = False
        return self

    def equal(self, other: "ParamStore") -> bool:
        """Bit-level equality of names, shapes, dtypes and values."""
        if list(self.params) != list(other.params):
            return False
        for name, value in self.params.items():
            o = other.params[name]
            if value.dtype != o.dtype or value.shape != o.shape:
                return False
            if value.tobytes() != o.tobytes():
                return False
        return True


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_params(net: list[LayerSpec], seed: int, store: ParamStore | None = None) -> ParamStore:
    """Glorot-uniform weights, zero biases, drawn in layer order from ``seed``."""
    rng = np.random.default_rng(seed)
    store = store if store is not None else ParamStore(seed)
    for layer in net:
        if layer.kind == "conv1d":
            fan_in = layer.in_size * layer.kernel
            fan_out = layer.out_size * layer.kernel
            shape = (layer.kernel, layer.in_size, layer.out_size)
        elif layer.kind == "dense":
            fan_in, fan_out = layer.in_size, layer.out_size
            shape = (layer.in_size, layer.out_size)
        else:
            continue
        bound = glorot_bound(fan_in, fan_out)
        store.add(f"{layer.name}.w", rng.uniform(-bound, bound, size=shape).astype(np.float32))
        store.add(f"{layer.name}.b", np.zeros(layer.out_size, dtype=np.float32))
    return store


# ---------------------------------------------------------------------------
# layer kernels

def _conv_patches(x, layer):
    left, right = _conv_pads(layer)
    xp = np.pad(x, ((0, 0), (left, right), (0, 0))) if left or right else x
    # (N, positions, C, K) -> (N, Lout, K, C)
    win = sliding_window_view(xp, layer.kernel, axis=1)[:, :: layer.stride]
    return xp.shape, win.transpose(0, 1, 3, 2)


def _conv_forward(x, w, b, layer):
    padded_shape, patches = _conv_patches(x, layer)
    n, n_out = patches.shape[:2]
    cols = patches.reshape(n * n_out, -1)
    y = cols @ w.reshape(-1, w.shape[2]) + b
    return y.reshape(n, n_out, -1), (cols, padded_shape, n_out)


def _conv_backward(dy, w, layer, cache):
    cols, padded_shape, n_out = cache
    n = dy.shape[0]
    dy2 = dy.reshape(n * n_out, -1)
    dw = (cols.T @ dy2).reshape(w.shape)
    db = dy2.sum(axis=0)
    dcols = (dy2 @ w.reshape(-1, w.shape[2]).T).reshape(n, n_out, layer.kernel, -1)
    dxp = np.zeros(padded_shape, dtype=dy.dtype)
    span = (n_out - 1) * layer.stride + 1
    for k in range(layer.kernel):
        dxp[:, k : k + span : layer.stride] += dcols[:, :, k]
    left, right = _conv_pads(layer)
    dx = dxp[:, left : padded_shape[1] - right]
    return dx, dw, db


def _pool_forward(x, size):
    n_out = x.shape[1] // size
    span = n_out * size
    y = x[:, 0:span:size].copy()
    idx = np.zeros(y.shape, dtype=np.int8)
    for k in range(1, size):
        cand = x[:, k:span:size]
        better = cand > y  # ties keep the earliest position
        y[better] = cand[better]
        idx[better] = k
    return y, (x.shape, idx)


def _pool_backward(dy, size, cache):
    shape, idx = cache
    n_out = dy.shape[1]
    span = n_out * size
    dx = np.zeros(shape, dtype=dy.dtype)
    for k in range(size):
        dx[:, k:span:size] = np.where(idx == k, dy, 0)
    return dx


def softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Tape:
    """Per-layer caches from one ``forward`` call; consumed by ``backward``."""

    def __init__(self, net, params, input_shape):
        self.net = net
        self.params = params
        self.input_shape = input_shape
        self.caches: list = []
        self.consumed = False


def forward(net: list[LayerSpec], params: ParamStore, x: np.ndarray, *, record: bool = True):
    """Run ``net`` on batch ``x``; returns ``(output, tape)``.

    With ``record=False`` no caches are kept and the tape is ``None``.
    """
    dtype = params.dtype
    x = np.asarray(x, dtype=dtype)
    expected = tuple(x.shape[1:])
    for layer in net:
        expected = layer_output_shape(layer, expected)  # raises with the layer name
    tape = Tape(net, params, x.shape) if record else None
    for layer in net:
        cache = None
        if layer.kind == "conv1d":
            x, cache = _conv_forward(x, params[f"{layer.name}.w"], params[f"{layer.name}.b"], layer)
        elif layer.kind == "dense":
            cache = x
            x = x @ params[f"{layer.name}.w"] + params[f"{layer.name}.b"]
        elif layer.kind == "relu":
            cache = x > 0
            x = np.where(cache, x, 0).astype(dtype, copy=False)
        elif layer.kind == "maxpool1d":
            x, cache = _pool_forward(x, layer.kernel)
        elif layer.kind == "flatten":
            cache = x.shape
            x = x.reshape(x.shape[0], -1)
        elif layer.kind == "softmax":
            x = softmax_rows(x)
            cache = x
        if record:
            tape.caches.append(cache)
    return x, tape


def backward(tape: Tape | None, upstream: np.ndarray) -> np.ndarray:
    """Accumulate parameter gradients into ``tape.params.grads``.

    Returns the gradient with respect to the network input.
    """
    if tape is None:
        raise RuntimeError("backward called without a tape (was forward run with record=False?)")
    if tape.consumed:
        raise RuntimeError("tape already consumed; run forward again before a second backward")
    tape.consumed = True
    params = tape.params
    g = np.asarray(upstream, dtype=params.dtype)
    for layer, cache in zip(reversed(tape.net), reversed(tape.caches)):
        if layer.kind == "conv1d":
            w = params[f"{layer.name}.w"]
            g, dw, db = _conv_backward(g, w, layer, cache)
            params.grads[f"{layer.name}.w"] += dw
            params.grads[f"{layer.name}.b"] += db
        elif layer.kind == "dense":
            w = params[f"{layer.name}.w"]
            params.grads[f"{layer.name}.w"] += cache.T @ g
            params.grads[f"{layer.name}.b"] += g.sum(axis=0)
            g = g @ w.T
        elif layer.kind == "relu":
            g = np.where(cache, g, 0).astype(g.dtype, copy=False)
        elif layer.kind == "maxpool1d":
            g = _pool_backward(g, layer.kernel, cache)
        elif layer.kind == "flatten":
            g = g.reshape(cache)
        elif layer.kind == "softmax":
            s = cache
            g = s * (g - (g * s).sum(axis=-1, keepdims=True))
    tape.caches = []
    return g


# ---------------------------------------------------------------------------
# losses

def _weighted_xent(logits, labels, sample_weights):
    logits = np.asarray(logits)
    labels = np.asarray(labels).astype(np.int64).ravel()
    w = np.asarray(sample_weights, dtype=np.float64).ravel()
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0] or w.shape[0] != labels.shape[0]:
        raise ShapeError(f"logits {logits.shape}, labels {labels.shape}, weights {w.shape} disagree")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ValueError("label out of range")
    total = w.sum()
    if not total > 0:
        raise ValueError("sum of weights is zero")
    z = logits.astype(np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("non-finite logits")
    rows = np.arange(labels.size)
    top = z.argmax(axis=1)
    shifted = z - z[rows, top][:, None]
    e = np.exp(shifted)
    # log-sum-exp minus the max term, so the 1 + tiny case keeps its precision
    rest = e.sum(axis=1) - 1.0
    nll = np.log1p(rest) - shifted[rows, labels]
    loss = float((w * nll).sum() / total)
    probs = e / (1.0 + rest)[:, None]
    probs[rows, labels] -= 1.0
    grad = probs * (w / total)[:, None]
    return loss, grad.astype(logits.dtype if logits.dtype.kind == "f" else np.float32)


def weighted_binary_softmax_xent(logits, labels, weights):
    """Weighted mean of ``-log softmax(logits)[label]`` over rows.

    ``logits`` has shape ``(N, 2)``. Returns ``(loss, dloss/dlogits)``.
    """
    logits = np.asarray(logits)
    if logits.ndim != 2 or logits.shape[1] != 2:
        raise ShapeError(f"binary logits must be (N, 2), got {logits.shape}")
    labels = np.asarray(labels).ravel()
    if labels.size and not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0 or 1")
    return _weighted_xent(logits, labels, weights)


def categorical_xent(logits, labels, class_weights=None):
    """Class-weighted categorical cross-entropy; returns ``(loss, grad)``."""
    logits = np.asarray(logits)
    labels = np.asarray(labels).astype(np.int64).ravel()
    if class_weights is None:
        sample_weights = np.ones(labels.size)
    else:
        cw = np.asarray(class_weights, dtype=np.float64)
        if cw.shape != (logits.shape[1],):
            raise ShapeError(f"class_weights must have {logits.shape[1]} entries")
        sample_weights = cw[labels]
    return _weighted_xent(logits, labels, sample_weights)


# ---------------------------------------------------------------------------
# optimizer

@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def optimizer_step(params: ParamStore, cfg: AdamConfig = AdamConfig()) -> None:
    """One bias-corrected Adam update; zeroes gradients afterwards."""
    if params.frozen:
        raise RuntimeError("parameter store is frozen")
    for name, g in params.grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name!r}")
    params.step += 1
    t = params.step
    dtype = params.dtype
    c1 = 1.0 - cfg.beta1**t
    c2 = 1.0 - cfg.beta2**t
    for name, value in params.params.items():
        g = params.grads[name]
        if name not in params._moments:
            params._moments[name] = (np.zeros_like(value), np.zeros_like(value))
        m, v = params._moments[name]
        m *= dtype.type(cfg.beta1)
        m += dtype.type(1.0 - cfg.beta1) * g
        v *= dtype.type(cfg.beta2)
        v += dtype.type(1.0 - cfg.beta2) * (g * g)
        m_hat = m / dtype.type(c1)
        v_hat = v / dtype.type(c2)
        value -= dtype.type(cfg.lr) * m_hat / (np.sqrt(v_hat) + dtype.type(cfg.eps))
        g.fill(0)


# ---------------------------------------------------------------------------
# serialization

def _write_params(fh: BinaryIO, params: ParamStore, metadata: dict | None) -> None:
    meta = json.dumps(metadata or {}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    fh.write(PARAM_MAGIC)
    fh.write(struct.pack("<HI", PARAM_FORMAT_VERSION, len(meta)))
    fh.write(meta)
    fh.write(struct.pack("<I", len(params.params)))
    for name, value in params.params.items():
        raw = name.encode("utf-8")
        fh.write(struct.pack("<H", len(raw)))
        fh.write(raw)
        fh.write(struct.pack("<B", value.ndim))
        fh.write(struct.pack(f"<{value.ndim}I", *value.shape))
        fh.write(np.ascontiguousarray(value, dtype="<f4").tobytes())


def params_to_bytes(params: ParamStore, metadata: dict | None = None) -> bytes:
    buf = io.BytesIO()
    _write_params(buf, params, metadata)
    return buf.getvalue()


def save_params(path, params: ParamStore, metadata: dict | None = None) -> None:
    Path(path).write_bytes(params_to_bytes(params, metadata))


def _read_exact(fh, n):
    data = fh.read(n)
    if len(data) != n:
        raise ValueError("truncated parameter file")
    return data


def params_from_bytes(data: bytes) -> tuple[ParamStore, dict]:
    fh = io.BytesIO(data)
    if _read_exact(fh, 8) != PARAM_MAGIC:
        raise ValueError("not a parameter file (bad magic)")
    version, meta_len = struct.unpack("<HI", _read_exact(fh, 6))
    if version != PARAM_FORMAT_VERSION:
        raise ValueError(f"unsupported parameter format version {version}")
    metadata = json.loads(_read_exact(fh, meta_len).decode("utf-8"))
    (count,) = struct.unpack("<I", _read_exact(fh, 4))
    store = ParamStore(int(metadata.get("seed", 0)))
    store.step = int(metadata.get("step", 0))
    for _ in range(count):
        (n,) = struct.unpack("<H", _read_exact(fh, 2))
        name = _read_exact(fh, n).decode("utf-8")
        (ndim,) = struct.unpack("<B", _read_exact(fh, 1))
        dims = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim))
        size = int(np.prod(dims)) if ndim else 1
        value = np.frombuffer(_read_exact(fh, 4 * size), dtype="<f4").astype(np.float32).reshape(dims)
        store.add(name, value)
    if fh.read(1):
        raise ValueError("trailing bytes in parameter file")
    return store, metadata


def load_params(path) -> tuple[ParamStore, dict]:
    return params_from_bytes(Path(path).read_bytes())


def iter_trainable(net: Iterable[LayerSpec]):
    for layer in net:
        if layer.trainable:
            yield layer
