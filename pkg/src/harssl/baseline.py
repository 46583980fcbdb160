"""Statistical benchmark: 8 per-window statistics and a one-layer perceptron."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import nn
from .head import HeadConfig, class_weights, fit_classifier
from .ingest import Window

FEATURE_NAMES = ("mean_x", "mean_y", "mean_z", "std_x", "std_y", "std_z", "mean_norm", "std_norm")


class StatFeatures(NamedTuple):
    mean_x: float
    mean_y: float
    mean_z: float
    std_x: float
    std_y: float
    std_z: float
    mean_norm: float
    std_norm: float


def _stats(samples: np.ndarray) -> np.ndarray:
    a = np.asarray(samples, dtype=np.float64)
    norm = np.sqrt((a * a).sum(axis=-1))
    # population (1/N) standard deviation
    return np.concatenate(
        [a.mean(axis=-2), a.std(axis=-2), norm.mean(axis=-1)[..., None], norm.std(axis=-1)[..., None]], axis=-1
    )


def stat_features(w: Window) -> StatFeatures:
    return StatFeatures(*(float(v) for v in _stats(w.samples)))


def feature_matrix(windows: Sequence[Window]) -> np.ndarray:
    if not len(windows):
        return np.zeros((0, 8))
    return _stats(np.stack([w.samples for w in windows]))


@dataclass(frozen=True)
class ProbeConfig:
    epochs: int = 200
    lr: float = 1e-2
    batch_size: int = 256
    imbalance_cap: float = 5.0
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "ProbeConfig":
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LinearProbe:
    """Z-scored features into a single dense layer."""

    net: list
    params: nn.ParamStore
    mean: np.ndarray
    scale: np.ndarray

    def logits(self, features: np.ndarray) -> np.ndarray:
        z = (np.asarray(features, dtype=np.float64) - self.mean) / self.scale
        out, _ = nn.forward(self.net, self.params, z.astype(np.float32), record=False)
        return out

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(features), axis=1)


def train_linear_probe(features: np.ndarray, labels: np.ndarray, num_classes: int, cfg: ProbeConfig = ProbeConfig()) -> LinearProbe:
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if len(x) == 0:
        raise ValueError("no training features")
    # rounded to float32 so a saved model reproduces the same transform
    mean = x.mean(axis=0).astype(np.float32).astype(np.float64)
    scale = x.std(axis=0).astype(np.float32).astype(np.float64)
    scale[scale == 0] = 1.0
    z = ((x - mean) / scale).astype(np.float32)
    net = [nn.dense("probe.fc", x.shape[1], num_classes)]
    params = nn.init_params(net, cfg.seed)
    weights = class_weights(np.bincount(y, minlength=num_classes), cfg.imbalance_cap)
    fit_cfg = HeadConfig(num_classes=max(num_classes, 2), epochs=cfg.epochs, lr=cfg.lr, batch_size=cfg.batch_size, seed=cfg.seed)
    fit_classifier(net, params, z, y, fit_cfg, weights)
    return LinearProbe(net, params, mean, scale)


def train_baseline(features: np.ndarray, labels: np.ndarray, num_classes: int, cfg: ProbeConfig = ProbeConfig()) -> LinearProbe:
    """The benchmark model: a linear probe over the 8 statistics."""
    features = np.asarray(features)
    if features.ndim != 2 or features.shape[1] != len(FEATURE_NAMES):
        raise ValueError(f"expected (n, {len(FEATURE_NAMES)}) features, got {features.shape}")
    return train_linear_probe(features, labels, num_classes, cfg)


def save_probe(path, probe: LinearProbe, cfg: ProbeConfig, class_names: Sequence[str]) -> None:
    store = probe.params.copy()
    store.add("zscore.mean", probe.mean.astype(np.float32))
    store.add("zscore.scale", probe.scale.astype(np.float32))
    meta = {"kind": "probe", "probe": cfg.to_dict(), "class_names": list(class_names), "seed": cfg.seed, "step": store.step}
    nn.save_params(path, store, meta)


def load_probe(path):
    """Returns ``(probe, cfg, class_names)``."""
    store, meta = nn.load_params(path)
    if meta.get("kind") != "probe":
        raise ValueError(f"{path} is not a probe model")
    mean = store.params.pop("zscore.mean").astype(np.float64)
    scale = store.params.pop("zscore.scale").astype(np.float64)
    store.grads.pop("zscore.mean")
    store.grads.pop("zscore.scale")
    w = store["probe.fc.w"]
    net = [nn.dense("probe.fc", w.shape[0], w.shape[1])]
    return LinearProbe(net, store, mean, scale), ProbeConfig.from_dict(meta["probe"]), meta["class_names"]
