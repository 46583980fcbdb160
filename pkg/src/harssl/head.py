"""Activity classification head on frozen embeddings, with temporal logit smoothing."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import nn
from .encoder import embed
from .ingest import Window

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HeadConfig:
    num_classes: int = 2
    layers: int = 5
    units: int = 128
    imbalance_cap: float = 5.0
    smoothing_seconds: float = 120.0
    smoothing_mode: str = "mean"  # or "median"
    smoothing_align: str = "centered"  # or "trailing"
    segment_gap: float = 20.0
    epochs: int = 100
    lr: float = 1e-3
    batch_size: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.imbalance_cap < 1:
            raise ValueError("imbalance_cap must be >= 1")
        if self.smoothing_mode not in ("mean", "median"):
            raise ValueError(f"unknown smoothing_mode {self.smoothing_mode!r}")
        if self.smoothing_align not in ("centered", "trailing"):
            raise ValueError(f"unknown smoothing_align {self.smoothing_align!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "HeadConfig":
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


class LabeledEmbedding(NamedTuple):
    embedding: np.ndarray
    label: int
    subject_id: str
    start_time: float


def stack_labeled(items: Sequence[LabeledEmbedding]) -> tuple[np.ndarray, np.ndarray]:
    """``(embeddings, labels)`` arrays for ``train_head``."""
    if not items:
        raise ValueError("no labeled embeddings")
    x = np.stack([np.asarray(e.embedding, dtype=np.float32) for e in items])
    return x, np.array([e.label for e in items], dtype=np.int64)


def class_weights(counts: Sequence[int], cap: float = 5.0) -> np.ndarray:
    """Smallest per-class weights lifting every class to ``max_count / cap``.

    Zero-count classes get weight 0.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    present = counts > 0
    if present.sum() < 2:
        raise ValueError("class weighting needs at least two non-empty classes")
    if not present.all():
        log.warning("classes %s have no examples; weight 0", np.flatnonzero(~present).tolist())
    target = counts.max() / cap
    weights = np.zeros_like(counts)
    weights[present] = np.maximum(1.0, target / counts[present])
    return weights.astype(np.float32)


def head_net(cfg: HeadConfig, input_dim: int) -> list[nn.LayerSpec]:
    net = []
    n_in = input_dim
    for k in range(cfg.layers - 1):
        net += [nn.dense(f"head.fc{k + 1}", n_in, cfg.units), nn.relu()]
        n_in = cfg.units
    net.append(nn.dense(f"head.fc{cfg.layers}", n_in, cfg.num_classes))
    return net


def fit_classifier(net, params, x, y, cfg: HeadConfig, weights: np.ndarray) -> list[tuple[int, float]]:
    """Mini-batch Adam on class-weighted cross-entropy; returns (epoch, mean loss)."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x4EAD]))
    adam = nn.AdamConfig(lr=cfg.lr)
    history = []
    n = len(x)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if weights[y[idx]].sum() == 0:
                continue
            logits, tape = nn.forward(net, params, x[idx])
            loss, grad = nn.categorical_xent(logits, y[idx], weights)
            nn.backward(tape, grad)
            nn.optimizer_step(params, adam)
            losses.append(loss)
        history.append((epoch, float(np.mean(losses)) if losses else float("nan")))
    return history


def train_head(embeddings: np.ndarray, labels: np.ndarray, cfg: HeadConfig):
    """Returns ``(net, params, history)``; class weights apply in training only."""
    x = np.asarray(embeddings, dtype=np.float32)
    y = np.asarray(labels, dtype=np.int64)
    if len(x) == 0:
        raise ValueError("no training embeddings")
    if y.min() < 0 or y.max() >= cfg.num_classes:
        raise ValueError("label outside [0, num_classes)")
    counts = np.bincount(y, minlength=cfg.num_classes)
    weights = class_weights(counts, cfg.imbalance_cap)
    net = head_net(cfg, x.shape[1])
    params = nn.init_params(net, cfg.seed)
    history = fit_classifier(net, params, x, y, cfg, weights)
    return net, params, history


def head_logits(net, params, embeddings: np.ndarray) -> np.ndarray:
    out, _ = nn.forward(net, params, embeddings, record=False)
    return out


def smooth_logits(times: Sequence[float], logits: np.ndarray, cfg: HeadConfig = HeadConfig()) -> np.ndarray:
    """Average logits over ``cfg.smoothing_seconds`` around each entry.

    ``times`` are sorted window start times of one subject. The centered
    window covers ``[t - w/2, t + w/2)``, the trailing one ``(t - w, t]``;
    neither crosses a gap longer than ``cfg.segment_gap``.
    """
    t = np.asarray(times, dtype=np.float64)
    z = np.asarray(logits, dtype=np.float64)
    if len(t) != len(z):
        raise ValueError("times and logits differ in length")
    if len(t) > 1 and np.any(np.diff(t) < 0):
        raise ValueError("times must be sorted")
    w = cfg.smoothing_seconds
    if w <= 0 or len(t) <= 1:
        return z.copy()
    seg = np.concatenate([[0], np.cumsum(np.diff(t) > cfg.segment_gap)])
    out = np.empty_like(z)
    for i in range(len(t)):
        if cfg.smoothing_align == "centered":
            lo = np.searchsorted(t, t[i] - w / 2, side="left")
            hi = np.searchsorted(t, t[i] + w / 2, side="left")
        else:
            lo = np.searchsorted(t, t[i] - w, side="right")
            hi = i + 1
        idx = np.arange(lo, hi)
        idx = idx[seg[idx] == seg[i]]
        block = z[idx]
        if cfg.smoothing_mode == "mean":
            # offsets from the entry itself keep constant runs exact fixed points
            out[i] = z[i] + (block - z[i]).mean(axis=0)
        else:
            out[i] = np.median(block, axis=0)
    return out


class Prediction(NamedTuple):
    subject_id: str
    start_time: float
    pred_class: int
    logits: np.ndarray


def predict_from_logits(windows: Sequence[Window], logits: np.ndarray, cfg: HeadConfig) -> list[Prediction]:
    """Per-subject smoothing then argmax (ties go to the lowest class id)."""
    by_subject: dict[str, list[int]] = {}
    for i, w in enumerate(windows):
        by_subject.setdefault(w.subject_id, []).append(i)
    out = []
    for subject in sorted(by_subject):
        idx = sorted(by_subject[subject], key=lambda i: windows[i].start_time)
        times = [windows[i].start_time for i in idx]
        smoothed = smooth_logits(times, logits[idx], cfg)
        for row, i in enumerate(idx):
            out.append(Prediction(subject, windows[i].start_time, int(np.argmax(smoothed[row])), smoothed[row]))
    return out


def predict(enc_net, enc_params, net, params, windows: Sequence[Window], cfg: HeadConfig) -> list[Prediction]:
    emb = embed(enc_net, enc_params, windows)
    return predict_from_logits(windows, head_logits(net, params, emb), cfg)


def save_head(path, cfg: HeadConfig, params: nn.ParamStore, input_dim: int, class_names: Sequence[str]) -> None:
    meta = {
        "kind": "head",
        "head": cfg.to_dict(),
        "input_dim": input_dim,
        "class_names": list(class_names),
        "seed": cfg.seed,
        "step": params.step,
    }
    nn.save_params(path, params, meta)


def load_head(path):
    """Returns ``(net, params, cfg, class_names)``."""
    params, meta = nn.load_params(path)
    if meta.get("kind") != "head":
        raise ValueError(f"{path} is not a head model")
    cfg = HeadConfig.from_dict(meta["head"])
    params.freeze()
    return head_net(cfg, meta["input_dim"]), params, cfg, meta["class_names"]
