"""Convolutional window encoder and its contrastive pre-training loop."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import nn
from .augment import AugmentationSpec, default_menu
from .ingest import Window
from .pairing import CorpusIndex, PairingConfig, batch_from_pairs, build_pair_batch, materialize_pairs

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EncoderConfig:
    conv_blocks: int = 5
    embedding_dim: int = 256
    kernel: int = 5
    channels: tuple[int, ...] = (32, 64, 64, 128, 128)
    pool: int = 2
    projector_hidden: int = 256
    batch_pairs: int = 128
    steps: int = 2000
    lr: float = 1e-3
    seed: int = 0
    window_len: int = 300
    in_channels: int = 3
    log_every: int = 100
    checkpoint_every: int = 500

    def __post_init__(self):
        if self.conv_blocks < 1 or self.embedding_dim < 1:
            raise ValueError("conv_blocks and embedding_dim must be >= 1")
        if len(self.channels) < self.conv_blocks:
            raise ValueError(f"channels lists {len(self.channels)} entries for {self.conv_blocks} blocks")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        d = dict(d)
        if "channels" in d:
            d["channels"] = tuple(d["channels"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d


def encoder_net(cfg: EncoderConfig) -> list[nn.LayerSpec]:
    net = []
    c_in = cfg.in_channels
    for k in range(cfg.conv_blocks):
        c_out = cfg.channels[k]
        net += [nn.conv1d(f"enc.conv{k + 1}", c_in, c_out, cfg.kernel), nn.relu(), nn.maxpool1d(cfg.pool)]
        c_in = c_out
    try:
        length, channels = nn.output_shape(net, (cfg.window_len, cfg.in_channels))
    except nn.ShapeError as exc:
        raise ValueError(f"encoder config collapses the window: {exc}") from None
    net += [nn.flatten(), nn.dense("enc.embed", length * channels, cfg.embedding_dim)]
    return net


def build_encoder(cfg: EncoderConfig = EncoderConfig()) -> tuple[list[nn.LayerSpec], nn.ParamStore]:
    net = encoder_net(cfg)
    return net, nn.init_params(net, cfg.seed)


def projector_net(cfg: EncoderConfig) -> list[nn.LayerSpec]:
    d = cfg.embedding_dim
    return [nn.dense("proj.fc1", 2 * d, cfg.projector_hidden), nn.relu(), nn.dense("proj.fc2", cfg.projector_hidden, 2)]


def build_projector(cfg: EncoderConfig = EncoderConfig()) -> tuple[list[nn.LayerSpec], nn.ParamStore]:
    net = projector_net(cfg)
    return net, nn.init_params(net, cfg.seed + 1)


class PairProjector:
    """Projector applied to every ordered concatenation ``[e_i, e_j]``.

    Row ``i * M + j`` of the output scores the pair ``(i, j)``. The first
    dense layer is split into its two halves so the ``M^2 x 2d`` concatenated
    input is never materialized; the result equals running the projector net
    on the explicit concatenation.
    """

    def __init__(self, params: nn.ParamStore):
        self.params = params
        self._cache = None

    def forward(self, emb: np.ndarray) -> np.ndarray:
        p = self.params
        w1, b1 = p["proj.fc1.w"], p["proj.fc1.b"]
        w2, b2 = p["proj.fc2.w"], p["proj.fc2.b"]
        emb = np.asarray(emb, dtype=p.dtype)
        m, d = emb.shape
        left = emb @ w1[:d]
        right = emb @ w1[d:]
        pre = left[:, None, :] + right[None, :, :] + b1
        mask = pre > 0
        hidden = np.where(mask, pre, 0).astype(pre.dtype, copy=False).reshape(m * m, -1)
        logits = hidden @ w2 + b2
        self._cache = (emb, mask, hidden)
        return logits

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("PairProjector.backward without a preceding forward")
        emb, mask, hidden = self._cache
        self._cache = None
        p = self.params
        w1, w2 = p["proj.fc1.w"], p["proj.fc2.w"]
        m, d = emb.shape
        dlogits = np.asarray(dlogits, dtype=p.dtype)
        p.grads["proj.fc2.w"] += hidden.T @ dlogits
        p.grads["proj.fc2.b"] += dlogits.sum(axis=0)
        dpre = np.where(mask.reshape(m * m, -1), dlogits @ w2.T, 0).astype(p.dtype, copy=False).reshape(m, m, -1)
        dleft = dpre.sum(axis=1)
        dright = dpre.sum(axis=0)
        p.grads["proj.fc1.b"] += dleft.sum(axis=0)
        p.grads["proj.fc1.w"][:d] += emb.T @ dleft
        p.grads["proj.fc1.w"][d:] += emb.T @ dright
        return dleft @ w1[:d].T + dright @ w1[d:].T


def contrastive_loss_and_grads(enc_net, enc_params, proj_params, x, labels, weights):
    """Loss on one batch; gradients accumulate into both parameter stores."""
    emb, tape = nn.forward(enc_net, enc_params, x)
    projector = PairProjector(proj_params)
    logits = projector.forward(emb)
    loss, dlogits = nn.weighted_binary_softmax_xent(logits, labels.ravel(), weights.ravel())
    demb = projector.backward(dlogits)
    nn.backward(tape, demb)
    return loss


@dataclass
class PretrainResult:
    net: list
    params: nn.ParamStore
    log: list[tuple[int, float, float]] = field(default_factory=list)
    projector: nn.ParamStore | None = None
    config: EncoderConfig | None = None


def encoder_metadata(cfg: EncoderConfig, step: int) -> dict:
    return {"kind": "encoder", "encoder": cfg.to_dict(), "seed": cfg.seed, "step": step}


def save_encoder(path, cfg: EncoderConfig, params: nn.ParamStore) -> None:
    nn.save_params(path, params, encoder_metadata(cfg, params.step))


def load_encoder(path) -> tuple[list[nn.LayerSpec], nn.ParamStore, EncoderConfig]:
    params, meta = nn.load_params(path)
    if meta.get("kind") != "encoder":
        raise ValueError(f"{path} is not an encoder model")
    cfg = EncoderConfig.from_dict(meta["encoder"])
    params.freeze()
    return encoder_net(cfg), params, cfg


def pretrain(
    index: CorpusIndex,
    enc_cfg: EncoderConfig = EncoderConfig(),
    pairing_cfg: PairingConfig | None = None,
    aug_menu: Sequence[AugmentationSpec] | None = None,
    *,
    checkpoint_dir=None,
    materialize: bool = False,
    on_log: Callable[[int, float, float], None] | None = None,
) -> PretrainResult:
    """Contrastive pre-training of encoder and projector; returns the frozen encoder.

    ``pairing_cfg.batch_pairs`` is overridden by ``enc_cfg.batch_pairs``.
    """
    if pairing_cfg is None:
        pairing_cfg = PairingConfig(batch_pairs=enc_cfg.batch_pairs, seed=enc_cfg.seed)
    elif pairing_cfg.batch_pairs != enc_cfg.batch_pairs:
        pairing_cfg = PairingConfig(**{**asdict(pairing_cfg), "batch_pairs": enc_cfg.batch_pairs})
    menu = list(aug_menu) if aug_menu is not None else default_menu()
    net, params = build_encoder(enc_cfg)
    _, proj = build_projector(enc_cfg)
    adam = nn.AdamConfig(lr=enc_cfg.lr)
    history: list[tuple[int, float, float]] = []
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    last_ckpt = None
    root = np.random.SeedSequence([pairing_cfg.seed, 0x5EED])
    pairs = None
    if materialize and enc_cfg.steps:
        pairs = materialize_pairs(index, pairing_cfg, menu, enc_cfg.steps * enc_cfg.batch_pairs, np.random.default_rng(root))
    t_start = time.perf_counter()
    window_losses = []
    for step in range(1, enc_cfg.steps + 1):
        # one independent stream per step keeps batches reproducible in isolation
        rng = np.random.default_rng(np.random.SeedSequence([pairing_cfg.seed, step]))
        if pairs is not None:
            b = enc_cfg.batch_pairs
            batch = batch_from_pairs(pairs[(step - 1) * b : step * b])
        else:
            batch = build_pair_batch(index, pairing_cfg, menu, rng)
        loss = contrastive_loss_and_grads(net, params, proj, batch.stacked(), batch.labels, batch.weights)
        if not math.isfinite(loss):
            raise nn.NumericError(f"non-finite loss at step {step}; last checkpoint: {last_ckpt}")
        nn.optimizer_step(params, adam)
        nn.optimizer_step(proj, adam)
        window_losses.append(loss)
        if step % enc_cfg.log_every == 0 or step == enc_cfg.steps:
            wall_ms = (time.perf_counter() - t_start) * 1000.0
            mean_loss = float(np.mean(window_losses))
            window_losses = []
            history.append((step, mean_loss, wall_ms))
            log.info("pretrain step %d loss %.5f", step, mean_loss)
            if on_log is not None:
                on_log(step, mean_loss, wall_ms)
        if ckpt_dir is not None and enc_cfg.checkpoint_every and step % enc_cfg.checkpoint_every == 0:
            ckpt_dir.mkdir(parents=True, exist_ok=True)
            last_ckpt = ckpt_dir / f"encoder-step{step:07d}.model"
            save_encoder(last_ckpt, enc_cfg, params)
    params.freeze()
    return PretrainResult(net, params, history, proj, enc_cfg)


def write_training_log(path, history: Sequence[tuple[int, float, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "loss", "wall_ms"])
        for step, loss, wall in history:
            w.writerow([step, f"{loss:.6f}", f"{wall:.1f}"])


def embed(
    net, params: nn.ParamStore, windows: Sequence[Window] | np.ndarray, batch_size: int = 256, window_len: int | None = 300
) -> np.ndarray:
    """``(N, d)`` float32 embeddings; parameters are only read.

    ``window_len`` is the expected number of samples per window (``None`` skips the check).
    """
    if isinstance(windows, np.ndarray):
        x = windows
    else:
        x = np.stack([w.samples for w in windows]) if len(windows) else np.zeros((0, 300, 3), np.float32)
    in_layer = net[0]
    if x.ndim != 3 or x.shape[2] != in_layer.in_size:
        raise ValueError(f"expected windows of shape (n, 3), got batch {x.shape}")
    if window_len is not None and x.shape[1] != window_len:
        raise ValueError(f"windows have {x.shape[1]} samples, encoder expects {window_len}")
    try:
        nn.output_shape(net, tuple(x.shape[1:]))
    except nn.ShapeError as exc:
        raise ValueError(f"window shape {x.shape[1:]} does not fit the encoder: {exc}") from None
    d = net[-1].out_size
    out = np.empty((len(x), d), dtype=np.float32)
    for start in range(0, len(x), batch_size):
        y, _ = nn.forward(net, params, x[start : start + batch_size], record=False)
        out[start : start + batch_size] = y
    return out
