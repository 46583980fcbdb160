"""Coincidence pairs and the per-batch label/weight matrices.

A batch holds ``2b`` windows where rows ``k`` and ``k + b`` form the sampled
positive pair. Every ordered cell ``(i, j)`` of the ``2b x 2b`` grid is
scored: positive cells get weight 1, identity cells weight 0, and the
remaining random combinations are treated as negatives with weight
``1 / (2b - 2)`` so both classes carry a total weight of ``2b``.
"""

from __future__ import annotations

import json
from bisect import bisect_left, bisect_right
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .augment import AugmentationSpec, make_augmented_pair
from .ingest import Window


@dataclass(frozen=True)
class PairingConfig:
    delta_t_max: float = 60.0
    batch_pairs: int = 128
    aug_fraction: float = 0.5
    compose_prob: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if not self.delta_t_max > 0:
            raise ValueError("delta_t_max must be > 0")
        if self.batch_pairs < 2:
            raise ValueError("batch_pairs must be >= 2")
        if not 0.0 <= self.aug_fraction <= 1.0:
            raise ValueError("aug_fraction must lie in [0, 1]")


class CorpusIndex:
    """Read-only subject -> time-sorted windows lookup for pair sampling."""

    def __init__(self, windows: Sequence[Window], delta_t_max: float = 60.0):
        by_subject: dict[str, list[Window]] = defaultdict(list)
        for w in windows:
            by_subject[w.subject_id].append(w)
        self.delta_t_max = delta_t_max
        self.subjects = sorted(by_subject)
        self.windows = {s: sorted(by_subject[s], key=lambda w: w.start_time) for s in self.subjects}
        self.times = {s: [w.start_time for w in self.windows[s]] for s in self.subjects}
        self.n_windows = sum(len(v) for v in self.windows.values())
        # anchors that have at least one partner in (0, delta_t_max]
        self.anchors: dict[str, list[int]] = {}
        for s in self.subjects:
            eligible = [i for i in range(len(self.times[s])) if self._partners(s, i)]
            if eligible:
                self.anchors[s] = eligible
        self.temporal_subjects = [s for s in self.subjects if s in self.anchors]

    def _partners(self, subject: str, i: int) -> list[int]:
        t = self.times[subject]
        lo = bisect_left(t, t[i] - self.delta_t_max)
        hi = bisect_right(t, t[i] + self.delta_t_max)
        return [j for j in range(lo, hi) if t[j] != t[i]]

    def partners(self, subject: str, i: int) -> list[int]:
        return self._partners(subject, i)


def build_corpus_index(windows: Sequence[Window], delta_t_max: float = 60.0) -> CorpusIndex:
    if not windows:
        raise ValueError("cannot index an empty corpus")
    return CorpusIndex(windows, delta_t_max)


def sample_temporal_pair(index: CorpusIndex, cfg: PairingConfig, rng: np.random.Generator) -> tuple[Window, Window]:
    """Same-subject pair with ``0 < |dt| <= delta_t_max``.

    Sampling is subject first, then anchor, then partner, each uniform.
    """
    if index.delta_t_max != cfg.delta_t_max:
        raise ValueError("corpus index was built with a different delta_t_max")
    if not index.temporal_subjects:
        raise ValueError(
            f"no subject has two windows within {cfg.delta_t_max} s "
            f"({len(index.subjects)} subjects, {index.n_windows} windows)"
        )
    s = index.temporal_subjects[int(rng.integers(0, len(index.temporal_subjects)))]
    anchors = index.anchors[s]
    i = anchors[int(rng.integers(0, len(anchors)))]
    partners = index.partners(s, i)
    j = partners[int(rng.integers(0, len(partners)))]
    return index.windows[s][i], index.windows[s][j]


def sample_window(index: CorpusIndex, rng: np.random.Generator) -> Window:
    s = index.subjects[int(rng.integers(0, len(index.subjects)))]
    ws = index.windows[s]
    return ws[int(rng.integers(0, len(ws)))]


def pair_matrices(b: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form ``(labels, weights)`` for a batch of ``b`` pairs."""
    if b < 2:
        raise ValueError("b must be >= 2")
    n = 2 * b
    idx = np.arange(n)
    partner = (idx + b) % n
    labels = np.zeros((n, n), dtype=np.int8)
    labels[idx, idx] = 1
    labels[idx, partner] = 1
    weights = np.full((n, n), 1.0 / (2 * b - 2))
    weights[idx, idx] = 0.0
    weights[idx, partner] = 1.0
    return labels, weights


@dataclass
class PairBatch:
    windows: list[Window]
    labels: np.ndarray
    weights: np.ndarray
    kinds: list[str] = field(default_factory=list)

    @property
    def b(self) -> int:
        return len(self.windows) // 2

    def stacked(self) -> np.ndarray:
        return np.stack([w.samples for w in self.windows]).astype(np.float32)

    def to_json(self) -> str:
        b = self.b
        pairs = []
        for k in range(b):
            a, p = self.windows[k], self.windows[k + b]
            pairs.append(
                {
                    "kind": self.kinds[k] if self.kinds else None,
                    "a": {"subject_id": a.subject_id, "start_time": a.start_time},
                    "b": {"subject_id": p.subject_id, "start_time": p.start_time},
                }
            )
        return json.dumps({"batch_pairs": b, "pairs": pairs}, indent=2, sort_keys=True)


def _positive_pair(index, cfg, menu, rng, augmented):
    if augmented:
        pair = make_augmented_pair(sample_window(index, rng), menu, rng, cfg.compose_prob)
        return pair.original, pair.augmented, "aug:" + pair.choice.label
    a, p = sample_temporal_pair(index, cfg, rng)
    return a, p, "temporal"


def _aug_slots(cfg, b, rng):
    n_aug = int(round(cfg.aug_fraction * b))
    slots = np.zeros(b, dtype=bool)
    slots[rng.permutation(b)[:n_aug]] = True
    return slots


def build_pair_batch(
    index: CorpusIndex,
    cfg: PairingConfig,
    aug_menu: Sequence[AugmentationSpec],
    rng: np.random.Generator,
) -> PairBatch:
    b = cfg.batch_pairs
    slots = _aug_slots(cfg, b, rng)
    if slots.any() and not aug_menu:
        raise ValueError("aug_fraction > 0 needs a non-empty augmentation menu")
    firsts, seconds, kinds = [], [], []
    for k in range(b):
        a, p, kind = _positive_pair(index, cfg, aug_menu, rng, bool(slots[k]))
        firsts.append(a)
        seconds.append(p)
        kinds.append(kind)
    labels, weights = pair_matrices(b)
    return PairBatch(firsts + seconds, labels, weights, kinds)


def materialize_pairs(index, cfg, aug_menu, n_pairs, rng) -> list[tuple[Window, Window, str]]:
    """Pre-sample a fixed pair list ahead of training."""
    b = cfg.batch_pairs
    out = []
    while len(out) < n_pairs:
        slots = _aug_slots(cfg, b, rng)
        for k in range(b):
            out.append(_positive_pair(index, cfg, aug_menu, rng, bool(slots[k])))
    return out[:n_pairs]


def batch_from_pairs(pairs: Sequence[tuple[Window, Window, str]]) -> PairBatch:
    b = len(pairs)
    labels, weights = pair_matrices(b)
    return PairBatch([p[0] for p in pairs] + [p[1] for p in pairs], labels, weights, [p[2] for p in pairs])


def negative_contamination(batch: PairBatch, delta_t_max: float) -> float:
    """Fraction of negative cells whose windows are in fact coincident in time."""
    ws = batch.windows
    n = len(ws)
    bad = total = 0
    for i in range(n):
        for j in range(n):
            if batch.labels[i, j] == 0:
                total += 1
                if ws[i].subject_id == ws[j].subject_id and abs(ws[i].start_time - ws[j].start_time) <= delta_t_max:
                    bad += 1
    return bad / total if total else 0.0
