"""Window augmentations used to build augmentation coincidence pairs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.ndimage import median_filter

from .ingest import Window

KINDS = ("smooth", "time_translate", "baseline_jump", "baseline_wander", "rotate", "gaussian_noise", "compose")
MAX_COMPOSE_DEPTH = 3

# Parameter ranges for every kind. A 2-tuple is a uniform range; a scalar is
# a fixed value. Magnitudes are chosen to be visible at 1 G yet label-preserving.
DEFAULT_PARAMS: dict[str, dict] = {
    "smooth": {"kernel_sizes": (5, 7, 9, 11, 13, 15)},
    "time_translate": {"max_shift": 60},
    "baseline_jump": {"height": (-0.5, 0.5)},
    "baseline_wander": {"amplitude": (0.0, 0.25), "freq_hz": (0.01, 0.1), "phase": (0.0, 2 * np.pi)},
    "rotate": {"theta": (0.0, 2 * np.pi), "max_tilt_deg": 15.0, "mode": "tilt"},
    "gaussian_noise": {"sigma": (0.01, 0.05)},
    "compose": {},
}
SAMPLE_RATE_HZ = 30.0


@dataclass(frozen=True)
class AugmentationSpec:
    kind: str
    params: dict = field(default_factory=dict)
    children: tuple["AugmentationSpec", ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown augmentation kind {self.kind!r}")
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.kind])
        if unknown:
            raise ValueError(f"{self.kind}: unknown parameters {sorted(unknown)}")
        if self.kind == "compose":
            if not self.children:
                raise ValueError("compose needs at least one child")
            if self.depth > MAX_COMPOSE_DEPTH:
                raise ValueError(f"composition depth capped at {MAX_COMPOSE_DEPTH}")

    @property
    def depth(self) -> int:
        """Number of elementary transforms applied."""
        if self.kind != "compose":
            return 1
        return sum(c.depth for c in self.children)

    def param(self, key):
        return self.params.get(key, DEFAULT_PARAMS[self.kind][key])

    @property
    def label(self) -> str:
        if self.kind == "compose":
            return "+".join(c.label for c in self.children)
        return self.kind

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.params:
            d["params"] = {k: list(v) if isinstance(v, tuple) else v for k, v in self.params.items()}
        if self.children:
            d["children"] = [c.to_dict() for c in self.children]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentationSpec":
        params = {k: tuple(v) if isinstance(v, list) else v for k, v in d.get("params", {}).items()}
        children = tuple(cls.from_dict(c) for c in d.get("children", ()))
        return cls(d["kind"], params, children)


def default_menu() -> list[AugmentationSpec]:
    return [AugmentationSpec(k) for k in KINDS if k != "compose"]


def _draw(rng, value):
    if isinstance(value, tuple):
        lo, hi = value
        return lo if lo == hi else rng.uniform(lo, hi)
    return value


def rotation_matrix(theta: float, tilt_x: float = 0.0, tilt_y: float = 0.0) -> np.ndarray:
    """Rotation about z by ``theta`` followed by tilts about x and y (radians)."""
    c, s = np.cos(theta), np.sin(theta)
    rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    c, s = np.cos(tilt_x), np.sin(tilt_x)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    c, s = np.cos(tilt_y), np.sin(tilt_y)
    ry = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return ry @ rx @ rz


def _apply_array(spec: AugmentationSpec, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    if spec.kind == "compose":
        for child in spec.children:
            x = _apply_array(child, x, rng)
        return x
    if spec.kind == "smooth":
        sizes = spec.param("kernel_sizes")
        size = int(rng.choice(np.asarray(sizes if isinstance(sizes, (tuple, list)) else (sizes,))))
        if size % 2 == 0:
            raise ValueError("median kernel size must be odd")
        return median_filter(x, size=(size, 1), mode="nearest")
    if spec.kind == "time_translate":
        m = int(spec.param("max_shift"))
        return np.roll(x, int(rng.integers(-m, m + 1)), axis=0)
    if spec.kind == "baseline_jump":
        axis = int(rng.integers(0, 3))
        onset = int(rng.integers(0, n))
        h = _draw(rng, spec.param("height"))
        out = x.copy()
        out[onset:, axis] += h
        return out
    if spec.kind == "baseline_wander":
        t = np.arange(n) / SAMPLE_RATE_HZ
        out = x.copy()
        for axis in range(3):
            a = _draw(rng, spec.param("amplitude"))
            f = _draw(rng, spec.param("freq_hz"))
            phi = _draw(rng, spec.param("phase"))
            out[:, axis] += a * np.sin(2 * np.pi * f * t + phi)
        return out
    if spec.kind == "rotate":
        theta = _draw(rng, spec.param("theta"))
        if spec.param("mode") == "planar":
            rot = rotation_matrix(theta)
        else:
            tilt = np.deg2rad(float(spec.param("max_tilt_deg")))
            rot = rotation_matrix(theta, rng.uniform(-tilt, tilt), rng.uniform(-tilt, tilt))
        return x @ rot.T
    if spec.kind == "gaussian_noise":
        sigma = _draw(rng, spec.param("sigma"))
        if sigma == 0:
            return x
        return x + rng.normal(0.0, sigma, size=x.shape)
    raise AssertionError(spec.kind)


def apply(spec: AugmentationSpec, w: Window, rng: np.random.Generator) -> Window:
    """Augmented copy of ``w``; same shape, subject and start time."""
    out = _apply_array(spec, w.samples.astype(np.float64), rng)
    return Window(w.subject_id, w.start_time, out.astype(np.float32), w.label)


class AugmentedPair(NamedTuple):
    original: Window
    augmented: Window
    choice: AugmentationSpec


def choose_augmentation(menu: Sequence[AugmentationSpec], rng: np.random.Generator, compose_prob: float = 0.25) -> AugmentationSpec:
    """One menu entry, or with ``compose_prob`` a random 2-3 element composition."""
    if not menu:
        raise ValueError("augmentation menu is empty")
    if len(menu) >= 2 and compose_prob > 0 and rng.random() < compose_prob:
        k = int(rng.integers(2, min(MAX_COMPOSE_DEPTH, len(menu)) + 1))
        picks = rng.choice(len(menu), size=k, replace=False)
        children = []
        for i in picks:
            spec = menu[int(i)]
            children.extend(spec.children if spec.kind == "compose" else (spec,))
        return AugmentationSpec("compose", children=tuple(children[:MAX_COMPOSE_DEPTH]))
    return menu[int(rng.integers(0, len(menu)))]


def make_augmented_pair(w: Window, menu: Sequence[AugmentationSpec], rng: np.random.Generator, compose_prob: float = 0.25) -> AugmentedPair:
    spec = choose_augmentation(menu, rng, compose_prob)
    return AugmentedPair(w, apply(spec, w, rng), spec)
