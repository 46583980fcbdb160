import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from harssl import augment
from harssl.augment import AugmentationSpec
from harssl.ingest import Window

ELEMENTARY = [k for k in augment.KINDS if k != "compose"]


def _window(seed=0, const=None):
    if const is not None:
        samples = np.tile(np.asarray(const, dtype=np.float32), (300, 1))
    else:
        samples = np.random.default_rng(seed).normal(0, 0.5, (300, 3)) + [0, 0, 1]
    return Window("s", 0.0, samples, 1)


def test_zero_rotation_is_identity():
    w = _window()
    out = augment.apply(AugmentationSpec("rotate", {"theta": 0.0, "max_tilt_deg": 0.0}), w, np.random.default_rng(0))
    assert np.array_equal(out.samples, w.samples)


def test_zero_noise_is_identity():
    w = _window()
    out = augment.apply(AugmentationSpec("gaussian_noise", {"sigma": 0.0}), w, np.random.default_rng(0))
    assert np.array_equal(out.samples, w.samples)


def test_median_of_constant_window_is_identity():
    w = _window(const=[0.2, -0.4, 0.9])
    for size in (5, 9, 15):
        out = augment.apply(AugmentationSpec("smooth", {"kernel_sizes": (size,)}), w, np.random.default_rng(0))
        assert np.array_equal(out.samples, w.samples)


def test_rotation_preserves_norms():
    rng = np.random.default_rng(0)
    w = _window()
    ref = np.linalg.norm(w.samples.astype(np.float64), axis=1)
    for mode in ("tilt", "planar"):
        spec = AugmentationSpec("rotate", {"mode": mode})
        for _ in range(5000):
            out = augment.apply(spec, w, rng)
            norms = np.linalg.norm(out.samples.astype(np.float64), axis=1)
            assert np.max(np.abs(norms - ref) / ref) < 1e-5


def test_planar_rotation_keeps_z():
    w = _window()
    out = augment.apply(AugmentationSpec("rotate", {"mode": "planar"}), w, np.random.default_rng(1))
    assert np.allclose(out.samples[:, 2], w.samples[:, 2], atol=1e-6)


def test_tilt_bounded():
    rng = np.random.default_rng(0)
    z = np.array([0.0, 0.0, 1.0])
    for _ in range(200):
        w = _window(const=z)
        out = augment.apply(AugmentationSpec("rotate"), w, rng)
        angle = np.degrees(np.arccos(np.clip(out.samples[0] @ z, -1, 1)))
        assert angle <= np.hypot(15, 15) + 1e-3


@pytest.mark.parametrize("kind", ELEMENTARY)
def test_every_kind_keeps_shape_and_finiteness(kind):
    rng = np.random.default_rng(0)
    for seed in range(20):
        w = _window(seed)
        out = augment.apply(AugmentationSpec(kind), w, rng)
        assert out.samples.shape == (300, 3)
        assert out.samples.dtype == np.float32
        assert np.all(np.isfinite(out.samples))
        assert (out.subject_id, out.start_time, out.label) == (w.subject_id, w.start_time, w.label)


def test_time_translate_is_a_bounded_circular_shift():
    w = _window()
    rng = np.random.default_rng(4)
    for _ in range(50):
        out = augment.apply(AugmentationSpec("time_translate"), w, rng)
        shifts = [k for k in range(-60, 61) if np.array_equal(np.roll(w.samples, k, axis=0), out.samples)]
        assert shifts


def test_jump_touches_one_axis_as_a_step():
    w = _window()
    rng = np.random.default_rng(2)
    for _ in range(50):
        out = augment.apply(AugmentationSpec("baseline_jump"), w, rng)
        delta = out.samples.astype(np.float64) - w.samples
        moved = np.flatnonzero(np.abs(delta).max(axis=0) > 1e-6)
        assert len(moved) <= 1
        for axis in set(range(3)) - set(moved):
            assert np.allclose(np.diff(out.samples[:, axis]), np.diff(w.samples[:, axis]), atol=1e-6)
        if len(moved):
            d = delta[:, moved[0]]
            onset = np.flatnonzero(np.abs(d) > 1e-6)[0]
            assert np.allclose(d[onset:], d[onset], atol=1e-5)
            assert abs(d[onset]) <= 0.5 + 1e-6


def test_wander_is_slow_and_bounded():
    w = _window()
    rng = np.random.default_rng(3)
    for _ in range(50):
        out = augment.apply(AugmentationSpec("baseline_wander"), w, rng)
        delta = out.samples.astype(np.float64) - w.samples
        assert np.abs(delta).max() <= 0.25 + 1e-5
        # f <= 0.1 Hz, a <= 0.25 G: slope bounded by 2*pi*f*a per second
        assert np.abs(np.diff(delta, axis=0)).max() <= 2 * np.pi * 0.1 * 0.25 / 30 + 1e-5


def test_wander_on_unaffected_axis_keeps_differences():
    w = _window()
    spec = AugmentationSpec("baseline_wander", {"amplitude": (0.0, 0.0)})
    out = augment.apply(spec, w, np.random.default_rng(0))
    assert np.allclose(np.diff(out.samples, axis=0), np.diff(w.samples, axis=0), atol=1e-6)


def test_noise_mean_shift_is_zero():
    w = Window("s", 0.0, np.zeros((300, 3)))
    rng = np.random.default_rng(5)
    spec = AugmentationSpec("gaussian_noise", {"sigma": 0.03})
    diffs = np.concatenate([augment.apply(spec, w, rng).samples.ravel() for _ in range(112)])
    n = diffs.size
    assert n >= 1e5
    assert abs(diffs.mean()) < 4 * 0.03 / np.sqrt(n)


def test_compose_applies_in_order_and_caps_depth():
    noise = AugmentationSpec("gaussian_noise", {"sigma": 0.0})
    rot = AugmentationSpec("rotate", {"theta": np.pi / 2, "max_tilt_deg": 0.0})
    w = _window()
    out = augment.apply(AugmentationSpec("compose", children=(noise, rot)), w, np.random.default_rng(0))
    expected = w.samples.astype(np.float64) @ augment.rotation_matrix(np.pi / 2).T
    assert np.allclose(out.samples, expected, atol=1e-6)
    with pytest.raises(ValueError):
        AugmentationSpec("compose", children=(noise, rot, noise, rot))


def test_unknown_kind_and_param_rejected():
    with pytest.raises(ValueError):
        AugmentationSpec("flip")
    with pytest.raises(ValueError):
        AugmentationSpec("rotate", {"angle": 1.0})


def test_spec_dict_round_trip():
    spec = AugmentationSpec("compose", children=(AugmentationSpec("smooth", {"kernel_sizes": (5, 7)}), AugmentationSpec("rotate")))
    assert AugmentationSpec.from_dict(spec.to_dict()) == spec


# ---------------------------------------------------------------- pairs

def test_zero_noise_menu_gives_identical_pair():
    w = _window()
    pair = augment.make_augmented_pair(w, [AugmentationSpec("gaussian_noise", {"sigma": 0.0})], np.random.default_rng(0))
    assert np.array_equal(pair.original.samples, pair.augmented.samples)
    assert pair.choice.kind == "gaussian_noise"


def test_pair_is_deterministic():
    w = _window()
    menu = augment.default_menu()
    a = augment.make_augmented_pair(w, menu, np.random.default_rng(9))
    b = augment.make_augmented_pair(w, menu, np.random.default_rng(9))
    assert a.choice == b.choice
    assert np.array_equal(a.augmented.samples, b.augmented.samples)


def test_empty_menu_is_an_error():
    with pytest.raises(ValueError):
        augment.make_augmented_pair(_window(), [], np.random.default_rng(0))


def test_menu_choice_is_uniform():
    menu = augment.default_menu()
    assert len(menu) == 6
    rng = np.random.default_rng(0)
    n = 10_000
    counts = {}
    for _ in range(n):
        k = augment.choose_augmentation(menu, rng, compose_prob=0.0).kind
        counts[k] = counts.get(k, 0) + 1
    p = 1 / 6
    sigma = np.sqrt(n * p * (1 - p))
    assert set(counts) == set(ELEMENTARY)
    for c in counts.values():
        assert abs(c - n * p) <= 3 * sigma


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_compositions_stay_within_depth(seed):
    spec = augment.choose_augmentation(augment.default_menu(), np.random.default_rng(seed), compose_prob=1.0)
    assert spec.kind == "compose"
    assert 2 <= spec.depth <= augment.MAX_COMPOSE_DEPTH
