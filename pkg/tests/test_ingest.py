from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from harssl import ingest
from harssl.ingest import DEFAULT_SYNTH_CLASSES, SampleSeries, SynthClass, SynthSpec, Window, WindowingConfig

CFG = WindowingConfig()


def _series(t, accel=None, labels=None, sid="s"):
    t = np.asarray(t, dtype=float)
    if accel is None:
        accel = np.column_stack([t, -t, 2 * t])
    return SampleSeries(sid, t, accel, labels)


def _grid(seconds, rate=30.0, t0=0.0):
    return t0 + np.arange(int(round(seconds * rate))) / rate


# ---------------------------------------------------------------- units

def test_ms2_to_g():
    s = ingest.normalize_units(_series([0, 1], [[9.8, 0, 0], [0, 0, 0]]), "m/s2")
    assert s.accel[0, 0] == pytest.approx(1.0)
    assert s.accel[1].tolist() == [0, 0, 0]


def test_milli_g_to_g():
    s = ingest.normalize_units(_series([0], [[500, 0, -1000]]), "milli-G")
    assert s.accel[0].tolist() == [0.5, 0, -1.0]


def test_non_finite_rejected_with_index():
    a = np.zeros((4, 3))
    a[2, 1] = np.nan
    with pytest.raises(ValueError, match="sample 2"):
        ingest.normalize_units(_series(range(4), a), "g")


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 50), st.sampled_from(["G", "m/s2", "milli-G"]))
def test_normalize_is_linear(alpha, unit):
    a = np.random.default_rng(0).standard_normal((5, 3))
    base = ingest.normalize_units(_series(range(5), a), unit).accel
    scaled = ingest.normalize_units(_series(range(5), alpha * a), unit).accel
    assert np.allclose(scaled, alpha * base, rtol=1e-12, atol=1e-12)


def test_normalize_keeps_timestamps():
    s = _series([0.0, 0.5, 2.0])
    assert np.array_equal(ingest.normalize_units(s, "mg").timestamps, s.timestamps)


# ---------------------------------------------------------------- resample

def test_resample_on_grid_is_identity():
    t = _grid(5)
    a = np.random.default_rng(0).standard_normal((len(t), 3))
    (out,) = ingest.resample(_series(t, a), CFG)
    assert np.allclose(out.timestamps, t, atol=1e-12)
    assert np.allclose(out.accel, a, atol=1e-12)


def test_resample_60hz_sine():
    t = np.arange(600) / 60.0
    a = np.column_stack([np.sin(2 * np.pi * t)] * 3)
    (out,) = ingest.resample(_series(t, a), CFG)
    assert np.allclose(np.diff(out.timestamps), 1 / 30)
    assert np.max(np.abs(out.accel[:, 0] - np.sin(2 * np.pi * out.timestamps))) < 1e-3


def test_resample_two_point_midpoint():
    (out,) = ingest.resample(_series([0.0, 1.0], [[0, 0, 0], [1, 1, 1]]), CFG)
    assert len(out) == 31
    assert out.timestamps[0] == 0.0
    assert out.accel[15, 0] == pytest.approx(0.5)


def test_resample_splits_at_gaps():
    t = np.concatenate([_grid(2), 10 + _grid(2)])
    out = ingest.resample(_series(t), CFG)
    assert len(out) == 2
    assert out[0].timestamps[-1] < 2.0 and out[1].timestamps[0] == 10.0


def test_resample_drops_single_sample_segment():
    t = np.concatenate([_grid(2), [5.0]])
    out = ingest.resample(_series(t), CFG)
    assert len(out) == 1


def test_resample_is_idempotent():
    rng = np.random.default_rng(2)
    t = np.cumsum(rng.uniform(0.01, 0.05, 400))
    once = ingest.resample(_series(t, rng.standard_normal((400, 3))), CFG)
    for seg in once:
        (twice,) = ingest.resample(seg, CFG)
        assert np.allclose(twice.timestamps, seg.timestamps, atol=1e-9)
        assert np.allclose(twice.accel, seg.accel, atol=1e-9)


def test_antialias_flag_changes_only_high_frequencies():
    t = np.arange(1200) / 120.0
    low = np.sin(2 * np.pi * 1.0 * t)
    a = np.column_stack([low + 0.3 * np.sin(2 * np.pi * 40 * t), low, low])
    (plain,) = ingest.resample(_series(t, a), CFG)
    (filt,) = ingest.resample(_series(t, a), WindowingConfig(antialias=True))
    mid = slice(30, -30)
    assert np.max(np.abs(filt.accel[mid, 1] - plain.accel[mid, 1])) < 1e-2
    assert np.std(filt.accel[mid, 0] - np.sin(2 * np.pi * filt.timestamps[mid])) < 0.05


# ---------------------------------------------------------------- windows

@pytest.mark.parametrize("seconds,expected", [(35, 3), (9.9, 0), (10, 1), (20, 2)])
def test_window_counts(seconds, expected):
    assert len(ingest.cut_windows(_series(_grid(seconds)), CFG)) == expected


def test_window_labels_follow_blocks():
    t = _grid(20)
    labels = np.where(t < 10, 0, 1)
    ws = ingest.cut_windows(_series(t, labels=labels), CFG)
    assert [w.label for w in ws] == [0, 1]
    assert ws[0].samples.shape == (300, 3)
    assert ws[1].start_time == pytest.approx(10.0)


def test_mixed_window_below_majority_is_unlabeled():
    t = _grid(10)
    labels = np.where(t < 7, 0, 1)  # 70 % majority
    (w,) = ingest.cut_windows(_series(t, labels=labels), CFG)
    assert w.label is None


def test_majority_at_threshold_is_kept():
    labels = np.zeros(300, dtype=int)
    labels[:60] = 1  # exactly 80 % class 0
    (w,) = ingest.cut_windows(_series(_grid(10), labels=labels), CFG)
    assert w.label == 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(2, 1500), min_size=1, max_size=4))
def test_window_count_is_sum_of_floors(lengths):
    parts, t0 = [], 0.0
    for n in lengths:
        parts.append(t0 + np.arange(n) / 30.0)
        t0 = parts[-1][-1] + 5.0
    s = _series(np.concatenate(parts))
    ws = ingest.windows_from_series([s], CFG)
    assert len(ws) == sum(n // 300 for n in lengths)


def test_windows_never_span_gaps():
    t = np.concatenate([_grid(15), 16.5 + _grid(15)])
    ws = ingest.windows_from_series([_series(t)], CFG)
    assert len(ws) == 2
    for w in ws:
        assert w.start_time + 299 / 30 < 15 or w.start_time >= 16.5


# ---------------------------------------------------------------- CSV

def _write(path, text):
    path.write_text(text)
    return path


def test_csv_three_rows(tmp_path):
    p = _write(tmp_path / "a.csv", "sid,t,x,y,z\nA,0,1,2,3\nA,1,4,5,6\nA,2,7,8,9\n")
    schema = ingest.CsvSchema("sid", "t", ("x", "y", "z"))
    (s,), skipped = ingest.read_csv_dataset(p, schema)
    assert len(s) == 3 and skipped == 0
    assert s.accel[2].tolist() == [7, 8, 9]


def test_csv_skips_malformed_row(tmp_path):
    rows = [f"A,{i},0.1,0.2,0.3" for i in range(100)]
    rows[40] = "A,40,oops,0.2,0.3"
    p = _write(tmp_path / "a.csv", "sid,t,x,y,z\n" + "\n".join(rows) + "\n")
    (s,), skipped = ingest.read_csv_dataset(p, ingest.CsvSchema("sid", "t", ("x", "y", "z")))
    assert len(s) == 99 and skipped == 1


def test_csv_interleaved_subjects_sorted(tmp_path):
    p = _write(tmp_path / "a.csv", "sid,t,x,y,z\nB,2,0,0,1\nA,1,0,0,1\nB,0,0,0,1\nA,0,0,0,1\nB,1,0,0,1\n")
    series, _ = ingest.read_csv_dataset(p, ingest.CsvSchema("sid", "t", ("x", "y", "z")))
    assert [s.subject_id for s in series] == ["A", "B"]
    assert [s.timestamps.tolist() for s in series] == [[0, 1], [0, 1, 2]]


def test_csv_missing_column_named(tmp_path):
    p = _write(tmp_path / "a.csv", "sid,t,x,y\nA,0,1,2\n")
    with pytest.raises(ValueError, match="'z'"):
        ingest.read_csv_dataset(p, ingest.CsvSchema("sid", "t", ("x", "y", "z")))


def test_csv_headerless_indices_and_units(tmp_path):
    p = _write(tmp_path / "a.csv", "A;0;9.8;0;0;walk\nA;1;0;9.8;0;sit\n")
    schema = ingest.CsvSchema(0, 1, (2, 3, 4), 5, "m/s2", ";", False)
    (s,), _ = ingest.read_csv_dataset(p, schema)
    assert np.allclose(s.accel, [[1, 0, 0], [0, 1, 0]])
    assert [s.label_names[i] for i in s.labels] == ["walk", "sit"]


def test_csv_dataset_round_trip(tmp_path):
    spec = SynthSpec(ingest.DEFAULT_SYNTH_CLASSES[:2], subjects=2, seconds_per_class=20, seed=3)
    series = ingest.synth_corpus(spec)
    ingest.write_csv_dataset(tmp_path, series)
    back = ingest.read_series(tmp_path)
    assert len(back) == 2  # one series per subject
    ws = ingest.load_windows(tmp_path)
    assert len(ws.windows) == len(ingest.windows_from_series(series))
    assert sorted(ws.label_names.values()) == ["medium", "slow"]


# ---------------------------------------------------------------- PAMAP2

def _pamap_row(t, activity, acc):
    row = [np.nan] * 54
    row[0], row[1], row[2] = t, activity, 100
    row[3] = 30.0  # hand temperature
    row[4:7] = acc
    row[7:10] = [0.0, 0.0, 0.0]  # +-6 g accelerometer, ignored
    return " ".join("NaN" if isinstance(v, float) and np.isnan(v) else repr(float(v)) for v in row)


def test_pamap2_two_row_fixture(tmp_path):
    text = "\n".join([_pamap_row(5.64, 1, [9.8, 0.0, 0.0]), _pamap_row(5.65, 1, [0.0, -4.9, 9.8])]) + "\n"
    (tmp_path / "subject101.dat").write_text(text)
    (s,) = ingest.read_pamap2(tmp_path)
    assert s.subject_id == "subject101"
    assert s.timestamps.tolist() == [5.64, 5.65]
    assert s.labels.tolist() == [1, 1]
    assert s.label_names[1] == "lying"
    assert np.allclose(s.accel, [[1, 0, 0], [0, -0.5, 1]])


def test_pamap2_null_rows_flagged(tmp_path):
    text = "\n".join(_pamap_row(i / 100, 0, [0, 0, 9.8]) for i in range(5)) + "\n"
    (tmp_path / "subject102.dat").write_text(text)
    (s,) = ingest.read_pamap2(tmp_path)
    assert s.null_mask.all()


def test_pamap2_wrong_column_count(tmp_path):
    (tmp_path / "subject103.dat").write_text("1 2 3\n4 5 6\n")
    with pytest.raises(ValueError, match="54 columns"):
        ingest.read_pamap2(tmp_path)


def test_pamap2_one_series_per_file(tmp_path):
    for k in range(9):
        (tmp_path / f"subject10{k}.dat").write_text(_pamap_row(0, 4, [0, 0, 9.8]) + "\n" + _pamap_row(0.01, 4, [0, 0, 9.8]) + "\n")
    assert len(ingest.read_pamap2(tmp_path)) == 9


def test_pamap2_activity_table_has_18_classes():
    named = {k: v for k, v in ingest.PAMAP2_ACTIVITIES.items() if k != ingest.PAMAP2_NULL_ID}
    assert len(named) == 18


# ---------------------------------------------------------------- synthetic corpus

def test_synth_gravity_only():
    spec = SynthSpec((SynthClass("still", 1.0, 0.0),), subjects=2, seconds_per_class=5, noise_sigma=0.0)
    for s in ingest.synth_corpus(spec):
        assert np.allclose(np.linalg.norm(s.accel, axis=1), 1.0, atol=1e-12)


def test_synth_is_deterministic():
    spec = SynthSpec(ingest.DEFAULT_SYNTH_CLASSES, subjects=2, seconds_per_class=20, seed=11)
    a, b = ingest.synth_corpus(spec), ingest.synth_corpus(spec)
    for x, y in zip(a, b):
        assert x.accel.tobytes() == y.accel.tobytes()
        assert x.timestamps.tobytes() == y.timestamps.tobytes()


def test_synth_counts():
    spec = SynthSpec(ingest.DEFAULT_SYNTH_CLASSES, subjects=2, seconds_per_class=100)
    series = ingest.synth_corpus(spec)
    assert len(series) == 8
    assert len(ingest.windows_from_series(series)) == 80


def test_synth_rejects_nyquist():
    with pytest.raises(ValueError, match="Nyquist"):
        ingest.synth_corpus(SynthSpec((SynthClass("buzz", 15.0, 0.1),)))


# ---------------------------------------------------------------- window cache

def test_window_cache_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    ws = [Window(f"s{i}", 10.0 * i, rng.standard_normal((300, 3)), None if i == 2 else i % 2) for i in range(4)]
    path = tmp_path / "w.bin"
    ingest.write_window_cache(path, ws, {0: "a", 1: "b"}, None)
    back = ingest.read_window_cache(path)
    assert path.read_bytes()[:8] == b"HARWIN01"
    assert [w.label for w in back.windows] == [0, 1, None, 1]
    assert back.label_names == {0: "a", 1: "b"}
    for a, b in zip(ws, back.windows):
        assert a.subject_id == b.subject_id and a.start_time == b.start_time
        assert a.samples.tobytes() == b.samples.tobytes()
    assert ingest.load_windows(path).windows[3].subject_id == "s3"


def test_synth_frequency_jitter_breaks_repeated_windows():
    spec = SynthSpec(DEFAULT_SYNTH_CLASSES, subjects=2, seconds_per_class=100, noise_sigma=0.0, seed=0)
    for jitter, distinct in ((0.0, False), (0.1, True)):
        series = ingest.synth_corpus(replace(spec, freq_jitter=jitter))
        windows = ingest.windows_from_series(series[:1])
        assert (not np.allclose(windows[0].samples, windows[1].samples, atol=1e-4)) == distinct


def test_synth_jitter_counts_toward_nyquist():
    with pytest.raises(ValueError, match="Nyquist"):
        ingest.synth_corpus(SynthSpec((SynthClass("buzz", 14.0, 0.1),), freq_jitter=0.1))
    ingest.synth_corpus(SynthSpec((SynthClass("buzz", 14.0, 0.1),), subjects=1, seconds_per_class=10, freq_jitter=0.0))
