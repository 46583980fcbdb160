"""Accelerometer ingestion: unit normalization, 30 Hz resampling, windowing.

Readers for a generic CSV layout (described by a JSON/TOML sidecar), PAMAP2
protocol ``.dat`` files, and a seeded synthetic corpus. Windows can be cached
in a flat little-endian binary file (magic ``HARWIN01``).
"""

from __future__ import annotations

import csv
import json
import logging
import math
import struct
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

G_MS2 = 9.8
UNIT_SCALE = {"g": 1.0, "m/s2": G_MS2, "mg": 1000.0}
_UNIT_ALIASES = {
    "g": "g",
    "G": "g",
    "m/s2": "m/s2",
    "m/s^2": "m/s2",
    "m/s²": "m/s2",
    "ms2": "m/s2",
    "mg": "mg",
    "milli-g": "mg",
    "milli-G": "mg",
    "mG": "mg",
}
MAX_EXPECTED_G = 16.0
GAP_SECONDS = 1.0
MAJORITY_FRACTION = 0.8

WINDOW_MAGIC = b"HARWIN01"

# PAMAP2 protocol files: 54 space-separated columns. Column 0 is the
# timestamp (s), column 1 the activity id, columns 4-6 the hand IMU 3D
# accelerometer with the +-16 g range, in m/s^2 (0-based indices, from the
# dataset's readme).
PAMAP2_LAYOUT = {"n_columns": 54, "timestamp": 0, "activity": 1, "hand_acc16": (4, 5, 6)}
PAMAP2_NULL_ID = 0
PAMAP2_ACTIVITIES = {
    0: "null",
    1: "lying",
    2: "sit",
    3: "stand",
    4: "walk",
    5: "run",
    6: "cycling",
    7: "nordic_walk",
    9: "TV",
    10: "computer",
    11: "drive",
    12: "asc stairs",
    13: "desc stairs",
    16: "vacuum",
    17: "iron",
    18: "fold_laundry",
    19: "clean house",
    20: "soccer",
    24: "rope_jump",
}


@dataclass
class SampleSeries:
    """Timestamped 3-axis acceleration for one subject.

    ``labels`` holds integer class ids; ``label_names`` maps ids to names and
    ``null_label`` marks the id meaning "unlabeled" (PAMAP2 uses 0).
    """

    subject_id: str
    timestamps: np.ndarray
    accel: np.ndarray
    labels: np.ndarray | None = None
    label_names: dict[int, str] | None = None
    null_label: int | None = None

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        self.accel = np.asarray(self.accel, dtype=np.float64).reshape(-1, 3)
        if self.timestamps.ndim != 1 or len(self.timestamps) != len(self.accel):
            raise ValueError("timestamps and accel must have the same length")
        if len(self.timestamps) > 1 and np.any(np.diff(self.timestamps) <= 0):
            raise ValueError(f"subject {self.subject_id}: timestamps must be strictly increasing")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != self.timestamps.shape:
                raise ValueError("labels must align 1:1 with timestamps")

    def __len__(self):
        return len(self.timestamps)

    @property
    def null_mask(self) -> np.ndarray:
        if self.labels is None or self.null_label is None:
            return np.zeros(len(self), dtype=bool)
        return self.labels == self.null_label

    def _with(self, timestamps, accel, labels):
        return replace(self, timestamps=timestamps, accel=accel, labels=labels)


@dataclass(frozen=True)
class WindowingConfig:
    sample_rate_hz: float = 30.0
    window_seconds: float = 10.0
    gap_seconds: float = GAP_SECONDS
    majority_fraction: float = MAJORITY_FRACTION
    antialias: bool = False
    antialias_cutoff_hz: float = 12.0

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be > 0")
        if not self.window_seconds > 0:
            raise ValueError("window_seconds must be > 0")

    @property
    def window_len(self) -> int:
        return int(round(self.sample_rate_hz * self.window_seconds))


@dataclass
class Window:
    subject_id: str
    start_time: float
    samples: np.ndarray
    label: int | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 2 or self.samples.shape[1] != 3:
            raise ValueError(f"window samples must be (n, 3), got {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("window contains non-finite values")


def canonical_unit(unit: str) -> str:
    try:
        return _UNIT_ALIASES[unit.strip()]
    except KeyError:
        raise ValueError(f"unknown unit {unit!r}; expected one of G, m/s2, milli-G") from None


def normalize_units(series: SampleSeries, input_unit: str) -> SampleSeries:
    """Scale acceleration to G (9.8 m/s^2)."""
    scale = UNIT_SCALE[canonical_unit(input_unit)]
    bad = np.flatnonzero(~np.isfinite(series.accel).all(axis=1))
    if bad.size:
        raise ValueError(f"subject {series.subject_id}: non-finite acceleration at sample {int(bad[0])}")
    accel = series.accel / scale
    if accel.size and np.abs(accel).max() > MAX_EXPECTED_G:
        log.warning("subject %s: |accel| exceeds %g G", series.subject_id, MAX_EXPECTED_G)
    return series._with(series.timestamps.copy(), accel, None if series.labels is None else series.labels.copy())


def split_segments(timestamps: np.ndarray, gap_seconds: float) -> list[slice]:
    if len(timestamps) == 0:
        return []
    breaks = np.flatnonzero(np.diff(timestamps) > gap_seconds) + 1
    edges = [0, *breaks.tolist(), len(timestamps)]
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]


def _lowpass(accel, rate_hz, cutoff_hz):
    from scipy.signal import butter, sosfiltfilt

    if rate_hz <= 2 * cutoff_hz or len(accel) < 16:
        return accel
    sos = butter(4, cutoff_hz, fs=rate_hz, output="sos")
    return sosfiltfilt(sos, accel, axis=0)


def resample(series: SampleSeries, cfg: WindowingConfig = WindowingConfig()) -> list[SampleSeries]:
    """Linear interpolation onto a regular grid, one output per contiguous segment.

    Input gaps longer than ``cfg.gap_seconds`` split the output; segments with
    fewer than 2 samples are dropped with a warning.
    """
    if len(series) < 2:
        raise ValueError(f"subject {series.subject_id}: need at least 2 samples to resample")
    period = 1.0 / cfg.sample_rate_hz
    out = []
    for seg in split_segments(series.timestamps, cfg.gap_seconds):
        t = series.timestamps[seg]
        if len(t) < 2:
            log.warning("subject %s: dropping %d-sample segment at t=%.3f", series.subject_id, len(t), t[0])
            continue
        a = series.accel[seg]
        if cfg.antialias:
            rate_in = (len(t) - 1) / (t[-1] - t[0])
            a = _lowpass(a, rate_in, cfg.antialias_cutoff_hz)
        n = int(math.floor((t[-1] - t[0]) / period + 1e-9)) + 1
        grid = t[0] + np.arange(n) * period
        accel = np.column_stack([np.interp(grid, t, a[:, k]) for k in range(3)])
        labels = None
        if series.labels is not None:
            # nearest-neighbour label lookup
            idx = np.clip(np.searchsorted(t, grid), 1, len(t) - 1)
            left_closer = (grid - t[idx - 1]) <= (t[idx] - grid)
            labels = series.labels[seg][np.where(left_closer, idx - 1, idx)]
        out.append(series._with(grid, accel, labels))
    return out


def _majority(labels: np.ndarray) -> tuple[int, float]:
    values, counts = np.unique(labels, return_counts=True)
    k = int(np.argmax(counts))  # ties go to the smallest id
    return int(values[k]), counts[k] / len(labels)


def cut_windows(series: SampleSeries, cfg: WindowingConfig = WindowingConfig()) -> list[Window]:
    """Non-overlapping windows of ``cfg.window_len`` samples; remainders dropped.

    A window's label is the majority label when it covers at least
    ``cfg.majority_fraction`` of the samples, otherwise ``None``.
    """
    n = cfg.window_len
    # a regular grid has steps of exactly one period; anything well above is a gap
    gap = min(cfg.gap_seconds, 1.5 / cfg.sample_rate_hz)
    windows = []
    for seg in split_segments(series.timestamps, gap):
        t = series.timestamps[seg]
        a = series.accel[seg]
        labels = None if series.labels is None else series.labels[seg]
        for k in range(len(t) // n):
            sl = slice(k * n, (k + 1) * n)
            label = None
            if labels is not None:
                value, frac = _majority(labels[sl])
                if frac >= cfg.majority_fraction:
                    label = value
            windows.append(Window(series.subject_id, float(t[sl.start]), a[sl], label))
    return windows


def windows_from_series(series_list: Sequence[SampleSeries], cfg: WindowingConfig = WindowingConfig()) -> list[Window]:
    out = []
    for s in series_list:
        if len(s) < 2:
            continue
        for seg in resample(s, cfg):
            out.extend(cut_windows(seg, cfg))
    return out


# ---------------------------------------------------------------------------
# generic CSV

@dataclass(frozen=True)
class CsvSchema:
    """Column layout of a delimiter-separated accelerometer file.

    Columns are given by header name, or by 0-based index when ``header`` is
    false (indices also work with a header).
    """

    subject_col: str | int
    time_col: str | int
    xyz_cols: tuple[str | int, str | int, str | int]
    label_col: str | int | None = None
    unit: str = "g"
    delimiter: str = ","
    header: bool = True
    files: tuple[str, ...] = ()

    @classmethod
    def from_dict(cls, d: dict) -> "CsvSchema":
        d = dict(d)
        d["xyz_cols"] = tuple(d["xyz_cols"])
        d["files"] = tuple(d.get("files", ()))
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown schema keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "subject_col": self.subject_col,
            "time_col": self.time_col,
            "xyz_cols": list(self.xyz_cols),
            "label_col": self.label_col,
            "unit": self.unit,
            "delimiter": self.delimiter,
            "header": self.header,
            "files": list(self.files),
        }


def _resolve_column(col, header, path):
    if isinstance(col, int):
        if header is not None and col >= len(header):
            raise ValueError(f"{path}: column index {col} out of range")
        return col
    if header is None:
        raise ValueError(f"{path}: column {col!r} given by name but the file has no header")
    try:
        return header.index(col)
    except ValueError:
        raise ValueError(f"{path}: missing declared column {col!r}") from None


def read_csv_dataset(path, schema: CsvSchema) -> tuple[list[SampleSeries], int]:
    """One unit-normalized series per subject plus the count of skipped rows.

    String labels are encoded to ids in sorted name order.
    """
    path = Path(path)
    by_subject: dict[str, list] = defaultdict(list)
    skipped = 0
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        header = next(reader) if schema.header else None
        if header is not None:
            header = [h.strip() for h in header]
        cols = [_resolve_column(c, header, path) for c in (schema.subject_col, schema.time_col, *schema.xyz_cols)]
        label_idx = None if schema.label_col is None else _resolve_column(schema.label_col, header, path)
        for row in reader:
            if not row:
                continue
            try:
                subject = row[cols[0]].strip()
                values = [float(row[c]) for c in cols[1:]]
                label = row[label_idx].strip() if label_idx is not None else None
            except (ValueError, IndexError):
                skipped += 1
                continue
            if not all(math.isfinite(v) for v in values):
                skipped += 1
                continue
            by_subject[subject].append((values, label))
    if skipped:
        log.warning("%s: skipped %d unparseable rows", path, skipped)
    label_names = None
    if label_idx is not None:
        names = sorted({lab for rows in by_subject.values() for _, lab in rows})
        label_names = dict(enumerate(names))
        ids = {n: i for i, n in label_names.items()}
    out = []
    for subject in sorted(by_subject):
        rows = by_subject[subject]
        data = np.array([v for v, _ in rows], dtype=np.float64)
        order = np.argsort(data[:, 0], kind="stable")
        data = data[order]
        labels = None
        if label_idx is not None:
            labels = np.array([ids[rows[i][1]] for i in order], dtype=np.int64)
        keep = np.ones(len(data), dtype=bool)
        keep[1:] = np.diff(data[:, 0]) > 0
        if not keep.all():
            log.warning("%s: subject %s has %d duplicate timestamps, keeping first", path, subject, int((~keep).sum()))
        series = SampleSeries(
            subject,
            data[keep, 0],
            data[keep, 1:4],
            None if labels is None else labels[keep],
            label_names,
        )
        out.append(normalize_units(series, schema.unit))
    return out, skipped


def load_schema(path) -> CsvSchema:
    path = Path(path)
    if path.suffix == ".toml":
        return CsvSchema.from_dict(load_toml(path))
    return CsvSchema.from_dict(json.loads(path.read_text()))


def load_toml(path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


# ---------------------------------------------------------------------------
# PAMAP2

def read_pamap2(directory) -> list[SampleSeries]:
    """Hand-wrist +-16 g accelerometer from PAMAP2 protocol ``.dat`` files."""
    files = sorted(Path(directory).glob("*.dat"))
    if not files:
        raise FileNotFoundError(f"no .dat files in {directory}")
    out = []
    for path in files:
        series = read_pamap2_file(path)
        if series is not None:
            out.append(series)
    return out


def read_pamap2_file(path) -> SampleSeries | None:
    path = Path(path)
    data = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if data.shape[1] != PAMAP2_LAYOUT["n_columns"]:
        raise ValueError(f"{path}: expected {PAMAP2_LAYOUT['n_columns']} columns, found {data.shape[1]}")
    t = data[:, PAMAP2_LAYOUT["timestamp"]]
    activity = data[:, PAMAP2_LAYOUT["activity"]]
    accel = data[:, list(PAMAP2_LAYOUT["hand_acc16"])]
    ok = np.isfinite(accel).all(axis=1) & np.isfinite(t) & np.isfinite(activity)
    if not ok.all():
        log.info("%s: dropping %d rows with missing hand accelerometer data", path, int((~ok).sum()))
    t, activity, accel = t[ok], activity[ok].astype(np.int64), accel[ok]
    if len(t) == 0:
        log.warning("%s: no usable rows", path)
        return None
    order = np.argsort(t, kind="stable")
    t, activity, accel = t[order], activity[order], accel[order]
    keep = np.ones(len(t), dtype=bool)
    keep[1:] = np.diff(t) > 0
    series = SampleSeries(
        path.stem,
        t[keep],
        accel[keep],
        activity[keep],
        dict(PAMAP2_ACTIVITIES),
        PAMAP2_NULL_ID,
    )
    return normalize_units(series, "m/s2")


# ---------------------------------------------------------------------------
# synthetic corpus

@dataclass(frozen=True)
class SynthClass:
    name: str
    base_freq_hz: float
    amplitude_g: float
    orientation: tuple[float, float, float] = (1.0, 0.0, 0.0)


@dataclass(frozen=True)
class SynthSpec:
    classes: tuple[SynthClass, ...]
    subjects: int = 8
    seconds_per_class: float = 200.0
    noise_sigma: float = 0.02
    seed: int = 0
    sample_rate_hz: float = 30.0
    max_tilt_deg: float = 15.0
    freq_jitter: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.freq_jitter < 1.0:
            raise ValueError("freq_jitter must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        d["classes"] = tuple(
            SynthClass(c["name"], float(c["base_freq_hz"]), float(c["amplitude_g"]), tuple(c.get("orientation", (1.0, 0.0, 0.0))))
            for c in d["classes"]
        )
        return cls(**d)


DEFAULT_SYNTH_CLASSES = (
    SynthClass("slow", 0.6, 0.35, (1.0, 0.0, 0.0)),
    SynthClass("medium", 1.6, 0.35, (1.0, 0.0, 0.0)),
    SynthClass("fast", 3.0, 0.35, (1.0, 0.0, 0.0)),
    SynthClass("vigorous", 5.0, 0.35, (1.0, 0.0, 0.0)),
)


def wrist_rotation(rng: np.random.Generator, max_tilt_deg: float) -> np.ndarray:
    """Random rotation: uniform spin about z composed with small x/y tilts."""
    from .augment import rotation_matrix

    theta = rng.uniform(0.0, 2 * np.pi)
    tilt = np.deg2rad(max_tilt_deg)
    return rotation_matrix(theta, rng.uniform(-tilt, tilt), rng.uniform(-tilt, tilt))


def synth_corpus(spec: SynthSpec) -> list[SampleSeries]:
    """Deterministic labeled corpus, one series per (subject, class).

    Each class is an oriented sinusoid on top of 1 G gravity plus Gaussian
    noise. Every subject gets its own wrist rotation, and per class a phase
    and a frequency within ``freq_jitter`` of the base frequency. The jitter
    keeps windows of one series from repeating the same waveform when the
    base frequency fits a whole number of cycles into a window.
    Classes of one subject follow each other in time.
    """
    nyquist = spec.sample_rate_hz / 2
    for c in spec.classes:
        top = c.base_freq_hz * (1 + spec.freq_jitter)
        if top >= nyquist:
            raise ValueError(f"class {c.name!r}: frequency up to {top:g} Hz is not below Nyquist ({nyquist} Hz)")
    names = {i: c.name for i, c in enumerate(spec.classes)}
    n = int(round(spec.seconds_per_class * spec.sample_rate_hz))
    rel_t = np.arange(n) / spec.sample_rate_hz
    gravity = np.array([0.0, 0.0, 1.0])
    root = np.random.SeedSequence(spec.seed)
    out = []
    for subject, child in enumerate(root.spawn(spec.subjects)):
        rng = np.random.default_rng(child)
        rot = wrist_rotation(rng, spec.max_tilt_deg)
        for k, c in enumerate(spec.classes):
            u = np.asarray(c.orientation, dtype=np.float64)
            u = u / np.linalg.norm(u)
            phase = rng.uniform(0.0, 2 * np.pi)
            freq = c.base_freq_hz * (1 + rng.uniform(-spec.freq_jitter, spec.freq_jitter))
            motion = c.amplitude_g * np.sin(2 * np.pi * freq * rel_t + phase)
            body = gravity + motion[:, None] * u
            accel = body @ rot.T
            if spec.noise_sigma > 0:
                accel = accel + rng.normal(0.0, spec.noise_sigma, size=accel.shape)
            t0 = k * spec.seconds_per_class
            out.append(SampleSeries(f"s{subject:02d}", t0 + rel_t, accel, np.full(n, k), dict(names)))
    return out


def write_csv_dataset(directory, series_list: Sequence[SampleSeries], filename="samples.csv") -> CsvSchema:
    """Write series as one CSV with a JSON sidecar (``dataset.json``)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    labeled = any(s.labels is not None for s in series_list)
    with open(directory / filename, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "t", "x", "y", "z"] + (["label"] if labeled else []))
        for s in series_list:
            for i in range(len(s)):
                row = [s.subject_id, repr(float(s.timestamps[i]))] + [repr(float(v)) for v in s.accel[i]]
                if labeled:
                    row.append(s.label_names[int(s.labels[i])] if s.label_names else str(int(s.labels[i])))
                w.writerow(row)
    schema = CsvSchema("subject_id", "t", ("x", "y", "z"), "label" if labeled else None, "g", ",", True, (filename,))
    (directory / "dataset.json").write_text(json.dumps(schema.to_dict(), indent=2, sort_keys=True) + "\n")
    return schema


# ---------------------------------------------------------------------------
# dataset directories and the window cache

@dataclass
class WindowSet:
    """Windows plus the id -> name table for their labels."""

    windows: list[Window]
    label_names: dict[int, str] = field(default_factory=dict)
    null_label: int | None = None

    def name_of(self, w: Window) -> str | None:
        if w.label is None or w.label == self.null_label:
            return None
        return self.label_names.get(w.label, str(w.label))


def read_series(path) -> list[SampleSeries]:
    """Read a dataset directory: ``dataset.json``/``dataset.toml`` CSV layout or PAMAP2 ``.dat`` files."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset path does not exist: {path}")
    for sidecar in ("dataset.json", "dataset.toml"):
        if (path / sidecar).exists():
            schema = load_schema(path / sidecar)
            files = schema.files or tuple(sorted(p.name for p in path.glob("*.csv")))
            series = []
            for name in files:
                part, _ = read_csv_dataset(path / name, schema)
                series.extend(part)
            return _merge_label_tables(series)
    if list(path.glob("*.dat")):
        return read_pamap2(path)
    raise ValueError(f"{path}: no dataset.json/dataset.toml sidecar and no PAMAP2 .dat files")


def _merge_label_tables(series: list[SampleSeries]) -> list[SampleSeries]:
    """Re-encode labels so several CSV files share one id table."""
    tables = [s.label_names for s in series if s.label_names]
    if len(tables) <= 1:
        return series
    names = sorted({n for t in tables for n in t.values()})
    ids = {n: i for i, n in enumerate(names)}
    merged = dict(enumerate(names))
    out = []
    for s in series:
        if s.labels is None:
            out.append(s)
            continue
        remap = np.array([ids[s.label_names[int(i)]] for i in range(max(s.label_names) + 1)])
        out.append(replace(s, labels=remap[s.labels], label_names=dict(merged)))
    return out


def load_windows(path, cfg: WindowingConfig = WindowingConfig()) -> WindowSet:
    """Windows from a dataset directory or a ``HARWIN01`` cache file."""
    path = Path(path)
    if path.is_file():
        return read_window_cache(path)
    series = read_series(path)
    names: dict[int, str] = {}
    null_label = None
    for s in series:
        if s.label_names:
            names.update(s.label_names)
        if s.null_label is not None:
            null_label = s.null_label
    return WindowSet(windows_from_series(series, cfg), names, null_label)


def write_window_cache(path, windows: Sequence[Window], label_names: dict[int, str] | None = None, null_label=None) -> None:
    """Binary window cache; label names go to a ``<path>.labels.json`` sidecar."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(WINDOW_MAGIC)
        fh.write(struct.pack("<I", len(windows)))
        for w in windows:
            if w.samples.shape != (300, 3):
                raise ValueError("the window cache stores 300x3 windows only")
            sid = w.subject_id.encode("utf-8")
            fh.write(struct.pack("<I", len(sid)))
            fh.write(sid)
            fh.write(struct.pack("<di", w.start_time, -1 if w.label is None else int(w.label)))
            fh.write(np.ascontiguousarray(w.samples, dtype="<f4").tobytes())
    if label_names:
        meta = {"label_names": {str(k): v for k, v in sorted(label_names.items())}, "null_label": null_label}
        Path(f"{path}.labels.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_window_cache(path) -> WindowSet:
    path = Path(path)
    data = path.read_bytes()
    if data[:8] != WINDOW_MAGIC:
        raise ValueError(f"{path}: not a window cache (bad magic)")
    (count,) = struct.unpack_from("<I", data, 8)
    pos = 12
    windows = []
    for _ in range(count):
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        sid = data[pos : pos + n].decode("utf-8")
        pos += n
        start, label = struct.unpack_from("<di", data, pos)
        pos += 12
        samples = np.frombuffer(data, dtype="<f4", count=900, offset=pos).reshape(300, 3)
        pos += 3600
        windows.append(Window(sid, start, samples.astype(np.float32), None if label < 0 else label))
    if pos != len(data):
        raise ValueError(f"{path}: trailing bytes in window cache")
    names, null_label = {}, None
    sidecar = Path(f"{path}.labels.json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        names = {int(k): v for k, v in meta["label_names"].items()}
        null_label = meta.get("null_label")
    return WindowSet(windows, names, null_label)
