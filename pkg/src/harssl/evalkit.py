"""Evaluation: label mapping across datasets, confusion matrices, Cohen's kappa, reports.

Confusion matrices are always indexed ``[truth, predicted]``.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .ingest import Window, load_toml

log = logging.getLogger(__name__)

CAPTURE24_CLASSES = ("sleep", "sit-stand", "vehicle", "walking", "mixed activity", "bicycling")
SHIPPED_MAPPINGS = ("pamap2_to_capture24", "pilot_to_capture24")


class UnmappedLabelError(KeyError):
    pass


@dataclass(frozen=True)
class LabelMapping:
    target_classes: tuple[str, ...]
    source_to_target: dict[str, str]
    unmapped_policy: str = "drop"
    name: str = ""

    def __post_init__(self):
        if self.unmapped_policy not in ("drop", "error"):
            raise ValueError(f"unknown unmapped_policy {self.unmapped_policy!r}")
        if len(set(self.target_classes)) != len(self.target_classes):
            raise ValueError("duplicate target classes")
        missing = sorted({t for t in self.source_to_target.values() if t not in self.target_classes})
        if missing:
            raise ValueError(f"mapping targets not among target_classes: {missing}")

    @property
    def num_classes(self) -> int:
        return len(self.target_classes)

    def target_id(self, name: str) -> int:
        return self.target_classes.index(name)

    def sources_of(self, target: str) -> list[str]:
        return [s for s, t in self.source_to_target.items() if t == target]

    @classmethod
    def identity(cls, classes: Sequence[str], name: str = "identity") -> "LabelMapping":
        return cls(tuple(classes), {c: c for c in classes}, "drop", name)

    @classmethod
    def from_dict(cls, d: dict, name: str = "") -> "LabelMapping":
        targets = d.get("target", {})
        order = tuple(d.get("target_classes", list(targets)))
        source_to_target: dict[str, str] = {}
        for target, entry in targets.items():
            for source in entry.get("sources", []):
                if source in source_to_target and source_to_target[source] != target:
                    raise ValueError(f"source class {source!r} mapped to two targets")
                source_to_target[source] = target
        for target in targets:
            if target not in order:
                raise ValueError(f"target {target!r} missing from target_classes")
        return cls(order, source_to_target, d.get("unmapped_policy", "drop"), d.get("name", name))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "target_classes": list(self.target_classes),
            "unmapped_policy": self.unmapped_policy,
            "target": {t: {"sources": self.sources_of(t)} for t in self.target_classes},
        }


def load_mapping(path) -> LabelMapping:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"mapping file not found: {path}")
    d = load_toml(path) if path.suffix == ".toml" else json.loads(path.read_text())
    return LabelMapping.from_dict(d, name=path.stem)


def shipped_mapping(name: str) -> LabelMapping:
    """One of the bundled mappings, e.g. ``"pamap2_to_capture24"``."""
    if name not in SHIPPED_MAPPINGS:
        raise KeyError(f"no shipped mapping {name!r}; choose from {SHIPPED_MAPPINGS}")
    ref = resources.files("harssl") / "data" / f"{name}.toml"
    with resources.as_file(ref) as path:
        return load_mapping(path)


def resolve_mapping(spec: str) -> LabelMapping:
    """A shipped mapping name or a path to a mapping file."""
    if spec in SHIPPED_MAPPINGS:
        return shipped_mapping(spec)
    return load_mapping(spec)


def apply_mapping(labels: Sequence[str | None], m: LabelMapping) -> tuple[list[str | None], int]:
    """Map source names to targets; ``None`` marks dropped entries.

    Returns the mapped list and the number dropped. ``None`` inputs (unlabeled
    windows) are dropped as well.
    """
    out: list[str | None] = []
    dropped = 0
    for label in labels:
        target = m.source_to_target.get(label) if label is not None else None
        if target is None:
            if label is not None and m.unmapped_policy == "error":
                raise UnmappedLabelError(f"label {label!r} has no mapping in {m.name or 'mapping'}")
            dropped += 1
        out.append(target)
    return out, dropped


def confusion_matrix(truth: Sequence[int], pred: Sequence[int], k: int) -> np.ndarray:
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if truth.shape != pred.shape:
        raise ValueError(f"truth and pred lengths differ ({truth.size} vs {pred.size})")
    if truth.size and (min(truth.min(), pred.min()) < 0 or max(truth.max(), pred.max()) >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (truth, pred), 1)
    return counts


def kappa_details(confusion) -> tuple[float, bool]:
    """Cohen's kappa and a flag set when chance agreement is 1 (single class)."""
    c = np.asarray(confusion, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError("confusion matrix must be square")
    n = c.sum()
    if c.size == 0 or n <= 0:
        raise ValueError("cannot compute kappa of an empty confusion matrix")
    p_o = np.trace(c) / n
    p_e = float((c.sum(axis=1) * c.sum(axis=0)).sum() / (n * n))
    if p_e >= 1.0:
        return (1.0 if p_o >= 1.0 else 0.0), True
    return float((p_o - p_e) / (1.0 - p_e)), False


def cohens_kappa(confusion) -> float:
    return kappa_details(confusion)[0]


@dataclass
class EvalReport:
    class_names: list[str]
    confusion: list[list[int]]
    accuracy: float
    kappa: float
    kappa_degenerate: bool
    precision: list[float | None]
    recall: list[float | None]
    n_windows: int
    n_dropped_unmapped: int = 0
    class_coverage: list[str] = field(default_factory=list)
    mapping: str = ""
    convention: str = "rows=truth, cols=predicted"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def build_report(truth: Sequence[int], pred: Sequence[int], class_names: Sequence[str], n_dropped: int = 0, mapping: str = "") -> EvalReport:
    k = len(class_names)
    c = confusion_matrix(truth, pred, k)
    n = int(c.sum())
    if n == 0:
        raise ValueError("no windows to evaluate")
    kappa, degenerate = kappa_details(c)
    col = c.sum(axis=0)
    row = c.sum(axis=1)
    diag = np.diag(c)
    precision = [float(diag[i] / col[i]) if col[i] else None for i in range(k)]
    recall = [float(diag[i] / row[i]) if row[i] else None for i in range(k)]
    return EvalReport(
        class_names=list(class_names),
        confusion=c.tolist(),
        accuracy=float(diag.sum() / n),
        kappa=kappa,
        kappa_degenerate=degenerate,
        precision=precision,
        recall=recall,
        n_windows=n,
        n_dropped_unmapped=int(n_dropped),
        class_coverage=[class_names[i] for i in range(k) if row[i] > 0],
        mapping=mapping,
    )


def _fmt(v):
    return "   -  " if v is None else f"{v:6.3f}"


def summary_text(report: EvalReport) -> str:
    width = max(12, *(len(n) for n in report.class_names))
    lines = [
        f"windows: {report.n_windows} (dropped unmapped: {report.n_dropped_unmapped})",
        f"accuracy: {report.accuracy:.3f}",
        f"kappa: {report.kappa:.3f}" + (" (degenerate: single class)" if report.kappa_degenerate else ""),
        f"classes with support: {', '.join(report.class_coverage)}",
        "",
        f"{'class':<{width}}  precision  recall  support",
    ]
    for i, name in enumerate(report.class_names):
        support = sum(report.confusion[i])
        lines.append(f"{name:<{width}}  {_fmt(report.precision[i])}     {_fmt(report.recall[i])}  {support:7d}")
    lines += ["", f"confusion ({report.convention}):"]
    for name, row in zip(report.class_names, report.confusion):
        lines.append(f"{name:<{width}}  " + " ".join(f"{v:6d}" for v in row))
    return "\n".join(lines) + "\n"


def report_paths(path) -> dict[str, Path]:
    path = Path(path)
    stem = path.with_suffix("")
    return {
        "json": path,
        "confusion_csv": Path(f"{stem}.confusion.csv"),
        "summary": Path(f"{stem}.summary.txt"),
        "figure": Path(f"{stem}.confusion.png"),
    }


def emit_report(report: EvalReport, path, figures: bool = True) -> dict[str, Path]:
    """Write JSON, confusion CSV, plain-text summary and (optionally) a confusion figure."""
    paths = report_paths(path)
    parent = paths["json"].parent
    if not parent.exists():
        raise FileNotFoundError(f"output directory does not exist: {parent}")
    paths["json"].write_text(report.to_json())
    with open(paths["confusion_csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["truth\\predicted", *report.class_names])
        for name, row in zip(report.class_names, report.confusion):
            w.writerow([name, *row])
    paths["summary"].write_text(summary_text(report))
    if figures:
        from .plotting import confusion_figure, save_figure

        save_figure(confusion_figure(report), paths["figure"])
    else:
        paths.pop("figure")
    return paths


def load_report(path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text()))


def subject_split(windows: Sequence[Window], policy: str = "held_out_subjects", seed: int = 0, fraction: float = 0.2):
    """``(train, test)`` split by random windows or by whole held-out subjects.

    ``fraction`` is the test share of windows or of subjects respectively.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5B17]))
    if policy == "random_windows":
        order = rng.permutation(len(windows))
        n_test = int(round(fraction * len(windows)))
        test_idx = set(order[:n_test].tolist())
        train = [w for i, w in enumerate(windows) if i not in test_idx]
        test = [w for i, w in enumerate(windows) if i in test_idx]
        return train, test
    if policy == "held_out_subjects":
        subjects = sorted({w.subject_id for w in windows})
        if len(subjects) < 2:
            raise ValueError("held-out-subject split needs at least two subjects")
        n_test = min(max(1, int(round(fraction * len(subjects)))), len(subjects) - 1)
        test_subjects = set(rng.permutation(subjects)[:n_test].tolist())
        train = [w for w in windows if w.subject_id not in test_subjects]
        test = [w for w in windows if w.subject_id in test_subjects]
        return train, test
    raise ValueError(f"unknown split policy {policy!r}")
