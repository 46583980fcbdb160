"""End-to-end orchestration shared by the CLI subcommands."""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Sequence

import numpy as np

from . import baseline, encoder, evalkit, head
from .config import RunConfig
from .ingest import Window, WindowSet, load_windows, synth_corpus, windows_from_series

log = logging.getLogger(__name__)


def load_run_windows(cfg: RunConfig) -> WindowSet:
    if cfg.synth is not None:
        series = synth_corpus(cfg.synth)
        names = {}
        for s in series:
            names.update(s.label_names or {})
        return WindowSet(windows_from_series(series, cfg.windowing), names)
    return load_windows(cfg.data_path, cfg.windowing)


def mapping_for(spec: str, wset: WindowSet) -> evalkit.LabelMapping:
    if spec == "identity":
        names = [n for k, n in sorted(wset.label_names.items()) if k != wset.null_label]
        return evalkit.LabelMapping.identity(names)
    return evalkit.resolve_mapping(spec)


def labeled_subset(wset: WindowSet, windows: Sequence[Window], mapping: evalkit.LabelMapping):
    """Windows whose source label maps to a target class, their target ids, and the drop count."""
    targets, dropped = evalkit.apply_mapping([wset.name_of(w) for w in windows], mapping)
    keep = [(w, mapping.target_id(t)) for w, t in zip(windows, targets) if t is not None]
    return [w for w, _ in keep], np.array([y for _, y in keep], dtype=np.int64), dropped


def write_predictions(path, preds: Sequence[head.Prediction], class_names: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "start_time", "pred_class", *(f"logit_{n}" for n in class_names)])
        for p in preds:
            w.writerow([p.subject_id, repr(float(p.start_time)), p.pred_class, *(f"{v:.6g}" for v in p.logits)])


def write_truth(path, wset: WindowSet, windows: Sequence[Window]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "start_time", "label"])
        for win in sorted(windows, key=lambda x: (x.subject_id, x.start_time)):
            w.writerow([win.subject_id, repr(float(win.start_time)), wset.name_of(win) or ""])


def _key(subject, start):
    return subject, round(float(start), 6)


def read_predictions(path) -> tuple[dict, list[str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["subject_id", "start_time", "pred_class"]:
            raise ValueError(f"{path}: not a predictions file")
        names = [h[len("logit_"):] for h in header[3:]]
        preds = {_key(r[0], r[1]): int(r[2]) for r in reader if r}
    return preds, names


def read_truth(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"subject_id", "start_time", "label"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: truth file needs subject_id, start_time, label columns")
        return {_key(r["subject_id"], r["start_time"]): (r["label"] or None) for r in reader}


def evaluate_files(preds_path, truth_path, mapping: evalkit.LabelMapping) -> evalkit.EvalReport:
    preds, pred_names = read_predictions(preds_path)
    truth = read_truth(truth_path)
    missing = sorted(set(pred_names) - set(mapping.target_classes))
    if missing:
        raise ValueError(f"predicted classes {missing} are not mapping targets")
    keys = sorted(k for k in truth if k in preds)
    targets, dropped = evalkit.apply_mapping([truth[k] for k in keys], mapping)
    t_ids, p_ids = [], []
    for k, target in zip(keys, targets):
        if target is None:
            continue
        t_ids.append(mapping.target_id(target))
        p_ids.append(mapping.target_id(pred_names[preds[k]]))
    return evalkit.build_report(t_ids, p_ids, mapping.target_classes, dropped, mapping.name)


def run_pipeline(cfg: RunConfig, out_dir=None) -> dict[str, Path]:
    """pretrain -> train-head -> predict -> eval; returns the written paths."""
    out = Path(out_dir) if out_dir is not None else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    wset = load_run_windows(cfg)
    mapping = mapping_for(cfg.eval.mapping, wset)
    train, test = evalkit.subject_split(wset.windows, cfg.eval.split, cfg.seed, cfg.eval.test_fraction)
    log.info("windows: %d train, %d test", len(train), len(test))

    from .pairing import build_corpus_index

    index = build_corpus_index(train, cfg.pairing.delta_t_max)
    result = encoder.pretrain(index, cfg.encoder, cfg.pairing, cfg.aug_menu)
    paths = {"encoder": out / "encoder.model", "train_log": out / "train_log.csv"}
    encoder.save_encoder(paths["encoder"], cfg.encoder, result.params)
    encoder.write_training_log(paths["train_log"], result.log)
    if cfg.eval.figures and result.log:
        from .plotting import loss_curve_figure, save_figure

        paths["loss_curve"] = save_figure(loss_curve_figure(result.log), out / "loss_curve.png")

    train_w, train_y, _ = labeled_subset(wset, train, mapping)
    if len(np.unique(train_y)) < 2:
        raise ValueError("training split has fewer than two mapped classes")
    hcfg = cfg.head_config(mapping.num_classes)
    emb = encoder.embed(result.net, result.params, train_w)
    h_net, h_params, _ = head.train_head(emb, train_y, hcfg)
    paths["head"] = out / "head.model"
    head.save_head(paths["head"], hcfg, h_params, emb.shape[1], mapping.target_classes)

    preds = head.predict(result.net, result.params, h_net, h_params, test, hcfg)
    paths["preds"] = out / "preds.csv"
    paths["truth"] = out / "truth.csv"
    write_predictions(paths["preds"], preds, mapping.target_classes)
    write_truth(paths["truth"], wset, test)
    report = evaluate_files(paths["preds"], paths["truth"], mapping)
    paths.update({f"report_{k}": v for k, v in evalkit.emit_report(report, out / "report.json", cfg.eval.figures).items()})

    if cfg.baseline is not None:
        test_w, test_y, dropped = labeled_subset(wset, test, mapping)
        probe = baseline.train_baseline(baseline.feature_matrix(train_w), train_y, mapping.num_classes, cfg.baseline)
        paths["baseline"] = out / "baseline.model"
        baseline.save_probe(paths["baseline"], probe, cfg.baseline, mapping.target_classes)
        b_report = evalkit.build_report(test_y, probe.predict(baseline.feature_matrix(test_w)), mapping.target_classes, dropped, mapping.name)
        paths.update({f"baseline_report_{k}": v for k, v in evalkit.emit_report(b_report, out / "baseline_report.json", cfg.eval.figures).items()})
    return paths
