"""``harssl`` command line.

Exit codes: 0 success, 2 usage, 3 configuration error, 4 data error,
5 numeric error. Structured logs go to stderr as JSON lines; a short human
summary goes to stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import baseline, encoder, evalkit, head, nn, pipeline
from .config import ConfigError, RunConfig, load_run_config
from .ingest import (
    DEFAULT_SYNTH_CLASSES,
    SynthSpec,
    WindowingConfig,
    load_windows,
    synth_corpus,
    write_csv_dataset,
    write_window_cache,
)
from .pairing import build_corpus_index

log = logging.getLogger("harssl")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4, 5


class JsonLineFormatter(logging.Formatter):
    def format(self, record):
        entry = {"level": record.levelname.lower(), "logger": record.name, "msg": record.getMessage()}
        if record.exc_info:
            entry["exc"] = self.formatException(record.exc_info)
        return json.dumps(entry, sort_keys=True)


def _setup_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLineFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    logging.getLogger("matplotlib").setLevel(logging.WARNING)


def _run_config(args, require_data=False) -> RunConfig | None:
    if getattr(args, "config", None) is None:
        return None
    return load_run_config(args.config, getattr(args, "set", None) or (), require_data=require_data)


def _windowing(args) -> WindowingConfig:
    cfg = _run_config(args)
    return cfg.windowing if cfg is not None else WindowingConfig()


def _seed(args, cfg: RunConfig | None) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    return cfg.seed if cfg is not None else 0


def _mapping(spec: str, wset):
    return pipeline.mapping_for(spec, wset)


# ---------------------------------------------------------------------------
# subcommands

def cmd_ingest(args):
    wset = load_windows(args.data, _windowing(args))
    write_window_cache(args.out, wset.windows, wset.label_names, wset.null_label)
    labeled = sum(w.label is not None for w in wset.windows)
    print(f"wrote {len(wset.windows)} windows ({labeled} labeled) to {args.out}")


def cmd_synth(args):
    cfg = _run_config(args)
    if cfg is not None and cfg.synth is not None:
        spec = replace(cfg.synth, seed=_seed(args, cfg))
    else:
        spec = SynthSpec(DEFAULT_SYNTH_CLASSES, subjects=args.subjects, seconds_per_class=args.seconds_per_class,
                         noise_sigma=args.noise_sigma, seed=_seed(args, cfg))
    series = synth_corpus(spec)
    write_csv_dataset(args.out, series)
    identity = evalkit.LabelMapping.identity([c.name for c in spec.classes], "synthetic")
    (Path(args.out) / "classes.json").write_text(json.dumps(identity.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(series)} series ({spec.subjects} subjects x {len(spec.classes)} classes) to {args.out}")


def cmd_pretrain(args):
    cfg = _run_config(args)
    enc_cfg = cfg.encoder if cfg is not None else encoder.EncoderConfig()
    overrides = {"seed": _seed(args, cfg)}
    if args.steps is not None:
        overrides["steps"] = args.steps
    if args.batch_pairs is not None:
        overrides["batch_pairs"] = args.batch_pairs
    enc_cfg = replace(enc_cfg, **overrides)
    pairing_cfg = replace(cfg.pairing, seed=enc_cfg.seed, batch_pairs=enc_cfg.batch_pairs) if cfg is not None else None
    menu = cfg.aug_menu if cfg is not None else None
    wset = load_windows(args.data, cfg.windowing if cfg is not None else WindowingConfig())
    delta = pairing_cfg.delta_t_max if pairing_cfg is not None else 60.0
    index = build_corpus_index(wset.windows, delta)
    if args.dump_batch:
        from .augment import default_menu
        from .pairing import PairingConfig, build_pair_batch

        pc = pairing_cfg or PairingConfig(batch_pairs=enc_cfg.batch_pairs, seed=enc_cfg.seed)
        rng = np.random.default_rng(np.random.SeedSequence([pc.seed, 1]))
        batch = build_pair_batch(index, pc, menu if menu is not None else default_menu(), rng)
        Path(args.dump_batch).write_text(batch.to_json() + "\n")
    result = encoder.pretrain(index, enc_cfg, pairing_cfg, menu, checkpoint_dir=args.checkpoint_dir,
                              materialize=args.materialize_pairs)
    encoder.save_encoder(args.out, enc_cfg, result.params)
    log_path = Path(args.log) if args.log else Path(args.out).with_suffix(".log.csv")
    encoder.write_training_log(log_path, result.log)
    if args.figure:
        from .plotting import loss_curve_figure, save_figure

        save_figure(loss_curve_figure(result.log), args.figure)
    final = f"{result.log[-1][1]:.4f}" if result.log else "n/a"
    print(f"pretrained {enc_cfg.steps} steps on {len(wset.windows)} windows; final loss {final}; saved {args.out}")


def cmd_embed(args):
    net, params, _ = encoder.load_encoder(args.encoder)
    wset = load_windows(args.data, _windowing(args))
    emb = encoder.embed(net, params, wset.windows)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "start_time", "label", *(f"e{i}" for i in range(emb.shape[1]))])
        for win, row in zip(wset.windows, emb):
            w.writerow([win.subject_id, repr(float(win.start_time)), wset.name_of(win) or "", *(repr(float(v)) for v in row)])
    print(f"embedded {len(emb)} windows -> {args.out}")


def cmd_train_head(args):
    cfg = _run_config(args)
    enc_net, enc_params, _ = encoder.load_encoder(args.encoder)
    wset = load_windows(args.data, cfg.windowing if cfg is not None else WindowingConfig())
    mapping = _mapping(args.classes, wset)
    windows, y, dropped = pipeline.labeled_subset(wset, wset.windows, mapping)
    head_values = dict(cfg.head) if cfg is not None else {}
    if args.epochs is not None:
        head_values["epochs"] = args.epochs
    hcfg = head.HeadConfig.from_dict({**head_values, "num_classes": mapping.num_classes, "seed": _seed(args, cfg)})
    emb = encoder.embed(enc_net, enc_params, windows)
    _, params, history = head.train_head(emb, y, hcfg)
    head.save_head(args.out, hcfg, params, emb.shape[1], mapping.target_classes)
    print(f"trained head on {len(windows)} windows ({dropped} unmapped dropped); final loss {history[-1][1]:.4f}" if history
          else f"head initialized (epochs=0); saved {args.out}")


def cmd_featurize(args):
    wset = load_windows(args.data, _windowing(args))
    feats = baseline.feature_matrix(wset.windows)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject", "start_time", *baseline.FEATURE_NAMES, "label"])
        for win, row in zip(wset.windows, feats):
            w.writerow([win.subject_id, repr(float(win.start_time)), *(f"{v:.8g}" for v in row), wset.name_of(win) or ""])
    print(f"wrote {len(feats)} feature rows to {args.out}")


def cmd_train_baseline(args):
    cfg = _run_config(args)
    wset = load_windows(args.data, cfg.windowing if cfg is not None else WindowingConfig())
    mapping = _mapping(args.classes, wset)
    windows, y, _ = pipeline.labeled_subset(wset, wset.windows, mapping)
    pcfg = cfg.baseline if cfg is not None and cfg.baseline is not None else baseline.ProbeConfig()
    pcfg = replace(pcfg, seed=_seed(args, cfg), **({"epochs": args.epochs} if args.epochs is not None else {}))
    probe = baseline.train_baseline(baseline.feature_matrix(windows), y, mapping.num_classes, pcfg)
    baseline.save_probe(args.out, probe, pcfg, mapping.target_classes)
    print(f"trained baseline on {len(windows)} windows; saved {args.out}")


def cmd_predict(args):
    enc_net, enc_params, _ = encoder.load_encoder(args.encoder)
    h_net, h_params, hcfg, class_names = head.load_head(args.head)
    if args.smoothing_seconds is not None:
        hcfg = replace(hcfg, smoothing_seconds=args.smoothing_seconds)
    wset = load_windows(args.data, _windowing(args))
    preds = head.predict(enc_net, enc_params, h_net, h_params, wset.windows, hcfg)
    pipeline.write_predictions(args.out, preds, class_names)
    if args.truth_out:
        pipeline.write_truth(args.truth_out, wset, wset.windows)
    print(f"wrote {len(preds)} predictions to {args.out}")


def cmd_eval(args):
    preds, names = pipeline.read_predictions(args.preds)
    mapping = evalkit.LabelMapping.identity(names) if args.mapping == "identity" else evalkit.resolve_mapping(args.mapping)
    report = pipeline.evaluate_files(args.preds, args.truth, mapping)
    evalkit.emit_report(report, args.out, figures=not args.no_figures)
    print(evalkit.summary_text(report), end="")


def cmd_pipeline(args):
    cfg = load_run_config(args.config, args.set or (), require_data=True)
    paths = pipeline.run_pipeline(cfg, args.out)
    report = evalkit.load_report(paths["report_json"])
    print(f"kappa {report.kappa:.3f}  accuracy {report.accuracy:.3f}  windows {report.n_windows}")
    for name, path in sorted(paths.items()):
        print(f"  {name}: {path}")


def cmd_check_config(args):
    cfg = load_run_config(args.config, args.set or (), require_data=True)
    print(f"config ok: seed={cfg.seed}, output_dir={cfg.output_dir}, encoder steps={cfg.encoder.steps}, "
          f"batch_pairs={cfg.encoder.batch_pairs}, augmentations={[s.kind for s in cfg.aug_menu]}")


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="harssl", description="Self-supervised activity recognition from wrist accelerometry.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.set_defaults(func=func)
        return sp

    def config_flags(sp, seed=True):
        sp.add_argument("--config", type=Path, help="run config (TOML or JSON)")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")
        if seed:
            sp.add_argument("--seed", type=int)

    sp = add("ingest", cmd_ingest, "resample and window a dataset into a binary window cache")
    sp.add_argument("--data", required=True, type=Path)
    sp.add_argument("--out", required=True, type=Path)
    config_flags(sp, seed=False)

    sp = add("synth", cmd_synth, "write the seeded synthetic corpus as a CSV dataset")
    sp.add_argument("--out", required=True, type=Path)
    sp.add_argument("--subjects", type=int, default=8)
    sp.add_argument("--seconds-per-class", type=float, default=200.0)
    sp.add_argument("--noise-sigma", type=float, default=0.02)
    config_flags(sp)

    sp = add("pretrain", cmd_pretrain, "contrastive pre-training of the encoder")
    sp.add_argument("--data", required=True, type=Path)
    sp.add_argument("--out", required=True, type=Path)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--batch-pairs", type=int)
    sp.add_argument("--log", type=Path, help="training log CSV (default: <out>.log.csv)")
    sp.add_argument("--figure", type=Path, help="write a loss-curve figure")
    sp.add_argument("--checkpoint-dir", type=Path)
    sp.add_argument("--materialize-pairs", action="store_true", help="sample all pairs before training")
    sp.add_argument("--dump-batch", type=Path, help="write the first batch as JSON for inspection")
    config_flags(sp)

    sp = add("embed", cmd_embed, "embed windows with a frozen encoder")
    sp.add_argument("--encoder", required=True, type=Path)
    sp.add_argument("--data", required=True, type=Path)
    sp.add_argument("--out", required=True, type=Path)
    config_flags(sp, seed=False)

    sp = add("train-head", cmd_train_head, "train the classification head on frozen embeddings")
    sp.add_argument("--encoder", required=True, type=Path)
    sp.add_argument("--data", required=True, type=Path)
    sp.add_argument("--classes", default="identity", help="label mapping: identity, a shipped name, or a file")
    sp.add_argument("--out", required=True, type=Path)
    sp.add_argument("--epochs", type=int)
    config_flags(sp)

    sp = add("featurize", cmd_featurize, "8 statistical features per window")
    sp.add_argument("--data", required=True, type=Path)
    sp.add_argument("--out", required=True, type=Path)
    config_flags(sp, seed=False)

    sp = add("train-baseline", cmd_train_baseline, "one-layer perceptron on the statistical features")
    sp.add_argument("--data", required=True, type=Path)
    sp.add_argument("--classes", default="identity")
    sp.add_argument("--out", required=True, type=Path)
    sp.add_argument("--epochs", type=int)
    config_flags(sp)

    sp = add("predict", cmd_predict, "smoothed per-window predictions")
    sp.add_argument("--encoder", required=True, type=Path)
    sp.add_argument("--head", required=True, type=Path)
    sp.add_argument("--data", required=True, type=Path)
    sp.add_argument("--out", required=True, type=Path)
    sp.add_argument("--truth-out", type=Path, help="also write the window labels as truth CSV")
    sp.add_argument("--smoothing-seconds", type=float)
    config_flags(sp, seed=False)

    sp = add("eval", cmd_eval, "confusion matrix, accuracy and Cohen's kappa")
    sp.add_argument("--preds", required=True, type=Path)
    sp.add_argument("--truth", required=True, type=Path)
    sp.add_argument("--mapping", default="identity")
    sp.add_argument("--out", required=True, type=Path)
    sp.add_argument("--no-figures", action="store_true")

    sp = add("pipeline", cmd_pipeline, "pretrain, train-head, predict and eval from one config")
    sp.add_argument("--config", required=True, type=Path)
    sp.add_argument("--out", type=Path, help="output directory (default: config output_dir)")
    sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")

    sp = add("check-config", cmd_check_config, "validate a run config")
    sp.add_argument("--config", required=True, type=Path)
    sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    _setup_logging(args.verbose)
    try:
        args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (nn.NumericError, FloatingPointError) as exc:
        log.error("numeric error: %s", exc)
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, KeyError) as exc:
        log.error("data error: %s", exc)
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
