"""Run configuration: one TOML/JSON file with a section per pipeline stage."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .augment import AugmentationSpec, KINDS, default_menu
from .baseline import ProbeConfig
from .encoder import EncoderConfig
from .head import HeadConfig
from .ingest import DEFAULT_SYNTH_CLASSES, SynthSpec, WindowingConfig, load_toml
from .pairing import PairingConfig

SECTIONS = ("data", "ingest", "augment", "pairing", "encoder", "head", "baseline", "eval")


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


def _build(cls, section: str, values: dict, **forced):
    names = {f.name for f in fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"[{section}] unknown keys: {sorted(unknown)}")
    try:
        if hasattr(cls, "from_dict"):
            return cls.from_dict({**values, **forced})
        return cls(**{**values, **forced})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


@dataclass
class EvalSettings:
    mapping: str = "identity"
    split: str = "held_out_subjects"
    test_fraction: float = 0.25
    figures: bool = True


@dataclass
class RunConfig:
    seed: int
    output_dir: Path
    data_path: Path | None = None
    synth: SynthSpec | None = None
    windowing: WindowingConfig = field(default_factory=WindowingConfig)
    aug_menu: list[AugmentationSpec] = field(default_factory=default_menu)
    pairing: PairingConfig = field(default_factory=PairingConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    head: dict = field(default_factory=dict)
    baseline: ProbeConfig | None = None
    eval: EvalSettings = field(default_factory=EvalSettings)
    source: Path | None = None

    def head_config(self, num_classes: int) -> HeadConfig:
        return _build(HeadConfig, "head", self.head, num_classes=num_classes, seed=self.seed)

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path = Path("."), check_paths: bool = True, require_data: bool = True) -> "RunConfig":
        unknown = set(d) - set(SECTIONS) - {"seed", "output_dir"}
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        if "seed" not in d:
            raise ConfigError("a global 'seed' is mandatory")
        seed = d["seed"]
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        output_dir = base_dir / d.get("output_dir", "out")

        data = dict(d.get("data", {}))
        data_path = synth = None
        if "path" in data and "synth" in data:
            raise ConfigError("[data] give either 'path' or a [data.synth] table, not both")
        if "path" in data:
            data_path = base_dir / data.pop("path")
            if check_paths and not data_path.exists():
                raise ConfigError(f"[data] path does not exist: {data_path}")
        elif "synth" in data:
            s = dict(data.pop("synth"))
            s.setdefault("classes", [{"name": c.name, "base_freq_hz": c.base_freq_hz, "amplitude_g": c.amplitude_g,
                                      "orientation": list(c.orientation)} for c in DEFAULT_SYNTH_CLASSES])
            s["seed"] = s.get("seed", seed)
            synth = _build(SynthSpec, "data.synth", s)
        elif require_data:
            raise ConfigError("[data] needs 'path' or a [data.synth] table")
        if data:
            raise ConfigError(f"[data] unknown keys: {sorted(data)}")

        windowing = _build(WindowingConfig, "ingest", d.get("ingest", {}))

        aug = dict(d.get("augment", {}))
        kinds = aug.pop("kinds", [k for k in KINDS if k != "compose"])
        params = aug.pop("params", {})
        compose_prob = aug.pop("compose_prob", None)
        if aug:
            raise ConfigError(f"[augment] unknown keys: {sorted(aug)}")
        try:
            menu = [AugmentationSpec.from_dict({"kind": k, "params": params.get(k, {})}) for k in kinds]
        except ValueError as exc:
            raise ConfigError(f"[augment] {exc}") from None

        pairing_values = dict(d.get("pairing", {}))
        if compose_prob is not None:
            pairing_values["compose_prob"] = compose_prob
        encoder = _build(EncoderConfig, "encoder", d.get("encoder", {}), seed=seed)
        pairing = _build(PairingConfig, "pairing", pairing_values, seed=seed, batch_pairs=encoder.batch_pairs)
        head = dict(d.get("head", {}))
        _build(HeadConfig, "head", head, num_classes=2, seed=seed)  # validate early
        baseline = None
        if "baseline" in d:
            b = dict(d["baseline"])
            if b.pop("enabled", True):
                baseline = _build(ProbeConfig, "baseline", b, seed=seed)
        ev = dict(d.get("eval", {}))
        try:
            eval_settings = EvalSettings(**ev)
        except TypeError as exc:
            raise ConfigError(f"[eval] {exc}") from None
        if eval_settings.split not in ("held_out_subjects", "random_windows"):
            raise ConfigError(f"[eval] unknown split {eval_settings.split!r}")
        if eval_settings.mapping not in ("identity",):
            from .evalkit import SHIPPED_MAPPINGS

            if eval_settings.mapping not in SHIPPED_MAPPINGS:
                mapping_path = base_dir / eval_settings.mapping
                if check_paths and not mapping_path.exists():
                    raise ConfigError(f"[eval] mapping file does not exist: {mapping_path}")
                eval_settings.mapping = str(mapping_path)
        return cls(seed, output_dir, data_path, synth, windowing, menu, pairing, encoder, head, baseline, eval_settings)


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        if path.suffix == ".json":
            return json.loads(path.read_text())
        return load_toml(path)
    except Exception as exc:  # parse errors from either format
        raise ConfigError(f"{path}: cannot parse config: {exc}") from None


def set_override(d: dict, assignment: str) -> None:
    """Apply ``section.key=value`` (value parsed as TOML/JSON scalar when possible)."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form section.key=value")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.strip().split(".")
    node = d
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def load_run_config(path, overrides=(), check_paths: bool = True, require_data: bool = True) -> RunConfig:
    d = read_config_file(path)
    for o in overrides:
        set_override(d, o)
    cfg = RunConfig.from_dict(d, Path(path).parent, check_paths, require_data)
    cfg.source = Path(path)
    return cfg
