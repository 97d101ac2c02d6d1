"""Run configuration: a line-oriented key=value file with section headers,
merged with command-line overrides.

Precedence, lowest to highest: dataclass defaults, then the config file,
then flags the user explicitly passed.  Every run echoes its fully resolved
configuration to resolved.cfg in the output directory so a run can be
reproduced from its artifacts alone.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, replace
from pathlib import Path

from .model import ModelConfig
from .trainer import TrainConfig

__all__ = ["ConfigError", "RunConfig", "parse_synth_spec", "load_run_config",
           "resolved_text", "write_resolved", "with_num_classes"]


class ConfigError(ValueError):
    """Bad config file or bad override value."""


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_workers(text: str):
    t = text.strip().lower()
    if t in ("", "none", "auto"):
        return None
    return int(text)


_MODEL_FIELDS = {
    "depth": int, "num_classes": int, "width_mult": float,
    "cbam": _parse_bool, "cbam_ratio": int, "cbam_kernel": int,
    "sco": _parse_bool, "sco_literal": _parse_bool,
    "replace_stem": _parse_bool, "replace_maxpool": _parse_bool,
    "modify_shortcut": _parse_bool, "shortcut_relu": _parse_bool,
    "dropout_rate": float, "seed": int,
}
_TRAIN_FIELDS = {
    "lr0": float, "t_max": int, "eta_min": float, "momentum": float,
    "batch_size": int, "epochs": int, "ema_decay": float, "seed": int,
    "eval_with_ema": _parse_bool, "no_restart": _parse_bool,
    "workers": _parse_workers,
}
_DATA_FIELDS = {"manifest": str, "synthetic": str, "size": int}
_RUN_FIELDS = {"out_dir": str}
_SECTIONS = {"model": _MODEL_FIELDS, "train": _TRAIN_FIELDS,
             "data": _DATA_FIELDS, "run": _RUN_FIELDS}


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    manifest: str | None = None
    synthetic: str | None = None
    size: int = 32                  # synthetic image size
    out_dir: str = "run_out"

    def validate(self) -> None:
        self.model.validate()
        self.train.validate()
        if self.synthetic is not None:
            parse_synth_spec(self.synthetic)


def parse_synth_spec(spec: str) -> tuple[int, int]:
    """'KxN' -> (num_classes, total train samples)."""
    m = re.fullmatch(r"(\d+)x(\d+)", spec.strip())
    if not m:
        raise ConfigError(
            f"synthetic spec must look like '3x60' (classes x train size), "
            f"got {spec!r}")
    k, n = int(m.group(1)), int(m.group(2))
    if k < 2:
        raise ConfigError(f"synthetic spec needs at least 2 classes, got {k}")
    if n < k or n % k != 0:
        raise ConfigError(
            f"synthetic train size {n} must be a positive multiple of {k}")
    return k, n


def _read_file(path) -> dict[tuple[str, str], str]:
    cp = configparser.ConfigParser()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    values: dict[tuple[str, str], str] = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, value in cp[section].items():
            if key not in _SECTIONS[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            values[(section, key)] = value
    return values


def load_run_config(file_path=None, overrides=None) -> RunConfig:
    """Merge defaults, the optional config file, and explicit overrides.

    overrides maps (section, key) to an already-typed Python value (as
    parsed by argparse) or to a string, which is coerced like a file value.
    Entries whose value is None are treated as not provided.
    """
    merged: dict[tuple[str, str], object] = {}
    if file_path is not None:
        for (section, key), text in _read_file(file_path).items():
            try:
                merged[(section, key)] = _SECTIONS[section][key](text)
            except (ValueError, ConfigError) as exc:
                raise ConfigError(
                    f"bad value for {section}.{key}: {text!r} ({exc})") from exc
    for (section, key), value in (overrides or {}).items():
        if value is None:
            continue
        if section not in _SECTIONS or key not in _SECTIONS[section]:
            raise ConfigError(f"unknown override {section}.{key}")
        if isinstance(value, str) and _SECTIONS[section][key] is not str:
            try:
                value = _SECTIONS[section][key](value)
            except (ValueError, ConfigError) as exc:
                raise ConfigError(
                    f"bad value for {section}.{key}: {value!r} ({exc})") from exc
        merged[(section, key)] = value

    model = ModelConfig(**{k: v for (s, k), v in merged.items() if s == "model"})
    train = TrainConfig(**{k: v for (s, k), v in merged.items() if s == "train"})
    data = {k: v for (s, k), v in merged.items() if s == "data"}
    run = {k: v for (s, k), v in merged.items() if s == "run"}
    cfg = RunConfig(model=model, train=train,
                    manifest=data.get("manifest"),
                    synthetic=data.get("synthetic"),
                    size=data.get("size", 32),
                    out_dir=run.get("out_dir", "run_out"))
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def resolved_text(cfg: RunConfig) -> str:
    """Full INI echo of a run configuration, every key explicit."""
    lines = ["[model]"]
    for key in _MODEL_FIELDS:
        lines.append(f"{key} = {getattr(cfg.model, key)}")
    lines.append("")
    lines.append("[train]")
    for key in _TRAIN_FIELDS:
        lines.append(f"{key} = {getattr(cfg.train, key)}")
    lines.append("")
    lines.append("[data]")
    lines.append(f"manifest = {cfg.manifest if cfg.manifest else ''}")
    lines.append(f"synthetic = {cfg.synthetic if cfg.synthetic else ''}")
    lines.append(f"size = {cfg.size}")
    lines.append("")
    lines.append("[run]")
    lines.append(f"out_dir = {cfg.out_dir}")
    return "\n".join(lines) + "\n"


def write_resolved(cfg: RunConfig, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "resolved.cfg"
    path.write_text(resolved_text(cfg))
    return path


def with_num_classes(cfg: RunConfig, num_classes: int) -> RunConfig:
    """Data decides the class count; returns a copy with the model updated."""
    return replace(cfg, model=replace(cfg.model, num_classes=num_classes))
