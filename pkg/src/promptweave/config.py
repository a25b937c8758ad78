"""Run configuration: one sectioned INI file merged with command-line overrides.

Sections map onto dataclasses::

    [run]       seed
    [model]     ModelConfig
    [data]      SyntheticSpec
    [pretrain]  TrainConfig used for the pretraining stage
    [tune]      TrainConfig used for prompt tuning and baselines
    [sweep]     SweepSettings
    [paths]     Paths

Values are parsed according to the dataclass field types; tuples are comma
separated. Unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import io
import os
import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .backbone import ConfigError, ModelConfig
from .data import SyntheticSpec
from .training import TrainConfig

SEED_ENV = "PROMPTWEAVE_SEED"


@dataclass
class SweepSettings:
    axis: str = "test-eta"
    grid: tuple[float, ...] = (0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0)
    seeds: tuple[int, ...] = (0,)
    svg: bool = False


@dataclass
class Paths:
    data_dir: str = "data"
    checkpoint: str = "runs/pretrained.npz"
    tuned: str = "runs/tuned.npz"
    out_dir: str = "runs"


def _pretrain_default() -> TrainConfig:
    return TrainConfig(stage="pretrain", epochs=5)


@dataclass
class RunConfig:
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    data: SyntheticSpec = field(default_factory=SyntheticSpec)
    pretrain: TrainConfig = field(default_factory=_pretrain_default)
    tune: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    paths: Paths = field(default_factory=Paths)

    def validate(self) -> None:
        """Cross-field checks, run before any stage does work."""
        _wrap("model", self.model.validate)
        _wrap("data", self.data.validate)
        _wrap("pretrain", self.pretrain.validate)
        _wrap("tune", self.tune.validate)
        if self.pretrain.stage != "pretrain":
            raise ConfigError("[pretrain] stage: must be 'pretrain'")
        if self.tune.stage != "prompt_tune":
            raise ConfigError("[tune] stage: must be 'prompt_tune'")
        if tuple(self.model.seq_lens) != tuple(self.data.seq_len):
            raise ConfigError(f"[model] seq_lens {self.model.seq_lens} must equal [data] seq_len {self.data.seq_len}")
        if tuple(self.model.raw_dims) != tuple(self.data.raw_dim):
            raise ConfigError(f"[model] raw_dims {self.model.raw_dims} must equal [data] raw_dim {self.data.raw_dim}")
        if self.model.task != self.data.task:
            raise ConfigError(f"[model] task {self.model.task!r} must equal [data] task {self.data.task!r}")
        if self.model.task == "classification" and self.model.n_classes != self.data.n_classes:
            raise ConfigError("[model] n_classes must equal [data] n_classes")


SECTIONS = {
    "model": ModelConfig,
    "data": SyntheticSpec,
    "pretrain": TrainConfig,
    "tune": TrainConfig,
    "sweep": SweepSettings,
    "paths": Paths,
}


def _wrap(section: str, check) -> None:
    try:
        check()
    except ConfigError as exc:
        raise ConfigError(f"[{section}] {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def _hints(cls) -> dict:
    return typing.get_type_hints(cls)


def parse_value(text: str, hint, where: str):
    """Convert one INI string according to a field type hint."""
    text = text.strip()
    origin = typing.get_origin(hint)
    try:
        if origin is tuple:
            args = typing.get_args(hint)
            inner = args[0]
            parts = [p for p in (s.strip() for s in text.split(",")) if p]
            if len(args) == 2 and args[1] is Ellipsis:
                return tuple(parse_value(p, inner, where) for p in parts)
            if len(parts) != len(args):
                raise ValueError(f"expected {len(args)} comma-separated values")
            return tuple(parse_value(p, a, where) for p, a in zip(parts, args))
        if hint is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError("expected a boolean")
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {text!r} ({exc})") from None


def format_value(value) -> str:
    if isinstance(value, (tuple, list)):
        return ", ".join(format_value(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _apply(obj, section: str, items: dict[str, str]):
    hints = _hints(type(obj))
    names = {f.name for f in fields(obj)}
    updates = {}
    for key, text in items.items():
        if key not in names:
            raise ConfigError(f"[{section}] {key}: unknown key")
        updates[key] = parse_value(text, hints[key], f"[{section}] {key}")
    return replace(obj, **updates)


def load_config(path=None, overrides: dict[str, dict[str, str]] | None = None, env=None) -> RunConfig:
    """Defaults, then the INI file, then ``overrides`` ({section: {key: text}}).

    The seed falls back to ``$PROMPTWEAVE_SEED`` when neither file nor
    overrides give one.
    """
    env = os.environ if env is None else env
    raw: dict[str, dict[str, str]] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(path.read_text(encoding="utf-8"), source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for sec in parser.sections():
            raw[sec] = dict(parser[sec])
    for sec, items in (overrides or {}).items():
        raw.setdefault(sec, {}).update(items)

    rc = RunConfig()
    run = raw.pop("run", {})
    seed_text = run.pop("seed", None)
    for key in run:
        raise ConfigError(f"[run] {key}: unknown key")
    for sec in list(raw):
        if sec not in SECTIONS:
            raise ConfigError(f"[{sec}]: unknown section")
    if seed_text is None and env.get(SEED_ENV):
        seed_text = env[SEED_ENV]
    if seed_text is not None:
        rc.seed = parse_value(seed_text, int, "[run] seed")
    for sec, items in raw.items():
        setattr(rc, sec, _apply(getattr(rc, sec), sec, items))
    # the run seed drives both training stages unless a section pins its own;
    # the data seed is independent so every training seed sees the same data
    for sec in ("pretrain", "tune"):
        if "seed" not in raw.get(sec, {}):
            setattr(rc, sec, replace(getattr(rc, sec), seed=rc.seed))
    rc.validate()
    return rc


def dump_config(rc: RunConfig) -> str:
    """The fully resolved configuration as INI text."""
    parser = configparser.ConfigParser(interpolation=None)
    parser["run"] = {"seed": str(rc.seed)}
    for sec in SECTIONS:
        obj = getattr(rc, sec)
        parser[sec] = {f.name: format_value(getattr(obj, f.name)) for f in fields(obj)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
