"""Declarative experiment configuration: JSON file + dotted-path overrides.

Experiment variants differ only by config, so one file plus a handful of
``--set key=value`` overrides fully determines every artifact. A hash of the
resolved config is embedded in every manifest.
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path

from .scenes import CorpusConfig, config_hash
from .training import TrainConfig

__all__ = ["ExperimentConfig", "ConfigError", "parse_config", "experiment_hash", "config_to_dict"]


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass
class ExperimentConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    out: str = "runs/exp"
    corpus_dir: str | None = None       # default: <out>/corpus
    checkpoint: str | None = None       # eval/ablate/probe; default: final train ckpt
    sweep_fractions: tuple[float, ...] = (0.2, 0.5, 1.0)

    def resolved_corpus_dir(self) -> Path:
        return Path(self.corpus_dir) if self.corpus_dir else Path(self.out) / "corpus"

    def resolved_checkpoint(self) -> Path:
        if self.checkpoint:
            return Path(self.checkpoint)
        return Path(self.out) / "train" / "checkpoints" / "final.json"

    def validate(self) -> None:
        try:
            self.corpus.validate()
        except ValueError as e:
            raise ConfigError(str(e), "corpus") from None
        try:
            self.train.validate()
        except ValueError as e:
            raise ConfigError(str(e), "train") from None
        if not self.sweep_fractions or sorted(self.sweep_fractions) != list(self.sweep_fractions):
            raise ConfigError("must be nonempty and sorted ascending", "sweep_fractions")
        if not all(0.0 < f <= 1.0 for f in self.sweep_fractions):
            raise ConfigError("fractions must lie in (0, 1]", "sweep_fractions")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["corpus"]["split_fractions"] = list(cfg.corpus.split_fractions)
    d["train"]["augmentations"] = list(cfg.train.augmentations)
    d["sweep_fractions"] = list(cfg.sweep_fractions)
    return d


def experiment_hash(cfg: ExperimentConfig) -> str:
    return config_hash(config_to_dict(cfg))


def _coerce(value, target_type, path: str):
    origin = typing.get_origin(target_type)
    if origin is typing.Union:  # Optional[...]
        args = [a for a in typing.get_args(target_type) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], path)
    if origin in (tuple, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"expected a list, got {value!r}", path)
        inner = typing.get_args(target_type)
        elem = inner[0] if inner else float
        return tuple(_coerce(v, elem, path) for v in value) if origin is tuple else [
            _coerce(v, elem, path) for v in value
        ]
    if target_type is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ConfigError(f"expected a bool, got {value!r}", path)
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected an int, got {value!r}", path)
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"expected an int, got {value!r}", path)
        return int(value)
    if target_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", path)
        return float(value)
    if target_type is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", path)
        return value
    return value


def _merge(obj, data: dict, prefix: str) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"expected an object, got {data!r}", prefix.rstrip("."))
    by_name = {f.name: f for f in fields(obj)}
    hints = typing.get_type_hints(type(obj))
    for key, value in data.items():
        path = f"{prefix}{key}"
        if key not in by_name:
            raise ConfigError("unknown key", path)
        current = getattr(obj, key)
        if is_dataclass(current):
            _merge(current, value, f"{path}.")
        else:
            setattr(obj, key, _coerce(value, hints[key], path))


def _apply_override(cfg: ExperimentConfig, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError("overrides take the form key.path=value", assignment)
    raw_path, raw_value = assignment.split("=", 1)
    parts = raw_path.strip().split(".")
    obj = cfg
    for i, part in enumerate(parts[:-1]):
        if not is_dataclass(obj) or part not in {f.name for f in fields(obj)}:
            raise ConfigError("unknown key", ".".join(parts[: i + 1]))
        obj = getattr(obj, part)
    leaf = parts[-1]
    if not is_dataclass(obj) or leaf not in {f.name for f in fields(obj)}:
        raise ConfigError("unknown key", raw_path.strip())
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value  # bare strings are allowed unquoted
    hints = typing.get_type_hints(type(obj))
    setattr(obj, leaf, _coerce(value, hints[leaf], raw_path.strip()))


def parse_config(
    path: str | Path | None,
    overrides: list[str] | None = None,
    seed: int | None = None,
    out: str | None = None,
) -> ExperimentConfig:
    """Defaults, then file contents, then overrides; validated at the end.

    An empty or missing file body yields the full desk-preset defaults. The
    optional ``seed`` is applied to both corpus and training seeds.
    """
    cfg = ExperimentConfig()
    if path is not None:
        text = Path(path).read_text()
        if text.strip():
            try:
                data = json.loads(text)
            except json.JSONDecodeError as e:
                raise ConfigError(f"config file is not valid JSON: {e}") from None
            _merge(cfg, data, "")
    for assignment in overrides or []:
        _apply_override(cfg, assignment)
    if out is not None:
        cfg.out = out
    if seed is not None:
        cfg.corpus.seed = seed
        cfg.train.seed = seed
    cfg.validate()
    return cfg
