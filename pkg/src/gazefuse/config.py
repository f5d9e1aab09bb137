"""Run configuration: defaults, a YAML file, then command-line overrides.

Precedence, lowest first: built-in defaults, the ``--config`` file,
``--set section.key=value`` flags, dedicated flags such as ``--seed``.
The single top-level ``seed`` drives every random stream.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any

import yaml

from gazefuse.data import SplitConfig
from gazefuse.errors import ConfigError
from gazefuse.features import POLICIES, RegionGrid
from gazefuse.gaze import CohortConfig
from gazefuse.model import ModelConfig
from gazefuse.training import TrainConfig


@dataclass
class FeatureConfig:
    grid_rows: int = 4
    grid_cols: int = 4
    epsilon: float = 0.1
    policy: str = "uniform"
    seq_len: int = 32

    def validate(self) -> None:
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ConfigError("grid dimensions must be positive")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.seq_len < 1:
            raise ConfigError("seq_len must be positive")

    def grid(self) -> RegionGrid:
        return RegionGrid(self.grid_rows, self.grid_cols)


@dataclass
class EvalConfig:
    threshold: float = 0.5
    split: str = "test"
    top_k: int = 10

    def validate(self) -> None:
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must be in [0, 1]")
        if self.split not in ("train", "val", "test"):
            raise ConfigError(f"split must be train, val or test, got {self.split!r}")
        if self.top_k < 0:
            raise ConfigError("top_k must be nonnegative")


@dataclass
class AblateConfig:
    arms: list[str] | None = None
    jobs: int = 1

    def validate(self) -> None:
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "gazefuse_out"
    cohort_dir: str | None = None
    run_dir: str | None = None
    cohort: CohortConfig = field(default_factory=CohortConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    ablate: AblateConfig = field(default_factory=AblateConfig)

    def resolve(self) -> "RunConfig":
        """Push the top-level seed and shared settings into every section, then validate."""
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        self.split.seed = self.seed
        self.train.seed = self.seed
        self.model.dropout = self.train.dropout
        self.model.seq_len = self.features.seq_len
        self.model.modality_dims = {"speech": self.cohort.speech_dim, "visual": self.cohort.visual_dim}
        for section in (self.cohort, self.features, self.split, self.model, self.train, self.eval, self.ablate):
            section.validate()
        return self

    def to_dict(self) -> dict:
        # the output location is left out so reruns elsewhere stay byte-identical
        out = asdict(self)
        out.pop("out")
        out["model"].pop("feature_names")
        return out

    def to_json(self, command: str) -> str:
        return json.dumps({"command": command, **self.to_dict()}, indent=2, sort_keys=True) + "\n"


def _coerce(current: Any, raw: Any, where: str) -> Any:
    if isinstance(current, bool):
        if isinstance(raw, bool):
            return raw
        if isinstance(raw, str) and raw.lower() in ("true", "false"):
            return raw.lower() == "true"
        raise ConfigError(f"{where}: expected true/false, got {raw!r}")
    if isinstance(current, int) and not isinstance(current, bool):
        try:
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError
            return int(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: expected an integer, got {raw!r}") from None
    if isinstance(current, float):
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: expected a number, got {raw!r}") from None
    return raw


def _apply(target, values: dict, where: str) -> None:
    if not isinstance(values, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name for f in fields(target)}
    for key, raw in values.items():
        if key not in names:
            raise ConfigError(f"unknown setting {where}.{key}" if where else f"unknown setting {key}")
        current = getattr(target, key)
        if is_dataclass(current):
            _apply(current, raw, f"{where}.{key}" if where else key)
        else:
            setattr(target, key, _coerce(current, raw, f"{where}.{key}" if where else key))


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> RunConfig:
    """Defaults, then the YAML file (if any), then ``section.key=value`` overrides."""
    cfg = RunConfig()
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML: {exc}") from None
        _apply(cfg, raw, "")
    for item in overrides or []:
        set_value(cfg, item)
    return cfg


def set_value(cfg: RunConfig, assignment: str) -> None:
    """Apply one ``dotted.key=value`` override; the value is parsed as YAML."""
    key, sep, text = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(f"override must look like section.key=value, got {assignment!r}")
    try:
        value = yaml.safe_load(text)
    except yaml.YAMLError:
        value = text
    nested: Any = value
    for part in reversed(key.split(".")):
        nested = {part: nested}
    _apply(cfg, nested, "")
