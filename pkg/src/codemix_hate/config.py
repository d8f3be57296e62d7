"""Run configuration: one structured file covering every pipeline stage.

Files are YAML (JSON is accepted as a subset). Top-level sections are
``data``, ``split``, ``vocab``, ``augment``, ``model``, ``schedule`` and,
for ``grid`` runs, ``grid``; see README for the full schema. Unknown keys are
rejected so typos surface before any work starts.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from collections.abc import Mapping
from dataclasses import dataclass, field, fields

import yaml

from codemix_hate.augment import DEFAULT_MULTIPLIERS, AugmentConfig
from codemix_hate.corpus import ClassLabel
from codemix_hate.errors import ConfigError
from codemix_hate.model import ModelConfig
from codemix_hate.training import TrainingSchedule


@dataclass(frozen=True)
class DataConfig:
    stopwords: str | None = None
    dictionary: str | None = None
    lexicon: str | None = None
    embeddings: str | None = None
    delimiter: str = "\t"

    def __post_init__(self):
        if len(self.delimiter) != 1:
            raise ConfigError("data.delimiter must be a single character")


@dataclass(frozen=True)
class SplitConfig:
    test_fraction: float = 0.22
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ConfigError("split.test_fraction must lie in (0, 1)")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError("split.validation_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class VocabConfig:
    min_frequency: int = 1

    def __post_init__(self):
        if self.min_frequency < 1:
            raise ConfigError("vocab.min_frequency must be >= 1")


@dataclass(frozen=True)
class AugmentSection:
    enabled: bool = True
    alpha: float = 0.1
    deletion_probability: float = 0.1
    multipliers: tuple[int, int, int] = tuple(DEFAULT_MULTIPLIERS[c] for c in ClassLabel)
    n_per_op: int | None = None
    seed: int = 0
    # "post_preprocess": edit processed tokens; "pre_preprocess": edit cleaned
    # tokens before stopword removal and transliteration
    stage: str = "post_preprocess"

    def __post_init__(self):
        object.__setattr__(self, "multipliers", tuple(int(m) for m in self.multipliers))
        if len(self.multipliers) != 3:
            raise ConfigError("augment.multipliers must list three integers")
        if self.stage not in ("post_preprocess", "pre_preprocess"):
            raise ConfigError("augment.stage must be 'post_preprocess' or 'pre_preprocess'")
        self.to_augment_config()

    def to_augment_config(self) -> AugmentConfig:
        return AugmentConfig(
            alpha=self.alpha,
            deletion_probability=self.deletion_probability,
            multipliers={ClassLabel(c): m for c, m in enumerate(self.multipliers)},
            seed=self.seed,
            n_per_op=self.n_per_op,
        )


SECTIONS = {
    "data": DataConfig,
    "split": SplitConfig,
    "vocab": VocabConfig,
    "augment": AugmentSection,
    "model": ModelConfig,
    "schedule": TrainingSchedule,
}


def _build(section: str, cls, values: Mapping | None):
    values = dict(values or {})
    known = {f.name for f in fields(cls) if f.init}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown field {section}.{unknown[0]}")
    try:
        return cls(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from exc


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    vocab: VocabConfig = field(default_factory=VocabConfig)
    augment: AugmentSection = field(default_factory=AugmentSection)
    model: ModelConfig = field(default_factory=ModelConfig)
    schedule: TrainingSchedule = field(default_factory=TrainingSchedule)
    grid: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: Mapping | None) -> RunConfig:
        d = dict(d or {})
        unknown = sorted(set(d) - set(SECTIONS) - {"grid"})
        if unknown:
            raise ConfigError(f"unknown config section {unknown[0]!r}")
        built = {name: _build(name, sc, d.get(name)) for name, sc in SECTIONS.items()}
        grid = dict(d.get("grid") or {})
        for key, values in grid.items():
            section, _, name = key.partition(".")
            if section not in SECTIONS or name not in {f.name for f in fields(SECTIONS[section])}:
                raise ConfigError(f"grid key {key!r} does not name a config field")
            if not isinstance(values, list) or not values:
                raise ConfigError(f"grid.{key} must be a non-empty list")
        return cls(**built, grid=grid)

    def to_dict(self) -> dict:
        out = {}
        for name in SECTIONS:
            sec = getattr(self, name)
            out[name] = sec.to_dict() if hasattr(sec, "to_dict") else dataclasses.asdict(sec)
        for name in ("augment",):
            out[name]["multipliers"] = list(out[name]["multipliers"])
        out["grid"] = dict(self.grid)
        return out

    def with_overrides(self, overrides: Mapping[str, object]) -> RunConfig:
        """Apply ``{"section.field": value}`` overrides; None values are skipped."""
        d = self.to_dict()
        for key, value in overrides.items():
            if value is None:
                continue
            section, _, name = key.partition(".")
            if section not in SECTIONS:
                raise ConfigError(f"unknown config section in override {key!r}")
            d[section][name] = value
        return RunConfig.from_dict(d)

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("grid")
        d["schedule"].pop("checkpoint_path", None)
        text = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from exc
    if raw is not None and not isinstance(raw, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    return RunConfig.from_dict(raw)
