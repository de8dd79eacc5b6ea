"""Experiment configuration: one YAML file covering corpus, model,
training, pipeline artifacts and decoding, schema-validated with defaults.

Environment variables with the PHONEMIX_ prefix override scalar keys,
e.g. PHONEMIX_TRAIN_SEED=3 sets train.seed.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields, is_dataclass

import yaml

from .corpus import SyntheticCorpusConfig
from .decoding import BeamConfig
from .model import ModelConfig
from .trainer import TrainConfig

ENV_PREFIX = "PHONEMIX_"


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    codebook_k: int = 32
    codebook_max_iters: int = 50
    bpe_vocab: int = 128
    teacher_dim: int = 16
    teacher_window: int = 2
    lm_order: int = 3
    lm_alpha: float = 0.1
    seed: int = 0


@dataclass
class ExperimentConfig:
    corpus: SyntheticCorpusConfig = field(default_factory=SyntheticCorpusConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    beam: BeamConfig = field(default_factory=BeamConfig)

    def harmonize(self):
        """Keep model vocab/feature sizes consistent with the corpus and
        pipeline sections (single source of truth)."""
        self.model.feature_dim = self.corpus.feature_dim
        self.model.phoneme_vocab = self.corpus.phoneme_vocab_size
        self.model.text_vocab = self.corpus.text_vocab_size
        self.model.code_vocab = self.pipeline.bpe_vocab
        return self

    def set_seed(self, seed: int):
        self.corpus.seed = seed
        self.model.seed = seed
        self.train.seed = seed
        self.pipeline.seed = seed


def _build(dc_type, data: dict, path: str):
    known = {f.name: f for f in fields(dc_type)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key {path}{key}")
        default = getattr(dc_type(), key)
        if is_dataclass(default):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}{key} must be a mapping")
            kwargs[key] = _build(type(default), value, f"{path}{key}.")
        elif isinstance(default, tuple) and isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    return dc_type(**kwargs)


def _apply_env(cfg: ExperimentConfig):
    for key, value in os.environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        parts = key[len(ENV_PREFIX):].lower().split("_", 1)
        if len(parts) != 2 or not hasattr(cfg, parts[0]):
            continue
        section = getattr(cfg, parts[0])
        name = parts[1]
        if not hasattr(section, name):
            continue
        current = getattr(section, name)
        caster = type(current) if current is not None else str
        try:
            setattr(section, name, caster(yaml.safe_load(value)))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad env override {key}={value}: {e}") from e


def load_config(path=None, seed: int | None = None) -> ExperimentConfig:
    if path is None:
        cfg = ExperimentConfig()
    else:
        try:
            data = yaml.safe_load(open(path)) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: invalid YAML: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        cfg = _build(ExperimentConfig, data, "")
    _apply_env(cfg)
    if seed is not None:
        cfg.set_seed(seed)
    cfg.harmonize()
    cfg.corpus.validate()
    cfg.model.validate()
    cfg.train.validate()
    cfg.beam.validate()
    return cfg


def dump_config(cfg: ExperimentConfig | None = None) -> str:
    cfg = cfg or ExperimentConfig().harmonize()
    d = asdict(cfg)
    d["corpus"]["frames_per_phoneme"] = list(cfg.corpus.frames_per_phoneme)
    d["train"]["enabled_tasks"] = list(cfg.train.enabled_tasks)
    return yaml.safe_dump(d, sort_keys=False)
