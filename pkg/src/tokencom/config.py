"""Experiment configuration: a flat YAML document mirroring ExperimentConfig."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

MASKING_MODES = ("none", "random", "context_aware")
DETECTORS = ("ml", "iterative")
MODELS = ("uniform", "ngram", "external")
CORPUS_FORMATS = ("ids", "text")
FADING_MODES = ("block", "per_token")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    vocab_size: int
    corpus_path: str
    packet_len: int = 128
    bits_per_symbol: int = 4
    snr_sweep_db: list[float] = field(default_factory=lambda: [0.0, 5.0, 10.0])
    masking_mode: str = "none"
    masking_ratio: float = 0.0
    detector: str = "iterative"
    max_iters: int = 6
    model: str = "ngram"
    ngram_alpha: float = 0.1
    trials: int = 1000
    seed: int = 0
    out_path: str = "results.csv"
    corpus_format: str = "ids"
    mask_token_id: int | None = None
    sidecar_url: str | None = None
    sidecar_timeout: float = 30.0
    compute_sim: bool = False
    fading: str = "block"
    one_shot_masking: bool = False
    sequential_updates: bool = False
    prior_weight: float = 1.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.vocab_size < 2:
            raise ConfigError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if not self.corpus_path:
            raise ConfigError("corpus_path is required")
        if self.packet_len < 1:
            raise ConfigError(f"packet_len must be >= 1, got {self.packet_len}")
        if self.bits_per_symbol not in (2, 4):
            raise ConfigError(f"bits_per_symbol must be 2 or 4, got {self.bits_per_symbol}")
        if not self.snr_sweep_db:
            raise ConfigError("snr_sweep_db must be non-empty")
        self.snr_sweep_db = [float(s) for s in self.snr_sweep_db]
        if self.masking_mode not in MASKING_MODES:
            raise ConfigError(f"masking_mode must be one of {MASKING_MODES}")
        if not 0.0 <= self.masking_ratio <= 1.0:
            raise ConfigError(f"masking_ratio must be in [0, 1], got {self.masking_ratio}")
        if self.detector not in DETECTORS:
            raise ConfigError(f"detector must be one of {DETECTORS}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}")
        if self.ngram_alpha <= 0:
            raise ConfigError(f"ngram_alpha must be > 0, got {self.ngram_alpha}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.corpus_format not in CORPUS_FORMATS:
            raise ConfigError(f"corpus_format must be one of {CORPUS_FORMATS}")
        if self.fading not in FADING_MODES:
            raise ConfigError(f"fading must be one of {FADING_MODES}")
        if self.mask_token_id is not None and not 0 <= self.mask_token_id < self.vocab_size:
            raise ConfigError(
                f"mask_token_id {self.mask_token_id} not in [0, {self.vocab_size})"
            )
        if self.model == "external":
            if not self.sidecar_url:
                raise ConfigError("model=external requires sidecar_url")
            if self.mask_token_id is None:
                raise ConfigError("model=external requires mask_token_id")
        if self.corpus_format == "text" and not self.sidecar_url:
            raise ConfigError("corpus_format=text requires sidecar_url for tokenization")
        if self.compute_sim and not self.sidecar_url:
            raise ConfigError("compute_sim requires sidecar_url")
        if self.prior_weight <= 0:
            raise ConfigError(f"prior_weight must be > 0, got {self.prior_weight}")

    def to_dict(self) -> dict:
        return asdict(self)


def config_from_dict(data: dict) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    """Parse a YAML config file, rejecting unknown keys; overrides win."""
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping of config keys")
    if overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(data)


def save_config(config: ExperimentConfig, path: str | Path):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=False)
