"""Run configuration and its ``key = value`` file format.

A config file is a list of ``key = value`` lines (``#`` starts a comment).
Values are parsed as JSON when possible (numbers, ``true``/``false``,
``[16, 32]``) and kept as strings otherwise, e.g.::

    M = 10
    fusion = concat
    clip = short
    lr_cl = 0.001
    encoder = desk
"""

from __future__ import annotations

import configparser
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from mmode_ef.augment import AugmentConfig
from mmode_ef.errors import ArgumentError
from mmode_ef.fusion import FusionConfig, FusionKind
from mmode_ef.mmode_gen import ClipPolicy
from mmode_ef.model import HeadConfig, ModelConfig, ProjectionHeadConfig
from mmode_ef.tensor_nn import EncoderConfig, desk_encoder_config

ENCODER_PRESETS = ("resnet", "desk")
# the pre-training learning rate listed with the published hyperparameters
PUBLISHED_LR_CL = 1.0


@dataclass
class TrainConfig:
    seed: int = 0
    M: int = 10
    fusion: str = "concat"
    clip: str = "full"
    epochs_sup: int = 100
    epochs_cl: int = 300
    warmup_epochs: int = 30
    lr_sup: float = 1e-3
    lr_cl: float = 1e-3
    bsz_sup: int = 64
    bsz_cl: int = 256
    label_fraction: float = 1.0
    tau: float = 0.01
    alpha: float = 0.8
    flip_prob: float = 0.5
    noise_sigma: float = 0.05
    augment_sup: bool = True
    select_best: bool = True
    encoder: str = "resnet"
    enc_dim: int = 512
    stage_widths: list[int] | None = None
    blocks_per_stage: list[int] | None = None
    proj_hidden: int = 2048
    proj_out: int = 128
    head_hidden: list[int] = field(default_factory=lambda: [256])
    lstm_dim: int = 256
    workers: int = 1

    def __post_init__(self):
        FusionKind(self.fusion)
        ClipPolicy(self.clip)
        if self.encoder not in ENCODER_PRESETS:
            raise ArgumentError(f"encoder must be one of {ENCODER_PRESETS}, got {self.encoder!r}")
        positive = ("M", "epochs_sup", "epochs_cl", "bsz_sup", "bsz_cl", "enc_dim",
                    "proj_hidden", "proj_out", "lstm_dim", "workers")
        for name in positive:
            if getattr(self, name) < 1:
                raise ArgumentError(f"{name} must be positive, got {getattr(self, name)}")
        if self.warmup_epochs < 0:
            raise ArgumentError("warmup_epochs must be non-negative")
        if self.lr_sup <= 0 or self.lr_cl <= 0 or self.tau <= 0:
            raise ArgumentError("learning rates and tau must be positive")
        if not 0.0 < self.label_fraction <= 1.0:
            raise ArgumentError(f"label_fraction must be in (0, 1], got {self.label_fraction}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ArgumentError(f"alpha must be in [0, 1], got {self.alpha}")
        self.head_hidden = list(self.head_hidden)

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Small encoder and heads sized for single-core CPU runs."""
        base = dict(encoder="desk", enc_dim=32, proj_hidden=256, proj_out=64, head_hidden=[64])
        base.update(overrides)
        return cls(**base)

    @classmethod
    def published(cls, **overrides) -> "TrainConfig":
        """Published hyperparameters, including the pre-training learning rate of 1.0."""
        return cls(**{"lr_cl": PUBLISHED_LR_CL, **overrides})

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    @property
    def clip_policy(self) -> ClipPolicy:
        return ClipPolicy(self.clip)

    @property
    def fusion_kind(self) -> FusionKind:
        return FusionKind(self.fusion)

    def fusion_config(self) -> FusionConfig:
        return FusionConfig(self.fusion_kind, self.M, self.enc_dim, self.lstm_dim)

    def encoder_config(self) -> EncoderConfig:
        channels = self.fusion_config().encoder_channels
        if self.encoder == "desk":
            cfg = desk_encoder_config(channels, self.enc_dim)
        else:
            cfg = EncoderConfig(in_channels=channels, out_dim=self.enc_dim)
        if self.stage_widths is not None:
            cfg.stage_widths = list(self.stage_widths)
        if self.blocks_per_stage is not None:
            cfg.blocks_per_stage = list(self.blocks_per_stage)
        cfg.__post_init__()
        return cfg

    def model_config(self) -> ModelConfig:
        return ModelConfig(self.encoder_config(), self.fusion_config(),
                           HeadConfig(tuple(self.head_hidden)),
                           ProjectionHeadConfig(self.proj_hidden, self.proj_out))

    def augment_config(self) -> AugmentConfig:
        return AugmentConfig(self.flip_prob, self.noise_sigma)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, values: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ArgumentError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**values)


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw.strip()


def parse_config_text(text: str) -> dict:
    parser = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#",),
                                       inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str  # keys are case-sensitive (M)
    parser.read_string("[run]\n" + text)
    return {key: _parse_value(value) for key, value in parser["run"].items()}


def load_config(path: str | Path | None, **overrides) -> TrainConfig:
    """Read a config file (or start from defaults) and apply keyword overrides."""
    values = parse_config_text(Path(path).read_text(encoding="utf-8")) if path else {}
    preset = values.pop("preset", "default")
    values.update({k: v for k, v in overrides.items() if v is not None})
    unknown = sorted(set(values) - {f.name for f in fields(TrainConfig)})
    if unknown:
        raise ArgumentError(f"unknown config keys: {', '.join(unknown)}")
    if preset == "desk":
        return TrainConfig.desk(**values)
    if preset == "published":
        return TrainConfig.published(**values)
    if preset != "default":
        raise ArgumentError(f"unknown preset {preset!r}")
    return TrainConfig(**values)


def dump_config(config: TrainConfig) -> str:
    return "".join(f"{k} = {json.dumps(v)}\n" for k, v in config.to_dict().items())
