"""Encoder, fusion, prediction head and projection head as one bundle.

Three uses share the bundle:

* supervised (E2E): images -> Enc -> fusion -> Head -> EF
* contrastive pre-training: each view -> Enc -> L2 norm -> Proj -> L2 norm
* probe / fine-tune: like supervised, with the encoder optionally frozen

Inputs are arrays shaped (N, M, s, t): N patients, M modes, depth s, time t.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from mmode_ef.augment import AugmentConfig, augment_array
from mmode_ef.errors import ArgumentError, CheckpointError, ShapeError
from mmode_ef.fusion import FusionConfig, FusionKind, LateFusion
from mmode_ef.tensor_nn import (
    Dense,
    Encoder,
    EncoderConfig,
    Module,
    Tensor,
    l2_normalize,
    no_grad,
    relu,
    reshape,
)
from mmode_ef.tensor_nn import checkpoint


@dataclass(frozen=True)
class ProjectionHeadConfig:
    hidden: int = 2048
    out: int = 128


@dataclass(frozen=True)
class HeadConfig:
    hidden: tuple[int, ...] = (256,)

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    proj: ProjectionHeadConfig = field(default_factory=ProjectionHeadConfig)

    def __post_init__(self):
        if self.encoder.out_dim != self.fusion.K:
            raise ValueError(f"encoder out_dim {self.encoder.out_dim} != fusion K {self.fusion.K}")
        if self.encoder.in_channels != self.fusion.encoder_channels:
            raise ValueError(
                f"{self.fusion.kind.value} fusion needs {self.fusion.encoder_channels} encoder "
                f"input channel(s), config has {self.encoder.in_channels}")

    def to_dict(self) -> dict:
        fusion = asdict(self.fusion)
        fusion["kind"] = self.fusion.kind.value
        return {"encoder": self.encoder.to_dict(), "fusion": fusion,
                "head": {"hidden": list(self.head.hidden)}, "proj": asdict(self.proj)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(EncoderConfig(**d["encoder"]), FusionConfig(**d["fusion"]),
                   HeadConfig(tuple(d["head"]["hidden"])), ProjectionHeadConfig(**d["proj"]))


class MLP(Module):
    def __init__(self, dims: list[int], rng: np.random.Generator):
        self.layers = [Dense(a, b, rng) for a, b in zip(dims[:-1], dims[1:])]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = relu(x)
        return x


class ModelBundle(Module):
    """All trainable parts of one model plus the freeze flag."""

    def __init__(self, config: ModelConfig, seed: int = 0, freeze_encoder: bool = False):
        rng = np.random.default_rng(seed)
        self.config = config
        self.encoder = Encoder(config.encoder, rng)
        self.fusion = None if config.fusion.kind is FusionKind.EARLY else LateFusion(config.fusion, rng)
        joint = config.fusion.joint_dim if self.fusion is not None else config.encoder.out_dim
        self.head = MLP([joint, *config.head.hidden, 1], rng)
        self.proj = MLP([config.encoder.out_dim, config.proj.hidden, config.proj.out], rng)
        self.freeze_encoder = freeze_encoder
        self.meta: dict = {}  # checkpoint metadata after load()

    # parameter groups -----------------------------------------------------
    def supervised_parameters(self) -> list[Tensor]:
        """Parameters updated when training for EF (Proj is never touched)."""
        params = [] if self.freeze_encoder else self.encoder.parameters()
        if self.fusion is not None:
            params = params + self.fusion.parameters()
        return params + self.head.parameters()

    def contrastive_parameters(self) -> list[Tensor]:
        return self.encoder.parameters() + self.proj.parameters()

    # forward passes -------------------------------------------------------
    def _check_input(self, x: np.ndarray) -> None:
        m = self.config.fusion.M
        if x.ndim != 4 or x.shape[1] != m:
            raise ShapeError(f"expected input (N, {m}, s, t), got {x.shape}")

    def encode(self, images: np.ndarray) -> Tensor:
        """Per-image features (B, K) from images (B, s, t) or (B, s, t, C)."""
        if images.ndim == 3:
            images = images[..., None]
        if self.freeze_encoder:
            with no_grad():
                return self.encoder(Tensor(images))
        return self.encoder(Tensor(images))

    def forward_supervised(self, x: np.ndarray) -> Tensor:
        """Predicted EF, shape (N,)."""
        x = np.asarray(x)
        self._check_input(x)
        n, m, s, t = x.shape
        if self.fusion is None:
            joint = self.encode(np.ascontiguousarray(x.transpose(0, 2, 3, 1)))
        else:
            feats = self.encode(x.reshape(n * m, s, t))
            joint = self.fusion(reshape(feats, (n, m, self.config.encoder.out_dim)))
        return reshape(self.head(joint), (n,))

    forward_probe = forward_supervised

    def forward_contrastive(self, x: np.ndarray, aug: AugmentConfig, rng: np.random.Generator) -> Tensor:
        """Projections (N, 2M, D): M originals then their M augmented views."""
        x = np.asarray(x)
        self._check_input(x)
        if self.fusion is None:
            raise ArgumentError("contrastive training encodes modes one at a time; use late fusion")
        n, m, s, t = x.shape
        if n < 2:
            raise ArgumentError("contrastive batches need at least two patients")
        views = np.concatenate([x, augment_array(x, aug, rng)], axis=1)  # (N, 2M, s, t)
        z = l2_normalize(self.encoder(Tensor(views.reshape(n * 2 * m, s, t, 1))), axis=-1)
        p = l2_normalize(self.proj(z), axis=-1)
        return reshape(p, (n, 2 * m, self.config.proj.out))

    # persistence ----------------------------------------------------------
    def save(self, path: str | Path, extra: dict | None = None) -> str:
        meta = {"model": self.config.to_dict(), "freeze_encoder": self.freeze_encoder, **(extra or {})}
        return checkpoint.save(path, self.state_dict(), meta)

    @classmethod
    def load(cls, path: str | Path) -> "ModelBundle":
        params, meta = checkpoint.load(path)
        if "model" not in meta:
            raise CheckpointError(f"{path}: checkpoint carries no model config")
        try:
            bundle = cls(ModelConfig.from_dict(meta["model"]), freeze_encoder=meta.get("freeze_encoder", False))
            bundle.load_state_dict(params)
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"{path}: {exc}") from exc
        bundle.meta = meta
        return bundle

    def load_encoder_from(self, path: str | Path) -> dict:
        """Copy encoder weights from a checkpoint; returns its metadata."""
        params, meta = checkpoint.load(path)
        try:
            theirs = EncoderConfig(**meta["model"]["encoder"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"{path}: no usable encoder config ({exc})") from exc
        if theirs != self.config.encoder:
            raise CheckpointError(f"{path}: encoder config {theirs} != expected {self.config.encoder}")
        prefix = "encoder."
        enc_state = {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}
        try:
            self.encoder.load_state_dict(enc_state)
        except (KeyError, ValueError) as exc:
            raise CheckpointError(f"{path}: {exc}") from exc
        return meta
