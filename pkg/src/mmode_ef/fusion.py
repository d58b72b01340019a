"""Combining the M M-mode images of one patient.

Early fusion stacks the images as channels of a single encoder input.  Late
fusion encodes each image separately and merges the M feature vectors by
concatenation, averaging or an LSTM run over the modes in angle order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from mmode_ef.errors import ShapeError
from mmode_ef.mmode_gen import MModeStack
from mmode_ef.tensor_nn import LSTMCell, Module, Tensor, as_tensor, reshape, stack
from mmode_ef.tensor_nn.tensor import get_default_dtype


class FusionKind(str, enum.Enum):
    EARLY = "early"
    CONCAT = "concat"
    MEAN = "mean"
    LSTM = "lstm"


@dataclass(frozen=True)
class FusionConfig:
    kind: FusionKind = FusionKind.CONCAT
    M: int = 10
    K: int = 512
    lstm_dim: int = 256

    def __post_init__(self):
        object.__setattr__(self, "kind", FusionKind(self.kind))
        if self.M < 1 or self.K < 1 or self.lstm_dim < 1:
            raise ValueError("fusion dimensions must be positive")

    @property
    def joint_dim(self) -> int:
        """Width of the fused representation fed to the head."""
        if self.kind is FusionKind.CONCAT:
            return self.K * self.M
        if self.kind is FusionKind.LSTM:
            return self.lstm_dim
        return self.K

    @property
    def encoder_channels(self) -> int:
        return self.M if self.kind is FusionKind.EARLY else 1


def fuse_early(stack_or_images) -> np.ndarray:
    """Stack M images of shape (s, t) into one (M, s, t) array, channel m = image m."""
    if isinstance(stack_or_images, MModeStack):
        images = [im.pixels for im in stack_or_images.images]
    else:
        images = list(stack_or_images)
    if not images:
        raise ShapeError("need at least one image to fuse")
    shapes = {np.shape(im) for im in images}
    if len(shapes) != 1 or len(next(iter(shapes))) != 2:
        raise ShapeError(f"images must share one 2-D shape, got {sorted(shapes)}")
    return np.stack([np.asarray(im) for im in images])


class LateFusion(Module):
    """Merge per-mode features (N, M, K) into (N, joint_dim)."""

    def __init__(self, config: FusionConfig, rng: np.random.Generator | None = None):
        if config.kind is FusionKind.EARLY:
            raise ValueError("early fusion has no late-fusion stage")
        self.config = config
        self.lstm = LSTMCell(config.K, config.lstm_dim, rng) if config.kind is FusionKind.LSTM else None

    def __call__(self, features: Tensor) -> Tensor:
        cfg = self.config
        if features.ndim != 3 or features.shape[1:] != (cfg.M, cfg.K):
            raise ShapeError(f"expected features (N, {cfg.M}, {cfg.K}), got {features.shape}")
        n = features.shape[0]
        if cfg.kind is FusionKind.CONCAT:
            return reshape(features, (n, cfg.M * cfg.K))
        if cfg.kind is FusionKind.MEAN:
            return features.mean(axis=1)
        dtype = get_default_dtype()
        h = Tensor(np.zeros((n, cfg.lstm_dim), dtype=dtype))
        c = Tensor(np.zeros((n, cfg.lstm_dim), dtype=dtype))
        for m in range(cfg.M):
            h, c = self.lstm(features[:, m, :], h, c)
        return h


def fuse_late(features, config: FusionConfig, fusion: LateFusion | None = None) -> Tensor:
    """Fuse M feature vectors (a list of K-vectors or an (N, M, K) tensor).

    A list input returns a single joint vector; a batched input returns
    (N, joint_dim).  LSTM fusion needs a ``LateFusion`` module for its weights.
    """
    single = isinstance(features, (list, tuple))
    if single:
        if len(features) != config.M:
            raise ShapeError(f"expected {config.M} feature vectors, got {len(features)}")
        vecs = [as_tensor(v) for v in features]
        if any(v.shape != (config.K,) for v in vecs):
            raise ShapeError(f"every feature vector must have shape ({config.K},)")
        features = reshape(stack(vecs), (1, config.M, config.K))
    if fusion is None:
        if config.kind is FusionKind.LSTM:
            raise ValueError("LSTM fusion needs a LateFusion module holding its weights")
        fusion = LateFusion(config)
    out = fusion(as_tensor(features))
    return reshape(out, (out.shape[1],)) if single else out

