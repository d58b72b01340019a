"""Training-time augmentation of M-mode images: time flip and Gaussian noise."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from mmode_ef.errors import ArgumentError
from mmode_ef.mmode_gen import MModeImage


@dataclass(frozen=True)
class AugmentConfig:
    flip_prob: float = 0.5
    noise_sigma: float = 0.05  # on the [0, 1] intensity scale

    def __post_init__(self):
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ArgumentError(f"flip_prob must be in [0, 1], got {self.flip_prob}")
        if self.noise_sigma < 0:
            raise ArgumentError(f"noise_sigma must be non-negative, got {self.noise_sigma}")

    @property
    def is_identity(self) -> bool:
        return self.flip_prob == 0.0 and self.noise_sigma == 0.0


IDENTITY = AugmentConfig(0.0, 0.0)


def augment_array(images: np.ndarray, config: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Augment a batch of images shaped (..., s, t) independently per image.

    Each image is reversed along time (the last axis) with probability
    ``flip_prob``, then gets i.i.d. Gaussian noise and is clamped to [0, 1].
    """
    images = np.asarray(images)
    if config.is_identity:
        return images.copy()
    lead = images.shape[:-2]
    out = images.copy()
    if config.flip_prob > 0:
        flips = rng.random(lead) < config.flip_prob
        if flips.any():
            out[flips] = out[flips][..., ::-1]
    if config.noise_sigma > 0:
        out += rng.normal(0.0, config.noise_sigma, size=out.shape).astype(out.dtype)
        np.clip(out, 0.0, 1.0, out=out)
    return out


def augment(image: MModeImage, config: AugmentConfig, rng: np.random.Generator) -> MModeImage:
    pixels = augment_array(image.pixels[None], config, rng)[0]
    return replace(image, pixels=pixels)
