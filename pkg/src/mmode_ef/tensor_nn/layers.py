"""Parameterized layers and the residual CNN encoder."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from mmode_ef.errors import ShapeError
from mmode_ef.tensor_nn import functional as F
from mmode_ef.tensor_nn.tensor import Tensor, get_default_dtype, relu


class Module:
    """Minimal container that discovers parameters by attribute traversal.

    Attributes holding a ``Tensor`` with ``requires_grad`` are parameters;
    attributes holding a ``Module`` or a list of modules are traversed.
    Names are dotted paths in attribute-definition order.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={missing} unexpected={unexpected}")
        for name, p in own.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ShapeError(f"{name}: checkpoint shape {value.shape} != model shape {p.shape}")
            p.data = value.astype(p.dtype, copy=True)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def _uniform(rng: np.random.Generator, shape, bound: float) -> Tensor:
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(get_default_dtype()), requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=get_default_dtype()), requires_grad=True)


def _ones(shape) -> Tensor:
    return Tensor(np.ones(shape, dtype=get_default_dtype()), requires_grad=True)


class Dense(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(d_in)
        self.weight = _uniform(rng, (d_in, d_out), bound)
        self.bias = _uniform(rng, (d_out,), bound)

    def __call__(self, x: Tensor) -> Tensor:
        return F.dense(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0, bias: bool = False):
        bound = 1.0 / math.sqrt(c_in * kernel * kernel)
        self.weight = _uniform(rng, (kernel, kernel, c_in, c_out), bound)
        self.bias = _uniform(rng, (c_out,), bound) if bias else None
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class InstanceNorm(Module):
    def __init__(self, channels: int):
        self.gamma = _ones((channels,))
        self.beta = _zeros((channels,))

    def __call__(self, x: Tensor) -> Tensor:
        return F.instance_norm(x, self.gamma, self.beta)


class LSTMCell(Module):
    def __init__(self, d_in: int, hidden: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(hidden)
        self.hidden = hidden
        self.w_x = _uniform(rng, (d_in, 4 * hidden), bound)
        self.w_h = _uniform(rng, (hidden, 4 * hidden), bound)
        self.b = _uniform(rng, (4 * hidden,), bound)

    def __call__(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        return F.lstm_cell(x, h, c, self.w_x, self.w_h, self.b)


class BasicBlock(Module):
    """Two 3x3 convolutions with a residual connection (projected when shapes change)."""

    def __init__(self, c_in: int, c_out: int, stride: int, rng: np.random.Generator):
        self.conv1 = Conv2d(c_in, c_out, 3, rng, stride=stride, padding=1)
        self.norm1 = InstanceNorm(c_out)
        self.conv2 = Conv2d(c_out, c_out, 3, rng, stride=1, padding=1)
        self.norm2 = InstanceNorm(c_out)
        if stride != 1 or c_in != c_out:
            self.shortcut = Conv2d(c_in, c_out, 1, rng, stride=stride)
            self.shortcut_norm = InstanceNorm(c_out)
        else:
            self.shortcut = None
            self.shortcut_norm = None

    def __call__(self, x: Tensor) -> Tensor:
        out = relu(self.norm1(self.conv1(x)))
        out = self.norm2(self.conv2(out))
        skip = x if self.shortcut is None else self.shortcut_norm(self.shortcut(x))
        return relu(out + skip)


@dataclass
class EncoderConfig:
    """Residual CNN encoder layout.

    The stem is a strided convolution (optionally followed by 3x3/2 max
    pooling), then one stage per entry of ``stage_widths``.  Every stage after
    the first halves the spatial resolution in its first block.
    """

    in_channels: int = 1
    stem_width: int = 32
    stem_kernel: int = 7
    stem_stride: int = 2
    stem_pool: bool = True
    stage_widths: list[int] = field(default_factory=lambda: [32, 64, 128, 256])
    blocks_per_stage: list[int] = field(default_factory=lambda: [2, 2, 2, 2])
    out_dim: int = 512

    def __post_init__(self):
        self.stage_widths = list(self.stage_widths)
        self.blocks_per_stage = list(self.blocks_per_stage)
        if len(self.stage_widths) != len(self.blocks_per_stage) or not self.stage_widths:
            raise ValueError("stage_widths and blocks_per_stage must be non-empty and equal length")
        if min(self.stage_widths + self.blocks_per_stage) < 1 or self.out_dim < 1 or self.in_channels < 1:
            raise ValueError("encoder sizes must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def desk_encoder_config(in_channels: int = 1, out_dim: int = 32) -> EncoderConfig:
    """A small encoder that trains on a single CPU core in minutes.

    An 8x8 stride-8 patch stem brings a 112x112 image to 14x14 before the
    residual stages.
    """
    return EncoderConfig(in_channels=in_channels, stem_width=16, stem_kernel=8, stem_stride=8,
                         stem_pool=False, stage_widths=[16, 32], blocks_per_stage=[1, 1],
                         out_dim=out_dim)


class Encoder(Module):
    """Maps a batch of images (B, s, t, C) to feature vectors (B, K)."""

    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        self.config = config
        pad = (config.stem_kernel - 1) // 2 if config.stem_kernel > config.stem_stride else 0
        self.stem = Conv2d(config.in_channels, config.stem_width, config.stem_kernel, rng,
                           stride=config.stem_stride, padding=pad)
        self.stem_norm = InstanceNorm(config.stem_width)
        self.blocks: list[BasicBlock] = []
        c_in = config.stem_width
        for stage, (width, depth) in enumerate(zip(config.stage_widths, config.blocks_per_stage)):
            for b in range(depth):
                stride = 2 if stage > 0 and b == 0 else 1
                self.blocks.append(BasicBlock(c_in, width, stride, rng))
                c_in = width
        self.fc = Dense(c_in, config.out_dim, rng)

    def __call__(self, images: Tensor) -> Tensor:
        if images.ndim != 4:
            raise ShapeError(f"encoder expects (B, s, t, C) input, got {images.shape}")
        if images.shape[3] != self.config.in_channels:
            raise ShapeError(
                f"encoder expects {self.config.in_channels} channels, got {images.shape[3]}")
        x = relu(self.stem_norm(self.stem(images)))
        if self.config.stem_pool:
            x = F.maxpool2d(x, 3, 2, padding=1)
        for block in self.blocks:
            x = block(x)
        return self.fc(F.global_avg_pool(x))
