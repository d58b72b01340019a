"""Synthetic echo-like videos of a pulsating ellipse with known EF.

The ellipse area follows a raised cosine between end-diastole ``A_dia`` and
end-systole ``A_sys = (1 - ef) * A_dia``::

    A(f) = A_sys + (A_dia - A_sys) * (1 + cos(2 pi f / period + phase)) / 2

Both semi-axes scale by ``sqrt(A(f) / A_dia)``, so EF measured along any
scan line through the center is the same.  Pixels inside the ellipse are
dark, a bright rim sits just outside it, and the surrounding tissue has a
static multiplicative speckle texture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mmode_ef.data_model import Manifest, PatientRecord, VideoTensor, write_manifest, write_video
from mmode_ef.errors import ArgumentError, IoError

FRAME_SIZE = 112
INTERIOR_LEVEL = 15.0
TISSUE_LEVEL = 90.0
RIM_LEVEL = 210.0
RIM_WIDTH = 3.0
# any noise-free pixel below this is interior
INTERIOR_THRESHOLD = 34.0


@dataclass(frozen=True)
class SynthParams:
    a_dia: float = 30.0  # semi-axis along columns, pixels
    b_dia: float = 30.0  # semi-axis along rows, pixels
    ef_target: float = 0.6
    period: float = 35.0
    phase: float = 0.0
    noise_sigma: float = 0.0
    texture_seed: int = 0
    size: int = FRAME_SIZE

    def __post_init__(self):
        if not 0.0 < self.ef_target < 0.95:
            raise ArgumentError(f"ef_target must be in (0, 0.95), got {self.ef_target}")
        if self.a_dia <= 0 or self.b_dia <= 0:
            raise ArgumentError("semi-axes must be positive")
        if self.period <= 0:
            raise ArgumentError("period must be positive")
        if self.noise_sigma < 0:
            raise ArgumentError("noise_sigma must be non-negative")
        limit = (self.size - 1) / 2.0
        if max(self.a_dia, self.b_dia) + RIM_WIDTH > limit:
            raise ArgumentError(
                f"ellipse with semi-axes ({self.a_dia}, {self.b_dia}) plus rim exceeds a {self.size}px frame")

    @property
    def area_dia(self) -> float:
        return math.pi * self.a_dia * self.b_dia

    @property
    def area_sys(self) -> float:
        return (1.0 - self.ef_target) * self.area_dia


def area_curve(params: SynthParams, t: int) -> np.ndarray:
    """Analytic ellipse area for frames 0..t-1."""
    f = np.arange(t, dtype=np.float64)
    wave = (1.0 + np.cos(2.0 * np.pi * f / params.period + params.phase)) / 2.0
    return params.area_sys + (params.area_dia - params.area_sys) * wave


def _texture(params: SynthParams) -> np.ndarray:
    rng = np.random.default_rng(params.texture_seed)
    raw = rng.gamma(shape=8.0, scale=1.0 / 8.0, size=(params.size, params.size))
    return np.clip(raw, 0.6, 1.4)


def render_frames(params: SynthParams, t: int, noise_rng: np.random.Generator | None = None) -> np.ndarray:
    """Render (t, size, size) uint8 frames."""
    size = params.size
    c = (size - 1) / 2.0
    rows = (np.arange(size) - c)[:, None]
    cols = (np.arange(size) - c)[None, :]
    scale = np.sqrt(area_curve(params, t) / params.area_dia)
    texture = _texture(params)
    frames = np.empty((t, size, size), dtype=np.uint8)
    for f in range(t):
        a, b = params.a_dia * scale[f], params.b_dia * scale[f]
        rho = np.sqrt((cols / a) ** 2 + (rows / b) ** 2)
        img = np.full((size, size), TISSUE_LEVEL)
        img[rho <= 1.0 + RIM_WIDTH / min(a, b)] = RIM_LEVEL
        img[rho <= 1.0] = INTERIOR_LEVEL
        img = img * texture
        if params.noise_sigma > 0:
            if noise_rng is None:
                raise ArgumentError("noise_sigma > 0 needs a noise rng")
            img = img + noise_rng.normal(0.0, params.noise_sigma, size=img.shape)
        frames[f] = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return frames


def synth_video(params: SynthParams, t: int = 112, patient_id: str = "synth",
                seed: int = 0, split: str = "train") -> tuple[VideoTensor, PatientRecord]:
    if t < 112:
        raise ArgumentError(f"synthetic videos need at least 112 frames, got {t}")
    frames = render_frames(params, t, np.random.default_rng([seed, params.texture_seed]))
    return VideoTensor(patient_id, frames), PatientRecord(patient_id, float(params.ef_target), split)


def random_params(rng: np.random.Generator, ef_range: tuple[float, float],
                  noise_sigma: float = 6.0) -> SynthParams:
    """Per-patient anatomy: size, eccentricity, heart rate and phase vary."""
    return SynthParams(
        a_dia=float(rng.uniform(24.0, 40.0)),
        b_dia=float(rng.uniform(24.0, 40.0)),
        ef_target=float(rng.uniform(*ef_range)),
        period=float(rng.uniform(30.0, 40.0)),
        phase=float(rng.uniform(0.0, 2.0 * np.pi)),
        noise_sigma=noise_sigma,
        texture_seed=int(rng.integers(0, 2**31 - 1)),
    )


def split_sizes(n: int, fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)) -> tuple[int, int, int]:
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return n_train, n_val, n - n_train - n_val


def synth_dataset(n: int, ef_range: tuple[float, float], seed: int, out_dir: str | Path,
                  t: int = 112, fractions: tuple[float, float, float] = (0.7, 0.15, 0.15),
                  noise_sigma: float = 6.0) -> Manifest:
    """Write ``n`` synthetic patients (MMV1 videos + ``manifest.csv``) to ``out_dir``."""
    if n < 10:
        raise ArgumentError(f"need at least 10 patients, got {n}")
    lo, hi = ef_range
    if not 0.0 < lo <= hi < 0.95:
        raise ArgumentError(f"ef_range must lie inside (0, 0.95), got {ef_range}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out_dir}: {exc}") from exc
    n_train, n_val, _ = split_sizes(n, fractions)
    order = np.random.default_rng([seed, 1]).permutation(n)
    split_of = np.empty(n, dtype=object)
    split_of[order[:n_train]] = "train"
    split_of[order[n_train : n_train + n_val]] = "val"
    split_of[order[n_train + n_val :]] = "test"
    records = []
    counts = {}
    for i in range(n):
        pid = f"synth_{i:05d}"
        params = random_params(np.random.default_rng([seed, 0, i]), (lo, hi), noise_sigma)
        video, record = synth_video(params, t, pid, seed=seed, split=str(split_of[i]))
        try:
            write_video(video, out_dir / f"{pid}.mmv")
        except OSError as exc:
            raise IoError(f"cannot write to {out_dir}: {exc}") from exc
        records.append(record)
        counts[pid] = t
    manifest = Manifest(tuple(records), out_dir, 0, counts)
    try:
        write_manifest(manifest, out_dir / "manifest.csv")
    except OSError as exc:
        raise IoError(f"cannot write to {out_dir}: {exc}") from exc
    return manifest
