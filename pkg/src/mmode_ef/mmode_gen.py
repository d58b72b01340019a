"""Artificial M-mode images: one scan line through the image center per frame.

Sample ``k`` of a line at angle ``theta`` (degrees) sits at::

    (row, col) = center + (k - (s - 1) / 2) * (cos theta, sin theta)

so 0 degrees runs top-to-bottom along the central column and 90 degrees runs
left-to-right along the central row.  Values are bilinearly interpolated
with coordinates clamped to the frame and scaled to [0, 1].
"""

from __future__ import annotations

import enum
import functools
import json
import math
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from mmode_ef.data_model import HEADER, MAGIC, VideoTensor
from mmode_ef.errors import ArgumentError, FormatError

FULL_CLIP = 112
SHORT_CLIP = 32
SHORT_PERIOD = 2


class ClipPolicy(str, enum.Enum):
    FULL112 = "full"
    SHORT32_PERIOD2 = "short"

    @property
    def length(self) -> int:
        return FULL_CLIP if self is ClipPolicy.FULL112 else SHORT_CLIP

    @property
    def min_frames(self) -> int:
        return FULL_CLIP if self is ClipPolicy.FULL112 else SHORT_PERIOD * SHORT_CLIP


@dataclass(frozen=True)
class ScanLineSpec:
    theta: float
    s: int
    center: tuple[float, float] | None = None

    def __post_init__(self):
        if not 0.0 <= self.theta < 180.0:
            raise ArgumentError(f"theta must be in [0, 180), got {self.theta}")
        if self.s < 1:
            raise ArgumentError(f"scan-line length must be positive, got {self.s}")


@dataclass(frozen=True)
class MModeImage:
    pixels: np.ndarray  # (s, t_clip) float32 in [0, 1]
    theta: float
    patient_id: str
    mode_index: int  # 1-based


@dataclass(frozen=True)
class MModeStack:
    images: tuple[MModeImage, ...]
    angles: tuple[float, ...]
    frame_indices: tuple[int, ...]

    @property
    def patient_id(self) -> str:
        return self.images[0].patient_id

    @property
    def array(self) -> np.ndarray:
        """All modes as one (M, s, t_clip) array."""
        return np.stack([im.pixels for im in self.images])

    @property
    def t_clip(self) -> int:
        return len(self.frame_indices)


def angle_set(M: int) -> list[float]:
    """M angles equally spaced on [0, 180): (m - 1) * 180 / M for m = 1..M."""
    if M < 1:
        raise ArgumentError(f"need at least one mode, got M={M}")
    return [m * 180.0 / M for m in range(M)]


def _direction(theta: float) -> tuple[float, float]:
    rad = math.radians(theta)
    c, s = math.cos(rad), math.sin(rad)
    # exact axes at multiples of 90 degrees
    return (0.0 if abs(c) < 1e-12 else c), (0.0 if abs(s) < 1e-12 else s)


def line_coordinates(size: int, theta: float, s: int | None = None,
                     center: tuple[float, float] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Continuous (row, col) sample positions of one scan line, before clamping."""
    s = size if s is None else s
    cr, cc = ((size - 1) / 2.0, (size - 1) / 2.0) if center is None else center
    dr, dc = _direction(theta)
    u = np.arange(s, dtype=np.float64) - (s - 1) / 2.0
    return cr + u * dr, cc + u * dc


@functools.lru_cache(maxsize=128)
def _sampler(size: int, angles: tuple[float, ...], s: int,
             center: tuple[float, float] | None) -> tuple[np.ndarray, np.ndarray]:
    """Flat gather indices (4, L) and bilinear weights (4, L) for all lines."""
    rows, cols = zip(*(line_coordinates(size, th, s, center) for th in angles))
    r = np.clip(np.concatenate(rows), 0.0, size - 1.0)
    c = np.clip(np.concatenate(cols), 0.0, size - 1.0)
    top = size - 2 if size > 1 else 0
    r0 = np.minimum(np.floor(r), top).astype(np.int64)
    c0 = np.minimum(np.floor(c), top).astype(np.int64)
    fr, fc = r - r0, c - c0
    r1 = np.minimum(r0 + 1, size - 1)
    c1 = np.minimum(c0 + 1, size - 1)
    idx = np.stack([r0 * size + c0, r0 * size + c1, r1 * size + c0, r1 * size + c1])
    wts = np.stack([(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc]).astype(np.float32)
    idx.setflags(write=False)
    wts.setflags(write=False)
    return idx, wts


def _sample_lines(frames: np.ndarray, angles: Sequence[float], s: int,
                  center: tuple[float, float] | None = None) -> np.ndarray:
    """Sample lines from frames (T, h, w); returns (M, s, T) float32 in [0, 1]."""
    t, h, w = frames.shape
    idx, wts = _sampler(h, tuple(float(a) for a in angles), s, center)
    flat = frames.reshape(t, h * w)
    acc = flat[:, idx[0]] * wts[0]
    for q in range(1, 4):
        acc += flat[:, idx[q]] * wts[q]
    acc /= np.float32(255.0)
    return np.ascontiguousarray(acc.reshape(t, len(angles), s).transpose(1, 2, 0))


def _frame_indices(frame_range, t: int) -> np.ndarray:
    if isinstance(frame_range, slice):
        if (frame_range.start or 0) < 0 or (frame_range.stop or 0) > t:
            raise ArgumentError(f"frame_range outside [0, {t})")
        frame_range = range(*frame_range.indices(t))
    idx = np.asarray(list(frame_range), dtype=np.int64)
    if idx.size == 0:
        raise ArgumentError("frame_range is empty")
    if idx.min() < 0 or idx.max() >= t:
        raise ArgumentError(f"frame_range outside [0, {t})")
    return idx


def extract_mmode(video: VideoTensor, spec: ScanLineSpec, frame_range, mode_index: int = 1) -> MModeImage:
    """Extract one M-mode image (s, len(frame_range)) along ``spec``."""
    idx = _frame_indices(frame_range, video.t)
    if spec.s != video.h:
        raise ArgumentError(f"scan-line length {spec.s} must equal frame height {video.h}")
    pixels = _sample_lines(video.frames[idx], [spec.theta], spec.s, spec.center)[0]
    return MModeImage(pixels, spec.theta, video.patient_id, mode_index)


def extract_modes(video: VideoTensor, M: int, frames: Sequence[int] | None = None) -> np.ndarray:
    """All M modes over the given frames (default: every frame) as (M, s, T)."""
    data = video.frames if frames is None else video.frames[np.asarray(frames)]
    return _sample_lines(data, angle_set(M), video.h)


def clip_rng(seed: int, patient_id: str, epoch: int = 0) -> np.random.Generator:
    """Independent stream for one patient's clip draw in one epoch."""
    return np.random.default_rng([seed, zlib.crc32(patient_id.encode("utf-8")), epoch])


def clip_frames(t: int, policy: ClipPolicy | str, rng: np.random.Generator | None = None,
                start: int | None = None) -> list[int]:
    """Frame indices of one clip.

    Full clips are frames 0..111.  Short clips take 32 frames at period 2
    from a start drawn uniformly from 0..t-63 (or the given ``start``).
    """
    policy = ClipPolicy(policy)
    if t < policy.min_frames:
        raise ArgumentError(f"{policy.value} clips need at least {policy.min_frames} frames, video has {t}")
    if policy is ClipPolicy.FULL112:
        return list(range(FULL_CLIP))
    last_start = t - SHORT_PERIOD * (SHORT_CLIP - 1) - 1
    if start is None:
        if rng is None:
            raise ArgumentError("short clips need an rng or an explicit start")
        start = int(rng.integers(0, last_start + 1))
    if not 0 <= start <= last_start:
        raise ArgumentError(f"clip start {start} outside [0, {last_start}]")
    return list(range(start, start + SHORT_PERIOD * SHORT_CLIP, SHORT_PERIOD))


def extract_stack(video: VideoTensor, M: int, clip_policy: ClipPolicy | str = ClipPolicy.FULL112,
                  seed: int | np.random.Generator | None = 0) -> MModeStack:
    """M M-mode images sharing one clip."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    frames = clip_frames(video.t, clip_policy, rng)
    angles = angle_set(M)
    arr = extract_modes(video, M, frames)
    images = tuple(MModeImage(arr[m], angles[m], video.patient_id, m + 1) for m in range(M))
    return MModeStack(images, tuple(angles), tuple(frames))


def write_stack(stack: MModeStack, out_dir: str | Path) -> Path:
    """Store a stack as an MMV1 file plus a JSON sidecar.

    Header fields are reinterpreted as t = t_clip, h = s, w = M, and the
    payload is ``round(255 * pixel)`` laid out as [t_clip][s][M].
    """
    out_dir = Path(out_dir)
    arr = stack.array  # (M, s, T)
    m, s, t = arr.shape
    payload = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8).transpose(2, 1, 0)
    path = out_dir / f"{stack.patient_id}.mmv"
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, t, s, m))
        fh.write(np.ascontiguousarray(payload).tobytes())
    sidecar = {
        "patient_id": stack.patient_id,
        "angles_deg": list(stack.angles),
        "frame_indices": list(stack.frame_indices),
        "axis_order": ["t_clip", "s", "M"],
        "scale": "uint8 = round(255 * intensity)",
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")
    return path


def read_stack(path: str | Path) -> np.ndarray:
    """Read a file written by :func:`write_stack` back as (M, s, t_clip) in [0, 1]."""
    blob = Path(path).read_bytes()
    if len(blob) < HEADER.size:
        raise FormatError(f"{path}: file shorter than the header")
    magic, t, s, m = HEADER.unpack_from(blob)
    if magic != MAGIC or len(blob) != HEADER.size + t * s * m:
        raise FormatError(f"{path}: not a complete MMV1 stack file")
    data = np.frombuffer(blob, dtype=np.uint8, offset=HEADER.size).reshape(t, s, m)
    return data.transpose(2, 1, 0).astype(np.float32) / np.float32(255.0)
