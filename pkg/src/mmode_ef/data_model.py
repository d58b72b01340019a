"""Videos, patient records, manifests and their on-disk formats.

Video files (``.mmv``) are bit-exact::

    b"MMV1" | t:u32le | h:u32le | w:u32le | t*h*w uint8 (frame-major, row-major)

Manifests are UTF-8 CSV files with header ``patient_id,ef,split``; the video
for a record lives at ``<video_dir>/<patient_id>.mmv``.  EF is a fraction in
[0, 1].
"""

from __future__ import annotations

import csv
import logging
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from mmode_ef.errors import ArgumentError, FormatError, ManifestError, ShapeError

log = logging.getLogger(__name__)

MAGIC = b"MMV1"
HEADER = struct.Struct("<4sIII")
SPLITS = ("train", "val", "test")
MIN_FRAMES = 112
VIDEO_SUFFIX = ".mmv"


@dataclass(frozen=True)
class VideoTensor:
    """A grayscale echo clip stored as ``frames[t][h][w]`` uint8."""

    patient_id: str
    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 3:
            raise ShapeError(f"video frames must be 3-D (t, h, w), got shape {frames.shape}")
        if frames.dtype != np.uint8:
            raise ShapeError(f"video frames must be uint8, got {frames.dtype}")
        if frames.shape[1] != frames.shape[2]:
            raise ShapeError(f"video frames must be square, got h={frames.shape[1]} w={frames.shape[2]}")
        if frames.flags.writeable:
            frames = frames.copy()
            frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def t(self) -> int:
        return self.frames.shape[0]

    @property
    def h(self) -> int:
        return self.frames.shape[1]

    @property
    def w(self) -> int:
        return self.frames.shape[2]


@dataclass(frozen=True)
class PatientRecord:
    """One manifest row. ``ef`` is NaN for unlabeled patients."""

    patient_id: str
    ef: float
    split: str

    def __post_init__(self):
        if not self.patient_id:
            raise ManifestError("empty patient_id")
        if self.split not in SPLITS:
            raise ManifestError(f"{self.patient_id}: split must be one of {SPLITS}, got {self.split!r}")
        if not math.isnan(self.ef) and not 0.0 <= self.ef <= 1.0:
            raise ManifestError(f"{self.patient_id}: ef={self.ef} outside [0, 1]")

    @property
    def labeled(self) -> bool:
        return not math.isnan(self.ef)


@dataclass(frozen=True)
class Manifest:
    records: tuple[PatientRecord, ...]
    source_dir: Path
    dropped: int = 0
    frame_counts: dict[str, int] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "source_dir", Path(self.source_dir))
        seen: set[str] = set()
        for r in self.records:
            if r.patient_id in seen:
                raise ManifestError(f"duplicate patient_id {r.patient_id!r}")
            seen.add(r.patient_id)

    def split(self, name: str) -> list[PatientRecord]:
        if name not in SPLITS:
            raise ArgumentError(f"unknown split {name!r}")
        return [r for r in self.records if r.split == name]

    def video_path(self, record: PatientRecord | str) -> Path:
        pid = record if isinstance(record, str) else record.patient_id
        return self.source_dir / f"{pid}{VIDEO_SUFFIX}"

    def __len__(self) -> int:
        return len(self.records)


def write_video(video: VideoTensor, path: str | Path) -> None:
    t, h, w = video.frames.shape
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, t, h, w))
        fh.write(np.ascontiguousarray(video.frames).tobytes())


def read_header(path: str | Path) -> tuple[int, int, int]:
    """Return ``(t, h, w)`` from a video file without reading the payload."""
    with open(path, "rb") as fh:
        head = fh.read(HEADER.size)
    if len(head) < HEADER.size:
        raise FormatError(f"{path}: file shorter than the {HEADER.size}-byte header")
    magic, t, h, w = HEADER.unpack(head)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    return t, h, w


def load_video(path: str | Path, patient_id: str | None = None) -> VideoTensor:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < HEADER.size:
        raise FormatError(f"{path}: file shorter than the {HEADER.size}-byte header")
    magic, t, h, w = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    expected = t * h * w
    payload = len(blob) - HEADER.size
    if payload != expected:
        kind = "truncated" if payload < expected else "oversized"
        raise FormatError(f"{path}: {kind} payload, expected {expected} bytes, found {payload}")
    if h != w:
        raise ShapeError(f"{path}: non-square frames h={h} w={w}")
    frames = np.frombuffer(blob, dtype=np.uint8, offset=HEADER.size).reshape(t, h, w)
    return VideoTensor(patient_id or path.stem, frames)


def _parse_ef(raw: str, row: int, labels: bool) -> float:
    text = raw.strip()
    if not text:
        if labels:
            raise ManifestError(f"row {row}: missing ef")
        return math.nan
    try:
        value = float(text)
    except ValueError as exc:
        raise ManifestError(f"row {row}: ef {raw!r} is not a number") from exc
    if labels and not 0.0 <= value <= 1.0:
        raise ManifestError(f"row {row}: ef={value} outside [0, 1] (fractions, not percent)")
    if not labels and not 0.0 <= value <= 1.0:
        return math.nan
    return value


def load_manifest(csv_path: str | Path, video_dir: str | Path, min_frames: int = MIN_FRAMES,
                  labels: bool = True) -> Manifest:
    """Read and validate a manifest, dropping videos shorter than ``min_frames``.

    With ``labels=False`` the ``ef`` column is not validated; missing or
    invalid values become NaN (used by unsupervised pre-training).
    """
    video_dir = Path(video_dir)
    records: list[PatientRecord] = []
    counts: dict[str, int] = {}
    seen: set[str] = set()
    dropped = 0
    if not Path(csv_path).is_file():
        raise ManifestError(f"manifest {csv_path} does not exist")
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"patient_id", "ef", "split"} <= set(reader.fieldnames):
            raise ManifestError(f"{csv_path}: header must contain patient_id,ef,split")
        for row_no, row in enumerate(reader, start=2):
            pid = (row["patient_id"] or "").strip()
            if pid in seen:
                raise ManifestError(f"row {row_no}: duplicate patient_id {pid!r}")
            seen.add(pid)
            ef = _parse_ef(row["ef"] or "", row_no, labels)
            record = PatientRecord(pid, ef, (row["split"] or "").strip())
            path = video_dir / f"{pid}{VIDEO_SUFFIX}"
            if not path.is_file():
                raise ManifestError(f"row {row_no}: video {path} does not exist")
            t, h, w = read_header(path)
            if path.stat().st_size != HEADER.size + t * h * w:
                raise FormatError(f"{path}: payload size does not match header")
            if h != w:
                raise ShapeError(f"{path}: non-square frames h={h} w={w}")
            if t < min_frames:
                dropped += 1
                continue
            counts[pid] = t
            records.append(record)
    if dropped:
        log.warning("dropped %d record(s) with fewer than %d frames", dropped, min_frames)
    return Manifest(tuple(records), video_dir, dropped, counts)


def write_manifest(records, path: str | Path) -> None:
    records = records.records if isinstance(records, Manifest) else records
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["patient_id", "ef", "split"])
        for r in records:
            writer.writerow([r.patient_id, "" if math.isnan(r.ef) else repr(float(r.ef)), r.split])


def subsample_train(manifest: Manifest, fraction: float, seed: int) -> Manifest:
    """Keep a seeded ``ceil(fraction * n)`` subset of the train split.

    The subset is a prefix of a seeded permutation, so for a fixed seed the
    subset for a smaller fraction is contained in the one for a larger fraction.
    """
    if not 0.0 < fraction <= 1.0:
        raise ArgumentError(f"fraction must be in (0, 1], got {fraction}")
    train = manifest.split("train")
    n = len(train)
    k = min(n, math.ceil(fraction * n - 1e-9))
    order = np.random.default_rng(seed).permutation(n)
    keep = {train[i].patient_id for i in order[:k]}
    records = tuple(r for r in manifest.records if r.split != "train" or r.patient_id in keep)
    counts = {r.patient_id: manifest.frame_counts[r.patient_id]
              for r in records if r.patient_id in manifest.frame_counts}
    return replace(manifest, records=records, frame_counts=counts)
