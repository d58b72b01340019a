"""In-memory cache of per-patient M-mode stacks and clip batching."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from mmode_ef.data_model import Manifest, PatientRecord, load_video
from mmode_ef.errors import ArgumentError
from mmode_ef.mmode_gen import ClipPolicy, clip_frames, clip_rng, extract_modes

log = logging.getLogger(__name__)


class StackStore:
    """Extracts each patient's M modes over all frames once, then slices clips.

    Sampling the scan lines over every frame and slicing afterwards gives the
    same pixels as extracting per clip, because each frame is sampled
    independently.

    Args:
        manifest: source of video paths.
        M: number of modes.
        workers: threads used by :meth:`preload`.  Results do not depend on it.
    """

    def __init__(self, manifest: Manifest, M: int, workers: int = 1):
        if M < 1:
            raise ArgumentError(f"M must be >= 1, got {M}")
        self.manifest = manifest
        self.M = M
        self.workers = workers
        self._cache: dict[str, np.ndarray] = {}

    def full(self, patient_id: str) -> np.ndarray:
        """(M, s, T) modes over every frame of the patient's video."""
        arr = self._cache.get(patient_id)
        if arr is None:
            video = load_video(self.manifest.video_path(patient_id), patient_id)
            arr = extract_modes(video, self.M)
            self._cache[patient_id] = arr
        return arr

    def preload(self, records) -> None:
        ids = [r.patient_id for r in records if r.patient_id not in self._cache]
        if self.workers > 1 and len(ids) > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                for pid, arr in zip(ids, pool.map(self._extract, ids)):
                    self._cache[pid] = arr
        else:
            for pid in ids:
                self.full(pid)

    def _extract(self, patient_id: str) -> np.ndarray:
        video = load_video(self.manifest.video_path(patient_id), patient_id)
        return extract_modes(video, self.M)

    def frames_for(self, patient_id: str, policy: ClipPolicy, seed: int, epoch: int,
                   train: bool) -> list[int]:
        """Clip frame indices; short clips start at frame 0 outside training."""
        t = self.full(patient_id).shape[-1]
        if policy is ClipPolicy.SHORT32_PERIOD2 and not train:
            return clip_frames(t, policy, start=0)
        return clip_frames(t, policy, clip_rng(seed, patient_id, epoch))

    def batch(self, records: list[PatientRecord], policy: ClipPolicy | str, seed: int = 0,
              epoch: int = 0, train: bool = True) -> np.ndarray:
        """Stacked clips (N, M, s, t_clip)."""
        policy = ClipPolicy(policy)
        out = []
        for r in records:
            frames = self.frames_for(r.patient_id, policy, seed, epoch, train)
            out.append(self.full(r.patient_id)[:, :, frames])
        return np.stack(out)

    def __len__(self) -> int:
        return len(self._cache)
