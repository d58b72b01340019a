"""Multi-seed experiment drivers: label-fraction curves and mode-count sweeps."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mmode_ef.data_model import Manifest
from mmode_ef.errors import ArgumentError
from mmode_ef.train_eval.config import TrainConfig
from mmode_ef.train_eval.data import StackStore
from mmode_ef.train_eval.metrics import EvalReport
from mmode_ef.train_eval.training import evaluate, finetune, pretrain_contrastive, train_supervised

log = logging.getLogger(__name__)

SEEDS = (0, 1, 2, 3, 4)
FRACTIONS = (0.01, 0.02, 0.03, 0.05, 0.10, 0.20, 0.30, 0.50, 0.75, 1.0)
MODE_COUNTS = (1, 2, 5, 10, 20, 50)
METRICS = ("auroc", "auprc", "mae", "rmse", "r2")


@dataclass(frozen=True)
class Method:
    name: str
    clip: str
    pretrained: bool
    freeze: bool = False


METHODS = {m.name: m for m in (
    Method("E2E", "full", False),
    Method("E2E+", "short", False),
    Method("CL", "full", True),
    Method("CL+", "short", True),
    Method("CL-freeze", "full", True, freeze=True),
    Method("CL+-freeze", "short", True, freeze=True),
)}


def summarize(values) -> tuple[float | None, float | None]:
    """Mean and sample standard deviation over the defined values."""
    vals = [v for v in values if v is not None and not math.isnan(v)]
    if not vals:
        return None, None
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return float(np.mean(vals)), std


def _row(keys: dict, reports: list[EvalReport], seeds) -> dict:
    row = dict(keys)
    row["seeds"] = list(seeds)
    for name in METRICS:
        values = [getattr(r, name) for r in reports]
        row[name] = values
        row[f"{name}_mean"], row[f"{name}_std"] = summarize(values)
    return row


def run_method(method: Method, manifest: Manifest, config: TrainConfig, store: StackStore,
               workdir: Path, pretrained: dict) -> EvalReport:
    """Train one method for one (fraction, seed) and evaluate on the test split.

    ``pretrained`` caches encoder checkpoints by (clip, seed) so that the
    fine-tuned and frozen variants share the same pre-training run.
    """
    cfg = config.with_(clip=method.clip)
    if not method.pretrained:
        bundle, _ = train_supervised(manifest, cfg, store)
    else:
        key = (method.clip, cfg.seed)
        if key not in pretrained:
            enc, _ = pretrain_contrastive(manifest, cfg, store)
            path = workdir / f"pretrain_{method.clip}_seed{cfg.seed}.mmck"
            enc.save(path, {"seed": cfg.seed, "clip": method.clip})
            pretrained[key] = path
        bundle, _ = finetune(manifest, pretrained[key], cfg, method.freeze, store)
    return evaluate(bundle, manifest, "test", cfg, store)


def learning_curve(manifest: Manifest, fractions, methods, seeds, config: TrainConfig,
                   workdir: str | Path, store: StackStore | None = None) -> list[dict]:
    """One row per (method, fraction) with per-seed metrics and mean/std columns."""
    fractions = [float(p) for p in fractions]
    if any(not 0.0 < p <= 1.0 for p in fractions):
        raise ArgumentError("fractions must lie in (0, 1]")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ArgumentError(f"unknown methods {unknown}; choose from {sorted(METHODS)}")
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    store = store or StackStore(manifest, config.M, config.workers)
    pretrained: dict = {}
    rows = []
    for name in methods:
        for p in fractions:
            reports = []
            for seed in seeds:
                cfg = config.with_(seed=seed, label_fraction=p)
                reports.append(run_method(METHODS[name], manifest, cfg, store, workdir, pretrained))
                log.info("%s p=%g seed=%d mae=%.4f", name, p, seed, reports[-1].mae)
            rows.append(_row({"method": name, "fraction": p}, reports, seeds))
    return rows


def mode_sweep(manifest: Manifest, mode_counts, seeds, config: TrainConfig) -> list[dict]:
    """Supervised runs for each mode count; one row per M."""
    rows = []
    for M in mode_counts:
        store = StackStore(manifest, M, config.workers)
        reports = []
        for seed in seeds:
            cfg = config.with_(M=M, seed=seed)
            bundle, _ = train_supervised(manifest, cfg, store)
            reports.append(evaluate(bundle, manifest, "test", cfg, store))
            log.info("M=%d seed=%d mae=%.4f", M, seed, reports[-1].mae)
        rows.append(_row({"M": M, "fusion": config.fusion, "clip": config.clip}, reports, seeds))
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    """Flatten rows to CSV, keeping only scalar columns."""
    if not rows:
        return ""
    cols = [k for k, v in rows[0].items() if not isinstance(v, list)]
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join("" if row[c] is None else str(row[c]) for c in cols))
    return "\n".join(lines) + "\n"
