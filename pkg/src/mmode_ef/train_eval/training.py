"""Training loops: supervised EF regression, contrastive pre-training, fine-tuning.

Every random draw is derived from ``config.seed`` and the epoch number, so a
run with a single worker is bitwise reproducible.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from mmode_ef.augment import augment_array
from mmode_ef.data_model import Manifest, PatientRecord, subsample_train
from mmode_ef.errors import DataError
from mmode_ef.losses import combined_cl_loss, regression_loss
from mmode_ef.model import ModelBundle
from mmode_ef.tensor_nn import Adam, no_grad
from mmode_ef.train_eval.config import TrainConfig
from mmode_ef.train_eval.data import StackStore
from mmode_ef.train_eval.metrics import EvalReport, evaluate_predictions, mae

log = logging.getLogger(__name__)

# stream tags mixed into the seed so that different uses never share draws
_SHUFFLE, _AUGMENT, _CL_SHUFFLE, _CL_AUGMENT = 11, 12, 21, 22
EVAL_BATCH = 64


@dataclass
class History:
    config: dict
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int | None = None
    n_train: int = 0
    skipped_batches: int = 0

    def to_dict(self) -> dict:
        return {"config": self.config, "n_train": self.n_train, "best_epoch": self.best_epoch,
                "skipped_batches": self.skipped_batches, "epochs": self.epochs}


def _rng(seed: int, tag: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng([seed, tag, epoch])


def _labeled(records: list[PatientRecord], split: str) -> list[PatientRecord]:
    out = [r for r in records if r.labeled]
    if not out:
        raise DataError(f"split {split!r} has no labeled patients")
    return out


def _store(manifest: Manifest, config: TrainConfig, store: StackStore | None) -> StackStore:
    if store is None:
        return StackStore(manifest, config.M, config.workers)
    if store.M != config.M:
        raise DataError(f"stack store holds M={store.M}, config asks for M={config.M}")
    return store


def predict(bundle: ModelBundle, store: StackStore, records: list[PatientRecord],
            config: TrainConfig, batch_size: int = EVAL_BATCH) -> np.ndarray:
    """Deterministic EF predictions (short-clip models use the clip at frame 0)."""
    out = []
    with no_grad():
        for i in range(0, len(records), batch_size):
            x = store.batch(records[i:i + batch_size], config.clip_policy, config.seed, 0, train=False)
            out.append(bundle.forward_supervised(x).data.astype(np.float64))
    return np.concatenate(out) if out else np.zeros(0)


def train_supervised(manifest: Manifest, config: TrainConfig, store: StackStore | None = None,
                     bundle: ModelBundle | None = None,
                     on_epoch: Callable[[dict], None] | None = None) -> tuple[ModelBundle, History]:
    """Adam on the MSE between predicted and true EF.

    The training split is subsampled to ``config.label_fraction`` first.  The
    parameters with the best validation MAE are kept (or the last ones when
    there is no labeled validation data or ``select_best`` is off).
    """
    if config.label_fraction < 1.0:
        manifest = subsample_train(manifest, config.label_fraction, config.seed)
    train = _labeled(manifest.split("train"), "train")
    val = [r for r in manifest.split("val") if r.labeled]
    store = _store(manifest, config, store)
    if bundle is None:
        bundle = ModelBundle(config.model_config(), seed=config.seed)
    opt = Adam(bundle.supervised_parameters(), lr=config.lr_sup)
    aug = config.augment_config()
    y_all = np.array([r.ef for r in train], dtype=np.float32)
    history = History(config=config.to_dict(), n_train=len(train))
    best_mae, best_state = math.inf, None

    for epoch in range(config.epochs_sup):
        order = _rng(config.seed, _SHUFFLE, epoch).permutation(len(train))
        aug_rng = _rng(config.seed, _AUGMENT, epoch)
        total = 0.0
        for i in range(0, len(order), config.bsz_sup):
            idx = order[i:i + config.bsz_sup]
            x = store.batch([train[j] for j in idx], config.clip_policy, config.seed, epoch)
            if config.augment_sup:
                x = augment_array(x, aug, aug_rng)
            loss = regression_loss(bundle.forward_supervised(x), y_all[idx])
            bundle.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.data) * len(idx)
        row = {"epoch": epoch, "train_loss": total / len(train)}
        if val:
            row["val_mae"] = mae([r.ef for r in val], predict(bundle, store, val, config))
            if config.select_best and row["val_mae"] < best_mae:
                best_mae, best_state = row["val_mae"], bundle.state_dict()
                history.best_epoch = epoch
        history.epochs.append(row)
        log.info("epoch %d %s", epoch, row)
        if on_epoch:
            on_epoch(row)
    if best_state is not None:
        bundle.load_state_dict(best_state)
    else:
        history.best_epoch = config.epochs_sup - 1
    return bundle, history


def pretrain_contrastive(manifest: Manifest, config: TrainConfig, store: StackStore | None = None,
                         on_epoch: Callable[[dict], None] | None = None) -> tuple[ModelBundle, History]:
    """Minimize the combined contrastive loss over the training split.

    Labels are never read.  A trailing batch with fewer than two patients is
    skipped with a warning.  The learning rate ramps up linearly over
    ``warmup_epochs``.  The final parameters are returned.
    """
    train = manifest.split("train")
    if len(train) < 2:
        raise DataError("contrastive pre-training needs at least two training patients")
    store = _store(manifest, config, store)
    bundle = ModelBundle(config.model_config(), seed=config.seed)
    opt = Adam(bundle.contrastive_parameters(), lr=config.lr_cl, warmup_epochs=config.warmup_epochs)
    aug = config.augment_config()
    history = History(config=config.to_dict(), n_train=len(train))

    for epoch in range(config.epochs_cl):
        opt.set_epoch(epoch)
        order = _rng(config.seed, _CL_SHUFFLE, epoch).permutation(len(train))
        aug_rng = _rng(config.seed, _CL_AUGMENT, epoch)
        total, seen = 0.0, 0
        for i in range(0, len(order), config.bsz_cl):
            idx = order[i:i + config.bsz_cl]
            if len(idx) < 2:
                log.warning("epoch %d: skipping a batch with %d patient(s)", epoch, len(idx))
                history.skipped_batches += 1
                continue
            x = store.batch([train[j] for j in idx], config.clip_policy, config.seed, epoch)
            p = bundle.forward_contrastive(x, aug, aug_rng)
            loss = combined_cl_loss(p, config.tau, config.alpha, reduction="mean")
            bundle.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.data) * len(idx)
            seen += len(idx)
        row = {"epoch": epoch, "cl_loss": total / max(seen, 1)}
        history.epochs.append(row)
        log.info("epoch %d %s", epoch, row)
        if on_epoch:
            on_epoch(row)
    history.best_epoch = config.epochs_cl - 1
    return bundle, history


def finetune(manifest: Manifest, encoder_ckpt: str | Path, config: TrainConfig, freeze: bool,
             store: StackStore | None = None,
             on_epoch: Callable[[dict], None] | None = None) -> tuple[ModelBundle, History]:
    """Supervised training on top of a pre-trained encoder.

    With ``freeze`` the encoder receives no updates and only fusion and head
    are trained.
    """
    bundle = ModelBundle(config.model_config(), seed=config.seed, freeze_encoder=freeze)
    bundle.load_encoder_from(encoder_ckpt)
    return train_supervised(manifest, config, store, bundle=bundle, on_epoch=on_epoch)


def evaluate(bundle: ModelBundle, manifest: Manifest, split: str, config: TrainConfig,
             store: StackStore | None = None) -> EvalReport:
    records = _labeled(manifest.split(split), split)
    store = _store(manifest, config, store)
    pred = predict(bundle, store, records, config)
    return evaluate_predictions([r.ef for r in records], pred, [r.patient_id for r in records])
