"""Regression and threshold-classification metrics for EF estimation.

Classification treats true EF below the threshold as the positive
(cardiomyopathic) class and scores each patient by the negated predicted EF,
so lower predicted EF ranks as more likely positive.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from mmode_ef.errors import ArgumentError, ShapeError

CM_THRESHOLD = 0.5


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ArgumentError("metrics need at least one sample")
    return a, b


def mae(true, pred) -> float:
    t, p = _pair(true, pred)
    return float(np.mean(np.abs(t - p)))


def rmse(true, pred) -> float:
    t, p = _pair(true, pred)
    return float(np.sqrt(np.mean((t - p) ** 2)))


def r2(true, pred) -> float | None:
    """1 - SS_res / SS_tot; None when the targets are constant."""
    t, p = _pair(true, pred)
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0.0:
        return None
    return 1.0 - float(np.sum((t - p) ** 2)) / ss_tot


def auroc(labels, scores) -> float | None:
    """Mann-Whitney AUROC with ties counted as one half; None for a single class.

    Computed from average ranks: ``(R_pos - n_pos (n_pos + 1) / 2) / (n_pos n_neg)``.
    The numerator is a multiple of 1/2, so the result is exact for any
    realistic sample size.
    """
    y = np.asarray(labels, dtype=bool).ravel()
    s, _ = _pair(scores, y)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(s)  # average ranks, so twice each rank is an integer
    u2 = int(round(2 * ranks[y].sum())) - n_pos * (n_pos + 1)
    return u2 / (2 * n_pos * n_neg)


def auprc(labels, scores) -> float | None:
    """Average precision: precision summed over recall steps at distinct thresholds."""
    y = np.asarray(labels, dtype=bool).ravel()
    s, _ = _pair(scores, y)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        return None
    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    tp = np.cumsum(y_sorted)
    # evaluate only at the last index of each run of tied scores
    last = np.r_[np.nonzero(np.diff(s_sorted))[0], y.size - 1]
    tp_at = tp[last].astype(np.float64)
    precision = tp_at / (last + 1)
    recall_step = np.diff(np.r_[0.0, tp_at]) / n_pos
    return float(np.sum(precision * recall_step))


@dataclass
class EvalReport:
    auroc: float | None
    auprc: float | None
    mae: float
    rmse: float
    r2: float | None
    n_test: int
    threshold: float = CM_THRESHOLD
    patient_ids: list[str] = field(default_factory=list, repr=False)
    true_ef: list[float] = field(default_factory=list, repr=False)
    pred_ef: list[float] = field(default_factory=list, repr=False)

    def metrics(self) -> dict:
        d = asdict(self)
        for k in ("patient_ids", "true_ef", "pred_ef"):
            d.pop(k)
        return d

    def predictions_csv(self) -> str:
        rows = ["patient_id,true_ef,pred_ef,cardiomyopathy"]
        for pid, t, p in zip(self.patient_ids, self.true_ef, self.pred_ef):
            rows.append(f"{pid},{t!r},{p!r},{int(t < self.threshold)}")
        return "\n".join(rows) + "\n"


def evaluate_predictions(true, pred, patient_ids=None, threshold: float = CM_THRESHOLD) -> EvalReport:
    t, p = _pair(true, pred)
    labels = t < threshold
    ids = list(patient_ids) if patient_ids is not None else [str(i) for i in range(t.size)]
    return EvalReport(auroc=auroc(labels, -p), auprc=auprc(labels, -p), mae=mae(t, p),
                      rmse=rmse(t, p), r2=r2(t, p), n_test=int(t.size), threshold=threshold,
                      patient_ids=ids, true_ef=t.tolist(), pred_ef=p.tolist())
