"""Regression and contrastive losses for M-mode representations.

Projection batches have shape (N, 2M, D): for every patient the M original
views come first, then their M augmented views, so view ``m`` and view
``m + M`` form the original/augmented pair.

* patient-aware: anchors and positives are the original views of one
  patient; the denominator runs over every original view in the batch
  except the anchor itself.  The triple sum is scaled by 1 / (M - 1).
* structure-aware: each of the 2M views of a patient is attracted to its
  pair and repelled from the patient's other 2M - 2 views.
* combined: ``alpha * patient_aware + (1 - alpha) * structure_aware``.

``reduction="sum"`` returns the raw sums; ``"mean"`` divides the
patient-aware term by N*M and the structure-aware term by N*2M anchors.

The ``reference_*`` functions evaluate the same sums with explicit Python
loops in high-precision decimal arithmetic and exist to cross-check the
vectorized versions.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal, localcontext

import numpy as np

from mmode_ef.errors import ArgumentError, ShapeError
from mmode_ef.tensor_nn import Tensor, as_tensor, lse_split, matmul, mse, reshape, swapaxes

TAU_DEFAULT = 0.01
ALPHA_DEFAULT = 0.8


@dataclass
class ProjectionBatch:
    p: np.ndarray | Tensor  # (N, 2M, D), unit rows
    tau: float = TAU_DEFAULT
    alpha: float = ALPHA_DEFAULT

    def __post_init__(self):
        data = self.p.data if isinstance(self.p, Tensor) else np.asarray(self.p)
        _check_views(data)
        if data.shape[0] < 2:
            raise ArgumentError("a projection batch needs at least two patients")
        norms = np.linalg.norm(data.astype(np.float64), axis=-1)
        if not np.all(np.abs(norms - 1.0) <= 1e-5):
            raise ArgumentError("projection vectors must be L2-normalized")
        _check_tau(self.tau)
        if not 0.0 <= self.alpha <= 1.0:
            raise ArgumentError(f"alpha must be in [0, 1], got {self.alpha}")

    @property
    def n_patients(self) -> int:
        return self.p.shape[0]

    @property
    def n_modes(self) -> int:
        return self.p.shape[1] // 2


def _check_views(p: np.ndarray) -> None:
    if p.ndim != 3 or p.shape[1] < 2 or p.shape[1] % 2:
        raise ShapeError(f"projection batch must be (N, 2M, D) with M >= 1, got {p.shape}")


def _check_tau(tau: float) -> None:
    if not tau > 0:
        raise ArgumentError(f"temperature must be positive, got {tau}")


def _diag_mask(n: int, dtype) -> np.ndarray:
    mask = np.zeros((n, n), dtype=dtype)
    np.fill_diagonal(mask, -np.inf)
    return mask


def patient_aware_loss(p, tau: float = TAU_DEFAULT, reduction: str = "sum") -> Tensor:
    p = as_tensor(p.p if isinstance(p, ProjectionBatch) else p)
    _check_views(p.data)
    _check_tau(tau)
    n, views, d = p.shape
    m = views // 2
    if m < 2:
        raise ArgumentError("patient-aware loss needs M >= 2 original views per patient")
    originals = reshape(p[:, :m, :], (n * m, d))
    logits = matmul(originals, swapaxes(originals, 0, 1)) * (1.0 / tau)
    top, rest = lse_split(logits + _diag_mask(n * m, p.dtype), axis=1)
    same_patient = (np.kron(np.eye(n), np.ones((m, m))) - np.eye(n * m)).astype(p.dtype)
    positives = (logits * same_patient).sum(axis=1) * (1.0 / (m - 1))
    # per anchor: (max - mean positive) + log1p(rest); the first part is exact when they coincide
    loss = ((top - positives) + rest).sum()
    return loss * (1.0 / (n * m)) if reduction == "mean" else loss


def structure_aware_loss(p, tau: float = TAU_DEFAULT, reduction: str = "sum") -> Tensor:
    p = as_tensor(p.p if isinstance(p, ProjectionBatch) else p)
    _check_views(p.data)
    _check_tau(tau)
    n, views, _ = p.shape
    m = views // 2
    logits = matmul(p, swapaxes(p, 1, 2)) * (1.0 / tau)
    top, rest = lse_split(logits + _diag_mask(views, p.dtype), axis=2)
    pair = np.zeros((views, views), dtype=p.dtype)
    idx = np.arange(views)
    pair[idx, (idx + m) % views] = 1.0
    loss = ((top - (logits * pair).sum(axis=2)) + rest).sum()
    return loss * (1.0 / (n * views)) if reduction == "mean" else loss


def combined_cl_loss(p, tau: float = TAU_DEFAULT, alpha: float = ALPHA_DEFAULT,
                     reduction: str = "sum") -> Tensor:
    if isinstance(p, ProjectionBatch):
        p, tau, alpha = p.p, p.tau, p.alpha
    if not 0.0 <= alpha <= 1.0:
        raise ArgumentError(f"alpha must be in [0, 1], got {alpha}")
    total = None
    if alpha > 0.0:
        total = patient_aware_loss(p, tau, reduction) * alpha
    if alpha < 1.0:
        sa = structure_aware_loss(p, tau, reduction) * (1.0 - alpha)
        total = sa if total is None else total + sa
    return total


def regression_loss(pred, true) -> Tensor:
    """Mean squared error between predicted and true EF."""
    pred, true = as_tensor(pred), as_tensor(true)
    if pred.shape != true.shape:
        raise ShapeError(f"prediction shape {pred.shape} != label shape {true.shape}")
    return mse(pred, true)


# direct-summation references ------------------------------------------------
# Evaluated in 60-digit decimal arithmetic: at small tau the loss can be many
# orders of magnitude below the logits, which float64 cannot resolve.

_PREC = 60


def _dec(p) -> list:
    return [[[Decimal(float(x)) for x in v] for v in views] for views in np.asarray(p, dtype=np.float64)]


def _dot(u, v) -> Decimal:
    return sum((a * b for a, b in zip(u, v)), Decimal(0))


def reference_patient_aware(p, tau: float) -> float:
    with localcontext() as ctx:
        ctx.prec = _PREC
        p, t = _dec(p), Decimal(float(tau))
        n, m = len(p), len(p[0]) // 2
        total = Decimal(0)
        for i in range(n):
            for a in range(m):
                anchor = p[i][a]
                denom = sum(((_dot(anchor, p[j][k]) / t).exp() for j in range(n) for k in range(m)
                             if (j, k) != (i, a)), Decimal(0))
                for b in range(m):
                    if b != a:
                        total += ((_dot(anchor, p[i][b]) / t).exp() / denom).ln()
        return float(-total / (m - 1))


def reference_structure_aware(p, tau: float) -> float:
    with localcontext() as ctx:
        ctx.prec = _PREC
        p, t = _dec(p), Decimal(float(tau))
        n, views = len(p), len(p[0])
        m = views // 2
        total = Decimal(0)
        for i in range(n):
            for a in range(views):
                partner = a + m if a < m else a - m
                denom = sum(((_dot(p[i][a], p[i][b]) / t).exp() for b in range(views) if b != a),
                            Decimal(0))
                total += ((_dot(p[i][a], p[i][partner]) / t).exp() / denom).ln()
        return float(-total)


def reference_combined(p, tau: float, alpha: float) -> float:
    pa = reference_patient_aware(p, tau) if alpha > 0 else 0.0
    sa = reference_structure_aware(p, tau) if alpha < 1 else 0.0
    return alpha * pa + (1.0 - alpha) * sa
