"""Central finite-difference gradient checks."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from mmode_ef.tensor_nn.tensor import Tensor, default_dtype


def numeric_grad(f: Callable[..., Tensor], arrays: Sequence[np.ndarray], index: int,
                 eps: float = 1e-6) -> np.ndarray:
    """d f / d arrays[index] by central differences (f must return a scalar)."""
    base = [np.array(a, dtype=np.float64) for a in arrays]
    x = base[index]
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + eps
        up = float(f(*[Tensor(a) for a in base]).data)
        x[i] = orig - eps
        down = float(f(*[Tensor(a) for a in base]).data)
        x[i] = orig
        grad[i] = (up - down) / (2 * eps)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def check_gradients(f: Callable[..., Tensor], arrays: Sequence[np.ndarray], eps: float = 1e-6,
                    dtype=np.float64) -> float:
    """Largest relative error between analytic and numeric gradients over all inputs.

    ``f`` maps input tensors to a scalar tensor.  Analytic gradients are
    computed in ``dtype``; the numeric ones always in float64.
    """
    worst = 0.0
    with default_dtype(dtype):
        inputs = [Tensor(np.asarray(a, dtype=dtype), requires_grad=True) for a in arrays]
        f(*inputs).backward()
        analytic = [t.grad.astype(np.float64) for t in inputs]
    with default_dtype(np.float64):
        for k in range(len(arrays)):
            worst = max(worst, relative_error(analytic[k], numeric_grad(f, arrays, k, eps)))
    return worst
