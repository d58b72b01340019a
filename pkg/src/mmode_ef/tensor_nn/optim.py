"""Adam with bias correction and a linear warm-up schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mmode_ef.errors import ShapeError
from mmode_ef.tensor_nn.tensor import Tensor


def warmup_factor(epoch: int, warmup_epochs: int) -> float:
    """Learning-rate multiplier: (epoch + 1) / warmup_epochs during warm-up, then 1."""
    if warmup_epochs <= 0 or epoch >= warmup_epochs:
        return 1.0
    return (epoch + 1) / warmup_epochs


@dataclass
class OptimizerState:
    base_lr: float
    warmup_epochs: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)


class Adam:
    def __init__(self, params: list[Tensor], lr: float = 1e-3, warmup_epochs: int = 0,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.state = OptimizerState(
            base_lr=lr, warmup_epochs=warmup_epochs, beta1=betas[0], beta2=betas[1], eps=eps,
            first_moment=[np.zeros_like(p.data) for p in self.params],
            second_moment=[np.zeros_like(p.data) for p in self.params],
        )
        self.epoch = 0

    @property
    def lr(self) -> float:
        return self.state.base_lr * warmup_factor(self.epoch, self.state.warmup_epochs)

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, grads: list[np.ndarray | None] | None = None) -> None:
        """Apply one update in place. Uses ``p.grad`` unless ``grads`` is given."""
        st = self.state
        if grads is None:
            grads = [p.grad for p in self.params]
        if len(grads) != len(self.params):
            raise ShapeError(f"{len(grads)} gradients for {len(self.params)} parameters")
        st.step += 1
        lr = self.lr
        c1 = 1.0 - st.beta1 ** st.step
        c2 = 1.0 - st.beta2 ** st.step
        for p, g, m, v in zip(self.params, grads, st.first_moment, st.second_moment):
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= st.beta1
            m += (1.0 - st.beta1) * g
            v *= st.beta2
            v += (1.0 - st.beta2) * (g * g)
            update = (lr * (m / c1) / (np.sqrt(v / c2) + st.eps)).astype(p.dtype, copy=False)
            p.data = p.data - update
