"""Parameter count, timing and memory estimate for one model."""

from __future__ import annotations

import statistics
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from mmode_ef.data_model import PatientRecord
from mmode_ef.errors import DataError
from mmode_ef.losses import regression_loss
from mmode_ef.model import ModelBundle
from mmode_ef.tensor_nn import no_grad
from mmode_ef.tensor_nn.tensor import _topological_order
from mmode_ef.train_eval.config import TrainConfig
from mmode_ef.train_eval.data import StackStore


@dataclass
class CostReport:
    params_mio: float
    batch_size: int
    train_sec_per_batch: float
    test_sec_per_batch: float
    train_msec_per_sample: float
    test_msec_per_sample: float
    peak_bytes_estimate: int
    train_times: list[float] = field(default_factory=list)
    test_times: list[float] = field(default_factory=list)

    @property
    def train_rel_std(self) -> float:
        """Sample standard deviation over mean of the timed repeats."""
        return _rel_std(self.train_times)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train_rel_std"] = self.train_rel_std
        d["test_rel_std"] = _rel_std(self.test_times)
        return d


def _rel_std(times: list[float]) -> float:
    return statistics.stdev(times) / statistics.fmean(times) if len(times) > 1 else 0.0


def per_sample_msec(sec_per_batch: float, batch_size: int) -> float:
    return 1000.0 * sec_per_batch / batch_size


def _train_step(bundle: ModelBundle, x: np.ndarray, y: np.ndarray, measure: bool = False) -> int:
    loss = regression_loss(bundle.forward_supervised(x), y)
    graph = sum(node.data.nbytes for node in _topological_order(loss)) if measure else 0
    bundle.zero_grad()
    loss.backward()
    return graph


def bench(bundle: ModelBundle, store: StackStore, records: list[PatientRecord], config: TrainConfig,
          batch_size: int, repeats: int = 3) -> CostReport:
    """Time training steps (forward + backward) and inference on one batch.

    One warm-up repeat is run and discarded before ``repeats`` timed ones.
    The working-set estimate counts graph activations, their gradients, and
    parameters with gradient and two Adam moments.  Parameters are restored
    afterwards, so the bundle is unchanged.
    """
    if not records:
        raise DataError("bench needs at least one patient")
    chosen = [records[i % len(records)] for i in range(batch_size)]
    x = store.batch(chosen, config.clip_policy, config.seed, 0, train=False)
    y = np.array([r.ef if r.labeled else 0.5 for r in chosen], dtype=np.float32)
    state = bundle.state_dict()
    graph_bytes = _train_step(bundle, x, y, measure=True)
    param_bytes = sum(p.data.nbytes for p in bundle.parameters())
    train_times, test_times = [], []
    for i in range(repeats + 1):
        t0 = time.perf_counter()
        _train_step(bundle, x, y)
        t1 = time.perf_counter()
        with no_grad():
            bundle.forward_supervised(x)
        t2 = time.perf_counter()
        if i:  # discard the warm-up repeat
            train_times.append(t1 - t0)
            test_times.append(t2 - t1)
    bundle.zero_grad()
    bundle.load_state_dict(state)
    train_sec = statistics.median(train_times)
    test_sec = statistics.median(test_times)
    return CostReport(
        params_mio=bundle.num_parameters() / 1e6,
        batch_size=batch_size,
        train_sec_per_batch=train_sec,
        test_sec_per_batch=test_sec,
        train_msec_per_sample=per_sample_msec(train_sec, batch_size),
        test_msec_per_sample=per_sample_msec(test_sec, batch_size),
        peak_bytes_estimate=2 * graph_bytes + 4 * param_bytes,
        train_times=train_times,
        test_times=test_times,
    )
