"""Minimal differentiable-array engine and the layers needed by the models."""

from mmode_ef.tensor_nn.functional import (
    conv2d,
    dense,
    global_avg_pool,
    instance_norm,
    lstm_cell,
    maxpool2d,
)
from mmode_ef.tensor_nn.layers import (
    BasicBlock,
    Conv2d,
    Dense,
    Encoder,
    EncoderConfig,
    InstanceNorm,
    LSTMCell,
    Module,
    desk_encoder_config,
)
from mmode_ef.tensor_nn.optim import Adam, OptimizerState, warmup_factor
from mmode_ef.tensor_nn.tensor import (
    Tensor,
    add,
    as_tensor,
    concat,
    default_dtype,
    div,
    exp,
    get_default_dtype,
    getitem,
    grad_enabled,
    l2_normalize,
    log,
    logsumexp,
    lse_split,
    matmul,
    mean,
    mse,
    mul,
    no_grad,
    power,
    relu,
    reshape,
    set_default_dtype,
    sigmoid,
    sqrt,
    stack,
    sub,
    swapaxes,
    tanh,
    transpose,
    tsum,
)

DiffTensor = Tensor

__all__ = [name for name in dir() if not name.startswith("_")]
