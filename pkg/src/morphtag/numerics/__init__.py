from .optim import AdamState, adam_step, clip_by_global_norm, global_norm
from .tensor import (
    Tape,
    Tensor,
    active_tape,
    add,
    as_tensor,
    backward,
    concat,
    dropout,
    exp,
    gather,
    index,
    log_softmax,
    logsumexp,
    matmul,
    mul,
    neg,
    no_grad,
    reshape,
    sigmoid,
    sub,
    sum,
    tanh,
    where,
)
