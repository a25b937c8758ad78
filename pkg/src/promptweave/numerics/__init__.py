from .gradcheck import grad_check, grad_check_many, numeric_grad, relative_error
from .rng import Rng
from .tensor import (
    LAYER_NORM_EPS,
    PRIMITIVES,
    ContractError,
    DimensionError,
    Tape,
    Tensor,
    abs_,
    add,
    as_tensor,
    broadcast_to,
    concat,
    conv1d,
    dropout,
    exp,
    getitem,
    is_grad_enabled,
    layer_norm,
    linear,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    relu,
    reshape,
    softmax,
    sub,
    sum_,
    swapaxes,
    take,
)
