from .tensor import (
    Tape,
    Tensor,
    add,
    apply_primitive,
    backward,
    concat,
    detach,
    detach_freeze,
    dropout,
    elu,
    exp,
    extended_precision,
    l2_normalize,
    leaky_relu,
    log,
    matmul,
    mul,
    no_grad,
    relu,
    reshape,
    slice_rows,
    softmax,
    sub,
    tmax,
    tmean,
    transpose,
    tsum,
)
from .norm import BN_EPS, NormState, batch_norm
from .gradcheck import GradCheckRecord, finite_diff_check, max_rel_err

__all__ = [
    "Tape", "Tensor", "add", "apply_primitive", "backward", "concat", "detach", "detach_freeze",
    "dropout", "elu", "exp", "extended_precision", "l2_normalize", "leaky_relu", "log", "matmul",
    "mul", "no_grad", "relu", "reshape", "slice_rows", "softmax", "sub", "tmax", "tmean",
    "transpose", "tsum", "BN_EPS", "NormState", "batch_norm",
    "GradCheckRecord", "finite_diff_check", "max_rel_err",
]
