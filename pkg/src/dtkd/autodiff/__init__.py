from dtkd.autodiff.gradcheck import (
    GradcheckResult,
    finite_diff_grad,
    gradcheck,
    relative_error,
)
from dtkd.autodiff.ops import (
    add,
    bias_add,
    conv2d,
    elementwise,
    exp,
    log,
    log_softmax,
    matmul,
    max_scalar,
    maxpool2d,
    mean,
    mul,
    neg,
    relu,
    reshape,
    softmax,
    sub,
    total,
)
from dtkd.autodiff.tape import (
    ComputationTape,
    TapeEntry,
    active_tape,
    backward,
    paused,
    recording,
)
from dtkd.autodiff.tensor import Tensor

__all__ = [
    "ComputationTape",
    "GradcheckResult",
    "TapeEntry",
    "Tensor",
    "active_tape",
    "add",
    "backward",
    "bias_add",
    "conv2d",
    "elementwise",
    "exp",
    "finite_diff_grad",
    "gradcheck",
    "log",
    "log_softmax",
    "matmul",
    "max_scalar",
    "maxpool2d",
    "mean",
    "mul",
    "neg",
    "paused",
    "recording",
    "relative_error",
    "relu",
    "reshape",
    "softmax",
    "sub",
    "total",
]
