from . import ops
from .arrayio import ArrayFormatError, load_arrays, loads_arrays, save_arrays, dumps_arrays
from .gradcheck import grad_check
from .ops import (
    concat,
    conv2d,
    depthwise_conv3x3,
    embedding,
    gelu,
    l2_normalize,
    layer_norm,
    linear,
    log_softmax,
    matmul,
    softmax,
)
from .tensor import (
    DTYPE,
    GraphError,
    NonFiniteError,
    Tensor,
    as_tensor,
    backward,
    debug_mode,
    no_grad,
    set_debug,
    topological_order,
)

__all__ = [
    "ArrayFormatError",
    "DTYPE",
    "GraphError",
    "NonFiniteError",
    "Tensor",
    "as_tensor",
    "backward",
    "concat",
    "conv2d",
    "debug_mode",
    "depthwise_conv3x3",
    "dumps_arrays",
    "embedding",
    "gelu",
    "grad_check",
    "l2_normalize",
    "layer_norm",
    "linear",
    "load_arrays",
    "loads_arrays",
    "log_softmax",
    "matmul",
    "no_grad",
    "ops",
    "save_arrays",
    "set_debug",
    "softmax",
    "topological_order",
]
