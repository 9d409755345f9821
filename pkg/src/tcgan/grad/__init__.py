from .tensor import Parameter, ShapeError, Tape, Tensor, no_trace
from . import ops
from .ops import forward_op, op_kinds
from .gradcheck import CHECKED_KINDS, check_function, grad_check, relative_error
from .optim import Adam

__all__ = [
    "Adam",
    "CHECKED_KINDS",
    "Parameter",
    "ShapeError",
    "Tape",
    "Tensor",
    "check_function",
    "forward_op",
    "grad_check",
    "no_trace",
    "op_kinds",
    "ops",
    "relative_error",
]
