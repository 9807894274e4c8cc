"""Multi-scale patch message passing classifier at desk scale."""

from .kernels import BACKEND as kernel_backend
from .tensor import Tensor

__all__ = ["Tensor", "kernel_backend"]
__version__ = "0.1.0"
