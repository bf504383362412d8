"""Dense tensor container backed by numpy.

Values are validated at creation: anything non-finite is rejected, which is
how training loops detect divergence early instead of propagating NaN.
Tests run in float64; float32 may be selected for inference.
"""

import numpy as np

from .errors import DimensionError, NumericError

_DEFAULT_DTYPE = np.float64


def set_default_dtype(dtype):
    """Select float32 or float64 for tensors created without an explicit dtype."""
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    _DEFAULT_DTYPE = dtype.type


def default_dtype():
    return _DEFAULT_DTYPE


class Tensor:
    """Immutable-by-convention nd array of finite reals.

    `data` is row-major; `shape` is the logical shape. Gradient buffers are
    allowed to alias and mutate `data` in place (see autodiff), but values
    entering the graph are always checked finite here.
    """

    __slots__ = ("data",)

    def __init__(self, data, dtype=None):
        arr = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        if not np.all(np.isfinite(arr)):
            raise NumericError("tensor contains NaN or Inf")
        self.data = arr

    @classmethod
    def _wrap(cls, arr):
        # Internal fast path for buffers we produced ourselves (zeros, grads).
        obj = object.__new__(cls)
        obj.data = arr
        return obj

    @classmethod
    def zeros(cls, shape, dtype=None):
        return cls._wrap(np.zeros(shape, dtype=dtype or _DEFAULT_DTYPE))

    @classmethod
    def zeros_like(cls, other):
        return cls._wrap(np.zeros_like(other.data))

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def copy(self):
        return Tensor._wrap(self.data.copy())

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"


def require_same_shape(a, b, what="operands"):
    if a.shape != b.shape:
        raise DimensionError(f"{what} have mismatched shapes {a.shape} vs {b.shape}")
