"""Reverse-mode differentiation on an explicit computation record.

Each operation builds a DiffValue whose closure knows how to push the
upstream gradient into its parents. Calling backward() on a scalar output
walks the record in reverse topological order. No broadcasting beyond the
specific patterns the models need (python scalars, 0-d gains, channel bias).
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, LabelError
from .tensor import Tensor


class DiffValue:
    """Node in the computation record: a value plus its accumulated gradient.

    Leaves created with requires_grad=True are trainable parameters; their
    `grad` holds the partial derivative of the last backward()'d scalar.
    """

    __slots__ = ("value", "grad", "parents", "_backward", "requires_grad", "name")

    def __init__(self, value, parents=(), backward=None, requires_grad=False, name=None):
        self.value = value if isinstance(value, Tensor) else Tensor(value)
        self.grad = None
        self.parents = parents
        self._backward = backward
        self.requires_grad = requires_grad
        self.name = name

    # -- gradient plumbing ------------------------------------------------

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = Tensor.zeros_like(self.value)
        self.grad.data += g

    def zero_grad(self):
        if self.grad is not None:
            self.grad.data[...] = 0.0

    def backward(self):
        if self.value.size != 1:
            raise DimensionError("backward() requires a scalar output")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:  # iterative toposort; graphs can be deep
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.value.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad.data)

    # -- convenience ------------------------------------------------------

    @property
    def shape(self):
        return self.value.shape

    @property
    def data(self):
        return self.value.data

    def item(self):
        return float(self.value.data)

    def detach(self):
        return DiffValue(Tensor._wrap(self.value.data.copy()))

    def __repr__(self):
        return f"DiffValue(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other) if isinstance(other, DiffValue) else add_scalar(self, other)

    def __radd__(self, other):
        return add_scalar(self, other)

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, DiffValue) else add_scalar(self, -other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, DiffValue) else mul_scalar(self, other)

    def __rmul__(self, other):
        return mul_scalar(self, other)

    def __neg__(self):
        return neg(self)


def param(data, name=None):
    """Trainable leaf with an eager zero gradient buffer."""
    p = DiffValue(Tensor(data), requires_grad=True, name=name)
    p.grad = Tensor.zeros_like(p.value)
    return p


def const(data):
    """Non-trainable leaf."""
    return DiffValue(Tensor(data))


def as_diff(x):
    return x if isinstance(x, DiffValue) else const(x)


def _make(out_arr, parents, backward):
    # A node tracks gradients iff anything upstream is trainable.
    if any(p.requires_grad for p in parents):
        return DiffValue(Tensor(out_arr), parents=tuple(parents), backward=backward,
                         requires_grad=True)
    return DiffValue(Tensor(out_arr))


# -- elementwise, same shape ---------------------------------------------


def add(a, b):
    a, b = as_diff(a), as_diff(b)
    if a.shape != b.shape:
        raise DimensionError(f"add: {a.shape} vs {b.shape}")

    def backward(g):
        a._accumulate(g)
        b._accumulate(g)

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_diff(a), as_diff(b)
    if a.shape != b.shape:
        raise DimensionError(f"sub: {a.shape} vs {b.shape}")

    def backward(g):
        a._accumulate(g)
        b._accumulate(-g)

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_diff(a), as_diff(b)
    if a.shape != b.shape:
        raise DimensionError(f"mul: {a.shape} vs {b.shape}")

    def backward(g):
        a._accumulate(g * b.data)
        b._accumulate(g * a.data)

    return _make(a.data * b.data, (a, b), backward)


def div(a, b):
    a, b = as_diff(a), as_diff(b)
    if a.shape != b.shape:
        raise DimensionError(f"div: {a.shape} vs {b.shape}")
    out = a.data / b.data

    def backward(g):
        a._accumulate(g / b.data)
        b._accumulate(-g * out / b.data)

    return _make(out, (a, b), backward)


def neg(a):
    def backward(g):
        a._accumulate(-g)

    return _make(-a.data, (a,), backward)


def add_scalar(a, c):
    c = float(c)

    def backward(g):
        a._accumulate(g)

    return _make(a.data + c, (a,), backward)


def mul_scalar(a, c):
    c = float(c)

    def backward(g):
        a._accumulate(g * c)

    return _make(a.data * c, (a,), backward)


def mul_const(a, arr):
    """Elementwise product with a fixed array (masks, windows)."""
    arr = np.asarray(arr)
    if arr.shape != a.shape:
        raise DimensionError(f"mul_const: {a.shape} vs {arr.shape}")

    def backward(g):
        a._accumulate(g * arr)

    return _make(a.data * arr, (a,), backward)


def square(a):
    def backward(g):
        a._accumulate(2.0 * a.data * g)

    return _make(a.data * a.data, (a,), backward)


def sqrt(a):
    out = np.sqrt(a.data)

    def backward(g):
        # subgradient 0 where the input is exactly 0 (keeps SC(s,s)=0 finite)
        denom = 2.0 * out
        safe = np.where(denom == 0.0, 1.0, denom)
        a._accumulate(np.where(denom == 0.0, 0.0, g / safe))

    return _make(out, (a,), backward)


def reciprocal(a):
    out = 1.0 / a.data

    def backward(g):
        a._accumulate(-g * out * out)

    return _make(out, (a,), backward)


def log(a):
    def backward(g):
        a._accumulate(g / a.data)

    return _make(np.log(a.data), (a,), backward)


def exp(a):
    out = np.exp(a.data)

    def backward(g):
        a._accumulate(g * out)

    return _make(out, (a,), backward)


def absolute(a):
    def backward(g):
        a._accumulate(g * np.sign(a.data))

    return _make(np.abs(a.data), (a,), backward)


def clamp(a, lo, hi):
    inside = (a.data > lo) & (a.data < hi)

    def backward(g):
        a._accumulate(g * inside)

    return _make(np.clip(a.data, lo, hi), (a,), backward)


# -- activations -----------------------------------------------------------


def relu(a):
    pos = a.data > 0

    def backward(g):
        a._accumulate(g * pos)

    return _make(np.maximum(a.data, 0.0), (a,), backward)


def elu(a):
    pos = a.data > 0
    expm1 = np.expm1(np.minimum(a.data, 0.0))
    out = np.where(pos, a.data, expm1)

    def backward(g):
        a._accumulate(g * np.where(pos, 1.0, expm1 + 1.0))

    return _make(out, (a,), backward)


def sigmoid(a):
    out = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        a._accumulate(g * out * (1.0 - out))

    return _make(out, (a,), backward)


def softsign_unit(a):
    """x / (1 + |x|); combine with scale() for the trainable output gain."""
    denom = 1.0 + np.abs(a.data)

    def backward(g):
        a._accumulate(g / (denom * denom))

    return _make(a.data / denom, (a,), backward)


def scaled_softsign(a, gain):
    """gain * x / (1 + |x|): bounded in (-gain, gain), gain trainable 0-d."""
    return scale(softsign_unit(a), gain)


# -- reductions / shape ----------------------------------------------------


def sum_all(a):
    def backward(g):
        a._accumulate(np.broadcast_to(g, a.shape).copy() if a.shape else g)

    return _make(np.asarray(a.data.sum()), (a,), backward)


def mean_all(a):
    n = a.value.size

    def backward(g):
        a._accumulate(np.full(a.shape, float(g) / n))

    return _make(np.asarray(a.data.mean()), (a,), backward)


def reshape(a, shape):
    shape = tuple(shape)

    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _make(a.data.reshape(shape), (a,), backward)


def concat(parts, axis):
    parts = [as_diff(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            p._accumulate(g[tuple(idx)])

    return _make(np.concatenate([p.data for p in parts], axis=axis), parts, backward)


def take_rows(a, idx):
    """Gather rows along axis 0 (used for per-class code grouping)."""
    idx = np.asarray(idx, dtype=np.intp)

    def backward(g):
        buf = np.zeros(a.shape)
        np.add.at(buf, idx, g)
        a._accumulate(buf)

    return _make(a.data[idx], (a,), backward)


def channel(a, i):
    """Select index i along axis 1 of [N, C, ...] (head outputs -> wave/mask)."""

    def backward(g):
        buf = np.zeros(a.shape)
        buf[:, i] = g
        a._accumulate(buf)

    return _make(a.data[:, i], (a,), backward)


def scale(a, s):
    """Multiply a tensor by a trainable 0-d gain."""
    s = as_diff(s)
    if s.value.size != 1:
        raise DimensionError("scale: gain must be 0-d")
    sv = float(s.data)

    def backward(g):
        a._accumulate(g * sv)
        s._accumulate(np.asarray((g * a.data).sum()))

    return _make(a.data * sv, (a, s), backward)


# -- linear algebra --------------------------------------------------------


def linear(x, w, b=None):
    """x @ w + b for x [N, F_in], w [F_in, F_out], b [F_out]."""
    if x.shape[1] != w.shape[0]:
        raise DimensionError(f"linear: {x.shape} @ {w.shape}")
    out = x.data @ w.data
    if b is not None:
        out = out + b.data
    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        x._accumulate(g @ w.data.T)
        w._accumulate(x.data.T @ g)
        if b is not None:
            b._accumulate(g.sum(axis=0))

    return _make(out, parents, backward)


def pairwise_sqdist(a, b):
    """All-pairs squared euclidean distances between rows of a [n,d] and b [m,d]."""
    a, b = as_diff(a), as_diff(b)
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"pairwise_sqdist: {a.shape} vs {b.shape}")
    an = (a.data * a.data).sum(axis=1)
    bn = (b.data * b.data).sum(axis=1)
    out = an[:, None] + bn[None, :] - 2.0 * (a.data @ b.data.T)
    np.maximum(out, 0.0, out=out)

    def backward(g):
        rs = g.sum(axis=1, keepdims=True)
        cs = g.sum(axis=0, keepdims=True)
        a._accumulate(2.0 * (a.data * rs - g @ b.data))
        b._accumulate(2.0 * (b.data * cs.T - g.T @ a.data))

    return _make(out, (a, b), backward)


# -- convolutions ----------------------------------------------------------


def conv2d_output_shape(hw, kernel_hw, stride, pad):
    h0, w0 = hw
    kh, kw = kernel_hw
    sh, sw = stride
    ph, pw = pad
    if kh > h0 + 2 * ph or kw > w0 + 2 * pw:
        raise DimensionError(f"kernel ({kh},{kw}) larger than padded input ({h0 + 2 * ph},{w0 + 2 * pw})")
    return ((h0 + 2 * ph - kh) // sh + 1, (w0 + 2 * pw - kw) // sw + 1)


def conv2d(x, k, stride, pad, bias=None):
    """Strided 2-d convolution.

    x: [C_in, H, W] or [N, C_in, H, W]; k: [C_out, C_in, kh, kw];
    bias: [C_out] or None. Differentiable w.r.t. x, k, bias.
    """
    squeeze = x.value.ndim == 3
    xd = x.data[None] if squeeze else x.data
    n, c_in, h0, w0 = xd.shape
    c_out, kc, kh, kw = k.shape
    if kc != c_in:
        raise DimensionError(f"conv2d: input has {c_in} channels, kernel expects {kc}")
    sh, sw = stride
    ph, pw = pad
    h1, w1 = conv2d_output_shape((h0, w0), (kh, kw), stride, pad)
    padded = np.pad(xd, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    # win: [N, C_in, H1, W1, kh, kw]
    out = np.tensordot(win, k.data, axes=([1, 4, 5], [1, 2, 3]))  # [N, H1, W1, C_out]
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    if bias is not None:
        out += bias.data[None, :, None, None]
    parents = (x, k) if bias is None else (x, k, bias)

    def backward(g):
        g4 = g[None] if squeeze else g
        gk = np.tensordot(g4, win, axes=([0, 2, 3], [0, 2, 3]))  # [C_out, C_in, kh, kw]
        k._accumulate(gk)
        gpad = np.zeros_like(padded)
        for i in range(kh):
            for j in range(kw):
                t = np.tensordot(g4, k.data[:, :, i, j], axes=([1], [0]))  # [N, H1, W1, C_in]
                gpad[:, :, i:i + sh * h1:sh, j:j + sw * w1:sw] += t.transpose(0, 3, 1, 2)
        gx = gpad[:, :, ph:ph + h0, pw:pw + w0]
        x._accumulate(gx[0] if squeeze else gx)
        if bias is not None:
            bias._accumulate(g4.sum(axis=(0, 2, 3)))

    return _make(out[0] if squeeze else out, parents, backward)


def _transpose_bounds(t_in, stride, width, target):
    full = (t_in - 1) * stride + width
    lo = (t_in - 1) * stride + 1
    if not (lo <= target <= full):
        raise DimensionError(
            f"transposed conv cannot reach length {target} from {t_in} "
            f"(achievable range [{lo}, {full}])")
    return full, (full - target) // 2


def conv_transpose1d(x, k, stride, out_len):
    """Strided 1-d transposed convolution, symmetric crop to out_len, no bias.

    x: [C_in, T] or [N, C_in, T]; k: [C_in, C_out, f]. With no bias,
    all-zero input maps to all-zero output exactly.
    """
    squeeze = x.value.ndim == 2
    xd = x.data[None] if squeeze else x.data
    n, c_in, t_in = xd.shape
    kc, c_out, f = k.shape
    if kc != c_in:
        raise DimensionError(f"conv_transpose1d: input has {c_in} channels, kernel expects {kc}")
    full, left = _transpose_bounds(t_in, stride, f, out_len)
    buf = np.zeros((n, c_out, full))
    for a in range(f):
        t = np.tensordot(xd, k.data[:, :, a], axes=([1], [0]))  # [N, T, C_out]
        buf[:, :, a:a + stride * t_in:stride] += t.transpose(0, 2, 1)
    out = np.ascontiguousarray(buf[:, :, left:left + out_len])

    def backward(g):
        g3 = g[None] if squeeze else g
        gfull = np.zeros((n, c_out, full))
        gfull[:, :, left:left + out_len] = g3
        gx = np.zeros_like(xd)
        gk = np.zeros_like(k.data)
        for a in range(f):
            sl = gfull[:, :, a:a + stride * t_in:stride]  # [N, C_out, T]
            gx += np.tensordot(sl, k.data[:, :, a], axes=([1], [1])).transpose(0, 2, 1)
            gk[:, :, a] = np.tensordot(xd, sl, axes=([0, 2], [0, 2]))
        x._accumulate(gx[0] if squeeze else gx)
        k._accumulate(gk)

    return _make(out[0] if squeeze else out, (x, k), backward)


def conv_transpose2d(x, k, stride, out_hw, bias=None):
    """Strided 2-d transposed convolution, symmetric crop to out_hw.

    x: [C_in, H, W] or [N, C_in, H, W]; k: [C_in, C_out, kh, kw].
    Mirrors conv2d: for every encoder layer in this repo the requested
    out_hw restores that layer's input spatial shape.
    """
    squeeze = x.value.ndim == 3
    xd = x.data[None] if squeeze else x.data
    n, c_in, h_in, w_in = xd.shape
    kc, c_out, kh, kw = k.shape
    if kc != c_in:
        raise DimensionError(f"conv_transpose2d: input has {c_in} channels, kernel expects {kc}")
    sh, sw = stride
    out_h, out_w = out_hw
    full_h, top = _transpose_bounds(h_in, sh, kh, out_h)
    full_w, lft = _transpose_bounds(w_in, sw, kw, out_w)
    buf = np.zeros((n, c_out, full_h, full_w))
    for a in range(kh):
        for b in range(kw):
            t = np.tensordot(xd, k.data[:, :, a, b], axes=([1], [0]))  # [N, H, W, C_out]
            buf[:, :, a:a + sh * h_in:sh, b:b + sw * w_in:sw] += t.transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(buf[:, :, top:top + out_h, lft:lft + out_w])
    if bias is not None:
        out += bias.data[None, :, None, None]
    parents = (x, k) if bias is None else (x, k, bias)

    def backward(g):
        g4 = g[None] if squeeze else g
        gfull = np.zeros((n, c_out, full_h, full_w))
        gfull[:, :, top:top + out_h, lft:lft + out_w] = g4
        gx = np.zeros_like(xd)
        gk = np.zeros_like(k.data)
        for a in range(kh):
            for b in range(kw):
                sl = gfull[:, :, a:a + sh * h_in:sh, b:b + sw * w_in:sw]  # [N, C_out, H, W]
                gx += np.tensordot(sl, k.data[:, :, a, b], axes=([1], [1])).transpose(0, 3, 1, 2)
                gk[:, :, a, b] = np.tensordot(xd, sl, axes=([0, 2, 3], [0, 2, 3]))
        x._accumulate(gx[0] if squeeze else gx)
        k._accumulate(gk)
        if bias is not None:
            bias._accumulate(g4.sum(axis=(0, 2, 3)))

    return _make(out[0] if squeeze else out, parents, backward)


# -- conditional batch normalization ---------------------------------------


class BatchNormState:
    """Running statistics for one conditional batch-norm layer."""

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps


def cond_batch_norm(x, gamma, beta, class_ids, state, training):
    """Normalize per channel with batch stats, then apply class-specific affine.

    x: [N, C, H, W]; gamma/beta: [n_classes, C] trainable; class_ids: [N] ints.
    Training normalizes with the current batch and updates running stats;
    eval normalizes with the running stats.
    """
    xd = x.data
    n, c, h, w = xd.shape
    cls = np.asarray(class_ids, dtype=np.intp)
    if cls.shape != (n,):
        raise DimensionError(f"cond_batch_norm: need one class id per sample, got {cls.shape}")
    if cls.size and (cls.min() < 0 or cls.max() >= gamma.shape[0]):
        raise LabelError(f"class id outside [0, {gamma.shape[0]})")
    gs = gamma.data[cls]  # [N, C]
    bs = beta.data[cls]
    eps = state.eps
    if training:
        mu = xd.mean(axis=(0, 2, 3))
        var = xd.var(axis=(0, 2, 3))
        m = state.momentum
        state.running_mean = (1 - m) * state.running_mean + m * mu
        state.running_var = (1 - m) * state.running_var + m * var
    else:
        mu = state.running_mean
        var = state.running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu[None, :, None, None]) * inv[None, :, None, None]
    out = gs[:, :, None, None] * xhat + bs[:, :, None, None]

    def backward(g):
        g_aff = (g * xhat).sum(axis=(2, 3))  # [N, C]
        g_gamma = np.zeros_like(gamma.data)
        g_beta = np.zeros_like(beta.data)
        np.add.at(g_gamma, cls, g_aff)
        np.add.at(g_beta, cls, g.sum(axis=(2, 3)))
        gamma._accumulate(g_gamma)
        beta._accumulate(g_beta)
        gxh = g * gs[:, :, None, None]
        if training:
            m_elems = n * h * w
            s1 = gxh.sum(axis=(0, 2, 3))
            s2 = (gxh * xhat).sum(axis=(0, 2, 3))
            gx = (inv[None, :, None, None] / m_elems) * (
                m_elems * gxh - s1[None, :, None, None] - xhat * s2[None, :, None, None])
        else:
            gx = gxh * inv[None, :, None, None]
        x._accumulate(gx)

    return _make(out, (x, gamma, beta), backward)
