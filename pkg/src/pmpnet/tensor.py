"""Dense tensors with reverse-mode automatic differentiation.

A Tensor wraps a contiguous row-major float array. Operations record
closures onto an implicit tape (the parent links); ``backward`` walks the
tape in reverse topological order and accumulates gradients, summing over
fan-out. Model math runs in float32; float64 is supported so oracles such
as the finite-difference gradient check can run at full precision.

Tensors are treated as immutable once created, apart from gradient
accumulation and explicit optimizer updates on leaf parameters. A tape
belongs to one thread; parallel evaluation needs one tape per worker.
"""

import numpy as np

from . import kernels
from .errors import ParameterError, ShapeError

_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=np.float32):
        if dtype not in _FLOAT_DTYPES:
            raise ParameterError(f"unsupported dtype {dtype}")
        self.data = np.ascontiguousarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def backward(self):
        backward(self)


def _node(data, parents, backward_fn):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _accumulate(t, g):
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad += g


def _check_same_dtype(*tensors):
    dt = tensors[0].data.dtype
    for t in tensors[1:]:
        if t.data.dtype != dt:
            raise ShapeError(f"mixed dtypes {dt} and {t.data.dtype}")
    return dt


def backward(root):
    """Reverse-accumulate gradients from a scalar root over its tape."""
    if root.data.shape != ():
        raise ParameterError(f"backward root must be scalar, got shape {root.data.shape}")
    topo = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    root.grad = np.ones((), dtype=root.data.dtype)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def add(a, b):
    _check_same_dtype(a, b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add shapes {a.data.shape} vs {b.data.shape}")

    def bwd(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _node(a.data + b.data, (a, b), bwd)


def mul(a, b):
    _check_same_dtype(a, b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul shapes {a.data.shape} vs {b.data.shape}")

    def bwd(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _node(a.data * b.data, (a, b), bwd)


def scale(x, s):
    s = float(s)

    def bwd(g):
        _accumulate(x, g * np.asarray(s, dtype=x.data.dtype))

    return _node(x.data * np.asarray(s, dtype=x.data.dtype), (x,), bwd)


def matmul(a, b):
    """Batched matrix product; leading dims of both operands must match."""
    _check_same_dtype(a, b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs matrices, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2] or a.data.shape[:-2] != b.data.shape[:-2]:
        raise ShapeError(f"matmul shapes {a.data.shape} @ {b.data.shape}")

    def bwd(g):
        _accumulate(a, g @ np.swapaxes(b.data, -1, -2))
        _accumulate(b, np.swapaxes(a.data, -1, -2) @ g)

    return _node(a.data @ b.data, (a, b), bwd)


def linear(x, w, b):
    """x @ w + b over the last axis of x."""
    _check_same_dtype(x, w, b)
    if x.data.shape[-1] != w.data.shape[0]:
        raise ShapeError(f"linear input {x.data.shape} incompatible with weight {w.data.shape}")
    if b.data.shape != (w.data.shape[1],):
        raise ShapeError(f"linear bias {b.data.shape} incompatible with weight {w.data.shape}")
    d_in, d_out = w.data.shape

    def bwd(g):
        _accumulate(x, g @ w.data.T)
        if w.requires_grad:
            _accumulate(w, x.data.reshape(-1, d_in).T @ g.reshape(-1, d_out))
        if b.requires_grad:
            _accumulate(b, g.reshape(-1, d_out).sum(axis=0))

    return _node(x.data @ w.data + b.data, (x, w, b), bwd)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize the last axis to zero mean and unit (biased) variance."""
    _check_same_dtype(x, gamma, beta)
    d = x.data.shape[-1]
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise ShapeError(
            f"layer_norm affine shapes {gamma.data.shape}/{beta.data.shape} for width {d}"
        )
    if eps <= 0:
        raise ParameterError(f"layer_norm eps must be positive, got {eps}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    istd = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.data.dtype))
    xhat = centered * istd

    def bwd(g):
        if gamma.requires_grad:
            _accumulate(gamma, (g * xhat).reshape(-1, d).sum(axis=0))
        if beta.requires_grad:
            _accumulate(beta, g.reshape(-1, d).sum(axis=0))
        gx = g * gamma.data
        # d/dx of (x - mu) * istd, with mu and istd functions of the row
        gsum = gx.sum(axis=-1, keepdims=True)
        gdot = (gx * xhat).sum(axis=-1, keepdims=True)
        _accumulate(x, istd * (gx - gsum / d - xhat * gdot / d))

    return _node(gamma.data * xhat + beta.data, (x, gamma, beta), bwd)


def leaky_relu(x, slope=0.2):
    if not 0.0 <= slope < 1.0:
        raise ParameterError(f"leaky_relu slope must be in [0, 1), got {slope}")
    s = np.asarray(slope, dtype=x.data.dtype)
    mask = x.data >= 0

    def bwd(g):
        _accumulate(x, g * np.where(mask, x.data.dtype.type(1), s))

    return _node(np.where(mask, x.data, x.data * s), (x,), bwd)


def dropout(x, rate, training, seed):
    """Zero elements with probability ``rate`` and rescale survivors.

    Eval mode and rate 0 return the input unchanged (exact identity).
    Deterministic for a fixed seed.
    """
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    rng = np.random.default_rng(seed)
    keep = rng.random(x.data.shape) >= rate
    factor = (keep / (1.0 - rate)).astype(x.data.dtype)

    def bwd(g):
        _accumulate(x, g * factor)

    return _node(x.data * factor, (x,), bwd)


def softmax(x):
    """Softmax over the last axis (log-sum-exp shifted)."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * s).sum(axis=-1, keepdims=True)
        _accumulate(x, s * (g - dot))

    return _node(s, (x,), bwd)


def softmax_cross_entropy(logits, target):
    """-log softmax(logits)[target] for a single logit vector."""
    if logits.data.ndim != 1:
        raise ShapeError(f"softmax_cross_entropy expects a vector, got {logits.data.shape}")
    c = logits.data.shape[0]
    target = int(target)
    if not 0 <= target < c:
        raise IndexError(f"target {target} out of range for {c} classes")
    z = logits.data - logits.data.max()
    e = np.exp(z)
    total = e.sum()
    loss = np.log(total) - z[target]
    probs = e / total

    def bwd(g):
        gl = probs.copy()
        gl[target] -= 1.0
        _accumulate(logits, g * gl)

    return _node(np.asarray(loss, dtype=logits.data.dtype), (logits,), bwd)


def max_over_first_axis(x):
    """Columnwise maximum of a (k, d) tensor.

    Returns the (d,) max tensor and the argmax row per column. Ties pick
    the smallest row index, and the backward pass routes each column's
    gradient entirely to that stored row.
    """
    if x.data.ndim != 2:
        raise ShapeError(f"max_over_first_axis expects 2-d input, got {x.data.shape}")
    k = x.data.shape[0]
    if k < 1:
        raise ShapeError("max_over_first_axis got an empty first axis")
    vals, arg = kernels.max_first(x.data)

    def bwd(g):
        _accumulate(x, kernels.max_first_backward(np.ascontiguousarray(g), arg, k))

    return _node(vals, (x,), bwd), arg


def reshape(x, shape):
    def bwd(g):
        _accumulate(x, g.reshape(x.data.shape))

    return _node(np.ascontiguousarray(x.data.reshape(shape)), (x,), bwd)


def transpose(x, axes):
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def bwd(g):
        _accumulate(x, np.ascontiguousarray(g.transpose(inverse)))

    return _node(np.ascontiguousarray(x.data.transpose(axes)), (x,), bwd)


def mean_over_first_axis(x):
    """Mean over axis 0; used for patch pooling before classifiers."""
    if x.data.ndim < 1 or x.data.shape[0] < 1:
        raise ShapeError(f"mean_over_first_axis needs a non-empty first axis, got {x.data.shape}")
    n = x.data.shape[0]

    def bwd(g):
        _accumulate(x, np.broadcast_to(g / n, x.data.shape).astype(x.data.dtype))

    return _node(x.data.mean(axis=0), (x,), bwd)


def sum_all(x):
    def bwd(g):
        _accumulate(x, np.broadcast_to(g, x.data.shape).astype(x.data.dtype))

    return _node(x.data.sum(), (x,), bwd)


def pick(x, index):
    """Scalar element of a vector; gradient lands on that entry only."""
    if x.data.ndim != 1:
        raise ShapeError(f"pick expects a vector, got {x.data.shape}")
    index = int(index)
    if not 0 <= index < x.data.shape[0]:
        raise IndexError(f"index {index} out of range for length {x.data.shape[0]}")

    def bwd(g):
        full = np.zeros_like(x.data)
        full[index] = g
        _accumulate(x, full)

    return _node(x.data[index].copy(), (x,), bwd)
