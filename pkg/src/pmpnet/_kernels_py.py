"""Pure-numpy implementations of the hot kernels.

Semantics must match ``_kernels.pyx`` exactly: the compiled module is an
optimization, never a behavior change. Index outputs are bit-identical
between backends; float accumulations agree to rounding.
"""

import numpy as np

BACKEND = "numpy"


def pairwise_sqdist(feats):
    """All-pairs squared Euclidean distances, accumulated in float64."""
    x = np.asarray(feats, dtype=np.float64)
    diff = x[:, None, :] - x[None, :, :]
    return (diff * diff).sum(axis=2)


def knn_select(d2, k):
    """Per-row k smallest entries of a distance matrix, self excluded.

    Rows are ordered by (distance, index); ties go to the smaller index.
    """
    d = np.array(d2, dtype=np.float64, copy=True)
    np.fill_diagonal(d, np.inf)
    order = np.argsort(d, axis=1, kind="stable")
    return np.ascontiguousarray(order[:, :k].astype(np.int64))


def edge_concat(feats, idx):
    """Build per-edge inputs [p_i, p_j - p_i] of shape (n, k, 2F)."""
    n, f = feats.shape
    k = idx.shape[1]
    out = np.empty((n, k, 2 * f), dtype=feats.dtype)
    center = feats[:, None, :]
    out[:, :, :f] = center
    out[:, :, f:] = feats[idx] - center
    return out


def edge_concat_backward(gout, idx):
    """Route (n, k, 2F) edge-input gradients back to the (n, F) features."""
    n, k, f2 = gout.shape
    f = f2 // 2
    g_center = gout[:, :, :f]
    g_diff = gout[:, :, f:]
    grad = (g_center - g_diff).sum(axis=1)
    np.add.at(grad, idx.ravel(), g_diff.reshape(n * k, f))
    return grad


def max_first(x):
    """Columnwise max over the first axis with argmax; first row wins ties."""
    arg = x.argmax(axis=0)
    vals = np.take_along_axis(x, arg[None, :], axis=0)[0]
    return np.ascontiguousarray(vals), arg.astype(np.int64)


def max_first_backward(gout, arg, k):
    """Scatter each column's output gradient to its stored argmax row."""
    grad = np.zeros((k, gout.shape[0]), dtype=gout.dtype)
    np.put_along_axis(grad, arg[None, :], gout[None, :], axis=0)
    return grad
