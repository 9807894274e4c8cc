"""Patch message passing over a feature-space KNN graph.

Each patch is a graph node. Directed edges connect every patch to its k
nearest neighbors in feature space (self excluded). An edge carries the
message h(p_i, p_j - p_i) where h is Linear -> LayerNorm -> LeakyReLU ->
Dropout, and a patch updates to the elementwise max over its incoming
messages. Stacked modules rebuild the graph from the current features by
default, so semantic neighborhoods evolve layer to layer.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, ShapeError
from .tensor import (
    Tensor,
    _accumulate,
    _node,
    dropout,
    layer_norm,
    leaky_relu,
    linear,
    max_over_first_axis,
    reshape,
    transpose,
)
from .util import derive_seed


@dataclass
class PatchSet:
    """An ordered set of patch feature vectors, shape (n, F)."""

    features: Tensor

    def __post_init__(self):
        if self.features.data.ndim != 2:
            raise ShapeError(f"PatchSet features must be 2-d, got {self.features.data.shape}")

    @property
    def n(self):
        return self.features.data.shape[0]

    @property
    def dim(self):
        return self.features.data.shape[1]


@dataclass
class NeighborGraph:
    """Per-patch neighbor table, shape (n, k), i never in row i."""

    k: int
    indices: np.ndarray


@dataclass
class PMPParams:
    """Learnable state of one message-passing module (h's parameters)."""

    w: Tensor
    b: Tensor
    gamma: Tensor
    beta: Tensor
    dropout_rate: float = 0.1
    leaky_slope: float = 0.2

    def tensors(self):
        return {"w": self.w, "b": self.b, "gamma": self.gamma, "beta": self.beta}


def init_pmp_params(dim, rng, dtype=np.float32, dropout_rate=0.1, leaky_slope=0.2):
    """Glorot-uniform weights for the 2F -> F message map."""
    limit = np.sqrt(6.0 / (3 * dim))
    w = rng.uniform(-limit, limit, size=(2 * dim, dim))
    return PMPParams(
        w=Tensor(w, requires_grad=True, dtype=dtype),
        b=Tensor(np.zeros(dim), requires_grad=True, dtype=dtype),
        gamma=Tensor(np.ones(dim), requires_grad=True, dtype=dtype),
        beta=Tensor(np.zeros(dim), requires_grad=True, dtype=dtype),
        dropout_rate=dropout_rate,
        leaky_slope=leaky_slope,
    )


def knn_graph(patches, k):
    """K nearest neighbors per patch by squared Euclidean distance.

    Rows are sorted by (distance, index); ties pick the smaller index.
    """
    n = patches.n
    if not 1 <= k <= n - 1:
        raise ConfigError(f"knn_graph needs 1 <= k <= n-1, got k={k} with n={n} patches")
    d2 = kernels.pairwise_sqdist(patches.features.data)
    return NeighborGraph(k=k, indices=kernels.knn_select(d2, k))


def _edge_inputs(features, indices):
    """Gather [p_i, p_j - p_i] per edge as a (n, k, 2F) tape node."""
    data = kernels.edge_concat(features.data, indices)

    def bwd(g):
        _accumulate(features, kernels.edge_concat_backward(np.ascontiguousarray(g), indices))

    return _node(data, (features,), bwd)


def edge_messages(patches, graph, params, training=False, seed=0):
    """Apply h = Dropout(LeakyReLU(LayerNorm(Linear(.)))) to every edge."""
    if graph.indices.shape[0] != patches.n:
        raise ShapeError(
            f"graph built for {graph.indices.shape[0]} patches, feature set has {patches.n}"
        )
    if params.w.data.shape[0] != 2 * patches.dim:
        raise ShapeError(
            f"message weights expect input width {params.w.data.shape[0]}, "
            f"edges provide {2 * patches.dim}"
        )
    x = _edge_inputs(patches.features, graph.indices)
    x = linear(x, params.w, params.b)
    x = layer_norm(x, params.gamma, params.beta)
    x = leaky_relu(x, params.leaky_slope)
    return dropout(x, params.dropout_rate, training, seed)


def aggregate_max(messages):
    """Update each patch to the elementwise max of its k messages."""
    n, k, f = messages.data.shape
    stacked = reshape(transpose(messages, (1, 0, 2)), (k, n * f))
    peak, _ = max_over_first_axis(stacked)
    return PatchSet(reshape(peak, (n, f)))


def pmp_forward(patches, params, k, training=False, seed=0, graph=None):
    """One module: build the KNN graph, pass messages, max-aggregate."""
    if graph is None:
        graph = knn_graph(patches, k)
    return aggregate_max(edge_messages(patches, graph, params, training, seed))


def pmp_stack(patches, params_list, k, training=False, seed=0, dynamic=True):
    """Apply modules sequentially, rebuilding the graph before each one.

    ``dynamic=False`` freezes the graph computed from the input features
    (ablation hook).
    """
    if not params_list:
        return patches
    graph = None if dynamic else knn_graph(patches, k)
    out = patches
    for i, params in enumerate(params_list):
        out = pmp_forward(out, params, k, training, derive_seed(seed, i), graph=graph)
    return out


@dataclass
class _MLPSubstitute:
    """Per-patch transform with h's structure but no neighbor input.

    Stands in for a PMP module in the ablation that strips message
    passing while keeping parameter shape discipline (F -> F).
    """

    w: Tensor
    b: Tensor
    gamma: Tensor
    beta: Tensor
    dropout_rate: float = 0.1
    leaky_slope: float = 0.2

    def tensors(self):
        return {"w": self.w, "b": self.b, "gamma": self.gamma, "beta": self.beta}


def init_mlp_substitute(dim, rng, dtype=np.float32, dropout_rate=0.1, leaky_slope=0.2):
    limit = np.sqrt(6.0 / (2 * dim))
    w = rng.uniform(-limit, limit, size=(dim, dim))
    return _MLPSubstitute(
        w=Tensor(w, requires_grad=True, dtype=dtype),
        b=Tensor(np.zeros(dim), requires_grad=True, dtype=dtype),
        gamma=Tensor(np.ones(dim), requires_grad=True, dtype=dtype),
        beta=Tensor(np.zeros(dim), requires_grad=True, dtype=dtype),
        dropout_rate=dropout_rate,
        leaky_slope=leaky_slope,
    )


def mlp_substitute_forward(patches, params, training=False, seed=0):
    x = linear(patches.features, params.w, params.b)
    x = layer_norm(x, params.gamma, params.beta)
    x = leaky_relu(x, params.leaky_slope)
    return PatchSet(dropout(x, params.dropout_rate, training, seed))
