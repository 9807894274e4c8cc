"""Multi-scale dual-branch classification head.

The primary branch pools the backbone map and classifies it directly.
Two message-passing branches first merge the map into patches of their
own scale (an s x s block of grid cells concatenated channel-wise and
linearly projected), run a stack of PMP modules, then pool and classify.
Inference averages the three logit vectors and applies one softmax; the
training loss is the mean of the three per-branch cross-entropies, which
is the one-hot expansion of -1/3 * sum y_i log(y'_i y''_i y'''_i).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .pmp import (
    PatchSet,
    init_mlp_substitute,
    init_pmp_params,
    mlp_substitute_forward,
    pmp_stack,
)
from .tensor import (
    Tensor,
    add,
    linear,
    mean_over_first_axis,
    reshape,
    scale,
    softmax,
    softmax_cross_entropy,
    transpose,
)
from .util import derive_seed


@dataclass(frozen=True)
class BranchConfig:
    """(merge block side, neighbor count, module count) for one branch."""

    patch_size: int
    k: int
    n_modules: int

    def patch_count(self, h, w):
        if self.patch_size < 1 or h % self.patch_size != 0 or w % self.patch_size != 0:
            raise ConfigError(
                f"patch size {self.patch_size} does not divide the {h}x{w} grid"
            )
        return (h // self.patch_size) * (w // self.patch_size)

    def validate(self, h, w, name):
        count = self.patch_count(h, w)
        if self.n_modules < 0:
            raise ConfigError(f"{name} branch: module count must be >= 0")
        if self.n_modules > 0:
            if self.k < 1:
                raise ConfigError(f"{name} branch: k must be >= 1 when modules are stacked")
            if self.k >= count:
                raise ConfigError(
                    f"{name} branch: k={self.k} must be below the derived patch count {count}"
                )
        return count


@dataclass
class BranchParams:
    config: BranchConfig
    proj_w: Tensor
    proj_b: Tensor
    modules: list
    fc_w: Tensor
    fc_b: Tensor
    kind: str = "pmp"  # "pmp" or "mlp" (ablation substitute)


@dataclass
class HeadParams:
    primary_w: Tensor
    primary_b: Tensor
    small: BranchParams
    large: BranchParams


@dataclass
class HeadOutputs:
    y1: Tensor  # primary-branch logits
    y2: Tensor  # large-branch logits
    y3: Tensor  # small-branch logits
    fused: Tensor  # softmax of the mean logits


def _glorot(rng, shape, dtype):
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True, dtype=dtype)


def init_branch(cfg, feat_dim, classes, rng, dtype=np.float32, kind="pmp",
                dropout_rate=0.1, leaky_slope=0.2):
    """Branch parameters; the projection keeps the backbone width."""
    in_dim = cfg.patch_size * cfg.patch_size * feat_dim
    if kind == "pmp":
        modules = [
            init_pmp_params(feat_dim, rng, dtype, dropout_rate, leaky_slope)
            for _ in range(cfg.n_modules)
        ]
    elif kind == "mlp":
        modules = [
            init_mlp_substitute(feat_dim, rng, dtype, dropout_rate, leaky_slope)
            for _ in range(cfg.n_modules)
        ]
    else:
        raise ConfigError(f"unknown branch kind {kind!r}")
    return BranchParams(
        config=cfg,
        proj_w=_glorot(rng, (in_dim, feat_dim), dtype),
        proj_b=Tensor(np.zeros(feat_dim), requires_grad=True, dtype=dtype),
        modules=modules,
        fc_w=_glorot(rng, (feat_dim, classes), dtype),
        fc_b=Tensor(np.zeros(classes), requires_grad=True, dtype=dtype),
        kind=kind,
    )


def init_head(small_cfg, large_cfg, feat_dim, classes, rng, dtype=np.float32,
              kind="pmp", dropout_rate=0.1, leaky_slope=0.2):
    return HeadParams(
        primary_w=_glorot(rng, (feat_dim, classes), dtype),
        primary_b=Tensor(np.zeros(classes), requires_grad=True, dtype=dtype),
        small=init_branch(small_cfg, feat_dim, classes, rng, dtype, kind,
                          dropout_rate, leaky_slope),
        large=init_branch(large_cfg, feat_dim, classes, rng, dtype, kind,
                          dropout_rate, leaky_slope),
    )


def patch_merge(grid, s, proj_w, proj_b):
    """Concatenate each s x s block of grid patches (row-major) and project."""
    h, w, f = grid.data.shape
    if s < 1 or h % s != 0 or w % s != 0:
        raise ConfigError(f"merge size {s} does not divide the {h}x{w} grid")
    x = reshape(grid, (h // s, s, w // s, s, f))
    x = transpose(x, (0, 2, 1, 3, 4))
    x = reshape(x, ((h // s) * (w // s), s * s * f))
    return PatchSet(linear(x, proj_w, proj_b))


def branch_logits(patches, fc_w, fc_b):
    """Mean-pool the patches, then map to class logits."""
    pooled = mean_over_first_axis(patches.features)
    return linear(pooled, fc_w, fc_b)


def fuse_predict(y1, y2, y3):
    """Softmax of the elementwise mean of the three logit vectors."""
    return softmax(scale(add(add(y1, y2), y3), 1.0 / 3.0))


def joint_loss(target, y1, y2, y3):
    """Mean of the three per-branch cross-entropies."""
    ces = [softmax_cross_entropy(y, target) for y in (y1, y2, y3)]
    return scale(add(add(ces[0], ces[1]), ces[2]), 1.0 / 3.0)


def run_branch(grid, bp, training=False, seed=0):
    """merge -> module stack -> pooled classifier for one branch."""
    patches = patch_merge(grid, bp.config.patch_size, bp.proj_w, bp.proj_b)
    if bp.kind == "pmp":
        patches = pmp_stack(patches, bp.modules, bp.config.k, training, seed)
    else:
        for i, m in enumerate(bp.modules):
            patches = mlp_substitute_forward(patches, m, training, derive_seed(seed, i))
    return branch_logits(patches, bp.fc_w, bp.fc_b)


def head_forward(feature_map, head, training=False, seed=0):
    """Full head: primary logits, both branch logits, fused probabilities."""
    grid = feature_map.values
    h, w, f = grid.data.shape
    tokens = reshape(grid, (h * w, f))
    y1 = branch_logits(PatchSet(tokens), head.primary_w, head.primary_b)
    try:
        y2 = run_branch(grid, head.large, training, derive_seed(seed, 2))
    except Exception as exc:
        raise type(exc)(f"large branch: {exc}") from exc
    try:
        y3 = run_branch(grid, head.small, training, derive_seed(seed, 3))
    except Exception as exc:
        raise type(exc)(f"small branch: {exc}") from exc
    return HeadOutputs(y1=y1, y2=y2, y3=y3, fused=fuse_predict(y1, y2, y3))
