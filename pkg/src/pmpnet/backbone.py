"""Scaled-down hierarchical windowed-attention feature extractor.

Four stages of non-overlapping window self-attention with 2x2 patch
merging between stages: an image of side S becomes an (S/32, S/32) grid
with 8x the base channel count. This is deliberately a small stand-in
for a production pyramid backbone (no shifted windows, no relative
position bias); its job is to supply a plausible semantic feature map
for the message-passing head at desk scale.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError, ShapeError
from .serialize import load_array
from .tensor import (
    Tensor,
    add,
    layer_norm,
    leaky_relu,
    linear,
    matmul,
    reshape,
    scale,
    softmax,
    transpose,
)

PATCH = 4
STAGES = 4
MLP_RATIO = 2.0


@dataclass
class FeatureMap:
    """Backbone output grid: (h, w, channels) with h = H/32, w = W/32."""

    values: Tensor

    def __post_init__(self):
        if self.values.data.ndim != 3:
            raise ShapeError(f"feature map must be 3-d, got {self.values.data.shape}")
        if self.h * self.w < 2:
            raise ShapeError("feature map needs at least 2 spatial cells")

    @property
    def h(self):
        return self.values.data.shape[0]

    @property
    def w(self):
        return self.values.data.shape[1]

    @property
    def channels(self):
        return self.values.data.shape[2]


@dataclass(frozen=True)
class BackboneConfig:
    side: int = 192
    base_channels: int = 16
    window: int = 3
    blocks_per_stage: int = 1
    heads: int = 1

    def validate(self):
        if self.side % 32 != 0 or self.side <= 0:
            raise ConfigError(f"backbone side must be a positive multiple of 32, got {self.side}")
        if self.base_channels < 1:
            raise ConfigError(f"backbone base_channels must be >= 1, got {self.base_channels}")
        if self.blocks_per_stage < 1:
            raise ConfigError(f"backbone blocks_per_stage must be >= 1, got {self.blocks_per_stage}")
        for stage in range(STAGES):
            side = self.grid_side(stage)
            if side % self.window != 0:
                raise ConfigError(
                    f"window {self.window} does not divide stage-{stage} grid side {side}"
                )
            if self.stage_dim(stage) % self.heads != 0:
                raise ConfigError(
                    f"heads {self.heads} do not divide stage-{stage} width {self.stage_dim(stage)}"
                )

    def grid_side(self, stage):
        return self.side // (PATCH * (1 << stage))

    def stage_dim(self, stage):
        return self.base_channels * (1 << stage)

    @property
    def out_channels(self):
        return 8 * self.base_channels


@dataclass
class BlockParams:
    ln1_g: Tensor
    ln1_b: Tensor
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    ln2_g: Tensor
    ln2_b: Tensor
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class BackboneParams:
    embed_w: Tensor
    embed_b: Tensor
    stages: list
    merges: list


def _glorot(rng, shape, dtype):
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True, dtype=dtype)


def _vec(value, dim, dtype):
    return Tensor(np.full(dim, value), requires_grad=True, dtype=dtype)


def init_backbone(cfg, rng, dtype=np.float32):
    embed_w = _glorot(rng, (PATCH * PATCH * 3, cfg.base_channels), dtype)
    embed_b = _vec(0.0, cfg.base_channels, dtype)
    stages = []
    merges = []
    for stage in range(STAGES):
        d = cfg.stage_dim(stage)
        hidden = int(d * MLP_RATIO)
        blocks = []
        for _ in range(cfg.blocks_per_stage):
            blocks.append(
                BlockParams(
                    ln1_g=_vec(1.0, d, dtype),
                    ln1_b=_vec(0.0, d, dtype),
                    wq=_glorot(rng, (d, d), dtype),
                    bq=_vec(0.0, d, dtype),
                    wk=_glorot(rng, (d, d), dtype),
                    bk=_vec(0.0, d, dtype),
                    wv=_glorot(rng, (d, d), dtype),
                    bv=_vec(0.0, d, dtype),
                    wo=_glorot(rng, (d, d), dtype),
                    bo=_vec(0.0, d, dtype),
                    ln2_g=_vec(1.0, d, dtype),
                    ln2_b=_vec(0.0, d, dtype),
                    w1=_glorot(rng, (d, hidden), dtype),
                    b1=_vec(0.0, hidden, dtype),
                    w2=_glorot(rng, (hidden, d), dtype),
                    b2=_vec(0.0, d, dtype),
                )
            )
        stages.append(blocks)
        if stage < STAGES - 1:
            merges.append((_glorot(rng, (4 * d, 2 * d), dtype), _vec(0.0, 2 * d, dtype)))
    return BackboneParams(embed_w=embed_w, embed_b=embed_b, stages=stages, merges=merges)


def patch_embed(image, w, b):
    """Flatten non-overlapping 4x4x3 blocks and project to base channels."""
    hh, ww = image.data.shape[0], image.data.shape[1]
    if hh % PATCH != 0 or ww % PATCH != 0:
        raise ConfigError(f"image sides {hh}x{ww} must be multiples of {PATCH}")
    gh, gw = hh // PATCH, ww // PATCH
    x = reshape(image, (gh, PATCH, gw, PATCH, 3))
    x = transpose(x, (0, 2, 1, 3, 4))
    x = reshape(x, (gh * gw, PATCH * PATCH * 3))
    x = linear(x, w, b)
    return reshape(x, (gh, gw, w.data.shape[1]))


def _partition(grid, window):
    h, ww, d = grid.data.shape
    x = reshape(grid, (h // window, window, ww // window, window, d))
    x = transpose(x, (0, 2, 1, 3, 4))
    return reshape(x, ((h // window) * (ww // window), window * window, d))


def _unpartition(tokens, window, h, ww):
    d = tokens.data.shape[-1]
    x = reshape(tokens, (h // window, ww // window, window, window, d))
    x = transpose(x, (0, 2, 1, 3, 4))
    return reshape(x, (h, ww, d))


def window_attention_block(grid, bp, window, heads=1, return_attn=False):
    """Self-attention within non-overlapping windows, then a feed-forward.

    Both sublayers are pre-normalized with residual additions.
    """
    h, ww, d = grid.data.shape
    if h % window != 0 or ww % window != 0:
        raise ConfigError(f"window {window} does not divide grid {h}x{ww}")
    tokens = _partition(grid, window)
    nw, t, _ = tokens.data.shape
    dh = d // heads

    x1 = layer_norm(tokens, bp.ln1_g, bp.ln1_b)
    q = linear(x1, bp.wq, bp.bq)
    k = linear(x1, bp.wk, bp.bk)
    v = linear(x1, bp.wv, bp.bv)
    if heads > 1:
        q = transpose(reshape(q, (nw, t, heads, dh)), (0, 2, 1, 3))
        k = transpose(reshape(k, (nw, t, heads, dh)), (0, 2, 1, 3))
        v = transpose(reshape(v, (nw, t, heads, dh)), (0, 2, 1, 3))
        kt = transpose(k, (0, 1, 3, 2))
    else:
        kt = transpose(k, (0, 2, 1))
    attn = softmax(scale(matmul(q, kt), 1.0 / np.sqrt(dh)))
    ctx = matmul(attn, v)
    if heads > 1:
        ctx = reshape(transpose(ctx, (0, 2, 1, 3)), (nw, t, d))
    z = add(tokens, linear(ctx, bp.wo, bp.bo))

    x2 = layer_norm(z, bp.ln2_g, bp.ln2_b)
    f = leaky_relu(linear(x2, bp.w1, bp.b1), 0.0)
    out = add(z, linear(f, bp.w2, bp.b2))

    grid_out = _unpartition(out, window, h, ww)
    if return_attn:
        return grid_out, attn
    return grid_out


def downsample_merge(grid, w, b):
    """Concatenate each 2x2 block (row-major) and project 4d -> 2d."""
    h, ww, d = grid.data.shape
    if h % 2 != 0 or ww % 2 != 0:
        raise ConfigError(f"downsample needs even grid sides, got {h}x{ww}")
    x = reshape(grid, (h // 2, 2, ww // 2, 2, d))
    x = transpose(x, (0, 2, 1, 3, 4))
    x = reshape(x, ((h // 2) * (ww // 2), 4 * d))
    x = linear(x, w, b)
    return reshape(x, (h // 2, ww // 2, w.data.shape[1]))


def backbone_forward(image, params, cfg, training=False, seed=0):
    """Embed -> [attend -> merge] x3 -> attend, giving (side/32)^2 patches."""
    if image.data.shape[0] != cfg.side or image.data.shape[1] != cfg.side:
        raise ConfigError(f"image side {image.data.shape[:2]} != configured {cfg.side}")
    grid = patch_embed(image, params.embed_w, params.embed_b)
    for stage in range(STAGES):
        for bp in params.stages[stage]:
            grid = window_attention_block(grid, bp, cfg.window, cfg.heads)
        if stage < STAGES - 1:
            w, b = params.merges[stage]
            grid = downsample_merge(grid, w, b)
    return FeatureMap(grid)


def load_features(path, expected_channels=None):
    """Read a PMT1 feature map (rank 3) and wrap it."""
    arr = load_array(path)
    if arr.ndim != 3:
        raise FormatError(f"{path}: rank mismatch, expected rank 3, got {arr.ndim}")
    fm = FeatureMap(Tensor(arr))
    if expected_channels is not None and fm.channels != expected_channels:
        raise ConfigError(
            f"{path}: feature map has {fm.channels} channels, config expects {expected_channels}"
        )
    return fm
