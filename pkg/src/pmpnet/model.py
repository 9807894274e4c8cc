"""Full classifier: backbone + multi-scale message-passing head.

Variants cover the ablation grid:
  dual      primary + large-PMP + small-PMP branches (the full model)
  mono      primary + small-PMP branch only
  backbone  primary pooled classifier only
  mlp       like dual but with per-patch MLPs substituted for PMP modules
Prediction always softmaxes the mean of the active logit vectors and the
loss is the mean of their cross-entropies.
"""

from dataclasses import dataclass

import numpy as np

from .backbone import BackboneConfig, backbone_forward, init_backbone
from .errors import ConfigError
from .head import BranchConfig, HeadOutputs, branch_logits, fuse_predict, init_head, run_branch
from .pmp import PatchSet
from .tensor import Tensor, add, reshape, scale, softmax, softmax_cross_entropy
from .util import derive_seed

VARIANTS = ("dual", "mono", "backbone", "mlp")


@dataclass
class ModelOutputs:
    logits: list  # active logit tensors, primary first
    fused: Tensor  # softmax of their mean
    features: object = None  # FeatureMap when requested


class Model:
    def __init__(self, backbone_cfg, small_cfg, large_cfg, classes, variant="dual",
                 seed=0, dtype=np.float32, dropout_rate=0.1, leaky_slope=0.2):
        if variant not in VARIANTS:
            raise ConfigError(f"unknown model variant {variant!r}")
        backbone_cfg.validate()
        map_side = backbone_cfg.grid_side(3)
        small_cfg.validate(map_side, map_side, "small")
        large_cfg.validate(map_side, map_side, "large")
        self.backbone_cfg = backbone_cfg
        self.small_cfg = small_cfg
        self.large_cfg = large_cfg
        self.classes = classes
        self.variant = variant
        self.dtype = dtype
        rng = np.random.default_rng(derive_seed(seed, 17))
        self.backbone = init_backbone(backbone_cfg, rng, dtype)
        kind = "mlp" if variant == "mlp" else "pmp"
        self.head = init_head(small_cfg, large_cfg, backbone_cfg.out_channels, classes,
                              rng, dtype, kind, dropout_rate, leaky_slope)

    def forward(self, image, training=False, seed=0, want_features=False):
        fm = backbone_forward(image, self.backbone, self.backbone_cfg, training, seed)
        grid = fm.values
        h, w, f = grid.data.shape
        tokens = reshape(grid, (h * w, f))
        logits = [branch_logits(PatchSet(tokens), self.head.primary_w, self.head.primary_b)]
        if self.variant in ("dual", "mlp"):
            logits.append(run_branch(grid, self.head.large, training, derive_seed(seed, 2)))
        if self.variant in ("dual", "mono", "mlp"):
            logits.append(run_branch(grid, self.head.small, training, derive_seed(seed, 3)))
        fused = _fuse(logits)
        return ModelOutputs(logits=logits, fused=fused, features=fm if want_features else None)

    def head_outputs(self, image, training=False, seed=0):
        """Spec-shaped outputs (y1, y2, y3, fused); dual variants only."""
        out = self.forward(image, training, seed)
        if len(out.logits) != 3:
            raise ConfigError(f"variant {self.variant!r} does not produce three logit heads")
        y1, y2, y3 = out.logits
        return HeadOutputs(y1=y1, y2=y2, y3=y3, fused=out.fused)

    def loss(self, outputs, target):
        """Mean cross-entropy over the active logit heads."""
        ces = [softmax_cross_entropy(y, target) for y in outputs.logits]
        total = ces[0]
        for ce in ces[1:]:
            total = add(total, ce)
        return scale(total, 1.0 / len(ces))

    def named_parameters(self):
        """Deterministically ordered name -> Tensor mapping."""
        out = {}
        out["backbone.embed.w"] = self.backbone.embed_w
        out["backbone.embed.b"] = self.backbone.embed_b
        for s, blocks in enumerate(self.backbone.stages):
            for i, bp in enumerate(blocks):
                prefix = f"backbone.stage{s}.block{i}"
                for field in ("ln1_g", "ln1_b", "wq", "bq", "wk", "bk", "wv", "bv",
                              "wo", "bo", "ln2_g", "ln2_b", "w1", "b1", "w2", "b2"):
                    out[f"{prefix}.{field}"] = getattr(bp, field)
        for s, (w, b) in enumerate(self.backbone.merges):
            out[f"backbone.merge{s}.w"] = w
            out[f"backbone.merge{s}.b"] = b
        out["head.primary.w"] = self.head.primary_w
        out["head.primary.b"] = self.head.primary_b
        branches = {"dual": ("small", "large"), "mlp": ("small", "large"),
                    "mono": ("small",), "backbone": ()}[self.variant]
        for name in branches:
            bp = getattr(self.head, name)
            out[f"head.{name}.proj.w"] = bp.proj_w
            out[f"head.{name}.proj.b"] = bp.proj_b
            for i, m in enumerate(bp.modules):
                for key, t in m.tensors().items():
                    out[f"head.{name}.mod{i}.{key}"] = t
            out[f"head.{name}.fc.w"] = bp.fc_w
            out[f"head.{name}.fc.b"] = bp.fc_b
        return out

    def zero_grads(self):
        for t in self.named_parameters().values():
            t.grad = None


def _fuse(logits):
    total = logits[0]
    for y in logits[1:]:
        total = add(total, y)
    return softmax(scale(total, 1.0 / len(logits)))


def build_model(cfg, variant="dual", seed=None, dtype=np.float32):
    """Construct a model from an ExperimentConfig."""
    backbone_cfg = BackboneConfig(
        side=cfg.backbone["side"],
        base_channels=cfg.backbone["base_channels"],
        window=cfg.backbone["window"],
        blocks_per_stage=cfg.backbone["blocks_per_stage"],
    )
    small = BranchConfig(cfg.small["patch_size"], cfg.small["k"], cfg.small["n"])
    large = BranchConfig(cfg.large["patch_size"], cfg.large["k"], cfg.large["n"])
    return Model(backbone_cfg, small, large, cfg.classes, variant=variant,
                 seed=cfg.seed if seed is None else seed, dtype=dtype)
