"""Class-activation heatmaps from feature-map gradients.

The gradient of the target class's fused logit is taken with respect to
the backbone's final feature map; channel weights are the spatial mean of
those gradients, and the heatmap is the rectified weighted sum of the
activations, min-max normalized to [0, 1] (all-zero maps stay zero).
"""

import numpy as np

from .errors import FormatError
from .tensor import add, backward, pick, scale


def grad_cam(model, image, target_class):
    """Heatmap over the (side/32)^2 feature grid for one class."""
    if not 0 <= int(target_class) < model.classes:
        raise IndexError(f"class {target_class} out of range for {model.classes} classes")
    out = model.forward(image, training=False, seed=0, want_features=True)
    total = out.logits[0]
    for y in out.logits[1:]:
        total = add(total, y)
    fused_logit = pick(scale(total, 1.0 / len(out.logits)), int(target_class))
    backward(fused_logit)
    fm = out.features.values
    grads = fm.grad
    if grads is None:
        grads = np.zeros_like(fm.data)
    weights = grads.mean(axis=(0, 1))
    cam = np.maximum(0.0, (fm.data * weights).sum(axis=-1))
    lo, hi = cam.min(), cam.max()
    if hi > lo:
        cam = (cam - lo) / (hi - lo)
    else:
        cam = np.zeros_like(cam)
    return cam.astype(np.float32)


def export_heatmap_pgm(heatmap, path):
    """Binary PGM (P5, maxval 255); values quantized as round(v * 255)."""
    hm = np.asarray(heatmap, dtype=np.float64)
    h, w = hm.shape
    payload = np.rint(np.clip(hm, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(payload.tobytes())


def upsample_bilinear(heatmap, size):
    """Bilinear resize of an (h, w) map to (size, size); rendering only."""
    hm = np.asarray(heatmap, dtype=np.float64)
    h, w = hm.shape
    ys = (np.arange(size) + 0.5) * h / size - 0.5
    xs = (np.arange(size) + 0.5) * w / size - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    top = hm[y0][:, x0] * (1 - wx) + hm[y0][:, x1] * wx
    bottom = hm[y1][:, x0] * (1 - wx) + hm[y1][:, x1] * wx
    return (top * (1 - wy) + bottom * wy).astype(np.float32)


def load_heatmap_pgm(path):
    """Parse a P5 file written by export_heatmap_pgm back to [0, 1]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    parts = blob.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h = (int(v) for v in parts[1].split())
    if parts[2] != b"255":
        raise FormatError(f"{path}: unsupported maxval {parts[2]!r}")
    data = np.frombuffer(parts[3][: w * h], dtype=np.uint8)
    if data.size != w * h:
        raise FormatError(f"{path}: truncated payload")
    return (data.reshape(h, w) / 255.0).astype(np.float32)
