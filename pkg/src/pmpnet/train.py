"""Adam optimization with cosine-annealed learning rate, plus evaluation
and PMT1 checkpointing. Training is deterministic in (config, seed).
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ParameterError, ShapeError
from .serialize import load_array, save_array
from .tensor import add, scale
from .util import derive_seed, parallel_map


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class CosineSchedule:
    lr_max: float = 1e-3
    lr_min: float = 1e-5
    epochs: int = 30

    def __post_init__(self):
        if self.lr_min > self.lr_max:
            raise ConfigError(f"lr_min {self.lr_min} exceeds lr_max {self.lr_max}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    lr_max: float = 1e-3
    lr_min: float = 1e-5
    seed: int = 0
    folds: int = 5


def init_adam(params, beta1=0.9, beta2=0.999, eps=1e-8):
    return AdamState(
        m={name: np.zeros_like(t.data) for name, t in params.items()},
        v={name: np.zeros_like(t.data) for name, t in params.items()},
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def adam_step(params, state, lr):
    """One bias-corrected Adam update; absent gradients count as zero."""
    if lr <= 0:
        raise ParameterError(f"learning rate must be positive, got {lr}")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for name in sorted(params):
        p = params[name]
        m, v = state.m[name], state.v[name]
        if m.shape != p.data.shape:
            raise ShapeError(f"adam state for {name}: {m.shape} vs param {p.data.shape}")
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.data.dtype)


def cosine_lr(epoch, schedule):
    """Half-cosine decay from lr_max at epoch 0 to lr_min at the last epoch."""
    if not 0 <= epoch <= schedule.epochs:
        raise ParameterError(f"epoch {epoch} outside schedule of {schedule.epochs}")
    return schedule.lr_min + 0.5 * (schedule.lr_max - schedule.lr_min) * (
        1.0 + np.cos(np.pi * epoch / schedule.epochs)
    )


def train_epoch(model, samples, batch_size, state, lr, seed):
    """Shuffled minibatches; one Adam step per batch; returns mean loss."""
    if not samples:
        raise ConfigError("training split is empty")
    params = model.named_parameters()
    rng = np.random.default_rng(derive_seed(seed, 101))
    order = rng.permutation(len(samples))
    total, count = 0.0, 0
    for step, start in enumerate(range(0, len(samples), batch_size)):
        batch = [samples[i] for i in order[start:start + batch_size]]
        model.zero_grads()
        loss = None
        for j, s in enumerate(batch):
            out = model.forward(s.image, training=True, seed=derive_seed(seed, step, j))
            sample_loss = model.loss(out, s.label)
            loss = sample_loss if loss is None else add(loss, sample_loss)
        loss = scale(loss, 1.0 / len(batch))
        loss.backward()
        if lr > 0:
            adam_step(params, state, lr)
        total += float(loss.data) * len(batch)
        count += len(batch)
    return total / count


def evaluate(model, samples):
    """Confusion matrix and mean loss in eval mode; parameters untouched."""
    if not samples:
        raise ConfigError("evaluation split is empty")
    cm = np.zeros((model.classes, model.classes), dtype=np.int64)

    def run(sample):
        out = model.forward(sample.image, training=False, seed=0)
        return float(model.loss(out, sample.label).data), int(np.argmax(out.fused.data))

    results = parallel_map(run, samples)
    total = 0.0
    for sample, (loss, pred) in zip(samples, results):
        cm[sample.label, pred] += 1
        total += loss
    return cm, total / len(samples)


def fit(model, train_samples, val_samples, tcfg, log=None):
    """Full run: cosine schedule, best-by-validation-accuracy retention.

    Returns a history list of (epoch, train_loss, val_accuracy); the model
    ends up holding the best parameters seen.
    """
    params = model.named_parameters()
    state = init_adam(params)
    schedule = CosineSchedule(tcfg.lr_max, tcfg.lr_min, tcfg.epochs)
    best_acc, best_data = -1.0, None
    history = []
    for epoch in range(tcfg.epochs):
        lr = cosine_lr(epoch, schedule)
        loss = train_epoch(model, train_samples, tcfg.batch_size, state,
                           lr, derive_seed(tcfg.seed, epoch))
        cm, _ = evaluate(model, val_samples)
        acc = float(np.trace(cm) / cm.sum())
        history.append((epoch, loss, acc))
        if acc > best_acc:
            best_acc = acc
            best_data = {name: t.data.copy() for name, t in params.items()}
        if log:
            log(f"epoch {epoch:3d}  lr {lr:.2e}  loss {loss:.4f}  val_acc {acc:.4f}")
    if best_data is not None:
        for name, t in params.items():
            t.data[...] = best_data[name]
    return history, state


def _filename(index):
    return f"t_{index:04d}.pmt"


def save_checkpoint(dirpath, params, state=None, meta=None):
    """Parameters (and optimizer moments) as PMT1 files plus a manifest."""
    os.makedirs(dirpath, exist_ok=True)
    manifest = {"params": {}, "meta": meta or {}}
    index = 0
    for name in sorted(params):
        fname = _filename(index)
        save_array(os.path.join(dirpath, fname), params[name].data)
        manifest["params"][name] = fname
        index += 1
    if state is not None:
        manifest["adam"] = {"t": state.t, "beta1": state.beta1, "beta2": state.beta2,
                            "eps": state.eps, "m": {}, "v": {}}
        for kind, table in (("m", state.m), ("v", state.v)):
            for name in sorted(table):
                fname = _filename(index)
                save_array(os.path.join(dirpath, fname), table[name])
                manifest["adam"][kind][name] = fname
                index += 1
    with open(os.path.join(dirpath, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def load_checkpoint(dirpath, params):
    """Restore parameters in place; returns (AdamState or None, meta)."""
    with open(os.path.join(dirpath, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    saved = manifest["params"]
    if set(saved) != set(params):
        missing = set(params) ^ set(saved)
        raise ConfigError(f"checkpoint parameter names do not match model: {sorted(missing)[:4]}")
    for name, t in params.items():
        arr = load_array(os.path.join(dirpath, saved[name]))
        if arr.shape != t.data.shape:
            raise ShapeError(f"checkpoint {name}: shape {arr.shape} vs model {t.data.shape}")
        t.data[...] = arr.astype(t.data.dtype)
    state = None
    if "adam" in manifest:
        a = manifest["adam"]
        state = AdamState(
            m={n: load_array(os.path.join(dirpath, f)) for n, f in a["m"].items()},
            v={n: load_array(os.path.join(dirpath, f)) for n, f in a["v"].items()},
            t=a["t"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"],
        )
    return state, manifest.get("meta", {})
