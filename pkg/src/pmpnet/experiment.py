"""Run orchestration shared by the CLI and the acceptance suite."""

import os

import numpy as np

from .backbone import FeatureMap
from .config import ExperimentConfig
from .data import generate_synthetic, kfold_split, load_dataset
from .errors import ConfigError
from .head import BranchConfig, HeadParams, head_forward, init_head, joint_loss
from .metrics import summarize, write_confusion_csv, write_metrics_csv
from .model import build_model
from .tensor import Tensor, backward
from .train import evaluate, fit, save_checkpoint
from .util import derive_seed

ABLATION_VARIANTS = ("backbone", "mlp", "mono", "dual")


def get_dataset(cfg):
    """Load the configured dataset, or synthesize it deterministically."""
    if cfg.data["path"]:
        samples, plan = load_dataset(cfg.data["path"])
        labels = {s.label for s in samples}
        if max(labels) >= cfg.classes:
            raise ConfigError(
                f"dataset at {cfg.data['path']} has labels beyond {cfg.classes} classes"
            )
        return samples, plan
    spec = cfg.synthetic_spec()
    samples = generate_synthetic(spec, [cfg.data["per_class"]] * cfg.classes)
    return samples, None


def run_training(cfg, out_dir, fold=None, variant="dual", log=None):
    """Cross-validated training; writes checkpoints, confusion CSVs and
    metrics.csv (per-fold rows plus mean and std)."""
    os.makedirs(out_dir, exist_ok=True)
    tcfg = cfg.train_config()
    samples, plan = get_dataset(cfg)
    if plan is None:
        plan = kfold_split(samples, tcfg.folds, cfg.seed)
    elif plan.folds != tcfg.folds:
        raise ConfigError(
            f"dataset folds {plan.folds} do not match train.folds {tcfg.folds}"
        )
    by_id = {s.id: s for s in samples}
    folds = [fold] if fold is not None else list(range(plan.folds))
    if fold is not None and not 0 <= fold < plan.folds:
        raise ConfigError(f"fold {fold} out of range for {plan.folds} folds")
    rows = []
    for f in folds:
        train_samples = [by_id[i] for i in plan.train_ids(f)]
        test_samples = [by_id[i] for i in plan.test_ids(f)]
        model = build_model(cfg, variant=variant, seed=derive_seed(cfg.seed, 7, f))
        fit(model, train_samples, test_samples, tcfg,
            log=(lambda msg, f=f: log(f"fold {f}: {msg}")) if log else None)
        cm, _ = evaluate(model, test_samples)
        write_confusion_csv(os.path.join(out_dir, f"confusion_fold{f}.csv"), cm)
        save_checkpoint(os.path.join(out_dir, f"fold{f}"),
                        model.named_parameters(),
                        meta={"fold": f, "variant": variant, "seed": cfg.seed})
        rows.append(summarize(cm))
    if fold is None:
        write_metrics_csv(os.path.join(out_dir, "metrics.csv"), rows)
    return rows


def holdout_split(samples, folds, seed):
    """Fold 0 as the test set, the rest as training."""
    plan = kfold_split(samples, folds, seed)
    by_id = {s.id: s for s in samples}
    train = [by_id[i] for i in plan.train_ids(0)]
    test = [by_id[i] for i in plan.test_ids(0)]
    return train, test


def train_variant(cfg, variant, seed, train_samples, test_samples, log=None):
    """One variant trained on a fixed split; returns (accuracy, model)."""
    tcfg = cfg.train_config()
    tcfg = type(tcfg)(epochs=tcfg.epochs, batch_size=tcfg.batch_size,
                      lr_max=tcfg.lr_max, lr_min=tcfg.lr_min,
                      seed=derive_seed(seed, 5), folds=tcfg.folds)
    model = build_model(cfg, variant=variant, seed=derive_seed(seed, 7))
    history, _ = fit(model, train_samples, test_samples, tcfg, log=log)
    best_acc = max(acc for _, _, acc in history)
    return best_acc, model


def run_ablation(cfg, out_dir, n_seeds=1, variants=ABLATION_VARIANTS, log=None):
    """Head-variant comparison on one held-out split, averaged over seeds."""
    os.makedirs(out_dir, exist_ok=True)
    samples, plan = get_dataset(cfg)
    if plan is not None:
        by_id = {s.id: s for s in samples}
        train_samples = [by_id[i] for i in plan.train_ids(0)]
        test_samples = [by_id[i] for i in plan.test_ids(0)]
    else:
        train_samples, test_samples = holdout_split(samples, cfg.train_config().folds, cfg.seed)
    results = {}
    for variant in variants:
        accs = []
        for s in range(n_seeds):
            acc, _ = train_variant(cfg, variant, derive_seed(cfg.seed, 11, s),
                                   train_samples, test_samples)
            accs.append(acc)
            if log:
                log(f"{variant} seed {s}: accuracy {acc:.4f}")
        results[variant] = accs
    path = os.path.join(out_dir, "ablation.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("variant," + ",".join(f"seed{j}" for j in range(n_seeds)) + ",mean\n")
        for variant, accs in results.items():
            mean = sum(accs) / len(accs)
            fh.write(variant + "," + ",".join(f"{a:.6f}" for a in accs) + f",{mean:.6f}\n")
    return results


def _head_param_tensors(head):
    out = {"primary.w": head.primary_w, "primary.b": head.primary_b}
    for name in ("small", "large"):
        bp = getattr(head, name)
        out[f"{name}.proj.w"] = bp.proj_w
        out[f"{name}.proj.b"] = bp.proj_b
        for i, m in enumerate(bp.modules):
            for key, t in m.tensors().items():
                out[f"{name}.mod{i}.{key}"] = t
        out[f"{name}.fc.w"] = bp.fc_w
        out[f"{name}.fc.b"] = bp.fc_b
    return out


def run_gradcheck(seed=7, h=1e-5, side=6, channels=32, classes=4,
                  small=(1, 4, 2), large=(2, 2, 2)):
    """Analytic vs central-finite-difference gradients through the head.

    A random feature map feeds the full dual-branch head; the joint loss
    is differentiated with respect to every parameter. The oracle runs in
    float64 so the 1e-3 tolerance measures the backward rules, not probe
    noise. Returns the max guarded relative error.
    """
    rng = np.random.default_rng(derive_seed(seed, 1))
    fm = FeatureMap(Tensor(rng.standard_normal((side, side, channels)), dtype=np.float64))
    head = init_head(BranchConfig(*small), BranchConfig(*large), channels, classes,
                     rng, dtype=np.float64)
    target = int(rng.integers(0, classes))
    params = _head_param_tensors(head)

    def loss_value():
        out = head_forward(fm, head, training=False, seed=0)
        return joint_loss(target, out.y1, out.y2, out.y3)

    root = loss_value()
    backward(root)
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for name, t in params.items()}

    worst = 0.0
    for name, t in params.items():
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(loss_value().data)
            flat[i] = orig - h
            down = float(loss_value().data)
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            a = analytic[name].reshape(-1)[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-4)
            worst = max(worst, rel)
    return worst
