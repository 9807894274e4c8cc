"""Command-line entry point.

Subcommands: gen, train, eval, cam, gradcheck, ablate. Every command
takes --config (JSON, dotted keys per module) and honors --seed/--out
overrides; errors exit non-zero with a single-line diagnostic.
"""

import argparse
import os
import sys

import numpy as np

from .config import load_config
from .data import kfold_split, save_dataset
from .errors import PmpNetError
from .experiment import get_dataset, run_ablation, run_gradcheck, run_training
from .gradcam import export_heatmap_pgm, grad_cam, upsample_bilinear
from .metrics import summarize
from .model import build_model
from .train import evaluate, load_checkpoint
from .util import derive_seed

GRADCHECK_TOL = 1e-3


def _add_common(parser, config_required=True):
    parser.add_argument("--config", required=config_required, help="experiment config (JSON)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seeds")
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument("--fold", type=int, default=None, help="restrict to one fold")


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.train["seed"] = args.seed
        cfg.data["seed"] = args.seed
    if args.out is not None:
        cfg.out = args.out
    return cfg


def _cmd_gen(args):
    cfg = _load(args)
    samples, plan = get_dataset(cfg)
    if plan is None:
        plan = kfold_split(samples, cfg.train["folds"], cfg.seed)
    save_dataset(cfg.out, samples, plan)
    print(f"wrote {len(samples)} samples to {cfg.out}")
    return 0


def _cmd_train(args):
    cfg = _load(args)
    rows = run_training(cfg, cfg.out, fold=args.fold,
                        log=lambda msg: print(msg, flush=True))
    for row in rows:
        print(" ".join(f"{k}={v:.4f}" for k, v in row.items()))
    return 0


def _cmd_eval(args):
    cfg = _load(args)
    samples, plan = get_dataset(cfg)
    if plan is None:
        plan = kfold_split(samples, cfg.train["folds"], cfg.seed)
    fold = args.fold if args.fold is not None else 0
    ckpt = args.checkpoint or os.path.join(cfg.out, f"fold{fold}")
    model = build_model(cfg, seed=0)
    load_checkpoint(ckpt, model.named_parameters())
    by_id = {s.id: s for s in samples}
    test = [by_id[i] for i in plan.test_ids(fold)]
    cm, loss = evaluate(model, test)
    print(f"fold {fold}: loss {loss:.4f}")
    for key, value in summarize(cm).items():
        print(f"{key} {value:.6f}")
    return 0


def _cmd_cam(args):
    cfg = _load(args)
    samples, _ = get_dataset(cfg)
    by_id = {s.id: s for s in samples}
    if args.index not in by_id:
        raise PmpNetError(f"sample id {args.index} not in dataset")
    sample = by_id[args.index]
    fold = args.fold if args.fold is not None else 0
    ckpt = args.checkpoint or os.path.join(cfg.out, f"fold{fold}")
    model = build_model(cfg, seed=0)
    load_checkpoint(ckpt, model.named_parameters())
    target = args.target
    if target is None:
        out = model.forward(sample.image, training=False, seed=0)
        target = int(np.argmax(out.fused.data))
    hm = grad_cam(model, sample.image, target)
    if args.upsample:
        hm = upsample_bilinear(hm, cfg.backbone["side"])
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, f"cam_{sample.id:05d}_c{target}.pgm")
    export_heatmap_pgm(hm, path)
    print(f"wrote {path}")
    return 0


def _cmd_gradcheck(args):
    seed = args.seed if args.seed is not None else 7
    err = run_gradcheck(seed=seed)
    print(f"max relative error {err:.3e}")
    return 0 if err <= GRADCHECK_TOL else 1


def _cmd_ablate(args):
    cfg = _load(args)
    results = run_ablation(cfg, cfg.out, n_seeds=args.seeds,
                           log=lambda msg: print(msg, flush=True))
    for variant, accs in results.items():
        mean = sum(accs) / len(accs)
        print(f"{variant}: mean accuracy {mean:.4f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="pmpnet")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    _add_common(p)
    p.set_defaults(fn=_cmd_gen)

    p = sub.add_parser("train", help="cross-validated training run")
    _add_common(p)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on its fold")
    _add_common(p)
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("cam", help="export a class-activation heatmap")
    _add_common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--index", type=int, required=True, help="sample id")
    p.add_argument("--target", type=int, default=None, help="class (default: predicted)")
    p.add_argument("--upsample", action="store_true", help="bilinear upsample to image size")
    p.set_defaults(fn=_cmd_cam)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("ablate", help="compare head variants")
    _add_common(p)
    p.add_argument("--seeds", type=int, default=1, help="seeds to average over")
    p.set_defaults(fn=_cmd_ablate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (PmpNetError, OSError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
