"""Evaluation metrics from confusion matrices, computed in float64.

Matrices are indexed [true][predicted]. Degenerate 0/0 ratios (a class
never present and never predicted) are defined as 0.
"""

import numpy as np

from .errors import ParameterError

CSV_HEADER = "fold,accuracy,precision_macro,recall_macro,f1_macro,kappa"


def _as_matrix(cm):
    m = np.asarray(cm, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ParameterError(f"confusion matrix must be square, got {m.shape}")
    if m.sum() <= 0:
        raise ParameterError("confusion matrix is empty")
    return m


def accuracy(cm):
    m = _as_matrix(cm)
    return float(np.trace(m) / m.sum())


def precision_recall_f1(cm):
    """Per-class precision/recall/F1 and their unweighted (macro) means."""
    m = _as_matrix(cm)
    diag = np.diag(m)
    col = m.sum(axis=0)
    row = m.sum(axis=1)
    precision = np.divide(diag, col, out=np.zeros_like(diag), where=col > 0)
    recall = np.divide(diag, row, out=np.zeros_like(diag), where=row > 0)
    denom = precision + recall
    f1 = np.divide(2.0 * precision * recall, denom,
                   out=np.zeros_like(diag), where=denom > 0)
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "precision_macro": float(precision.mean()),
        "recall_macro": float(recall.mean()),
        "f1_macro": float(f1.mean()),
    }


def kappa(cm):
    """Chance-corrected agreement (P_o - P_e) / (1 - P_e)."""
    m = _as_matrix(cm)
    n = m.sum()
    p_o = np.trace(m) / n
    p_e = float((m.sum(axis=1) * m.sum(axis=0)).sum() / (n * n))
    if p_e == 1.0:
        raise ParameterError("kappa undefined: expected agreement equals 1")
    return float((p_o - p_e) / (1.0 - p_e))


def summarize(cm):
    prf = precision_recall_f1(cm)
    return {
        "accuracy": accuracy(cm),
        "precision_macro": prf["precision_macro"],
        "recall_macro": prf["recall_macro"],
        "f1_macro": prf["f1_macro"],
        "kappa": kappa(cm),
    }


def write_metrics_csv(path, fold_rows):
    """One row per fold plus mean and (population) std rows."""
    keys = ("accuracy", "precision_macro", "recall_macro", "f1_macro", "kappa")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for fold, row in enumerate(fold_rows):
            vals = ",".join(f"{row[k]:.6f}" for k in keys)
            fh.write(f"{fold},{vals}\n")
        table = np.array([[row[k] for k in keys] for row in fold_rows], dtype=np.float64)
        fh.write("mean," + ",".join(f"{v:.6f}" for v in table.mean(axis=0)) + "\n")
        fh.write("std," + ",".join(f"{v:.6f}" for v in table.std(axis=0)) + "\n")


def write_confusion_csv(path, cm):
    cm = np.asarray(cm)
    with open(path, "w", encoding="utf-8") as fh:
        for row in cm:
            fh.write(",".join(str(int(v)) for v in row) + "\n")
