"""Evaluation metrics: rank-based ROC-AUC, micro-F1, regression errors."""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, SingleClass


@dataclass
class EvalResult:
    metric: str
    value: float
    support: int


def roc_auc(scores, labels) -> float:
    """Rank-based concordance with ties counted one half.

    2-D inputs are treated as multi-task: columns with both classes present
    are averaged, single-class columns are skipped.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.ndim == 2:
        vals = []
        for c in range(scores.shape[1]):
            col_valid = ~np.isnan(labels[:, c])
            y = labels[col_valid, c]
            if col_valid.sum() == 0 or len(set(y.tolist())) < 2:
                continue
            vals.append(_auc_binary(scores[col_valid, c], y))
        if not vals:
            raise SingleClass("no label column has both classes")
        return float(np.mean(vals))
    valid = ~np.isnan(labels)
    return _auc_binary(scores[valid], labels[valid])


def _auc_binary(scores, labels) -> float:
    pos = labels > 0.5
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("need at least one positive and one negative")
    ranks = _average_ranks(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _average_ranks(scores):
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0  # 1-based, ties averaged
        i = j + 1
    return ranks


def micro_f1(pred, true) -> float:
    """Micro-averaged F1 with TP/FP/FN pooled over classes; equals accuracy
    for single-label multi-class predictions."""
    pred = np.asarray(pred, dtype=np.int64)
    true = np.asarray(true, dtype=np.int64)
    if pred.size == 0 or pred.shape != true.shape:
        raise EmptyInput("predictions and labels must be nonempty, same length")
    classes = set(pred.tolist()) | set(true.tolist())
    tp = fp = fn = 0
    for c in classes:
        tp += int(np.sum((pred == c) & (true == c)))
        fp += int(np.sum((pred == c) & (true != c)))
        fn += int(np.sum((pred != c) & (true == c)))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def regression_metrics(preds, targets) -> dict:
    preds = np.asarray(preds, dtype=np.float64).reshape(-1)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if preds.size == 0 or preds.shape != targets.shape:
        raise EmptyInput("predictions and targets must be nonempty, same length")
    diff = preds - targets
    mae = float(np.abs(diff).mean())
    mse = float((diff ** 2).mean())
    return {"MAE": mae, "MSE": mse, "RMSE": float(np.sqrt(mse))}
