"""Evaluation metrics and report files.

Report directory contents::

    report.json      {top1, per_class, support, gzsl, classes, auc}
    confusion.csv    truth rows x predicted columns, header row of class ids
    roc_<id>.csv     threshold, fpr, tpr  (descending threshold)
    embeddings.csv   pc1, pc2, label      (optional 2-D export)

Floats are written with 17 significant digits so they re-parse exactly.
"""

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import EvaluationError

log = logging.getLogger(__name__)


def _class_list(classes):
    classes = np.asarray(classes)
    if classes.ndim != 1 or np.unique(classes).size != classes.size:
        raise EvaluationError("class set must be a 1-D collection of distinct ids")
    return classes


def _check_labels(pred, truth, classes):
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise EvaluationError(
            f"predictions {pred.shape} and truth {truth.shape} must be equal-length vectors")
    known = set(classes.tolist())
    for name, arr in (("truth", truth), ("prediction", pred)):
        bad = [v for v in arr.tolist() if v not in known]
        if bad:
            raise EvaluationError(f"{name} label {bad[0]} is not in the class set")
    return pred, truth


def per_class_top1(pred, truth, classes):
    """Per-class accuracy and its unweighted mean over ``classes``."""
    classes = _class_list(classes)
    pred, truth = _check_labels(pred, truth, classes)
    accs = {}
    for c in classes.tolist():
        mask = truth == c
        total = int(mask.sum())
        if total == 0:
            raise EvaluationError(f"class {c} has no test samples")
        accs[c] = int(np.sum(pred[mask] == c)) / total
    return accs, sum(accs.values()) / len(accs)


def harmonic_mean(acc_s, acc_u):
    """``2 s u / (s + u)``, defined as 0 when both accuracies are 0."""
    for name, v in (("acc_seen", acc_s), ("acc_unseen", acc_u)):
        if not 0.0 <= v <= 1.0:
            raise EvaluationError(f"{name} must lie in [0, 1], got {v}")
    acc_s, acc_u = float(acc_s), float(acc_u)
    # the plain formula can be off by one ulp when both sides are equal
    if acc_s == acc_u:
        return acc_s
    return 2.0 * acc_s * acc_u / (acc_s + acc_u)


def confusion_matrix(pred, truth, classes):
    """Counts with truth along rows and prediction along columns, both in
    the order of ``classes``."""
    classes = _class_list(classes)
    pred, truth = _check_labels(pred, truth, classes)
    pos = {c: i for i, c in enumerate(classes.tolist())}
    out = np.zeros((classes.size, classes.size), dtype=np.int64)
    for t, p in zip(truth.tolist(), pred.tolist()):
        out[pos[t], pos[p]] += 1
    return out


@dataclass
class RocResult:
    curves: dict = field(default_factory=dict)  # class -> (thresholds, fpr, tpr)
    auc: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)  # (class, reason)


def roc_curve(score, positive):
    """One-vs-rest ROC points for a single score column.

    Tied scores form a single step, which makes the trapezoidal area equal
    to the Mann-Whitney statistic with ties counted as one half.
    Returns ``(thresholds, fpr, tpr)`` starting at ``(+inf, 0, 0)``.
    """
    score = np.asarray(score, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    order = np.argsort(-score, kind="stable")
    s, p = score[order], positive[order]
    tp = np.cumsum(p)
    fp = np.cumsum(~p)
    last = np.r_[np.flatnonzero(s[1:] != s[:-1]), s.size - 1]
    n_pos, n_neg = tp[-1], fp[-1]
    thresholds = np.r_[np.inf, s[last]]
    fpr = np.r_[0.0, fp[last] / n_neg]
    tpr = np.r_[0.0, tp[last] / n_pos]
    return thresholds, fpr, tpr


def trapezoid_area(x, y):
    x, y = np.asarray(x), np.asarray(y)
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))


def roc_auc(scores, truth, classes):
    """Per-class ROC curves and trapezoidal AUC from an ``n x C`` score
    matrix whose columns follow ``classes``.

    Classes without positives or without negatives in ``truth`` are
    skipped and listed in ``skipped``.
    """
    classes = _class_list(classes)
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth)
    if scores.ndim != 2 or scores.shape != (truth.size, classes.size):
        raise EvaluationError(
            f"score matrix shape {scores.shape} != ({truth.size}, {classes.size})")
    out = RocResult()
    for j, c in enumerate(classes.tolist()):
        positive = truth == c
        if positive.all() or not positive.any():
            reason = "no positives" if not positive.any() else "no negatives"
            log.warning("ROC for class %s skipped: %s", c, reason)
            out.skipped.append((c, reason))
            continue
        thr, fpr, tpr = roc_curve(scores[:, j], positive)
        out.curves[c] = (thr, fpr, tpr)
        out.auc[c] = trapezoid_area(fpr, tpr)
    return out


def pca_2d(x):
    """Projection on the first two principal components.

    Component signs are fixed so the largest-magnitude loading is
    positive, which keeps the export deterministic.
    """
    x = np.asarray(x, dtype=np.float64)
    xc = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(xc, full_matrices=False)
    comps = vt[:2]
    flip = np.sign(comps[np.arange(comps.shape[0]), np.argmax(np.abs(comps), axis=1)])
    comps = comps * np.where(flip == 0, 1.0, flip)[:, None]
    proj = xc @ comps.T
    if proj.shape[1] < 2:
        proj = np.hstack([proj, np.zeros((proj.shape[0], 2 - proj.shape[1]))])
    return proj


@dataclass
class EvalReport:
    classes: list
    per_class_acc: dict
    top1: float
    confusion: np.ndarray
    gzsl: dict = None  # {acc_seen, acc_unseen, H}
    roc: RocResult = None
    embeddings: tuple = None  # (n x 2 coordinates, labels)

    @property
    def support(self):
        return {c: int(s) for c, s in zip(self.classes, self.confusion.sum(axis=1))}

    def to_json(self):
        return {
            "top1": self.top1,
            "per_class": {str(c): a for c, a in self.per_class_acc.items()},
            "support": {str(c): s for c, s in self.support.items()},
            "gzsl": self.gzsl,
            "classes": [int(c) for c in self.classes],
            "auc": None if self.roc is None else {str(c): a for c, a in self.roc.auc.items()},
        }


def zsl_report(pred, truth, classes, scores=None, embeddings=None):
    accs, top1 = per_class_top1(pred, truth, classes)
    roc = roc_auc(scores, truth, classes) if scores is not None else None
    return EvalReport([int(c) for c in classes], accs, top1,
                      confusion_matrix(pred, truth, classes), None, roc, embeddings)


def gzsl_report(seen_pred, seen_truth, unseen_pred, unseen_truth, seen_classes,
                unseen_classes, scores=None, embeddings=None):
    """Report over the union label space with the seen/unseen harmonic mean.

    ``scores`` (optional) covers the seen test rows followed by the
    unseen ones, with columns in sorted union-class order.
    """
    seen_classes = np.asarray(seen_classes)
    unseen_classes = np.asarray(unseen_classes)
    classes = np.sort(np.concatenate([seen_classes, unseen_classes]))
    pred = np.concatenate([seen_pred, unseen_pred])
    truth = np.concatenate([seen_truth, unseen_truth])
    accs, top1 = per_class_top1(pred, truth, classes)
    acc_s = sum(accs[c] for c in seen_classes.tolist()) / seen_classes.size
    acc_u = sum(accs[c] for c in unseen_classes.tolist()) / unseen_classes.size
    gz = {"acc_seen": acc_s, "acc_unseen": acc_u, "H": harmonic_mean(acc_s, acc_u)}
    roc = roc_auc(scores, truth, classes) if scores is not None else None
    return EvalReport([int(c) for c in classes], accs, top1,
                      confusion_matrix(pred, truth, classes), gz, roc, embeddings)


# -- serialization ---------------------------------------------------------

def format_float(v):
    v = float(v)
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    s = format(v, ".17g")
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def dumps(obj, indent=2, _level=0):
    """JSON text with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def emit_report(report, dirpath):
    """Write the report files; returns the list of paths written."""
    os.makedirs(dirpath, exist_ok=True)
    written = []

    path = os.path.join(dirpath, "report.json")
    with open(path, "w") as fh:
        fh.write(dumps(report.to_json()) + "\n")
    written.append(path)

    path = os.path.join(dirpath, "confusion.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["truth\\pred"] + [str(c) for c in report.classes])
        for c, row in zip(report.classes, report.confusion):
            w.writerow([str(c)] + [str(int(v)) for v in row])
    written.append(path)

    if report.roc is not None:
        for c, (thr, fpr, tpr) in report.roc.curves.items():
            path = os.path.join(dirpath, f"roc_{c}.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["threshold", "fpr", "tpr"])
                for row in zip(thr, fpr, tpr):
                    w.writerow([format_float(v) for v in row])
            written.append(path)

    if report.embeddings is not None:
        coords, labels = report.embeddings
        path = os.path.join(dirpath, "embeddings.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["pc1", "pc2", "label"])
            for (a, b), lab in zip(coords, labels):
                w.writerow([format_float(a), format_float(b), str(int(lab))])
        written.append(path)
    return written


def load_report(dirpath):
    with open(os.path.join(dirpath, "report.json")) as fh:
        return json.load(fh)


def read_confusion(dirpath):
    with open(os.path.join(dirpath, "confusion.csv"), newline="") as fh:
        rows = list(csv.reader(fh))
    classes = [int(c) for c in rows[0][1:]]
    counts = np.array([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.int64)
    return classes, counts
