"""Confusion-matrix rates, AUC, and result tables."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Sequence

import numpy as np

from .errors import DegenerateClass, EmptyMatrix, LengthMismatch


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        return self.tn + self.fp

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)


def confusion(predictions: Sequence[int], truth: Sequence[int]) -> ConfusionMatrix:
    p = np.asarray(predictions).astype(bool)
    t = np.asarray(truth).astype(bool)
    if p.shape != t.shape:
        raise LengthMismatch(f"{p.size} predictions for {t.size} labels")
    return ConfusionMatrix(int((p & t).sum()), int((p & ~t).sum()), int((~p & ~t).sum()), int((~p & t).sum()))


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise EmptyMatrix("accuracy of an empty confusion matrix")
    return (cm.tp + cm.tn) / cm.total


def _need(denominator: int, what: str) -> None:
    if denominator == 0:
        raise DegenerateClass(f"no {what} in the evaluated set")


def tpr(cm: ConfusionMatrix) -> float:
    _need(cm.positives, "positives")
    return cm.tp / cm.positives


def fnr(cm: ConfusionMatrix) -> float:
    _need(cm.positives, "positives")
    return cm.fn / cm.positives


def tnr(cm: ConfusionMatrix) -> float:
    _need(cm.negatives, "negatives")
    return cm.tn / cm.negatives


def fpr(cm: ConfusionMatrix) -> float:
    _need(cm.negatives, "negatives")
    return cm.fp / cm.negatives


def balanced_accuracy(cm: ConfusionMatrix) -> float:
    return (tpr(cm) + tnr(cm)) / 2


def auc(scores: Sequence[float], truth: Sequence[int]) -> float:
    """Area under the ROC curve by a trapezoidal sweep over distinct thresholds.

    Tied scores form one step of the sweep, which gives them half credit.
    """
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(truth).astype(bool)
    if s.shape != t.shape:
        raise LengthMismatch(f"{s.size} scores for {t.size} labels")
    P, N = int(t.sum()), int((~t).sum())
    if P == 0 or N == 0:
        raise DegenerateClass("AUC needs both classes")
    order = np.argsort(-s, kind="stable")
    s, t = s[order], t[order]
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]  # final index of each tie group
    tp = np.cumsum(t)[last]
    fp = np.cumsum(~t)[last]
    tp_prev = np.r_[0, tp[:-1]]
    fp_prev = np.r_[0, fp[:-1]]
    # twice the area in integer units: sum of dFP * (TP_prev + TP)
    twice = int(((fp - fp_prev) * (tp_prev + tp)).sum())
    return twice / (2 * P * N)


def percent(x: float, places: int = 1) -> Decimal:
    """Percentage rounded half-up, as the result tables print it."""
    q = Decimal(1).scaleb(-places)
    return (Decimal(repr(x)) * 100).quantize(q, rounding=ROUND_HALF_UP)


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    balanced_accuracy: float | None
    tpr: float | None
    tnr: float | None
    fpr: float | None
    fnr: float | None
    auc: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _maybe(f, cm):
    try:
        return f(cm)
    except DegenerateClass:
        return None


def report(cm: ConfusionMatrix, scores: Sequence[float] | None = None,
           truth: Sequence[int] | None = None) -> MetricReport:
    """Every metric that is defined for ``cm``; AUC when scores and labels are given."""
    area = None
    if scores is not None and truth is not None:
        area = _maybe(lambda _: auc(scores, truth), cm)
    return MetricReport(
        accuracy(cm), _maybe(balanced_accuracy, cm), _maybe(tpr, cm), _maybe(tnr, cm),
        _maybe(fpr, cm), _maybe(fnr, cm), area,
    )


COLUMNS = ("Test size", "TP", "FP", "TN", "FN", "Accuracy", "TPR", "TNR", "FPR", "FNR")


def table_row(name: str, cm: ConfusionMatrix, rep: MetricReport, accuracy_kind: str = "balanced") -> list[str]:
    acc = rep.balanced_accuracy if accuracy_kind == "balanced" else rep.accuracy
    rates = [acc, rep.tpr, rep.tnr, rep.fpr, rep.fnr] + ([rep.auc] if rep.auc is not None else [])
    return [name, str(cm.total), str(cm.tp), str(cm.fp), str(cm.tn), str(cm.fn)] + [
        "n/a" if r is None else f"{percent(r)}%" for r in rates
    ]


def format_table(rows: Sequence[tuple[str, ConfusionMatrix, MetricReport]], accuracy_kind: str = "balanced") -> str:
    """Aligned text table; the Accuracy column is balanced or plain as requested."""
    header = ["Vulnerability", *COLUMNS] + (["AUC"] if any(r.auc is not None for _, _, r in rows) else [])
    body = [table_row(*row, accuracy_kind=accuracy_kind) for row in rows]
    body = [b + [""] * (len(header) - len(b)) for b in body]
    widths = [max(len(line[i]) for line in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(line, widths)))
             for line in [header, *body]]
    lines.append(f"(Accuracy column: {'(TPR+TNR)/2' if accuracy_kind == 'balanced' else '(TP+TN)/total'})")
    return "\n".join(lines)


def report_json(rows: Sequence[tuple[str, ConfusionMatrix, MetricReport]]) -> str:
    return json.dumps(
        [{"vulnerability": n, **asdict(cm), "test_size": cm.total, **r.to_dict()} for n, cm, r in rows],
        indent=2,
    )
