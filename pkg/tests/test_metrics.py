import json
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evmvuln.errors import DegenerateClass, EmptyMatrix, LengthMismatch
from evmvuln.metrics import (
    ConfusionMatrix, accuracy, auc, balanced_accuracy, confusion, format_table, fnr, fpr, percent, report,
    report_json, tnr, tpr,
)


def pair_auc(scores, truth):
    pos = [s for s, t in zip(scores, truth) if t]
    neg = [s for s, t in zip(scores, truth) if not t]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


scores_and_truth = st.integers(2, 60).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 8).map(lambda v: v / 8), min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n),
)).filter(lambda st_: 0 < sum(st_[1]) < len(st_[1]))


@given(scores_and_truth)
@settings(max_examples=200)
def test_auc_matches_pair_counting(data):
    scores, truth = data
    assert abs(auc(scores, truth) - pair_auc(scores, truth)) < 1e-9


@given(scores_and_truth)
def test_auc_invariant_under_monotone_maps(data):
    scores, truth = data
    s = np.asarray(scores)
    assert auc(np.exp(3 * s) - 7, truth) == pytest.approx(auc(s, truth), abs=1e-12)


def test_auc_degenerate_and_lengths():
    with pytest.raises(DegenerateClass):
        auc([0.1, 0.9], [1, 1])
    with pytest.raises(LengthMismatch):
        auc([0.1], [1, 0])


def test_auc_extremes():
    assert auc([0.9, 0.8, 0.2], [1, 1, 0]) == 1.0
    assert auc([0.1, 0.2, 0.9], [1, 1, 0]) == 0.0
    assert auc([0.5] * 4, [1, 0, 1, 0]) == 0.5


@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=50))
def test_confusion_counts(pairs):
    p, t = zip(*pairs)
    cm = confusion(p, t)
    assert cm.total == len(pairs)
    assert cm.tp == sum(a and b for a, b in pairs)
    assert cm.fn == sum((not a) and b for a, b in pairs)
    if cm.positives:
        assert tpr(cm) + fnr(cm) == pytest.approx(1)
    if cm.negatives:
        assert tnr(cm) + fpr(cm) == pytest.approx(1)


def test_rates_and_errors():
    cm = ConfusionMatrix(tp=8, fp=1, tn=9, fn=2)
    assert accuracy(cm) == 17 / 20
    assert balanced_accuracy(cm) == (0.8 + 0.9) / 2
    with pytest.raises(EmptyMatrix):
        accuracy(ConfusionMatrix(0, 0, 0, 0))
    with pytest.raises(DegenerateClass):
        tpr(ConfusionMatrix(0, 1, 1, 0))
    with pytest.raises(LengthMismatch):
        confusion([1, 0], [1])
    with pytest.raises(ValueError):
        ConfusionMatrix(-1, 0, 0, 0)
    assert cm + cm == ConfusionMatrix(16, 2, 18, 4)


def test_report_skips_undefined_rates():
    rep = report(ConfusionMatrix(0, 1, 3, 0))
    assert rep.tpr is None and rep.balanced_accuracy is None and rep.tnr == 0.75
    assert rep.accuracy == 0.75 and rep.auc is None


@pytest.mark.parametrize("x,expect", [(0.8255, "82.6"), (0.17451, "17.5"), (1.0, "100.0"), (0.00049, "0.0")])
def test_percent_rounds_half_up(x, expect):
    assert percent(x) == Decimal(expect)


def test_table_output():
    cm = ConfusionMatrix(537, 2715, 19189, 193)
    rows = [("shadowing-state", cm, report(cm))]
    text = format_table(rows)
    assert "80.6%" in text and "73.6%" in text and "(TPR+TNR)/2" in text
    plain = format_table(rows, "plain")
    assert "(TP+TN)/total" in plain
    doc = json.loads(report_json(rows))
    assert doc[0]["test_size"] == 22634 and doc[0]["tp"] == 537
