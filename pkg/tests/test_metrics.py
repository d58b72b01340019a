from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import average_precision_score, roc_auc_score

from mmode_ef.train_eval.metrics import (
    auprc,
    auroc,
    evaluate_predictions,
    mae,
    r2,
    rmse,
)


def pairwise_auroc(labels, scores):
    """All-pairs P(score_pos > score_neg) + 1/2 P(tie), in exact rationals."""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum(Fraction(1) if p > q else Fraction(1, 2) if p == q else Fraction(0) for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


# small integer scores force many ties
instances = st.integers(2, 50).flatmap(lambda n: st.tuples(
    st.lists(st.booleans(), min_size=n, max_size=n).filter(lambda y: 0 < sum(y) < len(y)),
    st.lists(st.integers(0, 6).map(lambda k: k / 4), min_size=n, max_size=n)))


@given(instances)
def test_auroc_equals_pairwise_oracle_exactly(inst):
    labels, scores = inst
    assert auroc(labels, scores) == float(pairwise_auroc(labels, scores))


@given(instances)
def test_auroc_and_auprc_match_sklearn(inst):
    labels, scores = inst
    assert np.isclose(auroc(labels, scores), roc_auc_score(labels, scores), rtol=1e-12)
    assert np.isclose(auprc(labels, scores), average_precision_score(labels, scores), rtol=1e-12)


def test_documented_auroc_example():
    # true EF 0.6 (negative), 0.4 and 0.3 (positive); predicted EF 0.5, 0.5, 0.2
    report = evaluate_predictions([0.6, 0.4, 0.3], [0.5, 0.5, 0.2])
    assert report.auroc == 0.75
    assert auroc([False, True, True], [0.5, 0.5, 0.8]) == 0.75


def test_single_class_is_undefined():
    report = evaluate_predictions([0.6, 0.7, 0.8], [0.6, 0.6, 0.6])
    assert report.auroc is None and report.auprc is None
    assert report.mae > 0


def test_perfect_and_mean_predictors():
    true = np.array([0.3, 0.45, 0.55, 0.7])
    perfect = evaluate_predictions(true, true)
    assert (perfect.mae, perfect.rmse, perfect.r2, perfect.auroc) == (0.0, 0.0, 1.0, 1.0)
    assert r2(true, np.full(4, true.mean())) == 0.0
    assert r2([0.5, 0.5], [0.4, 0.6]) is None


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(-1, 2)), min_size=1, max_size=40))
def test_rmse_at_least_mae(pairs):
    t, p = zip(*pairs)
    assert rmse(t, p) >= mae(t, p) - 1e-15 >= -1e-15


@given(st.lists(st.floats(0, 1, allow_subnormal=False), min_size=2, max_size=40, unique=True))
def test_strictly_monotone_predictions_give_unit_auroc(true):
    true = np.array(true)
    labels = true < 0.5
    if labels.all() or not labels.any():
        return
    assert evaluate_predictions(true, 2 * true + 0.1).auroc == 1.0


def test_predictions_csv():
    report = evaluate_predictions([0.4, 0.6], [0.45, 0.5], ["a", "b"])
    lines = report.predictions_csv().splitlines()
    assert lines[0] == "patient_id,true_ef,pred_ef,cardiomyopathy"
    assert lines[1] == "a,0.4,0.45,1"
    assert set(report.metrics()) == {"auroc", "auprc", "mae", "rmse", "r2", "n_test", "threshold"}
