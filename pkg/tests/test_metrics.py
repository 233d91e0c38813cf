from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dlst.metrics import (
    MetricConfig,
    average_precision,
    default_top_r,
    evaluate,
    macro_f1,
    micro_f1,
    per_class_report,
    top_r_binarize,
)

import oracles

TRUTH = np.array([[1, 1, 0], [0, 0, 1]])
PRED = np.array([[1, 0, 1], [0, 0, 1]])


def test_ap_hand_case():
    # relevant {A, C}; ranking B, A, C, D
    scores = np.array([[0.8, 0.9, 0.5, 0.1]])
    truth = np.array([[1, 0, 1, 0]])
    assert average_precision(scores, truth) == 7 / 12


def test_ap_perfect_and_skip():
    truth = np.array([[1, 0, 1], [0, 0, 0]])
    ap, skipped = average_precision(np.array([[3, 1, 2], [1, 2, 3]]), truth, return_skipped=True)
    assert ap == 1.0 and skipped == 1


def test_ap_ties_by_label_index():
    assert average_precision(np.array([[0.5, 0.5]]), np.array([[0, 1]])) == 0.5
    assert average_precision(np.array([[0.5, 0.5]]), np.array([[1, 0]])) == 1.0


def test_f1_hand_cases():
    assert micro_f1(PRED, TRUTH) == 2 / 3
    assert macro_f1(PRED, TRUTH) == 5 / 9
    prec, rec, _ = per_class_report(PRED, TRUTH)
    assert prec[2] == 0.5 and rec[2] == 1.0
    assert micro_f1(TRUTH, TRUTH) == 1.0
    assert micro_f1(np.zeros_like(TRUTH), TRUTH) == 0.0


def test_macro_counts_absent_label_as_zero():
    truth = np.array([[1, 0], [1, 0]])
    assert macro_f1(truth, truth) == 0.5


def test_empty_column_conventions():
    truth = np.array([[1, 0], [1, 0]])
    prec, rec, _ = per_class_report(truth, truth)
    assert prec.tolist() == [1.0, 0.0] and rec.tolist() == [1.0, 0.0]


def test_top_r():
    assert top_r_binarize(np.array([[0.9, 0.1, 0.5]]), 2).tolist() == [[1, 0, 1]]
    assert top_r_binarize(np.array([[0.5, 0.5, 0.1]]), 1).tolist() == [[1, 0, 0]]
    assert top_r_binarize(np.array([[0.2, 0.1, 0.3]]), 3).tolist() == [[1, 1, 1]]
    with pytest.raises(ValueError):
        top_r_binarize(np.zeros((1, 3)), 4)
    with pytest.raises(ValueError):
        top_r_binarize(np.zeros((1, 3)), 0)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        micro_f1(np.zeros((2, 3)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        average_precision(np.zeros((2, 3)), np.zeros((3, 3)))


def test_default_top_r():
    assert default_top_r(np.array([[1, 1, 0], [1, 1, 1]])) == 3  # card 2.5 rounds half up
    assert default_top_r(np.array([[1, 0], [0, 0]])) == 1
    with pytest.raises(ValueError):
        MetricConfig(top_r=0)


def _random_case(seed):
    rng = np.random.default_rng(seed)
    m, K = int(rng.integers(1, 8)), int(rng.integers(2, 7))
    # coarse scores so ties are common
    scores = rng.integers(0, 4, size=(m, K)).astype(float)
    truth = rng.integers(0, 2, size=(m, K))
    truth[0, int(rng.integers(K))] = 1
    pred = rng.integers(0, 2, size=(m, K))
    return scores, truth, pred


@pytest.mark.parametrize("seed", range(100))
def test_oracle_equivalence(seed):
    scores, truth, pred = _random_case(seed)
    assert average_precision(scores, truth) == float(oracles.average_precision(scores.tolist(), truth.tolist()))
    assert micro_f1(pred, truth) == float(oracles.micro_f1(pred.tolist(), truth.tolist()))
    assert macro_f1(pred, truth) == pytest.approx(float(oracles.macro_f1(pred.tolist(), truth.tolist())), abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_invariances(seed):
    scores, truth, pred = _random_case(seed)
    perm = np.random.default_rng(seed).permutation(scores.shape[0])
    assert average_precision(scores[perm], truth[perm]) == pytest.approx(average_precision(scores, truth), abs=1e-15)
    assert micro_f1(pred[perm], truth[perm]) == micro_f1(pred, truth)
    assert average_precision(np.exp(3 * scores) - 7, truth) == average_precision(scores, truth)
    r = int(np.random.default_rng(seed).integers(1, scores.shape[1] + 1))
    assert (top_r_binarize(scores, r).sum(axis=1) == r).all()
    assert 0 <= micro_f1(pred, truth) <= 1


def test_evaluate_report_in_range():
    rng = np.random.default_rng(0)
    scores, truth = rng.random((20, 5)), rng.integers(0, 2, (20, 5))
    rep = evaluate(scores, truth, 2)
    for v in (rep.average_precision, rep.micro_f1, rep.macro_f1, rep.map, *rep.per_class_precision, *rep.per_class_recall):
        assert 0 <= v <= 1
    assert set(rep.row()) == {"ap", "micro_f1", "macro_f1", "map"}
    assert rep.to_dict()["average_precision"] == rep.average_precision


def test_oracle_is_exact_rational():
    assert oracles.average_precision([[0.8, 0.9, 0.5, 0.1]], [[1, 0, 1, 0]]) == Fraction(7, 12)
    assert oracles.macro_f1(PRED.tolist(), TRUTH.tolist()) == Fraction(5, 9)
