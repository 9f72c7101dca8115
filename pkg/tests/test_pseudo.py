import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idmne.pseudo import (
    AUDIT_COLUMNS,
    assign_pseudo_labels,
    expand_labeled,
    pseudo_label_accuracy,
    select_confident,
    write_audit_rows,
)


def test_boundary_is_inclusive():
    probs = np.array([[0.9, 0.1], [0.89, 0.11], [0.05, 0.95]])
    ps = select_confident(probs, 0.9)
    assert ps.index.tolist() == [0, 2] and ps.labels.tolist() == [0, 1]
    ps = select_confident(np.array([[0.5, 0.5]]), 0.5)
    assert ps.labels.tolist() == [0]  # tie -> lowest index


def test_tau_one_selects_only_certain_rows():
    probs = np.array([[1.0, 0.0], [1 - 1e-16, 1e-16], [0.0, 1.0]])
    assert select_confident(probs, 1.0).index.tolist() == [0, 2]


@pytest.mark.parametrize("tau", [0.0, -0.1, 1.01])
def test_tau_out_of_range(tau):
    with pytest.raises(ValueError):
        select_confident(np.array([[1.0, 0.0]]), tau)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.34, 1.0), st.floats(0.34, 1.0))
def test_monotone_in_tau(seed, t1, t2):
    lo, hi = sorted((t1, t2))
    probs = np.random.default_rng(seed).dirichlet(np.full(3, 0.3), 50)
    a, b = select_confident(probs, lo), select_confident(probs, hi)
    assert set(b.index) <= set(a.index)


def test_assign_and_accuracy(small_params):
    x = np.random.default_rng(0).standard_normal((20, 2))
    ps = assign_pseudo_labels(x, small_params, 0.5, epoch=3)
    assert ps.epoch == 3
    count, correct, acc = pseudo_label_accuracy(ps, ps_truth := np.zeros(20, dtype=int))
    assert count == len(ps) and correct == int(np.sum(ps.labels == 0))
    assert acc == (correct / count if count else None)


def test_empty_set_accuracy_is_none():
    ps = select_confident(np.array([[0.5, 0.5]]), 0.9)
    assert pseudo_label_accuracy(ps, [0]) == (0, 0, None)


def test_expand_labeled():
    ps = select_confident(np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]]), 0.8)
    x, y = expand_labeled(np.ones((1, 2)), [1], np.arange(6.0).reshape(3, 2), ps)
    np.testing.assert_array_equal(x, [[1, 1], [0, 1], [2, 3]])
    assert y.tolist() == [1, 0, 1]


def test_audit_rows():
    ps = select_confident(np.array([[0.9, 0.1], [0.2, 0.8]]), 0.8, epoch=2)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AUDIT_COLUMNS)
    write_audit_rows(w, ps, [10, 11], [0, 0])
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    assert rows == [AUDIT_COLUMNS, ["2", "10", "0", "0.9", "1"], ["2", "11", "1", "0.8", "0"]]
