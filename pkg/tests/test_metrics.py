import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from tswatermark.errors import DataError
from tswatermark.metrics import UNBOUNDED, f1, f1_over_delta_mse, false_positive_rate, mae, mse

# (F1, watermarked MSE, clean MSE, expected ratio)
TABLE_ROWS = {
    "row_a": (0.88600, 0.40924, 0.39986, 94.456),
    "row_b": (0.90891, 0.40434, 0.39479, 95.174),
    "row_c": (0.91793, 0.30424, 0.29457, 94.926),
}


@pytest.mark.parametrize("row", sorted(TABLE_ROWS))
def test_reported_ratios(row):
    f, wm, clean, expected = TABLE_ROWS[row]
    assert abs(f1_over_delta_mse(f, wm, clean) - expected) <= 0.01


def test_ratio_unbounded():
    assert f1_over_delta_mse(0.9, 0.5, 0.5) == UNBOUNDED
    assert f1_over_delta_mse(0.9, 0.4, 0.5) == UNBOUNDED
    assert f1_over_delta_mse(0.9, 0.5 + 1e-13, 0.5) == UNBOUNDED


def test_mse_mae_small():
    assert mse([1, 2, 3], [1, 2, 5]) == pytest.approx(4 / 3)
    assert mae([1, 2, 3], [1, 2, 5]) == pytest.approx(2 / 3)
    assert mse([0.0], [0.0]) == 0.0


def test_mse_accepts_window_lists():
    a = [np.array([1.0, 2.0]), np.array([3.0])]
    b = [np.array([1.0, 0.0]), np.array([0.0])]
    assert mse(a, b) == pytest.approx((4 + 9) / 3)


def test_mse_length_mismatch():
    with pytest.raises(DataError):
        mse([1, 2], [1])
    with pytest.raises(DataError):
        mae([], [])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=50))
def test_mse_mae_match_loops(pairs):
    p, t = [a for a, _ in pairs], [b for _, b in pairs]
    assert mse(p, t) == pytest.approx(oracles.loop_mse(p, t), rel=1e-12, abs=1e-9)
    assert mae(p, t) == pytest.approx(oracles.loop_mae(p, t), rel=1e-12, abs=1e-9)


def test_f1_perfect_and_inverted():
    assert f1([True, False, True], [True, False, True]) == (1.0, 1.0, 1.0)
    assert f1([False, True], [True, False]) == (0.0, 0.0, 0.0)


def test_f1_no_positive_predictions():
    assert f1([False, False], [True, False]) == (0.0, 0.0, 0.0)


def test_f1_all_negative_labels():
    assert f1([False, False], [False, False]) == (0.0, 0.0, 0.0)


def brute_f1(d, y):
    tp = sum(1 for a, b in zip(d, y) if a and b)
    fp = sum(1 for a, b in zip(d, y) if a and not b)
    fn = sum(1 for a, b in zip(d, y) if not a and b)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return (2 * p * r / (p + r) if p + r else 0.0), p, r


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=40))
def test_f1_matches_counting(pairs):
    d, y = [a for a, _ in pairs], [b for _, b in pairs]
    assert f1(d, y) == brute_f1(d, y)
    neg = [a for a, b in pairs if not b]
    assert false_positive_rate(d, y) == (sum(neg) / len(neg) if neg else 0.0)


def test_f1_errors():
    with pytest.raises(DataError):
        f1([], [])
    with pytest.raises(DataError):
        f1([True], [True, False])


def test_f1_hand_computed():
    assert f1([True, True, False, False], [True, False, True, False]) == (0.5, 0.5, 0.5)


def test_constant_offset():
    t = np.linspace(-1, 1, 7)
    assert mse(t + 0.3, t) == pytest.approx(0.09, abs=1e-12)
    assert mae(t - 0.3, t) == pytest.approx(0.3, abs=1e-12)
