from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from v2i_chanpred.errors import ShapeMismatchError
from v2i_chanpred.metrics import HISTOGRAM_BINS
from v2i_chanpred.metrics import cosine_distribution
from v2i_chanpred.metrics import mae
from v2i_chanpred.metrics import rmse
from v2i_chanpred.metrics import row_cosines


def test_rmse_and_mae() -> None:
    assert rmse([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5))
    assert mae([0, 0], [3, 4]) == 3.5


@pytest.mark.parametrize(("y", "y_hat"), [([1, 2], [1]), ([], [])])
def test_bad_lengths(y: list[float], y_hat: list[float]) -> None:
    with pytest.raises(ShapeMismatchError):
        rmse(y, y_hat)
    with pytest.raises(ShapeMismatchError):
        mae(y, y_hat)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30))
def test_rmse_bounds_mae(errors: list[float]) -> None:
    zeros = [0.0] * len(errors)
    assert mae(zeros, errors) <= rmse(zeros, errors) + 1e-9


def test_row_cosines() -> None:
    target = np.array([[1.0, 0.0], [1.0, 1.0]])
    prediction = np.array([[0.0, 2.0], [2.0, 2.0]])
    np.testing.assert_allclose(row_cosines(target, prediction), [0.0, 1.0], atol=1e-8)


@given(st.lists(st.floats(-1.5, 1.5), min_size=1, max_size=200))
def test_histogram_counts_every_value(values: list[float]) -> None:
    summary = cosine_distribution(values)
    assert len(summary.counts) == HISTOGRAM_BINS
    assert len(summary.edges) == HISTOGRAM_BINS + 1
    assert sum(summary.counts) == len(values)
    assert summary.min <= summary.median <= summary.max


def test_cosine_summary() -> None:
    summary = cosine_distribution([1.0, 0.5, 0.0])
    assert summary.mean == pytest.approx(0.5)
    assert summary.median == 0.5
    assert summary.std == pytest.approx(np.sqrt(1 / 6))
    assert summary.counts[-1] == 1
    assert summary.edges[0] == -1.0
    assert summary.to_dict()["counts"] == list(summary.counts)


def test_empty_cosine_distribution() -> None:
    with pytest.raises(ShapeMismatchError):
        cosine_distribution([])
