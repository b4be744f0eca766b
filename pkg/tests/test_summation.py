import math

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from omlab.summation import compensated_sum, neumaier, row_sums

finite = st.floats(min_value=-1e12, max_value=1e12, allow_nan=False)


def test_cancellation_survives():
    x = np.array([1e16, 1.0, -1e16, 1.0])
    assert compensated_sum(x) == 2.0
    assert float(np.sum(x)) != 2.0


def test_empty_and_shape():
    assert compensated_sum([]) == 0.0
    assert row_sums(np.zeros((3, 0))).shape == (3,)
    out = row_sums(np.ones((2, 3, 4)))
    assert out.shape == (2, 3) and np.all(out == 4.0)


@given(st.lists(finite, min_size=1, max_size=200))
def test_close_to_fsum(xs):
    exact = math.fsum(xs)
    scale = sum(abs(x) for x in xs)
    assert abs(compensated_sum(xs) - exact) <= 4 * np.finfo(float).eps * max(scale, 1e-300)


@given(st.lists(st.lists(finite, min_size=5, max_size=5), min_size=1, max_size=20))
def test_row_independent_of_batch(rows):
    a = np.array(rows)
    batch = row_sums(a)
    for i, row in enumerate(a):
        assert batch[i] == neumaier(row)
