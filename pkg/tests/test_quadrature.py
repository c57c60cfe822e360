from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compound_freq.errors import ConfigurationError
from compound_freq.quadrature import UNIT, add_piece, piecewise_units, piecewise_weights, simpson_units


def test_simpson_units_pattern():
    assert simpson_units(4).tolist() == [8, 32, 16, 32, 8]
    with pytest.raises(ConfigurationError):
        simpson_units(3)


@pytest.mark.parametrize("length", [1, 2, 3, 4, 5, 6, 7, 9])
@pytest.mark.parametrize("a", [0, 1, 2, 3])
def test_piece_integrates_polynomials(a, length):
    # exact up to degree 1 (trapezoid), 3 (Simpson / 3/8 pieces)
    h = 0.1
    n = a + length + 2
    w = np.zeros(n + 1, dtype=np.int64)
    add_piece(w, a, a + length)
    x = h * np.arange(n + 1)
    deg = 1 if length == 1 else 3
    lo, hi = a * h, (a + length) * h
    for d in range(deg + 1):
        got = np.sum(w * x**d) * h / UNIT
        assert got == pytest.approx((hi ** (d + 1) - lo ** (d + 1)) / (d + 1), rel=1e-12, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 60), st.data())
def test_piecewise_total_length_and_locality(n, data):
    start = data.draw(st.integers(0, n - 1))
    splits = data.draw(st.lists(st.integers(0, n), max_size=6))
    w = piecewise_units(n, start, n, splits)
    assert w.sum() == UNIT * (n - start)      # integrates constants exactly
    assert np.all(w[:start] == 0)
    assert np.all(w[start:] > 0)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 20).map(lambda k: 2 * k), st.data())
def test_splits_only_perturb_nearby_weights(n, data):
    # away from breakpoints (more than 3 cells) the plain Simpson weights survive
    splits = sorted(set(data.draw(st.lists(st.integers(1, n - 1), max_size=3))))
    w = piecewise_units(n, 0, n, splits)
    base = simpson_units(n)
    edges = [0, *splits, n]
    far = [i for i in range(n + 1) if all(abs(i - e) > 3 for e in edges)]
    assert np.array_equal(w[far], base[far])


def test_piecewise_weights_scale():
    w = piecewise_weights(10, 2, 10, [5], h=0.5)
    assert w.sum() == pytest.approx(4.0)
