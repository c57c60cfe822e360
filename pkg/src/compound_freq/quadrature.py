"""Composite Newton-Cotes weights on a uniform grid with breakpoints.

Each smooth piece between breakpoints gets its own composite rule.  Simpson
panels are kept aligned with even global nodes, and odd leftovers are absorbed
by 3/8 panels placed next to odd endpoints, so that splitting a piece only
perturbs the plain Simpson weights within three cells of a breakpoint.

Weights are accumulated as exact integers in units of h/24 and scaled at the
end, so two rules that agree mathematically agree bit for bit.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .errors import ConfigurationError

UNIT = 24  # common denominator of the trapezoid, Simpson and 3/8 weights
_S38 = np.array([9, 27, 27, 9], dtype=np.int64)


def _add_simpson(w, a, b):
    if b > a:
        w[a:b + 1:2] += 16
        w[a + 1:b:2] += 32
        w[a] -= 8
        w[b] -= 8


def add_piece(w: np.ndarray, a: int, b: int) -> None:
    """Accumulate integer weights (units of h/24) over nodes a..b in place."""
    length = b - a
    if length <= 0:
        return
    if length == 1:
        w[a] += 12
        w[b] += 12
        return
    if length == 3:
        w[a:b + 1] += _S38
        return
    head = 3 if a % 2 else 0
    tail = 3 if b % 2 else 0
    if length - head - tail < 0:
        # both ends odd and too short for two 3/8 panels: plain Simpson
        _add_simpson(w, a, b)
        return
    if head:
        w[a:a + 4] += _S38
    if tail:
        w[b - 3:b + 1] += _S38
    _add_simpson(w, a + head, b - tail)


def piecewise_units(n_grid: int, start: int, end: int, splits: Iterable[int]) -> np.ndarray:
    """Integer weights (units of h/24) on nodes 0..n_grid for the integral over [start, end].

    ``splits`` are node indices where the integrand is non-smooth; those
    outside (start, end) are ignored.
    """
    w = np.zeros(n_grid + 1, dtype=np.int64)
    cuts = sorted({int(s) for s in splits if start < s < end})
    edges = [start, *cuts, end]
    for a, b in zip(edges[:-1], edges[1:]):
        add_piece(w, a, b)
    return w


def piecewise_weights(n_grid: int, start: int, end: int, splits: Iterable[int],
                      h: float) -> np.ndarray:
    return piecewise_units(n_grid, start, end, splits) * (h / UNIT)


def simpson_units(n: int) -> np.ndarray:
    if n < 0 or n % 2:
        raise ConfigurationError(f"Simpson rule needs an even number of intervals, got {n}")
    w = np.zeros(n + 1, dtype=np.int64)
    _add_simpson(w, 0, n)
    return w


def simpson_weights(n: int, h: float) -> np.ndarray:
    """Plain composite Simpson weights for nodes 0..n (n even)."""
    return simpson_units(n) * (h / UNIT)
