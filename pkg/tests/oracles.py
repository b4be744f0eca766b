"""Slow, independent reference computations used by the tests.

Nothing here touches the package's block layouts, level caches or kernels:
cubes are enumerated from the real-line recipe, sums use math.fsum and
Luxemburg averages use a plain-Python bisection.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


def phi_value(t: float, r: float, delta: float) -> float:
    if t <= 0:
        return 0.0
    return t**r * (1.0 + max(0.0, math.log(t))) ** delta


def phi_inv(y: float, r: float, delta: float) -> float:
    lo, hi = 0.0, max(1.0, y)
    while phi_value(hi, r, delta) < y:
        hi *= 2
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if phi_value(mid, r, delta) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def luxemburg(values, length: int, r: float, delta: float) -> float:
    """Root of ``fsum(phi(x/lam)) / length = 1`` by plain bisection."""
    xs = [float(x) for x in values if x > 0]
    if not xs:
        return 0.0
    # the norm is homogeneous; bring the max near 1 so subnormals survive
    e = math.frexp(max(xs))[1]
    if abs(e) > 60:
        return math.ldexp(luxemburg([math.ldexp(x, -e) for x in xs], length, r, delta), e)

    def modular(lam):
        return math.fsum(phi_value(x / lam, r, delta) for x in xs) / length

    lo, hi = 1e-300, max(xs)
    while modular(hi) > 1:
        hi *= 2
    lo = hi / 2
    while modular(lo) <= 1:
        lo /= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if modular(mid) > 1:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return hi


def grid_digits(grid: int, dim: int) -> tuple[int, ...]:
    """Shift digit per axis, first axis most significant."""
    out = []
    for _ in range(dim):
        grid, t = divmod(grid, 3)
        out.append(t)
    return tuple(reversed(out))


def axis_intervals(domain, t: int, gen: int):
    """Cell-unit intervals of one axis of a real shifted grid ``2^k (j + [0,1) + (-1)^k t/3)``.

    The real grid is translated by ``(-1)^m t/3`` cells, which puts every
    generation on cell boundaries at once; intervals are clipped to the box.
    """
    m, n = domain.m, domain.n_side
    side = Fraction(2) ** (gen + m)
    shift = side * Fraction((-1) ** (gen % 2) * t, 3) - Fraction((-1) ** (m % 2) * t, 3)
    assert shift.denominator == 1
    j0 = math.floor(-shift / side) - 1
    j1 = math.ceil((n - shift) / side) + 1
    for j in range(j0, j1 + 1):
        lo = int(side * j + shift)
        hi = lo + int(side)
        if lo < n and hi > 0:
            yield max(lo, 0), min(hi, n)


def grid_cubes(domain, grid: int, gen: int):
    """``(cell slices, full cube cell count)`` of every cube of one grid meeting the box."""
    digits = grid_digits(grid, domain.dim)
    per_axis = [list(axis_intervals(domain, t, gen)) for t in digits]
    length = (1 << (gen + domain.m)) ** domain.dim
    for box in itertools.product(*per_axis):
        yield tuple(slice(a, b) for a, b in box), length


def naive_maximal(values: np.ndarray, domain, r: float, delta: float, grid: int = 0,
                  kernel=None) -> np.ndarray:
    """Maximal function of one grid by enumerating every cube over every cell.

    ``kernel(row, length)`` defaults to the plain-Python Luxemburg bisection.
    """
    kernel = kernel or (lambda row, length: luxemburg(row, length, r, delta))
    out = np.zeros(domain.shape)
    for gen in range(domain.gen_min, domain.gen_max + 1):
        for sl, length in grid_cubes(domain, grid, gen):
            val = kernel(values[sl].reshape(-1), length)
            out[sl] = np.maximum(out[sl], val)
    return out


def unshifted_cells(domain, gen: int):
    side = 1 << (gen + domain.m)
    count = max(1, domain.n_side // side)
    for idx in itertools.product(range(count), repeat=domain.dim):
        yield tuple(slice(i * side, (i + 1) * side) for i in idx)


def naive_a1(values: np.ndarray, domain) -> float:
    """``max avg/min`` over unshifted cubes inside the box, with fsum."""
    best = 1.0
    for gen in range(domain.gen_min, domain.box_exp + 1):
        for sl in unshifted_cells(domain, gen):
            blk = values[sl].reshape(-1)
            best = max(best, math.fsum(blk) / blk.size / blk.min())
    return best


def cells_in_interval(lo: Fraction, hi: Fraction, box_exp: int, cell_exp: int) -> list[int]:
    """1D cells ``[i h, (i+1) h)`` lying inside ``[lo, hi)`` and the box."""
    h = Fraction(2) ** cell_exp
    n = 1 << (box_exp - cell_exp)
    return [i for i in range(n) if lo <= i * h and (i + 1) * h <= hi]
