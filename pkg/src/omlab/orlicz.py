"""Luxemburg averages and the dyadic / shifted-dyadic Orlicz maximal operators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .geometry import (
    DyadicCube,
    Domain,
    GridFunction,
    Layout,
    cube_row,
    from_blocks,
    layout,
    map_level,
)
from .summation import neumaier
from .young import YoungPhi

RTOL = 1e-12
MAX_STEPS = 200
# phi(t) >= t**r puts the root at or above the power mean A; if the modular at
# A is this close to 1 the root is within ~1e-13 relative of A.
_ACCEPT = 1e-13


@njit(cache=True, inline="always")
def _pow(v, r):
    if r == 1.0:
        return v
    if r == 2.0:
        return v * v
    return v**r


@njit(cache=True)
def _lux_kernel(x, r, delta, length, rtol, max_steps, accept):
    nrow, ncol = x.shape
    out = np.zeros(nrow)
    xr = np.empty(ncol)
    lx = np.empty(ncol)
    terms = np.empty(ncol)
    for i in range(nrow):
        mx = 0.0
        for j in range(ncol):
            v = x[i, j]
            if v > mx:
                mx = v
            xr[j] = _pow(v, r)
            lx[j] = np.log(v) if v > 0 else -np.inf
        s = neumaier(xr)
        if s <= 0.0:
            continue

        # modular(lam) = sum phi(x/lam) / length, with x**r and log x hoisted
        def modular(lam):
            ll = np.log(lam)
            for j in range(ncol):
                t = xr[j]
                if delta > 0.0:
                    d = lx[j] - ll
                    if d > 0.0:
                        t = t * _pow(1.0 + d, delta)
                terms[j] = t
            return neumaier(terms) / _pow(lam, r) / length

        lo = (s / length) ** (1.0 / r)
        m_lo = modular(lo)
        if abs(m_lo - 1.0) <= accept:
            out[i] = lo
            continue
        hi = lo * (1.0 + max(np.log(mx / lo), 0.0)) ** (delta / r)
        # guards: expand geometrically if an endpoint is on the wrong side
        while m_lo <= 1.0:
            lo *= 0.5
            m_lo = modular(lo)
        if hi < lo:
            hi = lo
        while modular(hi) > 1.0:
            hi *= 2.0
        for _ in range(max_steps):
            if hi - lo <= rtol * hi:
                break
            mid = 0.5 * (lo + hi)
            if modular(mid) > 1.0:
                lo = mid
            else:
                hi = mid
        out[i] = hi
    return out


def luxemburg_rows(rows, phi: YoungPhi, length: int | None = None) -> np.ndarray:
    """Luxemburg average of each row, every entry weighted ``1/length``.

    ``length`` is the cube volume in cells and defaults to the row length;
    it is larger when the cube sticks out of the box (zero there).  The
    root of ``mean phi(x/lam) = 1`` is bracketed by the power mean ``A`` and
    ``A (1 + log+(max/A))**(delta/r)`` and bisected to ``RTOL``.  Each row
    is solved on its own, so a row gives identical bits alone or in a batch.
    """
    x = np.ascontiguousarray(rows, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a 2-d array of rows")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite values")
    length = x.shape[1] if length is None else length
    if x.shape[0] == 0 or x.shape[1] == 0:
        return np.zeros(x.shape[0])
    # the norm is homogeneous: solve with each row's max scaled into [1/2, 1)
    # by an exact power of two, so tiny or huge rows neither underflow nor overflow
    _, e = np.frexp(x.max(axis=1))
    scale = np.ldexp(1.0, e)
    lam = _lux_kernel(x / scale[:, None], float(phi.r), float(phi.delta), float(length), RTOL,
                      MAX_STEPS, _ACCEPT)
    return lam * scale


def luxemburg_average(f: GridFunction, cube: DyadicCube, phi: YoungPhi) -> float:
    """Luxemburg average of ``f`` over ``cube``; ``f`` is zero outside the box."""
    row = cube_row(f.values, cube, f.domain)
    length = 1 << ((cube.gen + f.domain.m) * f.domain.dim)
    return float(luxemburg_rows(row[None, :], phi, length)[0])


@dataclass
class Level:
    layout: Layout
    values: np.ndarray
    valid: np.ndarray

    def value(self, cube: DyadicCube) -> float:
        idx = self.layout.index_of(cube)
        if any(i < 0 or i >= nb for i, nb in zip(idx, self.layout.nblocks)):
            return 0.0
        return float(self.values[idx])


class CubeLevels:
    """Luxemburg averages of one function over every cube of one grid.

    Generations ``gen_range[0] .. gen_range[1] + 1`` are kept; the extra top
    generation supplies parent values for maximality checks.  With
    ``contained`` only cubes lying inside the box count; others get value 0.
    """

    def __init__(self, f: GridFunction, phi: YoungPhi, grid_id: int = 0,
                 gen_range: tuple[int, int] | None = None, contained: bool = False):
        d = f.domain
        self.f = f
        self.phi = phi
        self.grid_id = grid_id
        self.gen_range = tuple(gen_range) if gen_range is not None else d.gen_range()
        self.contained = contained
        lo, hi = self.gen_range
        if lo > hi:
            raise ValueError("empty generation range")
        if lo < d.gen_min:
            raise ValueError("generation range below cell size")
        self.levels: dict[int, Level] = {}
        for k in range(lo, hi + 2):
            lay = layout(d, grid_id, k)
            vals = map_level(f.values, lay, lambda rows, n: luxemburg_rows(rows, phi, n), contained)
            valid = lay.contained() if contained else np.ones(lay.nblocks, dtype=bool)
            self.levels[k] = Level(lay, vals, valid)

    @property
    def domain(self) -> Domain:
        return self.f.domain

    def gens(self, top_down: bool = False) -> list[int]:
        lo, hi = self.gen_range
        g = list(range(lo, hi + 1))
        return g[::-1] if top_down else g

    def value(self, cube: DyadicCube) -> float:
        return self.levels[cube.gen].value(cube)

    def cell_field(self, gen: int) -> np.ndarray:
        lev = self.levels[gen]
        return from_blocks(lev.values, lev.layout)

    def maximal(self) -> np.ndarray:
        out = np.zeros(self.domain.shape)
        for k in self.gens():
            np.maximum(out, self.cell_field(k), out=out)
        return out


@dataclass(frozen=True)
class MaximalField:
    domain: Domain
    values: np.ndarray = field(repr=False)
    phi: YoungPhi
    grid_ids: tuple[int, ...]
    gen_range: tuple[int, int]

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


def dyadic_maximal(f: GridFunction, phi: YoungPhi, grid_id: int = 0,
                   gen_range: tuple[int, int] | None = None,
                   contained: bool = False) -> MaximalField:
    """Per cell, the largest Luxemburg average over cubes of one grid containing it."""
    lv = CubeLevels(f, phi, grid_id, gen_range, contained)
    return MaximalField(f.domain, lv.maximal(), phi, (grid_id,), lv.gen_range)


def full_maximal(f: GridFunction, phi: YoungPhi,
                 gen_range: tuple[int, int] | None = None) -> tuple[MaximalField, MaximalField]:
    """Lower and upper cellwise bounds for the all-cubes maximal function.

    ``lower`` is the max over the 3**n shifted grids (every grid cube is a
    cube).  ``upper`` is ``3**n * lower``: each cube sits in a shifted-grid
    cube at most three times wider, and enlarging a cube by volume ratio
    ``3**n`` can shrink the Luxemburg average by at most that factor.
    """
    d = f.domain
    grids = tuple(range(3**d.dim))
    lower = np.zeros(d.shape)
    rng = None
    for g in grids:
        m = dyadic_maximal(f, phi, g, gen_range)
        rng = m.gen_range
        np.maximum(lower, m.values, out=lower)
    upper = lower * float(3**d.dim)
    return (MaximalField(d, lower, phi, grids, rng), MaximalField(d, upper, phi, grids, rng))
