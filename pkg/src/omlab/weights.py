"""Muckenhoupt constants, A-infinity parameters and the b_k / v_k machinery.

Weights live on the box only, so the cube scans here use the grid cubes that
lie inside the box.  On piecewise-constant data the essential infimum over a
cube is the smallest cell value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .geometry import DyadicCube, GridFunction, cube_row, layout, level_rows
from .report import REL_TOL, Check
from .summation import row_sums
from .young import YoungPhi


def _require_positive(w: GridFunction):
    if np.any(w.values <= 0):
        raise ValueError("weight must be strictly positive on every cell")


def _grids(w: GridFunction, grids) -> tuple[int, ...]:
    if grids is None:
        return (0,)
    if grids == "all":
        return tuple(range(3**w.domain.dim))
    return tuple(grids)


def contained_cubes(w: GridFunction, grids=None, gen_range=None):
    """Yield ``(layout, block_slices, rows)`` for every in-box cube, in a fixed order."""
    d = w.domain
    lo, hi = gen_range if gen_range is not None else (d.gen_min, d.box_exp)
    for g in _grids(w, grids):
        for k in range(lo, hi + 1):
            lay = layout(d, g, k)
            for sl, rows in level_rows(w.values, lay, full_only=True):
                yield lay, sl, rows


def _block_cube(lay, sl, i) -> DyadicCube:
    counts = tuple(s.stop - s.start for s in sl)
    idx = np.unravel_index(i, counts)
    return lay.cube(tuple(s.start + int(j) for s, j in zip(sl, idx)))


@dataclass(frozen=True)
class A1Certificate:
    constant: float
    witness_cube: DyadicCube | None
    grids_used: tuple[int, ...]


def a1_constant(w: GridFunction, grids=None, gen_range=None) -> A1Certificate:
    """Largest ``avg_Q w / min_Q w`` over the scanned cubes (at least 1)."""
    _require_positive(w)
    best, witness = 1.0, None
    for lay, sl, rows in contained_cubes(w, grids, gen_range):
        ratio = row_sums(rows) / rows.shape[1] / rows.min(axis=1)
        i = int(np.argmax(ratio))
        if ratio[i] > best or witness is None:
            best, witness = max(best, float(ratio[i])), _block_cube(lay, sl, i)
    return A1Certificate(best, witness, _grids(w, grids))


def ap_constant(w: GridFunction, p: float, grids=None, gen_range=None) -> float:
    """Largest A_p product ``avg(w) * avg(w**(1-p'))**(p-1)`` over the scanned cubes."""
    if not p > 1:
        raise ValueError("p must exceed 1")
    _require_positive(w)
    q = 1.0 - p / (p - 1.0)
    best = 0.0
    for _, _, rows in contained_cubes(w, grids, gen_range):
        n = rows.shape[1]
        prod = (row_sums(rows) / n) * (row_sums(rows**q) / n) ** (p - 1.0)
        best = max(best, float(prod.max()))
    return best


# -- A-infinity ----------------------------------------------------------------


@dataclass(frozen=True)
class AInfParams:
    C: float
    eps: float
    exhaustive: bool = True
    npairs: int = 0

    @property
    def xi(self) -> float:
        return 1.0 / (1.0 - self.eps) - 1.0

    @property
    def C0(self) -> float:
        return self.C ** (1.0 / (1.0 - self.eps))


def _ainf_pairs(w: GridFunction, grids, gen_range, budget):
    """(|E|/|Q|, w(E)/w(Q)) for every cube Q and every top-j cell set E of Q.

    For a fixed number of cells the top-j set maximises w(E), and between
    consecutive j the worst ratio sits at an endpoint, so these pairs give the
    exact supremum over all measurable E up to cell resolution.
    """
    xs, ys = [], []
    total = 0
    for _, _, rows in contained_cubes(w, grids, gen_range):
        srt = -np.sort(-rows, axis=1)
        cum = np.cumsum(srt, axis=1)
        y = cum / cum[:, -1:]
        n = rows.shape[1]
        x = np.broadcast_to(np.arange(1, n + 1) / n, y.shape)
        xs.append(x.reshape(-1))
        ys.append(y.reshape(-1))
        total += y.size
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    # many cubes repeat the same pair; keep the worst y for each x
    key = np.round(x, 15)
    order = np.lexsort((-y, key))
    first = np.ones(order.size, dtype=bool)
    first[1:] = key[order][1:] != key[order][:-1]
    x, y = x[order][first], y[order][first]
    exhaustive = True
    if x.size > budget:
        pick = np.linspace(0, x.size - 1, budget).astype(int)
        x, y = x[pick], y[pick]
        exhaustive = False
    return x, y, total, exhaustive


def _c_for(eps, lx, ly) -> float:
    return max(1.0, float(np.exp(np.max(ly - eps * lx))))


def ainf_params(w: GridFunction, grids=None, gen_range=None, budget: int = 2_000_000) -> AInfParams:
    """Fit ``(C, eps)`` with ``w(E)/w(Q) <= C (|E|/|Q|)**eps`` on all scanned pairs.

    Among eps in 0.05..0.95 the one minimising ``C**(1/(1-eps))`` is kept and
    then refined by golden-section search on the neighbouring interval.  When
    ``C = 1`` is attainable the largest such eps (at most 0.95) is returned.
    """
    _require_positive(w)
    x, y, total, exhaustive = _ainf_pairs(w, grids, gen_range, budget)
    lx, ly = np.log(x), np.log(y)
    # C = 1 works exactly for eps <= min log y / log x; then every such eps
    # ties at C0 = 1 and the largest one is the strongest statement
    proper = x < 1
    e_free = float(np.min(ly[proper] / lx[proper])) if proper.any() else 1.0
    if e_free >= 0.05:
        eps = min(e_free, 0.95)
        return AInfParams(_c_for(eps, lx, ly) * (1 + REL_TOL), eps, exhaustive, int(total))

    def obj(e):
        return math.log(_c_for(e, lx, ly)) / (1.0 - e)

    grid = np.round(np.arange(1, 20) * 0.05, 2)
    vals = [obj(e) for e in grid]
    e0 = float(grid[int(np.argmin(vals))])
    a, b = max(e0 - 0.05, 0.01), min(e0 + 0.05, 0.99)
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = obj(c), obj(d)
    for _ in range(40):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = obj(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = obj(d)
    eps = c if fc <= fd else d
    if obj(e0) <= min(fc, fd):
        eps = e0
    # one part in 1e12 of headroom so the fitted bound survives re-evaluation
    C = _c_for(eps, lx, ly) * (1 + REL_TOL)
    return AInfParams(C, float(eps), exhaustive, int(total))


# -- checks --------------------------------------------------------------------


def levelset_bound_check(w: GridFunction, cube: DyadicCube, lam: float, params: AInfParams) -> Check:
    """``|{w > lam} cap Q| <= C0 |Q| [ (1/(lam |Q|)) int_Q w ]**(1+xi)``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    d = w.domain
    row = cube_row(w.values, cube, d)
    vol = d.cell_volume
    size = (1 << ((cube.gen + d.m) * d.dim)) * vol
    lhs = float(np.count_nonzero(row > lam)) * vol
    integral = float(row_sums(row)) * vol
    rhs = params.C0 * size * (integral / (lam * size)) ** (1.0 + params.xi)
    return Check("lemma11", lhs, rhs, f"{cube.label()} lam={lam!r}")


# -- b_k -----------------------------------------------------------------------


@dataclass(frozen=True)
class BkRow:
    k: int
    ratio: float
    factor: Fraction
    at_lower: bool
    at_upper: bool
    ok: bool


@dataclass(frozen=True)
class BkSequence:
    a: float
    phi: YoungPhi
    k_range: tuple[int, int]
    values: dict = field(repr=False)
    rows: tuple = field(repr=False)

    def b(self, k: int) -> float:
        return self.values[k] if k in self.values else b_value(self.a, self.phi, k)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)


def b_value(a: float, phi: YoungPhi, k: int) -> float:
    """``b_k = 1 / phi(a**-k)`` in closed form."""
    return a ** (phi.r * k) / (1.0 + max(0, -k) * math.log(a)) ** phi.delta


def bk_sequence(a: float, phi: YoungPhi, k_range: tuple[int, int] = (-40, 40)) -> BkSequence:
    """The sequence ``b_k`` and a check of ``a**r <= b_{k+1}/b_k <= phi(a)``.

    ``b_{k+1}/b_k = a**r * f_k**delta`` with
    ``f_k = (1 + max(0,-k) L) / (1 + max(0,-k-1) L)`` and ``L = log a``.  The
    bounds are equivalent to ``1 <= f_k <= 1 + L``, which is checked in exact
    rational arithmetic on the double value of ``L``.
    """
    if not a > 1:
        raise ValueError("a must exceed 1")
    k0, k1 = k_range
    L = Fraction(math.log(a))
    vals = {k: b_value(a, phi, k) for k in range(k0, k1 + 2)}
    upper_f = float(phi.array(a)) / a**phi.r
    rows = []
    for k in range(k0, k1 + 1):
        f = (1 + max(0, -k) * L) / (1 + max(0, -k - 1) * L)
        ok = 1 <= f <= 1 + L and vals[k] <= a ** (phi.r * k) * (1 + REL_TOL)
        ratio = vals[k + 1] / vals[k]
        ok = ok and a**phi.r * (1 - REL_TOL) <= ratio <= a**phi.r * upper_f * (1 + REL_TOL)
        # with delta = 0 the factor enters as f**0 and both bounds are a**r
        flat = phi.delta == 0
        rows.append(BkRow(k, ratio, f, flat or f == 1, flat or f == 1 + L, ok))
    return BkSequence(a, phi, k_range, vals, tuple(rows))


def truncate(v: GridFunction, r: float, cap: float) -> GridFunction:
    """Cellwise ``min(v**r, cap)``."""
    if not cap > 0:
        raise ValueError("cap must be positive")
    return v.with_values(np.minimum(v.values**r, cap))
