"""Dyadic cubes, shifted dyadic grids and exact integration on a bounded box.

The computation domain is the half-open box ``[0, 2**K)**n`` cut into cells of
side ``2**-m``.  All positions below are measured in cell units unless a
function says otherwise.

Shifted grids follow the usual one-third recipe: grid ``t in {0,1,2}**n``
places generation-``k`` cubes at ``2**k * (j + (-1)**k * t / 3)``.  Restricted
to generations ``k >= -m`` every face of that grid sits at the same fractional
cell position ``(-1)**m * t / 3``, so the computational grid used here is the
exact grid translated by that constant.  It is again a dyadic grid, now with
faces on cell faces, which keeps integrals exact finite sums.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .summation import row_sums

MAX_CELLS = 1 << 24


@dataclass(frozen=True)
class Domain:
    dim: int
    box_exp: int
    cell_exp: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"unsupported dimension {self.dim}")
        if self.cell_exp >= self.box_exp:
            raise ValueError("cell_exp must be below box_exp")
        if self.dim * (self.box_exp - self.cell_exp) > 24:
            raise ValueError("domain has too many cells")

    @property
    def m(self) -> int:
        return -self.cell_exp

    @property
    def n_side(self) -> int:
        """Cells per axis."""
        return 1 << (self.box_exp + self.m)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_side,) * self.dim

    @property
    def ncells(self) -> int:
        return self.n_side**self.dim

    @property
    def cell_volume(self) -> float:
        return math.ldexp(1.0, -self.dim * self.m)

    @property
    def gen_min(self) -> int:
        return -self.m

    @property
    def gen_max(self) -> int:
        """Default top generation for maximal operators (two above the box)."""
        return self.box_exp + 2

    def gen_range(self, gmax: int | None = None) -> tuple[int, int]:
        return (self.gen_min, self.gen_max if gmax is None else gmax)

    def refine(self) -> "Domain":
        return Domain(self.dim, self.box_exp, self.cell_exp - 1)


# -- grids -------------------------------------------------------------------


def shifted_grids(n: int) -> list[tuple[int, ...]]:
    """The 3**n shift vectors ``t``; grid id ``i`` is ``t`` read in base 3."""
    if n not in (1, 2, 3):
        raise ValueError(f"unsupported dimension {n}")
    return list(itertools.product(range(3), repeat=n))


def grid_shift(grid_id: int, n: int) -> tuple[int, ...]:
    if not 0 <= grid_id < 3**n:
        raise ValueError(f"grid id {grid_id} out of range for n={n}")
    return shifted_grids(n)[grid_id]


def axis_offset(t: int, j: int, m: int) -> int:
    """Cell offset of the generation with side ``2**j`` cells on one axis."""
    if j < 0:
        raise ValueError("cube finer than cells")
    q = ((-1) ** j * (1 << j) - 1) // 3
    return (-1) ** m * t * q


@dataclass(frozen=True)
class DyadicCube:
    grid_id: int
    gen: int
    coords: tuple[int, ...]

    @property
    def side(self) -> float:
        return math.ldexp(1.0, self.gen)

    def exact_lower(self) -> tuple[Fraction, ...]:
        """Lower corner in the exact (untranslated) shifted grid, real units."""
        t = grid_shift(self.grid_id, len(self.coords))
        s = Fraction(2) ** self.gen
        sign = -1 if self.gen % 2 else 1
        return tuple(s * (c + Fraction(sign * ti, 3)) for c, ti in zip(self.coords, t))

    def cell_lower(self, domain: Domain) -> tuple[int, ...]:
        j = self.gen + domain.m
        t = grid_shift(self.grid_id, domain.dim)
        return tuple((c << j) + axis_offset(ti, j, domain.m) for c, ti in zip(self.coords, t))

    def cell_bounds(self, domain: Domain) -> tuple[tuple[int, int], ...]:
        """Per-axis half-open cell interval, not clipped to the box."""
        s = 1 << (self.gen + domain.m)
        return tuple((lo, lo + s) for lo in self.cell_lower(domain))

    def parent(self, domain: Domain) -> "DyadicCube":
        return containing_cube(domain, self.grid_id, self.gen + 1, self.cell_lower(domain))

    def children(self, domain: Domain) -> list["DyadicCube"]:
        if self.gen - 1 < domain.gen_min:
            raise ValueError("cube finer than cells")
        s = 1 << (self.gen - 1 + domain.m)
        out = []
        for corner in itertools.product((0, 1), repeat=domain.dim):
            lo = tuple(x + c * s for x, c in zip(self.cell_lower(domain), corner))
            out.append(containing_cube(domain, self.grid_id, self.gen - 1, lo))
        return out

    def contains(self, other: "DyadicCube", domain: Domain) -> bool:
        return all(
            a0 <= b0 and b1 <= a1
            for (a0, a1), (b0, b1) in zip(self.cell_bounds(domain), other.cell_bounds(domain))
        )

    def inside_box(self, domain: Domain) -> bool:
        return all(0 <= lo and hi <= domain.n_side for lo, hi in self.cell_bounds(domain))

    def label(self) -> str:
        return f"{self.grid_id}:{self.gen}:" + ",".join(map(str, self.coords))

    @classmethod
    def parse(cls, text: str) -> "DyadicCube":
        g, k, coords = text.split(":")
        return cls(int(g), int(k), tuple(int(c) for c in coords.split(",")))


def containing_cube(domain: Domain, grid_id: int, gen: int, cell: Sequence[int]) -> DyadicCube:
    """The generation-``gen`` cube of ``grid_id`` containing the given cell."""
    j = gen + domain.m
    t = grid_shift(grid_id, domain.dim)
    coords = tuple((x - axis_offset(ti, j, domain.m)) >> j for x, ti in zip(cell, t))
    return DyadicCube(grid_id, gen, coords)


def cover_cube(lower, side, domain: Domain | None = None) -> tuple[int, DyadicCube]:
    """Find a shifted-grid cube ``Q0`` containing the cube ``[lower, lower+side)``.

    Without ``domain`` the cube is in real units and the exact shifted grids
    are searched.  With ``domain`` it is a cell-aligned cube in cell units and
    the computational grids are searched.  Generations are tried from the
    smallest side that can fit, so the first hit also has the smallest side.
    """
    lower = tuple(Fraction(x) for x in lower)
    side = Fraction(side)
    if side <= 0:
        raise ValueError("cube side must be positive")
    n = len(lower)
    unit = Fraction(1) if domain is None else Fraction(2) ** domain.cell_exp
    target = side * unit
    k0 = math.floor(math.log2(target))
    while Fraction(2) ** k0 < target:
        k0 += 1
    while Fraction(2) ** (k0 - 1) >= target:
        k0 -= 1
    for k in range(k0, k0 + 3):
        for gid in range(3**n):
            if domain is None:
                s = Fraction(2) ** k
                sign = -1 if k % 2 else 1
                t = grid_shift(gid, n)
                coords = tuple(
                    math.floor((x - s * Fraction(sign * ti, 3)) / s) for x, ti in zip(lower, t)
                )
                cube = DyadicCube(gid, k, coords)
                lo = cube.exact_lower()
                hi = tuple(x + s for x in lo)
            else:
                if k < domain.gen_min:
                    continue
                cube = containing_cube(domain, gid, k, tuple(int(x) for x in lower))
                b = cube.cell_bounds(domain)
                lo = tuple(Fraction(a) for a, _ in b)
                hi = tuple(Fraction(c) for _, c in b)
            if all(a <= x and x + side <= c for a, x, c in zip(lo, lower, hi)):
                return gid, cube
    raise AssertionError("no shifted dyadic cover found")  # pragma: no cover


# -- block layouts -------------------------------------------------------------


@dataclass(frozen=True)
class Layout:
    """How one generation of one grid tiles the (zero-padded) box."""

    domain: Domain
    grid_id: int
    gen: int
    side: int
    pad_lo: tuple[int, ...]
    nblocks: tuple[int, ...]
    origin: tuple[int, ...]

    @property
    def row_length(self) -> int:
        return self.side**self.domain.dim

    def cube(self, index: Sequence[int]) -> DyadicCube:
        return DyadicCube(self.grid_id, self.gen, tuple(o + int(i) for o, i in zip(self.origin, index)))

    def index_of(self, cube: DyadicCube) -> tuple[int, ...]:
        return tuple(c - o for c, o in zip(cube.coords, self.origin))

    def contained(self) -> np.ndarray:
        """Mask of blocks lying entirely inside the box."""
        n = self.domain.n_side
        axes = []
        for p, nb in zip(self.pad_lo, self.nblocks):
            lo = np.arange(nb) * self.side - p
            axes.append((lo >= 0) & (lo + self.side <= n))
        return _outer_and(axes)

    def cell_counts(self) -> np.ndarray:
        """Number of box cells in each block."""
        n = self.domain.n_side
        axes = []
        for p, nb in zip(self.pad_lo, self.nblocks):
            lo = np.arange(nb) * self.side - p
            axes.append(np.clip(np.minimum(lo + self.side, n) - np.maximum(lo, 0), 0, None))
        out = axes[0]
        for a in axes[1:]:
            out = np.multiply.outer(out, a)
        return out


def _outer_and(axes):
    out = axes[0]
    for a in axes[1:]:
        out = np.logical_and.outer(out, a)
    return out


def layout(domain: Domain, grid_id: int, gen: int) -> Layout:
    if gen < domain.gen_min:
        raise ValueError("cube finer than cells")
    j = gen + domain.m
    s = 1 << j
    t = grid_shift(grid_id, domain.dim)
    pad_lo, nblocks, origin = [], [], []
    for ti in t:
        off = axis_offset(ti, j, domain.m)
        c0 = (-off) // s
        left = -(c0 * s + off)
        nb = -(-(domain.n_side + left) // s)
        pad_lo.append(left)
        nblocks.append(nb)
        origin.append(c0)
    return Layout(domain, grid_id, gen, s, tuple(pad_lo), tuple(nblocks), tuple(origin))


def _axis_segments(lay: Layout, axis: int):
    """Runs of blocks along one axis sharing the same clipped extent.

    Yields ``(first_block, nblocks, first_cell, extent)``.  Full blocks are
    merged into one run; a clipped boundary block is a run of its own.
    """
    n = lay.domain.n_side
    s = lay.side
    p = lay.pad_lo[axis]
    segs = []
    for b in range(lay.nblocks[axis]):
        lo = b * s - p
        a, c = max(lo, 0), min(lo + s, n)
        e = c - a
        if segs and e == s and segs[-1][3] == s:
            b0, cnt, a0, _ = segs[-1]
            segs[-1] = (b0, cnt + 1, a0, s)
        else:
            segs.append((b, 1, a, e))
    return segs


def level_rows(arr: np.ndarray, lay: Layout, full_only: bool = False):
    """Group the cubes of one generation by clipped shape.

    Returns a list of ``(block_slices, rows)`` where ``rows[i]`` holds the box
    cells of one cube, row-major inside the clipped cube, and
    ``rows.reshape(counts)`` lines up with ``block_slices``.  With
    ``full_only`` only cubes lying inside the box are returned.
    """
    arr = np.asarray(arr)
    n = lay.domain.dim
    per_axis = [_axis_segments(lay, ax) for ax in range(n)]
    if full_only:
        per_axis = [[sg for sg in segs if sg[3] == lay.side] for segs in per_axis]
    out = []
    for combo in itertools.product(*per_axis):
        src = tuple(slice(a, a + cnt * e) for _, cnt, a, e in combo)
        shape = []
        for _, cnt, _, e in combo:
            shape += [cnt, e]
        sub = arr[src].reshape(shape)
        sub = sub.transpose(list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2)))
        counts = tuple(cnt for _, cnt, _, _ in combo)
        rows = sub.reshape((int(np.prod(counts)), -1))
        out.append((tuple(slice(b, b + cnt) for b, cnt, _, _ in combo), rows))
    return out


def map_level(arr: np.ndarray, lay: Layout, fn, full_only: bool = False, fill: float = 0.0) -> np.ndarray:
    """Apply a row reducer ``fn(rows, length) -> values`` to every cube of a level."""
    out = np.full(lay.nblocks, fill, dtype=np.float64)
    for sl, rows in level_rows(arr, lay, full_only):
        counts = tuple(x.stop - x.start for x in sl)
        out[sl] = np.asarray(fn(rows, lay.row_length)).reshape(counts)
    return out


def from_blocks(vals: np.ndarray, lay: Layout) -> np.ndarray:
    """Spread per-cube values back onto the cells of the box."""
    a = np.asarray(vals)
    for ax, p in enumerate(lay.pad_lo):
        a = np.repeat(a, lay.side, axis=ax)
        a = np.take(a, np.arange(p, p + lay.domain.n_side), axis=ax)
    return a


# -- cells and integrals -------------------------------------------------------


def cells_of(cube: DyadicCube, domain: Domain) -> Iterator[int]:
    """Flat row-major indices of the box cells inside ``cube``."""
    if cube.gen < domain.gen_min:
        raise ValueError("cube finer than cells")
    ranges = [range(max(lo, 0), min(hi, domain.n_side)) for lo, hi in cube.cell_bounds(domain)]
    for idx in itertools.product(*ranges):
        yield int(np.ravel_multi_index(idx, domain.shape))


def cube_row(arr: np.ndarray, cube: DyadicCube, domain: Domain) -> np.ndarray:
    """Values of ``arr`` on the box cells of ``cube``, row-major.

    Same order as the matching row of :func:`level_rows`.  Cells outside the
    box are left out; callers normalise by the full cube volume.
    """
    if cube.gen < domain.gen_min:
        raise ValueError("cube finer than cells")
    src = []
    for lo, hi in cube.cell_bounds(domain):
        a, b = max(lo, 0), min(hi, domain.n_side)
        if a >= b:
            return np.zeros(0)
        src.append(slice(a, b))
    return np.array(np.asarray(arr)[tuple(src)], dtype=np.float64).reshape(-1)


@dataclass(frozen=True)
class GridFunction:
    """Nonnegative piecewise-constant function on the cells of a domain."""

    domain: Domain
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.size != self.domain.ncells:
            raise ValueError(f"expected {self.domain.ncells} values, got {v.size}")
        v = v.reshape(self.domain.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        if np.any(v < 0):
            raise ValueError("values must be nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.domain, values)

    def refine(self) -> "GridFunction":
        """Same function on cells of half the side."""
        v = self.values
        for ax in range(self.domain.dim):
            v = np.repeat(v, 2, axis=ax)
        return GridFunction(self.domain.refine(), v)

    def __eq__(self, other):
        return (
            isinstance(other, GridFunction)
            and self.domain == other.domain
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def integrate(f: GridFunction, cube: DyadicCube) -> float:
    """Exact integral of ``f`` over ``cube`` (zero outside the box)."""
    return float(row_sums(cube_row(f.values, cube, f.domain))) * f.domain.cell_volume


def total_integral(values: np.ndarray, domain: Domain) -> float:
    return float(row_sums(np.asarray(values).reshape(-1))) * domain.cell_volume
