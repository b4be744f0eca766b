"""Calderon-Zygmund cubes, the Omega_k families, Gamma flags and principal cubes.

Everything here works on one dyadic grid.  ``cz_cubes`` on its own follows the
operator conventions of :mod:`omlab.orlicz` (zero outside the box, top
generation raised until the maximal cubes are genuinely maximal).  The
Omega_k machinery involves weights, which only exist on the box, so it uses
cubes contained in the box, generations ``-m .. K``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import DyadicCube, Domain, GridFunction, containing_cube, cube_row, from_blocks
from .orlicz import CubeLevels, luxemburg_average
from .report import Check
from .summation import row_sums
from .weights import AInfParams, b_value
from .young import LINEAR, YoungPhi

# raising the top generation beyond this many levels means the data is absurd
_MAX_EXTRA_GENS = 64


def apow(a: float, x: float) -> float:
    """``a**x`` saturating to infinity instead of raising."""
    try:
        return a**x
    except OverflowError:
        return math.inf


def box_range(d: Domain) -> tuple[int, int]:
    """Generations used for weight-dependent decompositions."""
    return (d.gen_min, d.box_exp)


# -- CZ cubes --------------------------------------------------------------------


@dataclass(frozen=True)
class CZDecomposition:
    lam: float
    phi: YoungPhi
    grid_id: int
    gen_range: tuple[int, int]
    cubes: tuple[DyadicCube, ...]
    values: np.ndarray = field(repr=False)
    parent_values: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)
    capped: bool = False

    def __len__(self):
        return len(self.cubes)

    def checks(self) -> list[Check]:
        """Average above lambda on every cube; parent at or below it.

        With a caller-fixed top generation (``capped``) the parents of
        top-generation cubes lie outside the range and are not checked.
        """
        out = []
        top = self.gen_range[1]
        for q, val, par in zip(self.cubes, self.values, self.parent_values):
            out.append(Check("cz_above", self.lam, float(val), q.label(), strict=True))
            if not (self.capped and q.gen == top):
                out.append(Check("cz_parent", float(par), self.lam, q.label()))
        return out

    def labels(self, domain: Domain) -> np.ndarray:
        """Cell field holding the index of the cube covering each cell, or -1."""
        lab = np.full(domain.shape, -1, dtype=np.int64)
        for i, q in enumerate(self.cubes):
            lab[_clip_slices(q, domain)] = i
        return lab


def _clip_slices(q: DyadicCube, d: Domain):
    return tuple(slice(max(lo, 0), min(hi, d.n_side)) for lo, hi in q.cell_bounds(d))


def _reps(lay) -> list[np.ndarray]:
    """One in-box cell per block along each axis."""
    n = lay.domain.n_side
    return [np.clip(np.arange(nb) * lay.side - p, 0, n - 1) for p, nb in zip(lay.pad_lo, lay.nblocks)]


def cz_from_levels(levels: CubeLevels, lam: float, capped: bool = True) -> CZDecomposition:
    """Maximal cubes of ``levels`` whose average exceeds ``lam``, scanned top-down."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    d = levels.domain
    covered = np.zeros(d.shape, dtype=bool)
    cubes, vals, pars = [], [], []
    for k in levels.gens(top_down=True):
        lev = levels.levels[k]
        lay = lev.layout
        cov = covered[np.ix_(*_reps(lay))]
        emit = (lev.values > lam) & lev.valid & ~cov
        if not emit.any():
            continue
        for idx in zip(*np.nonzero(emit)):
            q = lay.cube(idx)
            cubes.append(q)
            vals.append(float(lev.values[idx]))
            pars.append(levels.value(q.parent(d)))
        covered |= from_blocks(emit, lay)
    return CZDecomposition(lam, levels.phi, levels.grid_id, levels.gen_range, tuple(cubes),
                           np.array(vals), np.array(pars), covered, capped)


def top_generation(f: GridFunction, phi: YoungPhi, grid_id: int, lam: float) -> int:
    """Lowest top generation whose parent average is at most ``lam``.

    From ``K + 2`` up a single cube of each grid holds the whole box, and its
    average decreases as the cube grows.
    """
    d = f.domain
    hi = d.gen_max
    cell = (0,) * d.dim
    for _ in range(_MAX_EXTRA_GENS):
        parent = containing_cube(d, grid_id, hi + 1, cell)
        if luxemburg_average(f, parent, phi) <= lam:
            return hi
        hi += 1
    raise ValueError("lambda too small for a finite decomposition")


def cz_cubes(f: GridFunction, phi: YoungPhi, lam: float, grid_id: int = 0,
             gen_range: tuple[int, int] | None = None, contained: bool = False) -> CZDecomposition:
    """Maximal dyadic cubes with Luxemburg average above ``lam``.

    The union of the cubes is exactly ``{M_{phi,D} f > lam}`` for the same
    grid and generation range.  Without ``gen_range`` the range starts at the
    cell size and its top is raised until every cube has parent average at
    most ``lam``; the range used is stored on the result.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    capped = gen_range is not None
    if gen_range is None:
        gen_range = (f.domain.gen_min, top_generation(f, phi, grid_id, lam))
    levels = CubeLevels(f, phi, grid_id, gen_range, contained)
    return cz_from_levels(levels, lam, capped)


# -- Omega_k ---------------------------------------------------------------------


@dataclass(frozen=True)
class OmegaFamily:
    k: int
    a: float
    cubes: tuple[DyadicCube, ...]
    tags: tuple[str, ...]
    gamma: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)
    R: CZDecomposition = field(repr=False)
    S: CZDecomposition = field(repr=False)

    def __len__(self):
        return len(self.cubes)

    @property
    def level(self) -> float:
        return apow(self.a, self.k)


class OmegaContext:
    """Cube averages of ``v`` (plain) and ``g`` (Luxemburg) on one grid, reused across k."""

    def __init__(self, v: GridFunction, g: GridFunction, phi: YoungPhi, a: float,
                 grid_id: int = 0, gen_range: tuple[int, int] | None = None):
        if not a > 1:
            raise ValueError("a must exceed 1")
        d = v.domain
        self.v, self.g, self.phi, self.a, self.grid_id = v, g, phi, float(a), grid_id
        self.gen_range = gen_range or box_range(d)
        self.v_levels = CubeLevels(v, LINEAR, grid_id, self.gen_range, contained=True)
        self.g_levels = CubeLevels(g, phi, grid_id, self.gen_range, contained=True)
        self.Mv = self.v_levels.maximal()
        self.Mg = self.g_levels.maximal()
        self._fam: dict[int, OmegaFamily] = {}

    @property
    def domain(self) -> Domain:
        return self.v.domain

    def family(self, k: int) -> OmegaFamily:
        if k not in self._fam:
            self._fam[k] = _omega(self, k)
        return self._fam[k]

    def k_bounds(self) -> tuple[int, int] | None:
        """``(lowest k with a Gamma cube possible, highest k with Omega_k nonempty)``."""
        top = min(float(self.Mv.max()), float(self.Mg.max()))
        if top <= 0:
            return None
        la = math.log(self.a)
        hi = math.floor(math.log(top) / la) + 1
        while hi > -10_000 and not apow(self.a, hi) < top:
            hi -= 1
        # Gamma needs a cell with v <= a**(k+1)
        lo = math.floor(math.log(float(self.v.values.min())) / la) - 2
        return (min(lo, hi), hi)


def _omega(ctx: OmegaContext, k: int) -> OmegaFamily:
    d = ctx.domain
    lam = apow(ctx.a, k)
    R = cz_from_levels(ctx.v_levels, lam)
    S = cz_from_levels(ctx.g_levels, lam)
    lr, ls = R.labels(d), S.labels(d)
    both = (lr >= 0) & (ls >= 0)
    pairs = np.unique(lr[both].astype(np.int64) * max(len(S), 1) + ls[both])
    chosen: dict[DyadicCube, str] = {}
    for code in pairs:
        r, s = R.cubes[code // max(len(S), 1)], S.cubes[code % max(len(S), 1)]
        if r == s:
            chosen[r] = "RS"
        elif s.gen < r.gen:
            chosen[s] = "S"
        else:
            chosen[r] = "R"
    order = sorted(chosen, key=lambda q: (-q.gen, q.cell_lower(d)))
    return OmegaFamily(k, ctx.a, tuple(order), tuple(chosen[q] for q in order),
                       np.zeros(len(order), dtype=bool), R.mask & S.mask, R, S)


def omega_decomposition(v: GridFunction, g: GridFunction, phi: YoungPhi, a: float, k: int,
                        grid_id: int = 0, ctx: OmegaContext | None = None) -> OmegaFamily:
    """Maximal cubes of ``{M_D v > a**k} cap {M_{phi,D} g > a**k}``.

    Each intersecting pair ``(R, S)`` of the two CZ families contributes the
    smaller of the two cubes.
    """
    ctx = ctx or OmegaContext(v, g, phi, a, grid_id)
    return ctx.family(k)


def cube_stats(w: GridFunction, q: DyadicCube) -> tuple[float, float, float]:
    """``(min, average, integral)`` of ``w`` over a cube inside the box."""
    row = cube_row(w.values, q, w.domain)
    s = float(row_sums(row))
    return float(row.min()), s / row.size, s * w.domain.cell_volume


def inf_bound_checks(fam: OmegaFamily, v: GridFunction, a1v: float) -> list[Check]:
    """``a**k / [v]_A1 <= inf_Q v`` on every cube of the family."""
    lo = fam.level / a1v
    return [Check("omega_inf", lo, cube_stats(v, q)[0], f"k={fam.k} {q.label()}") for q in fam.cubes]


def gamma_set(fam: OmegaFamily, v: GridFunction, a: float) -> OmegaFamily:
    """Flag the cubes holding at least one cell with ``v <= a**(k+1)``."""
    cap = apow(a, fam.k + 1)
    flags = np.array([cube_stats(v, q)[0] <= cap for q in fam.cubes], dtype=bool)
    return replace(fam, gamma=flags)


def chain_checks(fam: OmegaFamily, v: GridFunction, a1v: float) -> list[Check]:
    """``a^k/[v] <= inf v <= avg v <= [v] inf v <= [v] a^(k+1)`` on the Gamma cubes."""
    out = []
    lo, hi = fam.level / a1v, a1v * apow(fam.a, fam.k + 1)
    for q, flag in zip(fam.cubes, fam.gamma):
        if not flag:
            continue
        mn, avg, _ = cube_stats(v, q)
        w = f"k={fam.k} {q.label()}"
        out += [
            Check("chain_inf", lo, mn, w),
            Check("chain_avg", mn, avg, w),
            Check("chain_a1", avg, a1v * mn, w),
            Check("chain_top", a1v * mn, hi, w),
        ]
    return out


# -- lemmas on the families --------------------------------------------------------


def vk_values(v: GridFunction, r: float, a: float, phi: YoungPhi, k: int) -> np.ndarray:
    """Cells of ``v_k = min(v**r, b_{k+1})``."""
    return np.minimum(v.values**r, b_value(a, phi, k + 1))


def lemma23_check(fam: OmegaFamily, v: GridFunction, phi: YoungPhi, a: float, k: int,
                  a1v: float) -> list[Check]:
    """``b_k / [v]^r <= avg_Q v_k <= b_{k+1}`` for every cube of ``Omega_l``, ``l >= k``."""
    if fam.k < k:
        raise ValueError("the family level must be at least k")
    r = phi.r
    vk = vk_values(v, r, a, phi, k)
    lo, hi = b_value(a, phi, k) / a1v**r, b_value(a, phi, k + 1)
    out = []
    for q in fam.cubes:
        row = cube_row(vk, q, v.domain)
        avg = float(row_sums(row)) / row.size
        w = f"l={fam.k} k={k} {q.label()}"
        out += [Check("lemma23_lower", lo, avg, w), Check("lemma23_upper", avg, hi, w)]
    return out


@dataclass(frozen=True)
class Lemma24Constants:
    p: float
    eta: float
    log_C: float

    @property
    def C(self) -> float:
        return apow(math.e, self.log_C)

    def bound(self, mass, t: int, k: int, a: float, r: float):
        """``C * mass * a^{(t-k) r eta}``, formed in logs so huge ``a`` stays finite."""
        with np.errstate(over="ignore"):
            return mass * np.exp(self.log_C + (t - k) * r * self.eta * math.log(a))


def lemma24_constants(phi: YoungPhi, a: float, ainf_vr: AInfParams, a1v: float, a1vr: float,
                      p: float | None = None) -> Lemma24Constants:
    """Explicit constant of the ``v_t(E)`` decay bound.

    Holder with ``p, p'``, the level-set bound for ``v^r`` at height
    ``a^{kr}/[v]^r``, ``inf_Q v <= a^{t+1}`` on Gamma cubes,
    ``b_{t+1} <= phi(a) b_t`` and ``b_t |Q| <= [v]^r v_t(Q)`` give
    ``C = C0^{1/p'} phi(a) [v]^r ([v]^r [v^r] a^r)^eta`` with
    ``eta = 1/(p'(1-eps))``.
    """
    eps = ainf_vr.eps
    p = 2.0 / eps if p is None else p
    if not p > 1.0 / eps:
        raise ValueError("p must exceed 1/eps")
    pp = p / (p - 1.0)
    eta = 1.0 / (pp * (1.0 - eps))
    r = phi.r
    la = math.log(a)
    log_phi = r * la + phi.delta * math.log1p(la)
    log_C = (math.log(ainf_vr.C) / (1.0 - eps) / pp + log_phi + r * math.log(a1v)
             + eta * (r * math.log(a1v) + math.log(a1vr) + r * la))
    return Lemma24Constants(p, eta, log_C)


def lemma24_check(cube: DyadicCube, t: int, k: int, v: GridFunction, Mv: np.ndarray,
                  phi: YoungPhi, a: float, const: Lemma24Constants) -> Check:
    """``v_t(Q cap {M_D v > a^k}) <= C v_t(Q) a^{(t-k) r eta}`` for a Gamma cube at level t."""
    d = v.domain
    vt = vk_values(v, phi.r, a, phi, t)
    row = cube_row(vt, cube, d)
    inE = cube_row(Mv, cube, d) > apow(a, k)
    lhs = float(row_sums(np.where(inE, row, 0.0))) * d.cell_volume
    vtq = float(row_sums(row)) * d.cell_volume
    rhs = float(const.bound(vtq, t, k, a, phi.r))
    return Check("lemma24", lhs, rhs, f"t={t} k={k} {cube.label()}")


# -- principal cubes ---------------------------------------------------------------


@dataclass
class PrincipalForest:
    N: int
    a: float
    alpha: float
    phi: YoungPhi
    ks: np.ndarray
    cubes: list[DyadicCube]
    avg_u: np.ndarray
    log_mu: np.ndarray
    ancestors: list[list[int]] = field(repr=False)
    G: list[list[int]] = field(repr=False)
    parent: np.ndarray = field(repr=False)

    @property
    def principal(self) -> np.ndarray:
        return self.parent > -2

    @property
    def P(self) -> list[int]:
        return [i for i in range(len(self.cubes)) if self.parent[i] > -2]

    def __len__(self):
        return len(self.cubes)

    def node_label(self, i: int) -> str:
        return f"k={int(self.ks[i])} {self.cubes[i].label()}"

    def recheck(self) -> list[Check]:
        """Re-evaluate the selection inequalities on every non-root principal cube."""
        out = []
        for i in self.P:
            y = int(self.parent[i])
            if y < 0:
                continue
            out.append(Check("forest_exceeds", float(self.log_mu[y]), float(self.log_mu[i]),
                             self.node_label(i), strict=True))
            for z in self.ancestors[i]:
                if self.cubes[z].gen <= self.cubes[y].gen:
                    out.append(Check("forest_first", float(self.log_mu[z]), float(self.log_mu[y]),
                                     self.node_label(i)))
        return out


def log_mu(k, avg_u, a: float, alpha: float, phi: YoungPhi):
    """``log( b_k / a^(alpha r k) * avg_Q u )``."""
    k = np.asarray(k, dtype=np.float64)
    la = math.log(a)
    logb = phi.r * k * la - phi.delta * np.log1p(np.maximum(-k, 0.0) * la)
    return logb - alpha * phi.r * k * la + np.log(avg_u)


def principal_forest(families: dict[int, OmegaFamily], u: GridFunction, phi: YoungPhi,
                     a: float, alpha: float, N: int) -> PrincipalForest:
    """Principal cubes of the Gamma cubes at levels ``k >= N``.

    ``G_0`` holds the maximal cubes.  A pair joins ``G_{n+1}`` when it lies
    strictly inside some ``G_n`` cube ``Q``, its mu exceeds ``mu(Q)``, and
    every Gamma cube strictly between them (``Q`` included) has mu at most
    ``mu(Q)``.  All pairs meeting the conditions join, so two incomparable
    descendants of one ancestor may both be selected.
    """
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    d = u.domain
    ks, cubes = [], []
    for k in sorted(families):
        if k < N:
            continue
        fam = families[k]
        for q, flag in zip(fam.cubes, fam.gamma):
            if flag:
                ks.append(k)
                cubes.append(q)
    ks_arr = np.array(ks, dtype=np.int64)
    avg = np.array([cube_stats(u, q)[1] for q in cubes])
    mu = log_mu(ks_arr, avg, a, alpha, phi) if cubes else np.zeros(0)
    by_cube: dict[DyadicCube, list[int]] = {}
    for i, q in enumerate(cubes):
        by_cube.setdefault(q, []).append(i)
    top = max((q.gen for q in cubes), default=0)
    ancestors = []
    for q in cubes:
        anc, c = [], q
        while c.gen < top:
            c = c.parent(d)
            anc += by_cube.get(c, [])
        ancestors.append(anc)
    parent = np.full(len(cubes), -2, dtype=np.int64)
    G = [[i for i in range(len(cubes)) if not ancestors[i]]]
    parent[G[0]] = -1
    while G[-1]:
        current = set(G[-1])
        nxt = []
        for i, anc in enumerate(ancestors):
            for y in anc:
                if y not in current or not mu[i] > mu[y]:
                    continue
                gy = cubes[y].gen
                if all(mu[z] <= mu[y] for z in anc if cubes[z].gen <= gy):
                    nxt.append(i)
                    if parent[i] == -2:
                        parent[i] = y
                    break
        G.append(nxt)
    G.pop()
    return PrincipalForest(N, float(a), float(alpha), phi, ks_arr, cubes, avg, mu, ancestors, G, parent)
