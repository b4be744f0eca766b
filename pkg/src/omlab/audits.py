"""Audits of the level-set lemmas, the Omega_k families and the principal-cube claims.

One :class:`AuditSetup` fixes an instance ``(f, u, v)``, a threshold ``t``
(so ``g = f v / t``), the level base ``a``, ``alpha`` and the cutoff ``N``,
and builds every family and constant the audits need.  All constants are the
explicit ones produced by the proof chain; nothing is tuned to the data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .decomp import (
    Lemma24Constants,
    OmegaContext,
    OmegaFamily,
    PrincipalForest,
    apow,
    gamma_set,
    lemma24_constants,
    principal_forest,
)
from .geometry import DyadicCube, GridFunction, cube_row, layout, level_rows
from .report import AuditReport, Check
from .summation import compensated_sum, row_sums
from .weights import AInfParams, a1_constant, ainf_params, b_value
from .young import YoungPhi, conjugate_weight, power_bound_constant

LEVELSET_QUANTILES = (0.0, 0.25, 0.5, 0.75, 0.95)


@dataclass
class AuditSetup:
    f: GridFunction
    u: GridFunction
    v: GridFunction
    phi: YoungPhi
    t: float
    grid_id: int
    g: GridFunction
    a1u: float
    a1v: float
    a1vr: float
    ainf_u: AInfParams
    ainf_vr: AInfParams
    l24: Lemma24Constants
    a: float
    alpha: float
    beta: float
    gamma: float
    ctx: OmegaContext = field(repr=False)
    families: dict = field(repr=False)
    N: int | None
    khi: int | None

    @property
    def domain(self):
        return self.f.domain

    @property
    def r(self) -> float:
        return self.phi.r

    def params(self) -> dict:
        return {
            "t": self.t, "grid": self.grid_id, "a": self.a, "alpha": self.alpha,
            "beta": self.beta, "gamma": self.gamma, "eta": self.l24.eta, "p": self.l24.p,
            "N": self.N, "k_max": self.khi, "a1_u": self.a1u, "a1_v": self.a1v,
            "a1_vr": self.a1vr, "ainf_vr": [self.ainf_vr.C, self.ainf_vr.eps],
            "ainf_u": [self.ainf_u.C, self.ainf_u.eps], "C_lemma24": self.l24.C,
        }


def default_a(phi: YoungPhi, dim: int, alpha: float, beta: float) -> float:
    """``2^n + 1`` for ``delta = 0``; ``max(2^n, L) + 1`` otherwise.

    When ``L`` is so large that adding 1 leaves the decay exponent at zero in
    floating point, ``2 max(2^n, L)`` is used instead.
    """
    base = float(2**dim)
    if phi.delta == 0:
        return base + 1.0
    # L = (delta/beta)**(delta/(r(alpha-1)-beta)), in logs to spot overflow
    log_l = phi.delta / (phi.r * (alpha - 1.0) - beta) * math.log(phi.delta / beta)
    if log_l > 300:
        raise ValueError("default a overflows; pass a explicitly")
    top = max(base, math.exp(log_l))
    a = top + 1.0
    if gamma_exponent(phi, a, alpha, beta) <= 1e-9:
        a = 2.0 * top
    return a


def gamma_exponent(phi: YoungPhi, a: float, alpha: float, beta: float) -> float:
    """Decay exponent of the principal-cube averages along the doubling sequence."""
    if phi.delta == 0:
        return (alpha - 1.0) * phi.r
    c0 = power_bound_constant(phi, beta)
    return (alpha * phi.r - phi.r - beta) - math.log(c0) / math.log(a)


def setup(f: GridFunction, u: GridFunction, v: GridFunction, phi: YoungPhi, t: float = 1.0,
          a: float | None = None, alpha: float | None = None, beta: float | None = None,
          p: float | None = None, N: int | None = None, grid_id: int = 0) -> AuditSetup:
    if not t > 0:
        raise ValueError("t must be positive")
    d = f.domain
    grids = (grid_id,)
    r = phi.r
    vr = v.with_values(v.values**r)
    a1u = a1_constant(u, grids).constant
    a1v = a1_constant(v, grids).constant
    a1vr = a1_constant(vr, grids).constant
    ainf_vr = ainf_params(vr, grids)
    ainf_u = ainf_params(u, grids)
    # eta only depends on eps and p; a enters the constant afterwards
    eps = ainf_vr.eps
    p = 2.0 / eps if p is None else p
    eta = 1.0 / ((p / (p - 1.0)) * (1.0 - eps))
    alpha = (1.0 + eta) / 2.0 if alpha is None else alpha
    if not 1.0 < alpha < eta:
        raise ValueError(f"alpha must lie in (1, eta={eta})")
    beta = r * (alpha - 1.0) / 2.0 if beta is None else beta
    if not 0.0 < beta < r * (alpha - 1.0):
        raise ValueError("beta must lie in (0, r(alpha-1))")
    a = default_a(phi, d.dim, alpha, beta) if a is None else float(a)
    if not a > 2**d.dim:
        raise ValueError("a must exceed 2**n")
    gam = gamma_exponent(phi, a, alpha, beta)
    if not gam > 0:
        raise ValueError("a too small: the decay exponent gamma is not positive")
    l24 = lemma24_constants(phi, a, ainf_vr, a1v, a1vr, p)
    g = f.with_values(f.values * v.values / t)
    ctx = OmegaContext(v, g, phi, a, grid_id)
    families: dict[int, OmegaFamily] = {}
    kb = ctx.k_bounds()
    khi = None
    if kb is not None:
        lo, khi = kb
        for k in range(lo, khi + 1):
            families[k] = gamma_set(ctx.family(k), v, a)
        if N is None:
            # Gamma_k is empty below lo, so any smaller cutoff gives the same Gamma_N
            nonempty = [k for k, fam in families.items() if len(fam)]
            N = min(nonempty) if nonempty else None
    return AuditSetup(f, u, v, phi, t, grid_id, g, a1u, a1v, a1vr, ainf_u, ainf_vr, l24, a,
                      alpha, beta, gam, ctx, families, N, khi)


# -- grouped rows --------------------------------------------------------------------


def rows_by_gen(arr: np.ndarray, cubes, d) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """``gen -> (cube indices, stacked rows)`` for cubes inside the box."""
    groups: dict[int, list[int]] = {}
    for i, q in enumerate(cubes):
        groups.setdefault(q.gen, []).append(i)
    return {
        k: (np.array(ix), np.stack([cube_row(arr, cubes[i], d) for i in ix]))
        for k, ix in groups.items()
    }


# -- Omega families: lower bound, Gamma chain, truncated averages, level-set decay ----


def audit_omega(s: AuditSetup, report: AuditReport | None = None) -> AuditReport:
    """``a^k/[v] <= inf v`` on every Omega_k cube, the full chain on Gamma cubes,
    disjointness and ``union = Omega_k`` cellwise."""
    rep = report or AuditReport("omega")
    d = s.domain
    for k, fam in sorted(s.families.items()):
        if not len(fam):
            continue
        cover = np.zeros(d.shape, dtype=np.int64)
        for q in fam.cubes:
            cover[tuple(slice(max(lo, 0), min(hi, d.n_side)) for lo, hi in q.cell_bounds(d))] += 1
        rep.add(Check("omega_disjoint", float(cover.max()), 1.0, f"k={k}"))
        rep.add(Check("omega_union", float(np.count_nonzero((cover > 0) != fam.mask)), 0.0, f"k={k}"))
        lo, hi = fam.level / s.a1v, s.a1v * apow(s.a, k + 1)
        for gen, (ix, rows) in rows_by_gen(s.v.values, fam.cubes, d).items():
            mn = rows.min(axis=1)
            avg = row_sums(rows) / rows.shape[1]
            wit = lambda i, ix=ix: f"k={k} {fam.cubes[ix[i]].label()}"
            rep.add_many("omega_inf", np.full(mn.shape, lo), mn, wit)
            gm = fam.gamma[ix]
            rep.add_many("gamma_flag", np.where(gm, mn, 0.0), np.where(gm, apow(s.a, k + 1), 1.0), wit)
            gi = np.flatnonzero(gm)
            if gi.size == 0:
                continue
            wg = lambda i, ix=ix, gi=gi: f"k={k} {fam.cubes[ix[gi[i]]].label()}"
            m, av = mn[gi], avg[gi]
            rep.add_many("chain_inf", np.full(m.shape, lo), m, wg)
            rep.add_many("chain_avg", m, av, wg)
            rep.add_many("chain_a1", av, s.a1v * m, wg)
            rep.add_many("chain_top", s.a1v * m, np.full(m.shape, hi), wg)
    return rep


def audit_lemma23(s: AuditSetup, report: AuditReport | None = None, max_gap: int | None = None) -> AuditReport:
    """``b_k/[v]^r <= avg_Q v_k <= b_{k+1}`` on every Omega_l cube and every ``N <= k <= l``."""
    rep = report or AuditReport("lemma23")
    if s.N is None:
        return rep
    d, r = s.domain, s.r
    vr = s.v.values**r
    for l, fam in sorted(s.families.items()):
        if l < s.N or not len(fam):
            continue
        kmin = s.N if max_gap is None else max(s.N, l - max_gap)
        for gen, (ix, rows) in rows_by_gen(vr, fam.cubes, d).items():
            n = rows.shape[1]
            for k in range(kmin, l + 1):
                cap = b_value(s.a, s.phi, k + 1)
                avg = row_sums(np.minimum(rows, cap)) / n
                lo = b_value(s.a, s.phi, k) / s.a1v**r
                wit = lambda i, ix=ix, k=k: f"l={l} k={k} {fam.cubes[ix[i]].label()}"
                rep.add_many("lemma23_lower", np.full(avg.shape, lo), avg, wit)
                rep.add_many("lemma23_upper", avg, np.full(avg.shape, cap), wit)
    return rep


def audit_lemma24(s: AuditSetup, report: AuditReport | None = None, extra: int = 3) -> AuditReport:
    """``v_t(Q cap {M_D v > a^k}) <= C v_t(Q) a^{(t-k) r eta}`` on every Gamma cube, for
    ``k`` from ``N`` to ``extra`` levels past the last nonempty Omega_k."""
    rep = report or AuditReport("lemma24")
    if s.N is None:
        return rep
    d, r = s.domain, s.r
    vr = s.v.values**r
    vol = d.cell_volume
    for t, fam in sorted(s.families.items()):
        if t < s.N or not fam.gamma.any():
            continue
        cubes = [q for q, gm in zip(fam.cubes, fam.gamma) if gm]
        vt = np.minimum(vr, b_value(s.a, s.phi, t + 1))
        mv_rows = rows_by_gen(s.ctx.Mv, cubes, d)
        for gen, (ix, rows) in rows_by_gen(vt, cubes, d).items():
            mrows = mv_rows[gen][1]
            tot = row_sums(rows) * vol
            for k in range(s.N, s.khi + extra + 1):
                lhs = row_sums(np.where(mrows > apow(s.a, k), rows, 0.0)) * vol
                rhs = s.l24.bound(tot, t, k, s.a, r)
                wit = lambda i, ix=ix, k=k: f"t={t} k={k} {cubes[ix[i]].label()}"
                rep.add_many("lemma24", lhs, rhs, wit)
    return rep


def audit_lemma11(w: GridFunction, params: AInfParams, grids=(0,), report: AuditReport | None = None,
                  quantiles=LEVELSET_QUANTILES) -> AuditReport:
    """``|{w > lam} cap Q| <= C0 |Q| (avg_Q w / lam)^(1+xi)`` on every in-box cube and
    ``lam`` just below several order statistics of ``w`` on the cube."""
    rep = report or AuditReport("lemma11")
    d = w.domain
    vol = d.cell_volume
    for g in grids:
        for k in range(d.gen_min, d.box_exp + 1):
            lay = layout(d, g, k)
            for sl, rows in level_rows(w.values, lay, full_only=True):
                n = rows.shape[1]
                srt = np.sort(rows, axis=1)
                avg = row_sums(rows) / n
                for qt in quantiles:
                    j = min(int(qt * n), n - 1)
                    lam = srt[:, j] * (1.0 - 1e-9)
                    lhs = np.count_nonzero(rows > lam[:, None], axis=1) * vol
                    rhs = params.C0 * n * vol * (avg / lam) ** (1.0 + params.xi)
                    wit = lambda i, lay=lay, sl=sl, lam=lam: _block_label(lay, sl, i) + f" lam={lam[i]!r}"
                    rep.add_many("lemma11", lhs, rhs, wit)
    return rep


def _block_label(lay, sl, i) -> str:
    counts = tuple(x.stop - x.start for x in sl)
    idx = np.unravel_index(i, counts)
    return lay.cube(tuple(x.start + int(j) for x, j in zip(sl, idx))).label()


# -- principal cubes and the two claims ----------------------------------------------


@dataclass
class ClaimConstants:
    K1: float
    C_block: float
    C2: float
    C_h: float
    C_theorem: float


def claim_constants(s: AuditSetup) -> ClaimConstants:
    r, a = s.r, s.a
    phia = s.phi(a)
    decay = 1.0 - a ** (-r * (s.l24.eta - s.alpha))
    K1 = s.l24.C * phia * s.a1v**r / decay
    nu = s.ainf_u.eps
    C_block = s.ainf_u.C * (2.0 * s.a1u**2) ** nu
    C2 = C_block / (1.0 - a ** (-s.gamma * nu))
    C_h = 4.0 * C2 * s.a1u
    C_theorem = phia * s.a1v**r * K1 * phia * C_h
    return ClaimConstants(K1, C_block, C2, C_h, C_theorem)


def build_forest(s: AuditSetup) -> PrincipalForest | None:
    if s.N is None:
        return None
    return principal_forest(s.families, s.u, s.phi, s.a, s.alpha, s.N)


def audit_forest(s: AuditSetup, report: AuditReport | None = None) -> AuditReport:
    """Re-evaluate the principal-cube selection on the built forest."""
    rep = report or AuditReport("forest")
    forest = build_forest(s)
    if forest is None or not len(forest):
        rep.stats.update({"gamma_cubes": 0, "principal": 0})
        return rep
    rep.extend(forest.recheck())
    rep.stats.update({"gamma_cubes": len(forest), "principal": len(forest.P),
                      "generations": len(forest.G), "N": s.N})
    return rep


def _node_terms(s: AuditSetup, forest: PrincipalForest):
    """Per node: ``u(Q)``, ``|Q|``, ``v_k(Q)`` and ``v_t(Q)`` at its own level."""
    d = s.domain
    vol = d.cell_volume
    vr = s.v.values**s.r
    uQ, size, vk = [], [], []
    for k, q in zip(forest.ks, forest.cubes):
        urow = cube_row(s.u.values, q, d)
        vrow = cube_row(vr, q, d)
        uQ.append(float(row_sums(urow)) * vol)
        size.append(urow.size * vol)
        vk.append(float(row_sums(np.minimum(vrow, b_value(s.a, s.phi, int(k) + 1)))) * vol)
    return np.array(uQ), np.array(size), np.array(vk)


def _owner(forest: PrincipalForest) -> np.ndarray:
    """Index of the smallest principal cube containing each node (pairs sharing a cube
    prefer the node itself, then the largest level not above the node's)."""
    principal = forest.principal
    by_cube: dict[DyadicCube, list[int]] = {}
    for i, q in enumerate(forest.cubes):
        if principal[i]:
            by_cube.setdefault(q, []).append(i)
    out = np.full(len(forest), -1, dtype=np.int64)
    for i, q in enumerate(forest.cubes):
        if principal[i]:
            out[i] = i
            continue
        k = forest.ks[i]
        cands = by_cube.get(q, [])
        if not cands:
            anc = [j for j in forest.ancestors[i] if principal[j]]
            if not anc:
                continue
            gmin = min(forest.cubes[j].gen for j in anc)
            cands = [j for j in anc if forest.cubes[j].gen == gmin]
        below = [j for j in cands if forest.ks[j] <= k]
        pick = below if below else cands
        out[i] = max(pick, key=lambda j: (forest.ks[j], -j))
    return out


def audit_claims(s: AuditSetup, report: AuditReport | None = None,
                 max_points: int = 256) -> AuditReport:
    """Principal-cube sum bound, doubling sequence, decay inequality, block sums, ``h <= C u``.

    Also re-evaluates the principal-cube selection, the first step of the
    main chain and the assembled dyadic estimate.
    """
    rep = report or AuditReport("claims")
    forest = build_forest(s)
    if forest is None or not len(forest):
        rep.stats.update({"gamma_cubes": 0, "principal": 0})
        return rep
    d = s.domain
    vol = d.cell_volume
    cc = claim_constants(s)
    rep.extend(forest.recheck())
    uQ, size, vk = _node_terms(s, forest)
    terms = vk / size * uQ
    P = np.array(forest.P, dtype=np.int64)
    lhs1, rhs1 = compensated_sum(terms), compensated_sum(terms[P])
    rep.add(Check("claim1", lhs1, cc.K1 * rhs1, f"N={s.N}"))
    owner = _owner(forest)
    rep.add(Check("claim1_owner", float(np.count_nonzero(owner < 0)), 0.0, "nodes without principal"))
    for j in P:
        mine = np.flatnonzero(owner == j)
        rep.add(Check("claim1_block", compensated_sum(terms[mine]), cc.K1 * terms[j],
                      forest.node_label(int(j))))

    # main chain: uw({M g > v}) <= phi(a) [v]^r sum over all Gamma cubes
    w = conjugate_weight(s.v, s.phi).values
    level = s.ctx.Mg > s.v.values
    uw = compensated_sum(np.where(level, s.u.values * w, 0.0)) * vol
    rep.add(Check("main_chain", uw, s.phi(s.a) * s.a1v**s.r * lhs1, f"N={s.N}"))

    # the CZ cubes of g at each level and the cube of each principal node
    S_lab, S_cubes, S_avg_u, S_size = {}, {}, {}, {}
    for k in sorted(set(int(k) for k in forest.ks[P])):
        S = s.families[k].S
        S_lab[k] = S.labels(d)
        S_cubes[k] = S.cubes
        S_avg_u[k], S_size[k] = [], []
        ga = s.g.values / apow(s.a, k)
        for q in S.cubes:
            urow = cube_row(s.u.values, q, d)
            S_avg_u[k].append(float(row_sums(urow)) / urow.size)
            S_size[k].append(urow.size * vol)
            grow = s.phi.array(cube_row(ga, q, d))
            rep.add(Check("g_modular", 1.0, float(row_sums(grow)) / grow.size, f"k={k} {q.label()}",
                          strict=True))
    qt = {}
    h = np.zeros(d.shape)
    for j in P:
        k, q = int(forest.ks[j]), forest.cubes[j]
        box = tuple(slice(max(lo, 0), min(hi, d.n_side)) for lo, hi in q.cell_bounds(d))
        labs = S_lab[k][box]
        i = int(labs.flat[0])
        rep.add(Check("q_in_qtilde", float(np.count_nonzero(labs != i)), 0.0, forest.node_label(int(j))))
        qt[int(j)] = i
        qq = S_cubes[k][i]
        qbox = tuple(slice(max(lo, 0), min(hi, d.n_side)) for lo, hi in qq.cell_bounds(d))
        h[qbox] += uQ[j] / S_size[k][i]

    phig = s.phi.array(s.g.values)
    sum_p = compensated_sum(terms[P])
    int_h = compensated_sum(h * phig) * vol
    rep.add(Check("claim1_to_h", sum_p, s.phi(s.a) * int_h, f"N={s.N}"))
    uphig = compensated_sum(s.u.values * phig) * vol
    rep.add_many("h_bound", h.reshape(-1), cc.C_h * s.u.values.reshape(-1),
                 lambda i: f"cell={i}")
    rep.add(Check("theorem_dyadic", uw, cc.C_theorem * uphig, f"N={s.N}"))

    # doubling sequence and the block-sum bound on a sample of points
    groups: dict[tuple[int, int], list[int]] = {}
    for j in P:
        groups.setdefault((int(forest.ks[j]), qt[int(j)]), []).append(int(j))
    cells = np.flatnonzero(h.reshape(-1) > 0)
    if cells.size > max_points:
        cells = cells[np.linspace(0, cells.size - 1, max_points).astype(int)]
    levels = sorted(S_lab)
    nu = s.ainf_u.eps
    a, gam = s.a, s.gamma
    n_terms = []
    for x in cells:
        idx = np.unravel_index(int(x), d.shape)
        ux = float(s.u.values[idx])
        G, lab = [], {}
        for k in levels:
            i = int(S_lab[k][idx])
            if i >= 0 and (k, i) in groups:
                G.append(k)
                lab[k] = i
        if not G:
            continue
        C = lambda k: S_avg_u[k][lab[k]]
        km = [G[0]]
        for k in G[1:]:
            if C(k) > 2.0 * C(km[-1]):
                km.append(k)
        n_terms.append(len(km))
        wx = f"cell={int(x)}"
        for m, k in enumerate(km):
            rep.add(Check("km_a1", C(k), s.a1u * ux, f"{wx} m={m}"))
            rep.add(Check("km_growth", 2.0**m * C(km[0]), C(k), f"{wx} m={m}"))
            if m:
                rep.add(Check("km_doubling", 2.0 * C(km[m - 1]), C(k), f"{wx} m={m}", strict=True))
        for m, k0 in enumerate(km):
            k1 = km[m + 1] if m + 1 < len(km) else None
            F = [l for l in G if l >= k0 and (k1 is None or l < k1)]
            S_m, bound = 0.0, 0.0
            for l in F:
                rep.add(Check("km_between", C(l), 2.0 * C(k0), f"{wx} l={l}"))
                tq = C(l)
                for j in groups[(l, lab[l])]:
                    rep.add(Check("ec1", apow(a, (l - k0) * gam) / (2.0 * s.a1u) * tq, forest.avg_u[j],
                                  f"{wx} {forest.node_label(j)}", strict=True))
                    S_m += uQ[j] / (tq * S_size[l][lab[l]])
                bound += a ** ((k0 - l) * gam * nu)
            rep.add(Check("claim2_block", S_m, cc.C_block * bound, f"{wx} m={m}"))
            rep.add(Check("claim2", S_m, cc.C2, f"{wx} m={m}"))
    rep.stats.update({
        "gamma_cubes": len(forest), "principal": int(P.size), "G_levels": len(forest.G),
        "claim1_ratio": lhs1 / rhs1 if rhs1 > 0 else math.inf,
        "theorem_dyadic_ratio": uw / uphig if uphig > 0 else 0.0,
        "max_km_terms": max(n_terms, default=0), "points": int(cells.size),
    })
    return rep


AUDITS = ("omega", "forest", "lemma23", "lemma24", "lemma11", "claims")


def full_audit(s: AuditSetup, which=("omega", "lemma23", "lemma24", "lemma11", "claims")) -> AuditReport:
    unknown = set(which) - set(AUDITS)
    if unknown:
        raise ValueError(f"unknown audits {sorted(unknown)}")
    rep = AuditReport("+".join(which), s.params())
    if "omega" in which:
        audit_omega(s, rep)
    if "forest" in which and "claims" not in which:
        audit_forest(s, rep)
    if "lemma23" in which:
        audit_lemma23(s, rep)
    if "lemma24" in which:
        audit_lemma24(s, rep)
    if "lemma11" in which:
        audit_lemma11(s.v.with_values(s.v.values**s.r), s.ainf_vr, (s.grid_id,), rep)
    if "claims" in which:
        audit_claims(s, rep)
    return rep
