"""Acceptance criteria, one test each, with wall-clock budgets.

Every test appends a single ``criterion N: PASS|FAIL ...`` line which is
echoed immediately and again in the terminal summary.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from omlab.audits import full_audit, setup
from omlab.decomp import cz_cubes, principal_forest
from omlab.generators import KINDS, gen_instance, rng_for
from omlab.geometry import Domain, GridFunction, containing_cube, cover_cube, cube_row
from omlab.harness import SweepConfig, instance_seed, mr_levelset_identity_check, sweep
from omlab.orlicz import dyadic_maximal, luxemburg_average, luxemburg_rows
from omlab.weights import bk_sequence
from omlab.young import LINEAR, YoungPhi

from oracles import grid_digits, naive_maximal

LINES: list[str] = []
PHIS4 = [LINEAR, YoungPhi(2, 0), YoungPhi(1, 1), YoungPhi(2, 2)]
_sweeps: dict = {}


def record(capsys, n: int, ok: bool, elapsed: float, budget: float, detail: str):
    ok = ok and elapsed < budget
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({elapsed:.2f}s / {budget:g}s) {detail}"
    LINES.append(line)
    with capsys.disabled():
        print("\n" + line)
    return ok


def test_criterion_1_luxemburg_closed_form(capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(500):
        rng = rng_for(1, i)
        r = float(rng.choice([1, 2, 3]))
        d = Domain(int(rng.integers(1, 3)), 0, -int(rng.integers(1, 4)))
        f = GridFunction(d, rng.uniform(0, 10, d.shape) * (rng.uniform(size=d.shape) < 0.7))
        gen = int(rng.integers(d.gen_min, 1))
        cell = tuple(int(x) for x in rng.integers(0, d.n_side, d.dim))
        q = containing_cube(d, 0, gen, cell)
        row = cube_row(f.values, q, d)
        exact = (math.fsum((row**r).tolist()) / row.size) ** (1 / r)
        got = luxemburg_average(f, q, YoungPhi(r, 0))
        if exact > 0:
            worst = max(worst, abs(got - exact) / exact)
        else:
            assert got == 0
    elapsed = time.perf_counter() - t0
    assert record(capsys, 1, worst <= 1e-10, elapsed, 5, f"max rel err {worst:.2e} over 500 cases")


def _kernel(phi):
    return lambda row, length: float(luxemburg_rows(row[None, :], phi, length)[0])


def test_criterion_2_maximal_oracle(capsys):
    t0 = time.perf_counter()
    domains = [Domain(1, K, K - j) for K in (0, 1) for j in range(1, 7)]  # 2..64 cells
    compared = mismatched = 0
    drift = 0.0
    for i in range(100):
        d = domains[i % len(domains)]
        rng = rng_for(2, i)
        vals = rng.uniform(0, 10, d.shape) * (rng.uniform(size=d.shape) < 0.6)
        f = GridFunction(d, vals)
        for phi in PHIS4:
            for grid in range(3):
                got = dyadic_maximal(f, phi, grid).values
                ref = naive_maximal(vals, d, phi.r, phi.delta, grid, _kernel(phi))
                compared += 1
                mismatched += not np.array_equal(got, ref)
                if i < 12 and grid == 0:
                    # kernel independence: plain-Python bisection with fsum
                    slow = naive_maximal(vals, d, phi.r, phi.delta, grid)
                    drift = max(drift, float(np.max(np.abs(got - slow) / np.maximum(slow, 1e-300))))
    elapsed = time.perf_counter() - t0
    assert record(capsys, 2, mismatched == 0 and drift <= 1e-11, elapsed, 30,
                  f"{compared} fields on {len(domains)} domains, {mismatched} mismatches; "
                  f"plain-Python kernel max rel diff {drift:.1e}")


def test_criterion_3_cz(capsys):
    t0 = time.perf_counter()
    bad = 0
    for i in range(200):
        rng = rng_for(3, i)
        d = Domain(int(rng.integers(1, 3)), 1, -int(rng.integers(1, 4)))
        f = GridFunction(d, rng.exponential(2.0, d.shape) * (rng.uniform(size=d.shape) < 0.5))
        phi = PHIS4[i % 4]
        lam = float(rng.uniform(0.05, 1.2) * max(f.values.max(), 1e-3))
        cz = cz_cubes(f, phi, lam)
        level = dyadic_maximal(f, phi, 0, cz.gen_range).values > lam
        cover = np.zeros(d.shape, dtype=int)
        for q in cz.cubes:
            cover[tuple(slice(a, b) for a, b in q.cell_bounds(d))] += 1
        ok = np.array_equal(cover > 0, level) and cover.max(initial=0) <= 1
        ok = ok and bool(np.all(cz.values > lam)) and bool(np.all(cz.parent_values <= lam))
        bad += not ok
    elapsed = time.perf_counter() - t0
    assert record(capsys, 3, bad == 0, elapsed, 30, f"200 decompositions, {bad} violations")


def test_criterion_4_covering(capsys):
    t0 = time.perf_counter()
    bad, worst = 0, Fraction(0)
    for i in range(1000):
        rng = rng_for(4, i)
        n = 1 + i % 2
        side = Fraction(int(rng.integers(1, 10**6)), 10**int(rng.integers(3, 7)))
        lower = tuple(Fraction(int(rng.integers(-10**6, 10**6)), 10**5) for _ in range(n))
        gid, q = cover_cube(lower, side)
        # the real grid 2^k (j + [0,1) + (-1)^k t/3), rebuilt from the id digits
        s = Fraction(2) ** q.gen
        lo = [s * (c + Fraction((-1) ** (q.gen % 2) * t, 3)) for c, t in zip(q.coords, grid_digits(gid, n))]
        ok = all(a <= x and x + side <= a + s for a, x in zip(lo, lower)) and s <= 3 * side
        worst = max(worst, s / side)
        bad += not ok
    elapsed = time.perf_counter() - t0
    assert record(capsys, 4, bad == 0, elapsed, 5, f"1000 covers, max side ratio {float(worst):.3f}")


def test_criterion_5_bk(capsys):
    t0 = time.perf_counter()
    bad = 0
    for a in (math.e, 3.0, 5.0, 10.0):
        L = Fraction(math.log(a))
        for r in (1, 2):
            for delta in (0, 1, 2):
                seq = bk_sequence(a, YoungPhi(r, delta))
                for row in seq.rows:
                    k = row.k
                    f = (1 + max(0, -k) * L) / (1 + max(0, -k - 1) * L)
                    # a^r <= a^r f^delta <= a^r (1+L)^delta, exactly
                    ok = row.ok and 1 <= f**delta <= (1 + L) ** delta
                    lower_eq = f**delta == 1
                    upper_eq = f**delta == (1 + L) ** delta
                    if delta == 0:
                        ok = ok and lower_eq and upper_eq
                    if k >= 0:
                        ok = ok and lower_eq and row.at_lower
                    if k == -1:
                        ok = ok and upper_eq and row.at_upper
                    bad += not ok
    elapsed = time.perf_counter() - t0
    assert record(capsys, 5, bad == 0, elapsed, 1, f"4 a x 6 phi x 81 k, {bad} violations")


def test_criterion_6_lemma_audits(capsys):
    t0 = time.perf_counter()
    d = Domain(1, 3, -7)
    phis = [LINEAR, YoungPhi(2, 0), YoungPhi(1, 1), YoungPhi(2, 1)]
    failed, slack = 0, {}
    for i in range(100):
        phi = phis[i % 4]
        inst = gen_instance(KINDS[i % len(KINDS)], d, instance_seed(6, i), r=phi.r, cap_vr=10.0)
        s = setup(inst.f, inst.u, inst.v, phi, t=0.5)
        rep = full_audit(s, ("lemma11", "lemma23", "lemma24"))
        failed += sum(t.failed for t in rep.tallies.values())
        for name, t in rep.tallies.items():
            if t.worst is not None:
                slack[name] = min(slack.get(name, math.inf), t.worst.rel_slack)
    elapsed = time.perf_counter() - t0
    detail = ", ".join(f"{k} {v:.2e}" for k, v in sorted(slack.items()))
    assert record(capsys, 6, failed == 0, elapsed, 120,
                  f"100 instances, {failed} violations; min rel slack: {detail}")


def test_criterion_7_mr_identity(capsys):
    t0 = time.perf_counter()
    bad = 0
    for i in range(100):
        rng = rng_for(7, i)
        r = float(rng.choice([1, 2, 3]))
        d = Domain(1 + i % 2, 1, -3 + (i % 2))
        inst = gen_instance(KINDS[i % len(KINDS)], d, int(rng.integers(2**31)), r=r)
        t = float(np.exp(rng.uniform(-4, 3)))
        bad += not mr_levelset_identity_check(inst.f, inst.v, r, t, int(rng.integers(0, 3**d.dim)))
    elapsed = time.perf_counter() - t0
    assert record(capsys, 7, bad == 0, elapsed, 30, f"100 cases, {bad} mask mismatches")


def _full_sweep(threads: int):
    if threads not in _sweeps:
        t0 = time.perf_counter()
        rep = sweep(SweepConfig(threads=threads))
        _sweeps[threads] = (rep, rep.to_csv(), time.perf_counter() - t0)
    return _sweeps[threads]


def test_criterion_8_sweep(capsys):
    rep, _, elapsed = _full_sweep(1)
    c = rep.checks
    ok = rep.ok and len(rep.instances) == 200 and len(rep.rows) == (200 + 20) * 12
    detail = (f"sup_ratio {rep.sup_ratio:.4g}, refined {rep.refined_sup_ratio:.4g} "
              f"(change {rep.refine_change:.1%}), dyadic sub-suite sup {rep.dyadic_sup_ratio:.6f}, "
              f"infinite {rep.infinite}, checks {c}")
    assert record(capsys, 8, ok, elapsed, 600, detail)


def test_criterion_9_claims(capsys):
    t0 = time.perf_counter()
    d = Domain(1, 3, -7)
    failed, ratios, nonfinite = 0, [], 0
    for i in range(50):
        phi = (LINEAR, YoungPhi(2, 0), YoungPhi(1, 1))[i % 3]
        inst = gen_instance(KINDS[i % len(KINDS)], d, instance_seed(9, i), r=phi.r)
        s = setup(inst.f, inst.u, inst.v, phi, t=0.5)
        rep = full_audit(s, ("forest", "claims"))
        failed += sum(t.failed for t in rep.tallies.values())
        if rep.stats.get("gamma_cubes", 0):
            ratio = rep.stats["claim1_ratio"]
            nonfinite += not math.isfinite(ratio)
            ratios.append(ratio)
    special = 0
    for i in range(10):
        inst = gen_instance(KINDS[i % len(KINDS)], d, instance_seed(90, i))
        one = GridFunction(d, np.ones(d.shape))
        s = setup(inst.f, one, inst.v, LINEAR, t=0.5)
        forest = principal_forest(s.families, one, LINEAR, s.a, s.alpha, s.N)
        special += sorted(forest.P) != sorted(forest.G[0])
    elapsed = time.perf_counter() - t0
    ok = failed == 0 and nonfinite == 0 and special == 0
    assert record(capsys, 9, ok, elapsed, 300,
                  f"50 instances, {failed} violations, max claim-1 ratio {max(ratios, default=0):.3g}, "
                  f"u=1 special case mismatches {special}/10")


def test_criterion_10_determinism(capsys):
    _, csv1, _ = _full_sweep(1)
    t0 = time.perf_counter()
    _, csv2, _ = _full_sweep(2)
    rerun = sweep(SweepConfig(n_instances=10, domains=((1, 3, -7),), dyadic_instances=2, threads=3))
    again = sweep(SweepConfig(n_instances=10, domains=((1, 3, -7),), dyadic_instances=2, threads=1))
    elapsed = time.perf_counter() - t0
    ok = csv1 == csv2 and rerun.to_csv() == again.to_csv() and rerun.to_json() == again.to_json()
    assert record(capsys, 10, ok, elapsed, 600,
                  f"full sweep CSV threads 1 vs 2 identical: {csv1 == csv2} ({len(csv1)} bytes)")
