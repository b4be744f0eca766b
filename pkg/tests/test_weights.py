import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from omlab.geometry import Domain, DyadicCube, GridFunction
from omlab.weights import (
    a1_constant,
    ainf_params,
    ap_constant,
    b_value,
    bk_sequence,
    contained_cubes,
    levelset_bound_check,
    truncate,
)
from omlab.young import YoungPhi

from oracles import naive_a1, phi_value

D4 = Domain(1, 0, -2)
W = GridFunction(D4, [1, 1, 1, 2.0])


def weights(n):
    return arrays(np.float64, (n,), elements=st.floats(0.05, 50, allow_subnormal=False))


def test_a1_examples():
    c = a1_constant(GridFunction(D4, np.full(4, 3.0)))
    assert c.constant == 1.0
    c = a1_constant(W)
    assert c.constant == 1.5
    assert c.witness_cube == DyadicCube(0, -1, (1,))
    assert a1_constant(GridFunction(D4, W.values**2)).constant == 2.5
    with pytest.raises(ValueError):
        a1_constant(GridFunction(D4, [1, 0, 1, 1.0]))


@given(weights(16))
def test_a1_matches_naive(w):
    d = Domain(1, 1, -3)
    got = a1_constant(GridFunction(d, w)).constant
    assert got == pytest.approx(naive_a1(w, d), rel=1e-13)


@given(weights(16))
def test_a1_all_grids_dominates(w):
    d = Domain(1, 1, -3)
    f = GridFunction(d, w)
    assert a1_constant(f, "all").constant >= a1_constant(f).constant


def test_ap_examples():
    assert ap_constant(GridFunction(D4, np.ones(4)), 2) == 1.0
    assert ap_constant(GridFunction(Domain(1, 0, -1), [1.0, 4.0]), 2) == pytest.approx(1.5625, rel=1e-15)
    with pytest.raises(ValueError):
        ap_constant(W, 1.0)


@given(weights(16))
def test_ap_decreases_in_p(w):
    f = GridFunction(Domain(1, 1, -3), w)
    a2, a3 = ap_constant(f, 2), ap_constant(f, 3)
    assert math.isfinite(a3) and 1 - 1e-12 <= a3 <= a2 * (1 + 1e-12)


def test_ainf_constant_weight():
    p = ainf_params(GridFunction(D4, np.ones(4)))
    assert p.C == pytest.approx(1.0, rel=1e-11) and p.eps == 0.95


def _exhaustive_ok(w: GridFunction, p) -> float:
    """Worst ``w(E)/w(Q) / (C (|E|/|Q|)^eps)`` over every cell subset of every in-box cube."""
    worst = 0.0
    for _, _, rows in contained_cubes(w):
        for row in rows:
            n = row.size
            tot = math.fsum(row)
            for size in range(1, n + 1):
                for idx in itertools.combinations(range(n), size):
                    ratio = math.fsum(row[list(idx)]) / tot
                    worst = max(worst, ratio / (p.C * (size / n) ** p.eps))
    return worst


def test_ainf_example_pairs():
    p = ainf_params(W)
    # the pair (Q, E) = ([0,1), [0.75,1)) alone forces C >= 0.4 / 0.25**eps
    assert p.C >= 0.4 / 0.25**p.eps * (1 - 1e-12)
    assert 0.4 / 0.25**0.5 == pytest.approx(0.8)
    assert _exhaustive_ok(W, p) <= 1.0


@given(weights(8))
def test_ainf_holds_on_every_subset(w):
    f = GridFunction(Domain(1, 1, -2), w)
    p = ainf_params(f)
    assert 0 < p.eps < 1 and p.C >= 1
    assert _exhaustive_ok(f, p) <= 1.0 + 1e-12


def test_ainf_resampled_pairs():
    rng = np.random.default_rng(5)
    d = Domain(1, 2, -4)
    w = GridFunction(d, np.exp(rng.normal(0, 1, d.shape)))
    p = ainf_params(w)
    cubes = [rows for _, _, rows in contained_cubes(w)]
    for _ in range(10_000):
        rows = cubes[rng.integers(len(cubes))]
        row = rows[rng.integers(rows.shape[0])]
        mask = rng.uniform(size=row.size) < rng.uniform()
        if not mask.any():
            continue
        lhs = math.fsum(row[mask]) / math.fsum(row)
        assert lhs <= p.C * (mask.mean()) ** p.eps * (1 + 1e-12)


def test_levelset_examples():
    one = GridFunction(D4, np.ones(4))
    p = ainf_params(one)
    q = DyadicCube(0, 0, (0,))
    c = levelset_bound_check(one, q, 2.0, p)
    assert c.lhs == 0.0 and c.ok
    c = levelset_bound_check(one, q, 0.5, p)
    assert c.lhs == 1.0 and c.rhs == pytest.approx(p.C0 * 2 ** (1 + p.xi)) and c.ok
    c = levelset_bound_check(W, q, 1.5, ainf_params(W))
    assert c.lhs == 0.25 and c.ok and c.slack >= 0


def test_bk_examples():
    seq = bk_sequence(4.0, YoungPhi(1, 0))
    assert all(r.ratio == 4.0 and r.ok for r in seq.rows)
    assert b_value(4.0, YoungPhi(1, 0), 3) == 64.0
    seq = bk_sequence(math.e, YoungPhi(1, 1))
    row = {r.k: r for r in seq.rows}
    assert row[-1].ratio == pytest.approx(2 * math.e, rel=1e-14) and row[-1].at_upper
    assert row[-1].ratio == pytest.approx(5.43656, abs=1e-5)
    assert row[3].ratio == pytest.approx(math.e, rel=1e-14) and row[3].at_lower
    assert seq.ok


@pytest.mark.parametrize("a", [math.e, 3.0, 5.0, 10.0])
@pytest.mark.parametrize("r", [1.0, 2.0])
@pytest.mark.parametrize("delta", [0.0, 1.0, 2.0])
def test_bk_bounds_and_endpoints(a, r, delta):
    phi = YoungPhi(r, delta)
    seq = bk_sequence(a, phi)
    assert seq.ok
    for row in seq.rows:
        if delta == 0:
            assert row.at_lower and row.at_upper
        else:
            assert row.at_lower == (row.k >= 0)
            assert row.at_upper == (row.k == -1)
        # b_k = 1 / phi(a^-k) from the definition
        assert seq.b(row.k) == pytest.approx(1 / phi_value(a ** (-row.k), r, delta), rel=1e-12)
    L = Fraction(math.log(a))
    assert seq.rows[0].factor == (1 + 40 * L) / (1 + 39 * L)


def test_truncate_examples():
    v = GridFunction(Domain(1, 0, -1), [1.0, 2.0])
    assert truncate(v, 2, 3.0).flat.tolist() == [1.0, 3.0]
    assert truncate(v, 2, 1e300).flat.tolist() == [1.0, 4.0]
    assert truncate(v, 2, 0.5).flat.tolist() == [0.5, 0.5]
    with pytest.raises(ValueError):
        truncate(v, 2, 0.0)
