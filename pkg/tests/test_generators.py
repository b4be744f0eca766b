import numpy as np
import pytest

from omlab.generators import KINDS, gen_instance, rng_for
from omlab.geometry import Domain, GridFunction
from omlab.weights import a1_constant

from oracles import naive_a1

D = Domain(1, 2, -4)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("r", [1.0, 2.0])
def test_caps_met(kind, r):
    inst = gen_instance(kind, D, 5, r=r, cap_u=4.0, cap_vr=4.0)
    assert inst.a1_u <= 4.0 and inst.a1_vr <= 4.0
    assert inst.a1_u == a1_constant(inst.u, "all").constant
    assert inst.a1_vr == a1_constant(inst.v.with_values(inst.v.values**r), "all").constant
    assert np.all(inst.u.values > 0) and np.all(inst.v.values > 0)
    assert np.all(inst.f.values >= 0) and np.any(inst.f.values > 0)
    assert inst.u.values.min() == 1.0 and inst.v.values.min() == 1.0


def test_constant_kind():
    inst = gen_instance("constant", D, 3)
    assert np.all(inst.u.values == 1) and np.all(inst.v.values == 1)
    assert inst.a1_u == inst.a1_vr == 1.0


def test_step_weight_example():
    # a jump of 2 on the last quarter of [0,1)
    w = GridFunction(Domain(1, 0, -2), [1, 1, 1, 2.0])
    assert a1_constant(w).constant == 1.5 == naive_a1(w.values, w.domain)


def test_step_kind_is_two_level():
    for seed in range(5):
        v = gen_instance("step", D, seed).v.values
        assert len(np.unique(v)) == 2


@pytest.mark.parametrize("kind", KINDS)
def test_deterministic(kind):
    a, b = gen_instance(kind, D, 99), gen_instance(kind, D, 99)
    for x, y in ((a.f, b.f), (a.u, b.u), (a.v, b.v)):
        assert np.array_equal(x.values, y.values)
    c = gen_instance(kind, D, 100)
    assert not np.array_equal(a.f.values, c.f.values)


def test_streams_independent():
    assert rng_for(1, 0).integers(2**62) != rng_for(1, 1).integers(2**62)
    assert rng_for(1, 0).integers(2**62) == rng_for(1, 0).integers(2**62)


def test_unreachable_cap_and_bad_kind():
    with pytest.raises(ValueError):
        gen_instance("step", D, 0, cap_u=0.5)
    with pytest.raises(ValueError):
        gen_instance("nope", D, 0)


def test_refine_keeps_constants():
    inst = gen_instance("spike", D, 1)
    fine = inst.refine()
    assert fine.domain.ncells == 2 * D.ncells
    assert a1_constant(fine.u).constant == pytest.approx(a1_constant(inst.u).constant, rel=1e-12)
