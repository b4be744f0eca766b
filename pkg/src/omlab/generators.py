"""Seeded test instances ``(f, u, v)`` with certified A1 constants.

Every family has one shape parameter that controls how far the weights are
from constant.  When a certified constant exceeds its cap the parameter is
shrunk deterministically and the weight rebuilt, so a seed always maps to the
same instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Domain, GridFunction
from .weights import a1_constant

KINDS = ("constant", "step", "staircase", "spike", "random-bounded")
MAX_ATTEMPTS = 30


@dataclass(frozen=True)
class Instance:
    kind: str
    seed: int
    r: float
    f: GridFunction = field(repr=False)
    u: GridFunction = field(repr=False)
    v: GridFunction = field(repr=False)
    a1_u: float
    a1_vr: float
    params: dict = field(default_factory=dict)

    @property
    def domain(self) -> Domain:
        return self.f.domain

    def refine(self) -> "Instance":
        return Instance(self.kind, self.seed, self.r, self.f.refine(), self.u.refine(),
                        self.v.refine(), self.a1_u, self.a1_vr, dict(self.params))


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *stream]))


def cell_centers(d: Domain) -> np.ndarray:
    """Cell centres in real units, shape ``d.shape + (dim,)``."""
    h = d.cell_volume ** (1.0 / d.dim)
    ax = (np.arange(d.n_side) + 0.5) * h
    return np.stack(np.meshgrid(*([ax] * d.dim), indexing="ij"), axis=-1)


def _box_indicator(d: Domain, rng, frac: float) -> np.ndarray:
    """Indicator of a random cell-aligned sub-box of relative side ``frac``."""
    n = d.n_side
    w = max(1, int(round(frac * n)))
    mask = np.ones(d.shape, dtype=bool)
    for ax in range(d.dim):
        a = int(rng.integers(0, n - w + 1))
        sel = np.zeros(n, dtype=bool)
        sel[a:a + w] = True
        shape = [1] * d.dim
        shape[ax] = n
        mask &= sel.reshape(shape)
    return mask


def _weight(kind: str, d: Domain, rng, s: float) -> np.ndarray:
    """One positive weight of the given family at strength ``s`` in (0, 1]."""
    if kind == "constant":
        return np.ones(d.shape)
    if kind == "step":
        jump = 1.0 + 8.0 * s
        return np.where(_box_indicator(d, rng, float(rng.uniform(0.1, 0.5))), jump, 1.0)
    if kind == "staircase":
        # |x - x0|**(-kappa) with kappa < n is A1; the cell average keeps it finite
        x0 = rng.uniform(0, 2.0**d.box_exp, d.dim)
        dist = np.linalg.norm(cell_centers(d) - x0, axis=-1)
        h = d.cell_volume ** (1.0 / d.dim)
        kappa = 0.9 * d.dim * s
        return (np.maximum(dist, h / 2) / 2.0**d.box_exp) ** (-kappa)
    if kind == "spike":
        height = 16.0 * s
        return 1.0 + height * _box_indicator(d, rng, float(rng.uniform(0.02, 0.1)))
    if kind == "random-bounded":
        ratio = 1.0 + 4.0 * s
        return np.exp(rng.uniform(0.0, np.log(ratio), d.shape))
    raise ValueError(f"unknown instance kind {kind!r}")


def _certified(kind, d, rng_seed, power, cap, grids):
    """Weight ``w`` with ``[w**power]_A1 <= cap``, shrinking strength on rejection."""
    s = 1.0
    for attempt in range(MAX_ATTEMPTS):
        w = _weight(kind, d, np.random.default_rng(rng_seed), s)
        w = w / np.min(w)
        c = a1_constant(GridFunction(d, w**power), grids).constant
        if c <= cap:
            return GridFunction(d, w), c, s
        s *= 0.7
    raise ValueError(f"could not meet A1 cap {cap} for kind {kind!r}")


def _f(d: Domain, rng) -> np.ndarray:
    """Bounded, nonnegative, with some zero cells; a mix of bumps and noise."""
    f = np.zeros(d.shape)
    for _ in range(int(rng.integers(1, 4))):
        box = _box_indicator(d, rng, float(rng.uniform(0.05, 0.5)))
        f += box * rng.uniform(0.5, 4.0)
    noise = rng.uniform(0, 1, d.shape) * (rng.uniform(0, 1, d.shape) < 0.2)
    f += noise
    if rng.uniform() < 0.5:
        spike = np.unravel_index(int(rng.integers(0, d.ncells)), d.shape)
        f[spike] += rng.uniform(5, 50)
    return f


def gen_instance(kind: str, domain: Domain, seed: int, r: float = 1.0,
                 cap_u: float = 10.0, cap_vr: float = 10.0, grids="all") -> Instance:
    """Deterministic ``(f, u, v)`` of one family with ``[u]_A1 <= cap_u``, ``[v^r]_A1 <= cap_vr``.

    A1 constants are certified over the in-box cubes of ``grids``.  ``u`` and
    ``v`` use the same family with independent streams; ``constant`` gives
    ``u = v = 1``.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown instance kind {kind!r}")
    f = _f(domain, rng_for(seed, 0))
    su = int(rng_for(seed, 1).integers(2**63))
    sv = int(rng_for(seed, 2).integers(2**63))
    u, a1u, s_u = _certified(kind, domain, su, 1.0, cap_u, grids)
    v, a1vr, s_v = _certified(kind, domain, sv, r, cap_vr, grids)
    return Instance(kind, int(seed), float(r), GridFunction(domain, f), u, v, a1u, a1vr,
                    {"strength_u": s_u, "strength_v": s_v})
