"""The Young functions t**r * (1 + log+ t)**delta and their weight maps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import GridFunction

INVERSE_RTOL = 1e-12
MAX_BISECT = 200


@dataclass(frozen=True)
class YoungPhi:
    r: float = 1.0
    delta: float = 0.0

    def __post_init__(self):
        if not (self.r >= 1 and math.isfinite(self.r)):
            raise ValueError(f"r must be >= 1, got {self.r}")
        if not (self.delta >= 0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        ts = np.array([0.0, 0.25, 0.5, 1.0, 2.0, math.e, 10.0, 1e3])
        ys = self.array(ts)
        if ys[0] != 0.0 or ys[3] != 1.0 or np.any(np.diff(ys) <= 0):
            raise ValueError("phi is not increasing with phi(0)=0, phi(1)=1")
        u = np.linspace(0.0, 8.0, 33)
        yu = self.array(u)
        if np.any(yu[:-2] + yu[2:] - 2 * yu[1:-1] < -1e-12 * yu[2:]):
            raise ValueError("phi is not convex")

    @property
    def is_power(self) -> bool:
        return self.delta == 0

    def __call__(self, t: float) -> float:
        return phi_eval(self, t)

    def array(self, x) -> np.ndarray:
        """Vectorised evaluation; no argument checks."""
        x = np.asarray(x, dtype=np.float64)
        if self.r == 1:
            y = x
        elif self.r == 2:
            y = x * x
        else:
            y = x**self.r
        if self.delta:
            lg = 1.0 + np.log(np.maximum(x, 1.0))
            y = y * (lg if self.delta == 1 else lg**self.delta)
        return y

    def label(self) -> str:
        return f"r={self.r:g},delta={self.delta:g}"

    @classmethod
    def parse(cls, text: str) -> "YoungPhi":
        """Parse ``r=R,delta=D`` (either key may be omitted)."""
        kw = {}
        for part in filter(None, (p.strip() for p in text.split(","))):
            key, _, val = part.partition("=")
            key = key.strip().lower()
            if key not in ("r", "delta"):
                raise ValueError(f"unknown phi parameter {key!r}")
            kw[key] = float(val)
        return cls(**kw)


LINEAR = YoungPhi(1.0, 0.0)


def phi_eval(phi: YoungPhi, t: float) -> float:
    if not (math.isfinite(t) and t >= 0):
        raise ValueError(f"phi argument must be finite and >= 0, got {t}")
    return float(phi.array(t))


def phi_inverse(phi: YoungPhi, y: float) -> float:
    """The ``t >= 0`` with ``phi(t) = y``."""
    if not (math.isfinite(y) and y >= 0):
        raise ValueError(f"phi_inverse argument must be finite and >= 0, got {y}")
    if y == 0:
        return 0.0
    if phi.delta == 0:
        return y ** (1.0 / phi.r)
    # phi(t) >= t**r and, for t >= 1, phi(t) <= t**(r+delta)
    lo = min(y ** (1.0 / (phi.r + phi.delta)), y ** (1.0 / phi.r))
    hi = max(y ** (1.0 / (phi.r + phi.delta)), y ** (1.0 / phi.r))
    while phi.array(lo) > y:
        lo /= 2
    while phi.array(hi) < y:
        hi *= 2
    for _ in range(MAX_BISECT):
        if hi - lo <= INVERSE_RTOL * hi:
            break
        mid = 0.5 * (lo + hi)
        if phi.array(mid) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def conjugate_weight(v: GridFunction, phi: YoungPhi) -> GridFunction:
    """Cellwise ``w = 1 / phi(1 / v)``."""
    vals = v.values
    if np.any(vals <= 0):
        raise ValueError("conjugate_weight needs v > 0 on every cell")
    if phi.delta == 0:
        return v.with_values(vals**phi.r)
    return v.with_values(1.0 / phi.array(1.0 / vals))


def power_bound_constant(phi: YoungPhi, eps: float) -> float:
    """``C = max((delta/eps)**delta, 1)`` with ``phi(t) <= C t**(r+eps)`` for t >= 1.

    The bound is re-checked on a sample of ``t`` from 1 to 1e6 before returning.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    c = max((phi.delta / eps) ** phi.delta, 1.0) if phi.delta else 1.0
    ts = np.concatenate([np.arange(1.0, 10.0, 0.5), np.geomspace(10.0, 1e6, 400)])
    lhs = phi.array(ts)
    rhs = c * ts ** (phi.r + eps)
    if np.any(lhs > rhs * (1 + 1e-12)):
        raise AssertionError(f"power bound fails for {phi} with eps={eps}")
    return c


@dataclass(frozen=True)
class SubmultReport:
    max_ratio: float
    witness: tuple[float, float]
    samples: int

    @property
    def ok(self) -> bool:
        return self.max_ratio <= 1 + 1e-12


def check_submultiplicative(phi: YoungPhi, samples=None, seed: int = 0, n: int = 10_000) -> SubmultReport:
    """Largest ``phi(st) / (phi(s) phi(t))`` over sample pairs."""
    if samples is None:
        rng = np.random.default_rng(seed)
        s = np.exp(rng.uniform(-8, 8, n))
        t = np.exp(rng.uniform(-8, 8, n))
    else:
        s, t = (np.asarray(a, dtype=float) for a in zip(*samples))
    den = phi.array(s) * phi.array(t)
    keep = den > 0
    ratio = phi.array(s[keep] * t[keep]) / den[keep]
    if ratio.size == 0:
        return SubmultReport(0.0, (0.0, 0.0), 0)
    i = int(np.argmax(ratio))
    return SubmultReport(float(ratio[i]), (float(s[keep][i]), float(t[keep][i])), int(ratio.size))
