"""Inequality checks and the reports that collect them."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

SCHEMA = "omlab/1"
# rounding headroom only; every checked inequality is exact in real arithmetic
REL_TOL = 1e-12


def holds(lhs, rhs, strict: bool = False):
    """Elementwise ``lhs <= rhs`` (or ``<``) up to ``REL_TOL`` relative rounding."""
    lhs = np.asarray(lhs, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    tol = REL_TOL * np.maximum(np.abs(lhs), np.abs(rhs))
    return lhs < rhs + tol if strict else lhs <= rhs + tol


@dataclass(frozen=True)
class Check:
    name: str
    lhs: float
    rhs: float
    witness: str = ""
    strict: bool = False

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def rel_slack(self) -> float:
        scale = max(abs(self.lhs), abs(self.rhs))
        if math.isinf(scale):
            return 1.0 if self.rhs == math.inf and math.isfinite(self.lhs) else 0.0
        return self.slack / scale if scale > 0 else 0.0

    @property
    def ok(self) -> bool:
        return bool(holds(self.lhs, self.rhs, self.strict))

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "witness": self.witness,
            "ok": self.ok,
        }


@dataclass
class Tally:
    """Count, failures and the tightest instance of one named check."""

    name: str
    count: int = 0
    failed: int = 0
    worst: Check | None = None
    failures: list = field(default_factory=list)

    def add(self, c: Check, keep: int = 20):
        self.count += 1
        if not c.ok:
            self.failed += 1
            if len(self.failures) < keep:
                self.failures.append(c)
        if self.worst is None or c.rel_slack < self.worst.rel_slack:
            self.worst = c


class AuditReport:
    """Named tallies plus free-form statistics; passes when nothing failed."""

    def __init__(self, name: str, config: dict | None = None):
        self.name = name
        self.config = dict(config or {})
        self.tallies: dict[str, Tally] = {}
        self.stats: dict = {}

    def add(self, c: Check):
        self.tallies.setdefault(c.name, Tally(c.name)).add(c)

    def extend(self, checks):
        for c in checks:
            self.add(c)

    def add_many(self, name: str, lhs, rhs, witness, strict: bool = False):
        """Vectorised checks; ``witness(i)`` labels entry ``i`` and is only called when needed."""
        lhs = np.asarray(lhs, dtype=np.float64).reshape(-1)
        rhs = np.asarray(rhs, dtype=np.float64).reshape(-1)
        if lhs.size == 0:
            return
        t = self.tallies.setdefault(name, Tally(name))
        ok = holds(lhs, rhs, strict)
        scale = np.maximum(np.abs(lhs), np.abs(rhs))
        fin = np.isfinite(scale) & (scale > 0)
        with np.errstate(invalid="ignore"):
            rel = np.where(fin, (rhs - lhs) / np.where(fin, scale, 1.0), 0.0)
        rel = np.where(np.isinf(scale) & (rhs == np.inf) & np.isfinite(lhs), 1.0, rel)
        t.count += lhs.size
        bad = np.flatnonzero(~ok)
        t.failed += bad.size
        for i in bad[: max(0, 20 - len(t.failures))]:
            t.failures.append(Check(name, float(lhs[i]), float(rhs[i]), witness(int(i)), strict))
        i = int(np.argmin(rel))
        if t.worst is None or rel[i] < t.worst.rel_slack:
            t.worst = Check(name, float(lhs[i]), float(rhs[i]), witness(i), strict)

    def merge(self, other: "AuditReport", prefix: str = ""):
        for name, t in other.tallies.items():
            mine = self.tallies.setdefault(name, Tally(name))
            mine.count += t.count
            mine.failed += t.failed
            for c in t.failures:
                if len(mine.failures) < 20:
                    mine.failures.append(Check(c.name, c.lhs, c.rhs, prefix + c.witness, c.strict))
            if t.worst is not None and (mine.worst is None or t.worst.rel_slack < mine.worst.rel_slack):
                w = t.worst
                mine.worst = Check(w.name, w.lhs, w.rhs, prefix + w.witness, w.strict)

    @property
    def ok(self) -> bool:
        return all(t.failed == 0 for t in self.tallies.values())

    @property
    def n_checks(self) -> int:
        return sum(t.count for t in self.tallies.values())

    def checks(self) -> list[Check]:
        """The tightest check of each name followed by every recorded failure."""
        out = [t.worst for t in self.tallies.values() if t.worst is not None]
        for t in self.tallies.values():
            out += [c for c in t.failures if c is not t.worst]
        return out

    def as_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "audit": self.name,
            "config": self.config,
            "summary": {
                n: {"count": t.count, "failed": t.failed,
                    "min_slack": t.worst.slack if t.worst else None,
                    "min_rel_slack": t.worst.rel_slack if t.worst else None}
                for n, t in sorted(self.tallies.items())
            },
            "stats": self.stats,
            "checks": [c.as_dict() for c in self.checks()],
            "pass": self.ok,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=False, default=_jsonable)

    def lines(self) -> list[str]:
        out = []
        for n, t in sorted(self.tallies.items()):
            state = "ok" if t.failed == 0 else "FAIL"
            slack = f"{t.worst.rel_slack:.3e}" if t.worst else "-"
            out.append(f"{self.name}/{n}: {state} ({t.count} checks, {t.failed} failed, min rel slack {slack})")
        return out


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")
