"""End-to-end checks of the mixed weak inequality and its companions.

The all-cubes maximal operator is only known through the shifted-grid
sandwich ``lower <= M_phi <= 3^n lower``.  Every record names the side it
used: ``lower`` hunts for counterexamples, ``upper`` is the bound the
theorem actually controls, ``dyadic`` is the single unshifted grid.
"""

from __future__ import annotations

import csv
import io
import json
import math
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .audits import AuditSetup, audit_claims
from .generators import KINDS, Instance, cell_centers, gen_instance, rng_for
from .geometry import Domain, GridFunction
from .orlicz import dyadic_maximal, full_maximal
from .report import SCHEMA, AuditReport
from .summation import compensated_sum
from .weights import a1_constant
from .young import LINEAR, YoungPhi, conjugate_weight

SIDES = ("lower", "upper", "dyadic")
CSV_COLUMNS = ("seed", "r", "delta", "a1_u", "a1_vr", "t", "lhs", "rhs", "ratio", "bound_side")


@dataclass(frozen=True)
class InequalityRecord:
    t: float
    lhs: float
    rhs: float
    ratio: float
    bound_side: str


def _ratio(lhs: float, rhs: float) -> float:
    if rhs > 0:
        return lhs / rhs
    return math.inf if lhs > 0 else 0.0


def _check_weights(u: GridFunction, v: GridFunction):
    if np.any(u.values <= 0) or np.any(v.values <= 0):
        raise ValueError("u and v must be positive on every cell")


def maximal_bound(f: GridFunction, phi: YoungPhi, bound_side: str, gen_range=None) -> np.ndarray:
    """Cellwise ``M_phi f`` surrogate for one side of the sandwich."""
    if bound_side not in SIDES:
        raise ValueError(f"bound_side must be one of {SIDES}")
    if bound_side == "dyadic":
        return dyadic_maximal(f, phi, 0, gen_range).values
    lower, upper = full_maximal(f, phi, gen_range)
    return (lower if bound_side == "lower" else upper).values


def inequality_records(f: GridFunction, u: GridFunction, v: GridFunction, phi: YoungPhi,
                       ts, bound_side: str = "lower", M: np.ndarray | None = None
                       ) -> list[InequalityRecord]:
    """Both sides of ``uw({M_phi(fv)/v > t}) <= C int phi(f v / t) u`` for every ``t``.

    The maximal function is computed once and shared by all thresholds.
    """
    _check_weights(u, v)
    ts = [float(t) for t in ts]
    if any(not t > 0 for t in ts):
        raise ValueError("t must be positive")
    d = f.domain
    vol = d.cell_volume
    fv = f.values * v.values
    if M is None:
        M = maximal_bound(f.with_values(fv), phi, bound_side)
    uw = u.values * conjugate_weight(v, phi).values
    q = M / v.values
    out = []
    for t in ts:
        lhs = compensated_sum(np.where(q > t, uw, 0.0)) * vol
        rhs = compensated_sum(phi.array(fv / t) * u.values) * vol
        out.append(InequalityRecord(t, lhs, rhs, _ratio(lhs, rhs), bound_side))
    return out


def mixed_inequality_ratio(f: GridFunction, u: GridFunction, v: GridFunction, phi: YoungPhi,
                           t: float, bound_side: str = "lower") -> InequalityRecord:
    return inequality_records(f, u, v, phi, [t], bound_side)[0]


def mr_levelset_identity_check(f: GridFunction, v: GridFunction, r: float, t: float,
                               grid_id: int = 0) -> bool:
    """``{M_r(fv)/v > t} == {M((fv)^r)/v^r > t^r}`` cellwise on one grid."""
    if not t > 0:
        raise ValueError("t must be positive")
    fv = f.values * v.values
    m_r = dyadic_maximal(f.with_values(fv), YoungPhi(r, 0.0), grid_id).values
    m_1 = dyadic_maximal(f.with_values(fv**r), LINEAR, grid_id).values
    return bool(np.array_equal(m_r / v.values > t, m_1 / v.values**r > t**r))


@dataclass(frozen=True)
class LpReport:
    p: float
    r: float
    lhs: float
    rhs: float
    ratio: float


def lp_boundedness_check(f: GridFunction, u: GridFunction, v: GridFunction, r: float,
                         p: float) -> LpReport:
    """``int (M_r f)^p w`` against ``int |f|^p w`` with ``w = u v^(r-p)``.

    ``M_r f`` is the shifted-grid lower bound; no constant is asserted.
    """
    if not p > r:
        raise ValueError("p must exceed r")
    _check_weights(u, v)
    vol = f.domain.cell_volume
    w = u.values * v.values ** (r - p)
    M = full_maximal(f, YoungPhi(r, 0.0))[0].values
    lhs = compensated_sum(M**p * w) * vol
    rhs = compensated_sum(f.values**p * w) * vol
    return LpReport(p, r, lhs, rhs, _ratio(lhs, rhs))


def claim_audits(s: AuditSetup, report: AuditReport | None = None, max_points: int = 256) -> AuditReport:
    """Principal-cube sum bound, the stopping sequence, the block bound and ``h <= C u`` on one setup."""
    return audit_claims(s, report, max_points=max_points)


# -- sweeps --------------------------------------------------------------------------


@dataclass
class SweepConfig:
    seed: int = 20240917
    n_instances: int = 200
    # (dim, box_exp, cell_exp): 2^10 cells in 1D, 64 x 64 in 2D
    domains: tuple = ((1, 3, -7), (2, 3, -3))
    rs: tuple = (1.0, 2.0)
    deltas: tuple = (0.0, 1.0)
    kinds: tuple = KINDS
    n_t: int = 12
    t_span: tuple = (1e-3, 0.9)
    cap_u: float = 10.0
    cap_vr: float = 10.0
    mode: str = "theorem"
    bound_side: str | None = None
    refine: bool = True
    refine_tol: float = 0.10
    dyadic_instances: int = 20
    threads: int = 1

    def __post_init__(self):
        if self.mode not in ("theorem", "conjecture"):
            raise ValueError("mode must be theorem or conjecture")
        if self.bound_side is not None and self.bound_side not in SIDES:
            raise ValueError(f"bound_side must be one of {SIDES}")
        if self.n_instances < 0 or self.n_t < 1 or self.dyadic_instances < 0:
            raise ValueError("counts must be nonnegative and n_t positive")
        self.domains = tuple(tuple(int(x) for x in dd) for dd in self.domains)
        self.rs = tuple(float(x) for x in self.rs)
        self.deltas = tuple(float(x) for x in self.deltas)
        self.kinds = tuple(self.kinds)
        self.t_span = tuple(float(x) for x in self.t_span)
        for k in self.kinds:
            if k not in KINDS:
                raise ValueError(f"unknown instance kind {k!r}")

    @property
    def side(self) -> str:
        if self.bound_side is not None:
            return self.bound_side
        return "upper" if self.mode == "theorem" else "lower"

    def resolved(self) -> dict:
        out = asdict(self)
        out["bound_side"] = self.side
        out.pop("threads")
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown sweep config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class Task:
    index: int
    seed: int
    kind: str
    domain: tuple
    r: float
    delta: float
    side: str
    mode: str
    cap_u: float
    cap_vr: float
    n_t: int
    t_span: tuple
    refine: bool


def instance_seed(master: int, i: int, stream: int = 0) -> int:
    return int(rng_for(master, stream, i).integers(2**63))


def tasks_for(cfg: SweepConfig) -> list[Task]:
    """Instance ``i`` cycles domains fastest, then ``(r, delta)``, then kinds."""
    combos = [(r, de) for r in cfg.rs for de in cfg.deltas]
    nd, nc = len(cfg.domains), len(combos)
    out = []
    for i in range(cfg.n_instances):
        r, de = combos[(i // nd) % nc]
        kind = cfg.kinds[(i // (nd * nc)) % len(cfg.kinds)]
        out.append(Task(i, instance_seed(cfg.seed, i), kind, cfg.domains[i % nd], r, de, cfg.side,
                        cfg.mode, cfg.cap_u, cfg.cap_vr, cfg.n_t, cfg.t_span, cfg.refine))
    return out


def dyadic_tasks(cfg: SweepConfig) -> list[Task]:
    """``u = v = 1``, ``r = 1``, ``delta = 0`` on the dyadic grid."""
    nd = len(cfg.domains)
    return [Task(i, instance_seed(cfg.seed, i, 1), "constant", cfg.domains[i % nd], 1.0, 0.0,
                 "dyadic", "theorem", 1.0, 1.0, cfg.n_t, cfg.t_span, False)
            for i in range(cfg.dyadic_instances)]


CONJECTURE_KINDS = ("power", "jump")


def conjecture_instance(kind: str, domain: Domain, seed: int, r: float) -> Instance:
    """``u`` from an A1 family and ``v`` with ``v^r`` in A-infinity but far from A1.

    ``power`` uses ``|x - x0|^(0.9 n)`` (vanishing at ``x0``), ``jump`` a
    random two-level weight with ratio 1e4.
    """
    if kind not in CONJECTURE_KINDS:
        raise ValueError(f"unknown conjecture kind {kind!r}")
    base = gen_instance("random-bounded", domain, seed, r=r)
    rng = rng_for(seed, 7)
    if kind == "jump":
        vr = np.where(rng.uniform(0, 1, domain.shape) < 0.5, 1e4, 1.0)
    else:
        x0 = rng.uniform(0, 2.0**domain.box_exp, domain.dim)
        dist = np.linalg.norm(cell_centers(domain) - x0, axis=-1)
        h = domain.cell_volume ** (1.0 / domain.dim)
        vr = np.maximum(dist, h / 2) ** (0.9 * domain.dim)
    a1vr = a1_constant(GridFunction(domain, vr), "all").constant
    return Instance(kind, int(seed), float(r), base.f, base.u, GridFunction(domain, vr ** (1.0 / r)),
                    base.a1_u, a1vr, {"note": "v^r outside the A1 caps"})


def t_grid(M: np.ndarray, v: np.ndarray, n_t: int, span) -> np.ndarray:
    """``n_t`` log-spaced thresholds below the largest value of ``M / v``."""
    top = float(np.max(M / v))
    if not top > 0:
        top = 1.0
    return top * np.geomspace(span[0], span[1], n_t)


def _instance(task: Task) -> Instance:
    d = Domain(*task.domain)
    if task.mode == "conjecture":
        kind = CONJECTURE_KINDS[task.index % len(CONJECTURE_KINDS)]
        return conjecture_instance(kind, d, task.seed, task.r)
    return gen_instance(task.kind, d, task.seed, r=task.r, cap_u=task.cap_u, cap_vr=task.cap_vr)


def run_task(task: Task) -> dict:
    """Records for one instance, plus its refined copy when asked."""
    inst = _instance(task)
    phi = YoungPhi(task.r, task.delta)
    fv = inst.f.values * inst.v.values
    M = maximal_bound(inst.f.with_values(fv), phi, task.side)
    ts = t_grid(M, inst.v.values, task.n_t, task.t_span)
    recs = inequality_records(inst.f, inst.u, inst.v, phi, ts, task.side, M=M)
    out = {
        "index": task.index, "seed": task.seed, "kind": inst.kind, "domain": list(task.domain),
        "r": task.r, "delta": task.delta, "a1_u": inst.a1_u, "a1_vr": inst.a1_vr,
        "side": task.side, "records": recs, "refined": None,
    }
    if task.refine:
        fine = inst.refine()
        out["refined"] = inequality_records(fine.f, fine.u, fine.v, phi, ts, task.side)
    return out


def _finite_sup(records) -> float:
    vals = [r.ratio for r in records if math.isfinite(r.ratio)]
    return max(vals) if vals else 0.0


@dataclass
class SweepReport:
    config: dict
    mode: str
    rows: list = field(repr=False)
    instances: list = field(repr=False)
    sup_ratio: float = 0.0
    infinite: int = 0
    refined_sup_ratio: float | None = None
    refine_change: float | None = None
    worst_instance_change: float | None = None
    dyadic_sup_ratio: float | None = None

    @property
    def checks(self) -> dict:
        """Named pass/fail results; empty in conjecture mode."""
        if self.mode != "theorem":
            return {}
        out = {"all_ratios_finite": self.infinite == 0}
        if self.refine_change is not None:
            out["refinement_stable"] = self.refine_change <= self.config["refine_tol"]
        if self.dyadic_sup_ratio is not None:
            out["dyadic_weak_11"] = self.dyadic_sup_ratio <= 1.0 + 1e-12
        return out

    @property
    def ok(self) -> bool | None:
        if self.mode != "theorem":
            return None
        return all(self.checks.values())

    def summary(self) -> dict:
        return {
            "schema": SCHEMA, "mode": self.mode, "config": self.config,
            "n_instances": len(self.instances), "n_records": len(self.rows),
            "sup_ratio": self.sup_ratio, "infinite": self.infinite,
            "refined_sup_ratio": self.refined_sup_ratio, "refine_change": self.refine_change,
            "worst_instance_change": self.worst_instance_change,
            "dyadic_sup_ratio": self.dyadic_sup_ratio, "checks": self.checks, "pass": self.ok,
            "instances": self.instances,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# " + json.dumps({"schema": SCHEMA, "config": self.config}, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows:
            w.writerow([row[c] if isinstance(row[c], str) else repr(row[c]) for c in CSV_COLUMNS])
        return buf.getvalue()


def ordered_map(fn, tasks, threads: int):
    """``[fn(t) for t in tasks]`` over up to ``threads`` worker processes, in task order."""
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    ctx = mp.get_context("fork")
    with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as ex:
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * threads))))


def _rows(res: dict, records) -> list[dict]:
    return [
        {"seed": res["seed"], "r": res["r"], "delta": res["delta"], "a1_u": res["a1_u"],
         "a1_vr": res["a1_vr"], "t": rec.t, "lhs": rec.lhs, "rhs": rec.rhs,
         "ratio": rec.ratio, "bound_side": rec.bound_side}
        for rec in records
    ]


def sweep(cfg: SweepConfig) -> SweepReport:
    """Every instance of the configuration at every threshold, merged in task order."""
    results = ordered_map(run_task, tasks_for(cfg), cfg.threads)
    rows, instances, coarse, fine, changes = [], [], [], [], []
    for res in results:
        rows += _rows(res, res["records"])
        coarse += res["records"]
        desc = {k: res[k] for k in ("index", "seed", "kind", "domain", "r", "delta", "a1_u", "a1_vr")}
        desc["sup_ratio"] = _finite_sup(res["records"])
        if res["refined"] is not None:
            fine += res["refined"]
            s_c, s_f = desc["sup_ratio"], _finite_sup(res["refined"])
            desc["refined_sup_ratio"] = s_f
            if s_c > 0:
                changes.append(abs(s_f - s_c) / s_c)
        instances.append(desc)
    rep = SweepReport(cfg.resolved(), cfg.mode, rows, instances)
    rep.sup_ratio = _finite_sup(coarse)
    rep.infinite = sum(1 for r in coarse if not math.isfinite(r.ratio))
    if cfg.refine and fine:
        rep.refined_sup_ratio = _finite_sup(fine)
        if rep.sup_ratio > 0:
            rep.refine_change = abs(rep.refined_sup_ratio - rep.sup_ratio) / rep.sup_ratio
        rep.worst_instance_change = max(changes) if changes else 0.0
    if cfg.mode == "theorem" and cfg.dyadic_instances:
        dres = ordered_map(run_task, dyadic_tasks(cfg), cfg.threads)
        recs = [r for res in dres for r in res["records"]]
        rows += [row for res in dres for row in _rows(res, res["records"])]
        rep.dyadic_sup_ratio = _finite_sup(recs)
        rep.infinite += sum(1 for r in recs if not math.isfinite(r.ratio))
    return rep


# -- reading reports back ---------------------------------------------------------------


def read_csv_report(text: str) -> tuple[dict, list[dict]]:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ValueError("report has no config header")
    header = json.loads(lines[0][2:])
    reader = csv.DictReader(lines[1:])
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"expected columns {CSV_COLUMNS}")
    rows = []
    for row in reader:
        out = {}
        for k, val in row.items():
            out[k] = val if k == "bound_side" else float(val)
        rows.append(out)
    return header, rows


def check_csv_report(text: str) -> list[str]:
    """Problems found in a sweep CSV; empty when every row is consistent and finite."""
    header, rows = read_csv_report(text)
    mode = header.get("config", {}).get("mode", "theorem")
    problems = []
    for i, row in enumerate(rows):
        lhs, rhs, ratio = row["lhs"], row["rhs"], row["ratio"]
        if row["bound_side"] not in SIDES:
            problems.append(f"row {i}: unknown bound side {row['bound_side']!r}")
        if not (row["t"] > 0 and lhs >= 0 and rhs >= 0):
            problems.append(f"row {i}: t must be positive and both sides nonnegative")
            continue
        if _ratio(lhs, rhs) != ratio:
            problems.append(f"row {i}: ratio {ratio!r} != lhs/rhs {_ratio(lhs, rhs)!r}")
        if mode == "theorem" and not math.isfinite(ratio):
            problems.append(f"row {i}: infinite ratio")
    if not rows:
        problems.append("report has no rows")
    return problems
