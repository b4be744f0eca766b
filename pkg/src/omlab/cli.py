"""Command-line entry point.

Exit codes: 0 on success or pass, 1 when an asserted check fails (the JSON
report is still written), 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .audits import AUDITS, full_audit, setup
from .decomp import cz_cubes
from .generators import KINDS, gen_instance
from .geometry import DyadicCube, Domain, GridFunction
from .harness import (
    SIDES,
    SweepConfig,
    SweepReport,
    check_csv_report,
    inequality_records,
    instance_seed,
    maximal_bound,
    ordered_map,
    sweep,
    t_grid,
)
from .orlicz import dyadic_maximal, full_maximal, luxemburg_average
from .report import SCHEMA, AuditReport
from .weights import a1_constant, ainf_params, ap_constant
from .young import YoungPhi


class UsageError(Exception):
    pass


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("OMLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"OMLAB_THREADS must be an integer, got {env!r}") from None
    return 1


def _phi(text: str) -> YoungPhi:
    try:
        return YoungPhi.parse(text)
    except ValueError as e:
        raise UsageError(f"bad --phi {text!r}: {e}") from None


def _grids(text: str):
    return "all" if text == "all" else (int(text),)


def _load_json(path) -> dict:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(obj, dict):
        raise UsageError(f"{path}: expected a JSON object")
    return obj


# -- subcommands ----------------------------------------------------------------------


def cmd_maximal(args) -> int:
    f = io.read_grid(args.inp)
    phi = _phi(args.phi)
    gr = (f.domain.gen_min, args.gmax) if args.gmax is not None else None
    if args.grid == "all":
        lower, upper = full_maximal(f, phi, gr)
        m = lower if args.side == "lower" else upper
    else:
        m = dyadic_maximal(f, phi, int(args.grid), gr)
    meta = {"phi": phi.label(), "grids": list(m.grid_ids), "gen_range": list(m.gen_range)}
    if args.grid == "all":
        meta["side"] = args.side
    io.write_json(args.out, io.grid_to_dict(GridFunction(f.domain, m.values), **meta))
    return 0


def cmd_luxemburg(args) -> int:
    f = io.read_grid(args.inp)
    try:
        cube = DyadicCube.parse(args.cube)
    except ValueError as e:
        raise UsageError(f"bad --cube {args.cube!r}: {e}") from None
    print(repr(luxemburg_average(f, cube, _phi(args.phi))))
    return 0


def cmd_cz(args) -> int:
    f = io.read_grid(args.inp)
    phi = _phi(args.phi)
    gr = (f.domain.gen_min, args.gmax) if args.gmax is not None else None
    cz = cz_cubes(f, phi, args.lam, args.grid, gr)
    rep = AuditReport("cz", {"phi": phi.label(), "lambda": args.lam, "grid": args.grid,
                             "gen_range": list(cz.gen_range), "capped": cz.capped})
    rep.extend(cz.checks())
    mask = dyadic_maximal(f, phi, args.grid, cz.gen_range).values > args.lam
    rep.add_many("cz_union", [float(np.count_nonzero(mask != cz.mask))], [0.0], lambda i: "cells")
    out = rep.as_dict()
    out["cubes"] = [{"cube": q.label(), "average": float(v), "parent_average": float(p)}
                    for q, v, p in zip(cz.cubes, cz.values, cz.parent_values)]
    io.write_json(args.out, out)
    return 0 if rep.ok else 1


def cmd_apconst(args) -> int:
    w = io.read_grid(args.inp)
    grids = _grids(args.grids)
    if args.a1:
        c = a1_constant(w, grids)
        out = {"constant": c.constant, "witness": c.witness_cube.label() if c.witness_cube else None}
    elif args.ainf:
        p = ainf_params(w, grids)
        out = {"C": p.C, "eps": p.eps, "C0": p.C0, "xi": p.xi, "exhaustive": p.exhaustive}
    else:
        if args.p is None:
            raise UsageError("apconst needs one of --p, --a1, --ainf")
        out = {"constant": ap_constant(w, args.p, grids), "p": args.p}
    out = {"schema": SCHEMA, "grids": "all" if grids == "all" else list(grids), **out}
    io.write_json(args.out, out)
    return 0


def _verify_instance(args) -> int:
    inst = io.read_instance(args.instance)
    phi = _phi(args.phi) if args.phi else YoungPhi(inst.r, 0.0)
    # constants in the file are not trusted; recertify
    a1u = a1_constant(inst.u, "all").constant
    a1vr = a1_constant(inst.v.with_values(inst.v.values**phi.r), "all").constant
    side = args.side or "upper"
    fv = inst.f.with_values(inst.f.values * inst.v.values)
    M = maximal_bound(fv, phi, side)
    ts = args.t if args.t else t_grid(M, inst.v.values, 12, (1e-3, 0.9))
    recs = inequality_records(inst.f, inst.u, inst.v, phi, ts, side, M=M)
    rows = [{"seed": inst.seed, "r": phi.r, "delta": phi.delta, "a1_u": a1u, "a1_vr": a1vr,
             "t": r.t, "lhs": r.lhs, "rhs": r.rhs, "ratio": r.ratio, "bound_side": r.bound_side}
            for r in recs]
    cfg = {"instance": str(args.instance), "phi": phi.label(), "bound_side": side,
           "t": [float(t) for t in ts], "mode": "theorem"}
    rep = SweepReport(cfg, "theorem", rows, [])
    rep.infinite = sum(1 for r in recs if not np.isfinite(r.ratio))
    rep.sup_ratio = max((r.ratio for r in recs if np.isfinite(r.ratio)), default=0.0)
    io.write_text(args.out, rep.to_csv())
    print(json.dumps({"sup_ratio": rep.sup_ratio, "infinite": rep.infinite, "pass": rep.ok}),
          file=sys.stderr)
    return 0 if rep.ok else 1


def cmd_verify(args) -> int:
    given = [x for x in (args.config, args.instance, args.check) if x]
    if len(given) != 1:
        raise UsageError("verify needs exactly one of --config, --instance, --check")
    if args.check:
        try:
            problems = check_csv_report(Path(args.check).read_text())
        except (ValueError, KeyError) as e:
            problems = [f"unreadable report: {e}"]
        print(json.dumps({"schema": SCHEMA, "report": str(args.check), "problems": problems,
                          "pass": not problems}, indent=2))
        return 0 if not problems else 1
    if args.instance:
        return _verify_instance(args)
    cfg_dict = _load_json(args.config)
    cfg_dict["threads"] = _threads(args)
    try:
        cfg = SweepConfig.from_dict(cfg_dict)
    except (TypeError, ValueError) as e:
        raise UsageError(f"{args.config}: {e}") from None
    rep = sweep(cfg)
    io.write_text(args.out, rep.to_csv())
    if args.json:
        io.write_json(args.json, rep.summary())
    print(json.dumps({"sup_ratio": rep.sup_ratio, "checks": rep.checks, "pass": rep.ok}),
          file=sys.stderr)
    return 0 if rep.ok in (True, None) else 1


AUDIT_KEYS = {"instance", "generate", "phi", "t", "a", "alpha", "beta", "p", "N", "grid"}
GEN_KEYS = {"kind", "seed", "count", "domain", "r", "cap_u", "cap_vr"}


def _audit_one(job):
    """One instance of an audit run; module-level so worker processes can pickle it."""
    which, inst_src, opts = job
    if isinstance(inst_src, str):
        inst = io.read_instance(inst_src)
    else:
        kind, d, seed, r, cu, cv = inst_src
        inst = gen_instance(kind, Domain(*d), seed, r=r, cap_u=cu, cap_vr=cv)
    phi = YoungPhi(*opts["phi"])
    s = setup(inst.f, inst.u, inst.v, phi, t=opts["t"], a=opts["a"], alpha=opts["alpha"],
              beta=opts["beta"], p=opts["p"], N=opts["N"], grid_id=opts["grid"])
    rep = full_audit(s, which)
    return inst.seed, rep


def cmd_audit(args) -> int:
    cfg = _load_json(args.config)
    unknown = set(cfg) - AUDIT_KEYS
    if unknown:
        raise UsageError(f"unknown audit config keys: {sorted(unknown)}")
    which = tuple(AUDITS) if args.which == "all" else (args.which,)
    if args.which == "claims":
        which = ("forest", "claims")
    phi = _phi(cfg.get("phi", "r=1,delta=0")) if isinstance(cfg.get("phi", ""), str) \
        else YoungPhi(float(cfg["phi"]["r"]), float(cfg["phi"].get("delta", 0.0)))
    opts = {"phi": (phi.r, phi.delta), "t": float(cfg.get("t", 1.0)), "grid": int(cfg.get("grid", 0))}
    for k in ("a", "alpha", "beta", "p"):
        opts[k] = None if cfg.get(k) is None else float(cfg[k])
    opts["N"] = None if cfg.get("N") is None else int(cfg["N"])
    if ("instance" in cfg) == ("generate" in cfg):
        raise UsageError("audit config needs exactly one of 'instance' or 'generate'")
    if "instance" in cfg:
        src = str((Path(args.config).parent / cfg["instance"]).resolve()) \
            if not Path(cfg["instance"]).is_absolute() else cfg["instance"]
        jobs = [(which, src, opts)]
        resolved_src = {"instance": cfg["instance"]}
    else:
        gen = dict(cfg["generate"])
        bad = set(gen) - GEN_KEYS
        if bad:
            raise UsageError(f"unknown generate keys: {sorted(bad)}")
        kind = gen.get("kind", "step")
        if kind not in KINDS:
            raise UsageError(f"unknown instance kind {kind!r}")
        d = tuple(int(x) for x in gen.get("domain", (1, 3, -7)))
        seed, count = int(gen.get("seed", 0)), int(gen.get("count", 1))
        r = float(gen.get("r", phi.r))
        cu, cv = float(gen.get("cap_u", 10.0)), float(gen.get("cap_vr", 10.0))
        seeds = [seed] if count == 1 else [instance_seed(seed, i) for i in range(count)]
        jobs = [(which, (kind, d, s_, r, cu, cv), opts) for s_ in seeds]
        resolved_src = {"generate": {"kind": kind, "seed": seed, "count": count, "domain": list(d),
                                     "r": r, "cap_u": cu, "cap_vr": cv}}
    results = ordered_map(_audit_one, jobs, _threads(args))
    config = {**resolved_src, "phi": phi.label(), **{k: v for k, v in opts.items() if k != "phi"}}
    rep = AuditReport(args.which, config)
    per = []
    for seed, r in results:
        rep.merge(r, prefix=f"seed={seed} " if len(results) > 1 else "")
        per.append({"seed": seed, "params": r.config, "stats": r.stats, "pass": r.ok})
    rep.stats["instances"] = per
    io.write_json(args.out, rep.as_dict())
    for line in rep.lines():
        print(line, file=sys.stderr)
    return 0 if rep.ok else 1


def cmd_gen(args) -> int:
    d = Domain(args.dim, args.box_exp, args.cell_exp)
    inst = gen_instance(args.kind, d, args.seed, r=args.r, cap_u=args.cap_u, cap_vr=args.cap_vr)
    io.write_json(args.out, io.instance_to_dict(inst))
    return 0


# -- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="omlab", description="Orlicz maximal operators and mixed weak estimates")
    p.add_argument("--threads", type=int, default=None, help="worker processes (default $OMLAB_THREADS or 1)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("maximal", help="dyadic or shifted-grid Orlicz maximal function")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--phi", default="r=1,delta=0")
    s.add_argument("--grid", default="0", help="grid id or 'all' for the sandwich bounds")
    s.add_argument("--side", choices=("lower", "upper"), default="lower")
    s.add_argument("--gmax", type=int, default=None)
    s.add_argument("--out", default="-")
    s.set_defaults(fn=cmd_maximal)

    s = sub.add_parser("luxemburg", help="Luxemburg average over one cube")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--cube", required=True, help="grid:gen:c1,c2,...")
    s.add_argument("--phi", default="r=1,delta=0")
    s.set_defaults(fn=cmd_luxemburg)

    s = sub.add_parser("cz", help="Calderon-Zygmund cubes at one level")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--phi", default="r=1,delta=0")
    s.add_argument("--lambda", dest="lam", type=float, required=True)
    s.add_argument("--grid", type=int, default=0)
    s.add_argument("--gmax", type=int, default=None)
    s.add_argument("--out", default="-")
    s.set_defaults(fn=cmd_cz)

    s = sub.add_parser("apconst", help="A_p, A_1 or A_infinity constants of a weight")
    s.add_argument("--in", dest="inp", required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--p", type=float)
    g.add_argument("--a1", action="store_true")
    g.add_argument("--ainf", action="store_true")
    s.add_argument("--grids", default="0", help="grid id or 'all'")
    s.add_argument("--out", default="-")
    s.set_defaults(fn=cmd_apconst)

    s = sub.add_parser("verify", help="mixed-inequality sweep, single instance, or report check")
    s.add_argument("--config")
    s.add_argument("--instance")
    s.add_argument("--check")
    s.add_argument("--phi", default=None)
    s.add_argument("--side", choices=SIDES, default=None)
    s.add_argument("--t", type=float, nargs="+", default=None)
    s.add_argument("--out", default="-")
    s.add_argument("--json", default=None, help="also write the sweep summary here")
    s.set_defaults(fn=cmd_verify)

    s = sub.add_parser("audit", help="lemma and claim audits")
    s.add_argument("which", choices=(*AUDITS, "all"))
    s.add_argument("--config", required=True)
    s.add_argument("--out", default="-")
    s.set_defaults(fn=cmd_audit)

    s = sub.add_parser("gen", help="generate a certified instance")
    s.add_argument("--kind", choices=KINDS, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dim", type=int, default=1)
    s.add_argument("--box-exp", type=int, default=3)
    s.add_argument("--cell-exp", type=int, default=-7)
    s.add_argument("--r", type=float, default=1.0)
    s.add_argument("--cap-u", type=float, default=10.0)
    s.add_argument("--cap-vr", type=float, default=10.0)
    s.add_argument("--out", default="-")
    s.set_defaults(fn=cmd_gen)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else 2
    try:
        return args.fn(args)
    except (UsageError, ValueError, KeyError, FileNotFoundError, IsADirectoryError) as e:
        print(f"omlab {args.command}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
