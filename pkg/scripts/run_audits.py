"""Run every lemma and claim audit over seeded certified instances.

One JSON report per (domain, phi) setting goes into the output directory and
a one-line summary per setting is printed.
"""

import argparse
import sys
import time
from pathlib import Path

from omlab.audits import full_audit, setup
from omlab.generators import KINDS, gen_instance
from omlab.geometry import Domain
from omlab.harness import instance_seed
from omlab.report import AuditReport
from omlab.young import YoungPhi

DOMAINS = {"1d": (1, 3, -7), "2d": (2, 2, -3)}
PHIS = ((1.0, 0.0), (2.0, 0.0), (1.0, 1.0), (2.0, 1.0))


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--instances", type=int, default=20, help="per (domain, phi) setting")
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--out", type=Path, default=Path("results"))
    args = p.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    ok = True
    for name, dom in DOMAINS.items():
        for r, delta in PHIS:
            phi = YoungPhi(r, delta)
            rep = AuditReport("all", {"domain": list(dom), "phi": phi.label(), "t": args.t,
                                      "seed": args.seed, "instances": args.instances})
            t0 = time.perf_counter()
            for i in range(args.instances):
                seed = instance_seed(args.seed, i)
                inst = gen_instance(KINDS[i % len(KINDS)], Domain(*dom), seed, r=r)
                s = setup(inst.f, inst.u, inst.v, phi, t=args.t)
                rep.merge(full_audit(s), prefix=f"seed={seed} ")
            dt = time.perf_counter() - t0
            tag = f"{name}_r{r:g}_d{delta:g}"
            (args.out / f"audit_{tag}.json").write_text(rep.to_json() + "\n")
            state = "ok" if rep.ok else "FAIL"
            print(f"{tag}: {state}, {rep.n_checks} checks, {dt:.1f}s")
            ok = ok and rep.ok
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
