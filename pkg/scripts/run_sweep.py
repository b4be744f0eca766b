"""Run the main-inequality sweep in theorem mode (and optionally conjecture mode).

Writes ``sweep_<mode>.csv`` and ``sweep_<mode>.json`` into the output directory.
"""

import argparse
import json
import sys
import time
from pathlib import Path

from omlab.harness import SweepConfig, sweep


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, default=SweepConfig.seed)
    p.add_argument("--instances", type=int, default=SweepConfig.n_instances)
    p.add_argument("--mode", choices=("theorem", "conjecture", "both"), default="theorem")
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("results"))
    args = p.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    modes = ("theorem", "conjecture") if args.mode == "both" else (args.mode,)
    ok = True
    for mode in modes:
        cfg = SweepConfig(seed=args.seed, n_instances=args.instances, mode=mode,
                          refine=not args.no_refine and mode == "theorem", threads=args.threads)
        t0 = time.perf_counter()
        rep = sweep(cfg)
        dt = time.perf_counter() - t0
        (args.out / f"sweep_{mode}.csv").write_text(rep.to_csv())
        (args.out / f"sweep_{mode}.json").write_text(rep.to_json() + "\n")
        print(f"{mode}: {len(rep.rows)} records, sup_ratio={rep.sup_ratio:.6g}, "
              f"checks={json.dumps(rep.checks)}, {dt:.1f}s")
        ok = ok and rep.ok is not False
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
