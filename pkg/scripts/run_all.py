"""Run every committed scenario and write <out>/<name>.csv plus CDF tables.

    python3 scripts/run_all.py [--out results] [--drops N] [--workers W] [names ...]
"""

import argparse
import sys
import time
from pathlib import Path

from otfs_cf.experiments import emit_cdf, emit_csv, load_config, run_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help="scenario stems (default: all)")
    ap.add_argument("--out", default="results")
    ap.add_argument("--drops", type=int)
    ap.add_argument("--workers", type=int)
    args = ap.parse_args(argv)
    paths = [SCENARIOS / f"{n}.yaml" for n in args.names] or sorted(SCENARIOS.glob("*.yaml"))
    out = Path(args.out)
    for p in paths:
        cfg = load_config(p)
        if args.drops is not None:
            cfg.run.drops = args.drops
        t0 = time.perf_counter()
        rep = run_scenario(cfg, workers=args.workers)
        emit_csv(rep, out / f"{cfg.name}.csv")
        emit_cdf(rep, out / f"{cfg.name}.cdf.csv")
        print(f"{cfg.name}: {rep.drops} drops, {time.perf_counter() - t0:.1f}s", file=sys.stderr)


if __name__ == "__main__":
    main()
