"""Command-line entry point: run, validate and compare scenarios."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .experiments import compare_modulations, emit_cdf, emit_csv, load_config, run_scenario, validate

OUT_ENV = "OTFS_CF_OUT"
log = logging.getLogger("otfs_cf")


def _out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "results"))


def _load(path, args):
    cfg = load_config(path)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, run=replace(cfg.run, seed=args.seed))
    if getattr(args, "drops", None) is not None:
        cfg = replace(cfg, run=replace(cfg.run, drops=args.drops))
    if getattr(args, "workers", None) is not None:
        cfg = replace(cfg, run=replace(cfg.run, workers=args.workers))
    if getattr(args, "trials", None) is not None:
        cfg = replace(cfg, evaluation=replace(cfg.evaluation, trials=args.trials))
    return cfg


def _summary(report) -> str:
    lines = [f"{'point':>10} {'metric':<14} {'mean':>10} {'stderr':>10} {'p5':>10} {'median':>10} {'sum':>10}"]
    for r in report.aggregates():
        pt = "" if r["point"] is None else f"{r['point']:g}" if isinstance(r["point"], float) else str(r["point"])
        lines.append(f"{pt:>10} {r['metric']:<14} {r['mean']:10.4g} {r['stderr']:10.3g} {r['p5']:10.4g} "
                     f"{r['median']:10.4g} {r['sum_mean']:10.4g}")
    return "\n".join(lines)


def cmd_run(args) -> int:
    cfg = _load(args.scenario, args)
    report = run_scenario(cfg)
    out = Path(args.out) if args.out else _out_dir() / f"{cfg.name}.csv"
    emit_csv(report, out)
    if args.cdf:
        emit_cdf(report, out.with_suffix(".cdf.csv"))
    print(_summary(report))
    log.info("wrote %s (%.1f s)", out, report.runtime_s)
    return 0


def cmd_validate(args) -> int:
    cfg = load_config(args.scenario)
    d = validate(cfg)
    print(f"scenario {cfg.name}: ok")
    print(f"  dims M={d.dims.M} N={d.dims.N} N_dl={d.dims.N_dl} N_ul={d.dims.N_ul}")
    print(f"  nu_max={d.nu_max:.1f} Hz  k_max={d.k_max}  l_max={d.l_max}")
    print(f"  EP guard={d.n_guard}  EP capacity={d.ep_capacity}  alpha={d.alpha:.4g}")
    print(f"  rho_d={d.rho_d:.4g}  rho_dt={d.rho_dt:.4g}  rho_pil={d.rho_pil:.4g}")
    print(f"  omega_dl={d.omega_dl:.4g}  omega_ul ep={d.omega_ul_ep:.4g} sp={d.omega_ul_sp:.4g}")
    print(f"  OFDM D_t={d.ofdm.d_t:g}  D_f={d.ofdm.d_f}")
    return 0


def cmd_compare(args) -> int:
    a = run_scenario(_load(args.scenario_a, args))
    b = run_scenario(_load(args.scenario_b, args))
    rows = compare_modulations(a, b, args.metric_a, args.metric_b)
    keys = ["mean", "median", "p5", "max", "sum_mean"]
    print(f"{'point':>10} " + " ".join(f"{k:>10}" for k in keys))
    for r in rows:
        pt = "" if r["point"] is None else str(r["point"])
        print(f"{pt:>10} " + " ".join(f"{r[k]:10.4g}" for k in keys))
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8") as fh:
            fh.write("point," + ",".join(keys) + "\n")
            for r in rows:
                fh.write(("" if r["point"] is None else str(r["point"])) + ","
                         + ",".join(repr(float(r[k])) for k in keys) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="otfs-cf", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and write its CSV")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int)
    r.add_argument("--drops", type=int)
    r.add_argument("--trials", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--out", help=f"CSV path (default ${OUT_ENV}/<name>.csv)")
    r.add_argument("--cdf", action="store_true", help="also write <out>.cdf.csv")
    r.set_defaults(fn=cmd_run)

    v = sub.add_parser("validate", help="check a scenario without running it")
    v.add_argument("scenario")
    v.set_defaults(fn=cmd_validate)

    c = sub.add_parser("compare", help="run two scenarios on shared seeds and print ratios A/B")
    c.add_argument("scenario_a")
    c.add_argument("scenario_b")
    c.add_argument("--metric-a")
    c.add_argument("--metric-b")
    c.add_argument("--seed", type=int)
    c.add_argument("--drops", type=int)
    c.add_argument("--trials", type=int)
    c.add_argument("--workers", type=int)
    c.add_argument("--out")
    c.set_defaults(fn=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
