"""Tuned comparison of OFUL, ESTR-OS, ESTR-BM and ISSE on the 8x8 rank-1 problem.

Usage: python3 scripts/reproduce_figure2.py [--config configs/figure2.json] [--reps N] [--out results/figure2]
"""

import argparse
import logging
import time
from pathlib import Path

from bilinear_bandit.harness import (
    config_from_dict,
    dump_config,
    emit_csv,
    emit_plot,
    load_config,
    run_experiment,
    write_summary,
)

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=ROOT / "configs" / "figure2.json")
    ap.add_argument("--reps", type=int)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--out", default=ROOT / "results" / "figure2")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = load_config(args.config)
    overrides = {k: v for k, v in (("reps", args.reps), ("workers", args.workers)) if v is not None}
    if overrides:
        cfg = config_from_dict({**dump_config(cfg), **overrides})

    started = time.perf_counter()
    res = run_experiment(cfg, progress=lambda i, n: i % 200 == 0 and logging.info("%d/%d", i, n))
    out = Path(args.out)
    emit_csv(res, out / "results.csv")
    emit_plot(res, out / "regret.svg", title="Cumulative regret (mean, 95% band)")
    write_summary(res, out / "summary.json")

    oful = res.methods["oful"]
    print(f"{'method':8s} {'c':>5s} {'T1':>5s} {'R(T)':>9s} {'95% hw':>7s}  below OFUL band")
    for m, r in res.methods.items():
        below = "" if m == "oful" else str(r.mean[-1] + r.half_width[-1] < oful.mean[-1] - oful.half_width[-1])
        print(
            f"{m:8s} {r.chosen['c']:5g} {r.chosen['T1'] or '-':>5} {r.mean[-1]:9.2f} {r.half_width[-1]:7.2f}  {below}"
        )
    print(f"{(time.perf_counter() - started) / 60:.1f} min; wrote {out}")


if __name__ == "__main__":
    main()
