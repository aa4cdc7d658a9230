"""Command line entry point: ``run``, ``plot`` and ``check-invariants``.

Exit codes: 0 success, 1 config error, 2 run failure, 3 invariant violation.
"""

import argparse
import logging
import sys
import time
from pathlib import Path

from .errors import BanditError, ConfigError
from .harness import (
    config_from_dict,
    curves_from_csv,
    dump_config,
    emit_csv,
    emit_plot,
    load_config,
    run_experiment,
    write_summary,
)
from .invariants import check_many, spec_from_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUN, EXIT_INVARIANT = 0, 1, 2, 3

log = logging.getLogger("bilinear_bandit")


def _load(args):
    cfg = load_config(args.config)
    overrides = {}
    for name in ("seed", "reps", "out_dir", "workers"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "methods", None):
        overrides["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    if overrides:
        cfg = config_from_dict({**dump_config(cfg), **overrides})
    return cfg


def cmd_run(args):
    cfg = _load(args)
    out = Path(cfg.out_dir)
    n_total = sum(len(cfg.grid_points(m)) * cfg.reps for m in cfg.methods)
    log.info("running %d runs: methods=%s reps=%d T=%d", n_total, ",".join(cfg.methods), cfg.reps, cfg.T)
    started = time.perf_counter()

    def progress(done, total):
        if done % max(total // 20, 1) == 0 or done == total:
            log.info("%d/%d runs (%.0fs)", done, total, time.perf_counter() - started)

    result = run_experiment(cfg, progress=progress)
    emit_csv(result, out / "results.csv")
    emit_plot(result, out / "regret.svg")
    write_summary(result, out / "summary.json")
    for m, res in result.methods.items():
        print(
            f"{m:8s} c={res.chosen['c']:<5g} T1={res.chosen['T1']!s:<5} "
            f"R(T)={res.mean[-1]:9.3f} +/- {res.half_width[-1]:7.3f}  "
            f"failures={len(res.failures)}  {res.wall_clock:6.1f}s"
        )
    print(f"wrote {out / 'results.csv'}, {out / 'regret.svg'}, {out / 'summary.json'}")
    return EXIT_OK


def cmd_plot(args):
    emit_plot(curves_from_csv(args.inp), args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_check(args):
    cfg = _load(args)
    n = args.n_runs if args.n_runs is not None else max(cfg.reps, 100)
    spec = None if args.randomize else spec_from_experiment(cfg)
    checks = check_many(n, seed=cfg.seed, spec=spec, T=cfg.T)
    bad = [c for c in checks if not c.ok]
    for c in bad if not args.verbose else checks:
        print(c)
    names = sorted({c.name for c in checks})
    print(f"{len(checks)} checks over {n} runs ({', '.join(names)}): {len(bad)} violations")
    return EXIT_INVARIANT if bad else EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="bilinear-bandit", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write CSV, SVG and a JSON summary")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--reps", type=int)
    run.add_argument("--out-dir", dest="out_dir")
    run.add_argument("--methods", help="comma separated subset of oful,estr-os,estr-bm,isse")
    run.add_argument("--workers", type=int)
    run.set_defaults(func=cmd_run)

    plot = sub.add_parser("plot", help="render an emitted CSV as SVG")
    plot.add_argument("--in", dest="inp", required=True)
    plot.add_argument("--out", required=True)
    plot.set_defaults(func=cmd_plot)

    chk = sub.add_parser("check-invariants", help="run the per-run assertion suite")
    chk.add_argument("--config", required=True)
    chk.add_argument("--seed", type=int)
    chk.add_argument("--n-runs", dest="n_runs", type=int)
    chk.add_argument(
        "--randomize", action="store_true", help="draw dimensions, rank and noise per run"
    )
    chk.set_defaults(func=cmd_check)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error in field {exc.field!r}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        if args.command == "plot":
            print(f"run failure: {exc}", file=sys.stderr)
            return EXIT_RUN
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BanditError, ArithmeticError, ValueError, OSError) as exc:
        print(f"run failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
