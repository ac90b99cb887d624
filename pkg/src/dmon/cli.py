"""Command line entry point: ``dmon {generate,cluster,sweep,eval}``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path


from dmon import adcsbm
from dmon.graph import EdgeListError, load_labels, save_labels
from dmon.metrics import REPORT_FIELDS, MetricsReport, aggregate
from dmon.model import TrainingDivergedError
from dmon.nn import NonFiniteError
from dmon.pipeline import METHODS, MethodParams, MissingInputError, load_dataset, run_method

logger = logging.getLogger("dmon")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

SYNTHETIC_HIDDEN = 64
REAL_HIDDEN = 512


def deterministic_context(enabled: bool):
    """Pin BLAS/OpenMP pools to one thread so reductions run in a fixed order."""
    if not enabled:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=1)


def _write_report(report: MetricsReport, path: Path, fmt: str) -> Path:
    path = path.with_suffix("." + fmt)
    path.write_text(report.to_csv() if fmt == "csv" else report.to_json() + "\n")
    return path


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

CONFIG_FLAGS = {
    "n": int, "k": int, "d": float, "d_out": float, "d_min": float, "d_max": float,
    "alpha": float, "s": int, "k_f": int, "feature_mode": str, "sigma_c": float,
    "sigma": float, "d_out_scope": str,
}


def _config_from_args(args) -> adcsbm.AdcSbmConfig:
    overrides = {name: getattr(args, name) for name in CONFIG_FLAGS
                 if getattr(args, name, None) is not None}
    if args.defaults and overrides:
        raise adcsbm.ConfigError("--defaults cannot be combined with explicit config flags")
    return adcsbm.AdcSbmConfig(**overrides, seed=args.seed).validate()


def _summary(inst: adcsbm.SyntheticInstance, path: Path) -> str:
    g = inst.graph
    return f"n={g.n} m={g.m} mean_degree={g.degrees.mean():.2f} -> {path}"


def cmd_generate(args) -> int:
    out = Path(args.out_dir)
    if args.scenario is None:
        inst = adcsbm.generate(_config_from_args(args))
        print(_summary(inst, inst.save(out)))
        return 0
    base = _config_from_args(args)
    cells = adcsbm.scenario_configs(args.scenario, args.points, args.seeds, base=base,
                                    seed_offset=args.seed)
    name, values = adcsbm.scenario_grid(args.scenario, args.points)
    index = {float(v): i for i, v in enumerate(values)}
    for value, cfg in cells:
        inst = adcsbm.generate(cfg)
        path = out / f"scenario{args.scenario}" / f"p{index[value]:02d}_s{cfg.seed - args.seed:02d}"
        print(_summary(inst, inst.save(path)))
    return 0


# ---------------------------------------------------------------------------
# cluster / eval
# ---------------------------------------------------------------------------

def _method_params(args, synthetic: bool) -> MethodParams:
    hidden = args.hidden
    if hidden is None:
        hidden = SYNTHETIC_HIDDEN if synthetic else REAL_HIDDEN
    return MethodParams(k=args.k, hidden=hidden, epochs=args.epochs, lr=args.lr, dropout=args.dropout)


def _write_seed_table(rows: list[tuple[int, MetricsReport]], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("seed",) + REPORT_FIELDS)
        for seed, r in rows:
            w.writerow([seed] + ["" if getattr(r, f) is None else f"{getattr(r, f):.6f}"
                                 for f in REPORT_FIELDS])


def cmd_cluster(args) -> int:
    data = load_dataset(args.input, features_header=args.features_header)
    if args.method == "kmeans" and data.features is None:
        raise MissingInputError("kmeans needs features.csv in the input directory")
    params = _method_params(args, data.synthetic)
    out = Path(args.out_dir)
    (out / "partitions").mkdir(parents=True, exist_ok=True)
    if args.save_history and args.method == "dmon":
        (out / "history").mkdir(exist_ok=True)
    per_seed = []
    for i in range(args.seeds):
        seed = args.seed + i
        hist = out / "history" / f"seed{seed}.csv" if args.save_history and args.method == "dmon" else None
        part = run_method(args.method, data.graph, data.features, params, seed, history_path=hist)
        save_labels(part, out / "partitions" / f"seed{seed}.txt")
        report = MetricsReport.compute(data.graph, part, data.labels)
        per_seed.append((seed, report))
        logger.info("seed %d: %s", seed, report)
    _write_seed_table(per_seed, out / "metrics_per_seed.csv")
    mean, std = aggregate([r for _, r in per_seed])
    path = _write_report(mean, out / "metrics", args.format)
    _write_report(std, out / "metrics_std", args.format)
    sys.stdout.write(mean.to_csv() if args.format == "csv" else mean.to_json() + "\n")
    logger.info("wrote %s", path)
    return 0


def cmd_eval(args) -> int:
    data = load_dataset(args.input, features_header=args.features_header)
    labels = load_labels(args.labels) if args.labels else data.labels
    reports = []
    for part_path in args.partition:
        part = load_labels(part_path)
        reports.append(MetricsReport.compute(data.graph, part, labels))
    mean, _ = aggregate(reports) if len(reports) > 1 else (reports[0], None)
    if args.out_dir:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        _write_report(mean, Path(args.out_dir) / "metrics", args.format)
    sys.stdout.write(mean.to_csv() if args.format == "csv" else mean.to_json() + "\n")
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

SWEEP_FIELDS = ("scenario", "param", "seed", "method", "nmi", "f1", "modularity", "conductance")


def _sweep_cell(task):
    scenario, value, cfg, methods, params, deterministic = task
    with deterministic_context(deterministic):
        inst = adcsbm.generate(cfg)
        k = params.k or cfg.k
        mp = replace(params, k=k)
        rows = []
        for method in methods:
            part = run_method(method, inst.graph, inst.features, mp, cfg.seed)
            r = MetricsReport.compute(inst.graph, part, inst.graph_labels)
            row = [scenario, f"{value:.6g}", cfg.seed, method, f"{r.nmi / 100:.6f}",
                   f"{r.f1 / 100:.6f}", f"{r.modularity / 100:.6f}", f"{r.conductance / 100:.6f}"]
            if scenario == 1:
                row.append(f"{adcsbm.detectability_threshold(cfg):.6f}")
            rows.append(row)
        return rows


def _limit_threads():
    from threadpoolctl import threadpool_limits
    threadpool_limits(limits=1)


def cmd_sweep(args) -> int:
    base = adcsbm.AdcSbmConfig()
    cells = adcsbm.scenario_configs(args.scenario, args.points, args.seeds, base=base,
                                    seed_offset=args.seed)
    params = MethodParams(k=args.k or 0, hidden=args.hidden or SYNTHETIC_HIDDEN,
                          epochs=args.epochs, lr=args.lr, dropout=args.dropout)
    tasks = [(args.scenario, v, cfg, args.methods, params, args.deterministic) for v, cfg in cells]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers,
                                 initializer=_limit_threads if args.deterministic else None) as pool:
            results = list(pool.map(_sweep_cell, tasks))
    else:
        results = [_sweep_cell(t) for t in tasks]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"sweep_scenario{args.scenario}.csv"
    header = SWEEP_FIELDS + (("threshold",) if args.scenario == 1 else ())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for rows in results:
            w.writerows(rows)
    print(f"{sum(len(r) for r in results)} rows -> {path}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=default(0), help="base random seed")
    parser.add_argument("--deterministic", action="store_true", default=default(False),
                        help="single-threaded BLAS for bit-reproducible output")
    parser.add_argument("--out-dir", default=default(None), help="output directory")
    parser.add_argument("--format", choices=("csv", "json"), default=default("csv"))
    parser.add_argument("-v", "--verbose", action="store_true", default=default(False))


def _training_flags(parser: argparse.ArgumentParser, k_default) -> None:
    parser.add_argument("--k", type=int, default=k_default, help="number of clusters")
    parser.add_argument("--hidden", type=int, default=None,
                        help=f"hidden width (default {REAL_HIDDEN}, or {SYNTHETIC_HIDDEN} for synthetic input)")
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--dropout", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dmon", description="Deep Modularity Networks clustering")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    gen = sub.add_parser("generate", parents=[common], help="sample ADC-SBM instances")
    gen.add_argument("--defaults", action="store_true", help="use the default ADC-SBM config")
    gen.add_argument("--scenario", type=int, choices=sorted(adcsbm.SCENARIOS))
    gen.add_argument("--points", type=int, default=7)
    gen.add_argument("--seeds", type=int, default=1)
    for name, typ in CONFIG_FLAGS.items():
        gen.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    gen.set_defaults(func=cmd_generate, out_default="instance")

    clu = sub.add_parser("cluster", parents=[common], help="cluster a dataset directory")
    clu.add_argument("--input", required=True, help="directory with edges.tsv [features.csv] [labels]")
    clu.add_argument("--method", choices=METHODS, default="dmon")
    clu.add_argument("--seeds", type=int, default=10)
    clu.add_argument("--features-header", action="store_true")
    clu.add_argument("--save-history", action="store_true", help="write per-epoch loss CSVs (dmon)")
    _training_flags(clu, 16)
    clu.set_defaults(func=cmd_cluster, out_default="results")

    swp = sub.add_parser("sweep", parents=[common], help="run a synthetic scenario sweep")
    swp.add_argument("--scenario", type=int, required=True, choices=sorted(adcsbm.SCENARIOS))
    swp.add_argument("--points", type=int, default=7)
    swp.add_argument("--seeds", type=int, default=10)
    swp.add_argument("--methods", nargs="+", choices=METHODS, default=list(METHODS))
    swp.add_argument("--workers", type=int, default=1)
    _training_flags(swp, None)
    swp.set_defaults(func=cmd_sweep, out_default="sweeps")

    ev = sub.add_parser("eval", parents=[common], help="metrics for existing partition files")
    ev.add_argument("--input", required=True)
    ev.add_argument("--partition", nargs="+", required=True)
    ev.add_argument("--labels", default=None)
    ev.add_argument("--features-header", action="store_true")
    ev.set_defaults(func=cmd_eval, out_default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.out_dir is None:
        args.out_dir = args.out_default
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with deterministic_context(args.deterministic):
            return args.func(args)
    except (TrainingDivergedError, NonFiniteError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (adcsbm.ConfigError, MissingInputError, EdgeListError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
