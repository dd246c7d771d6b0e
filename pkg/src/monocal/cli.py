"""Command-line workflows: generate data, fit calibrators, evaluate, and sweep.

Every command writes a ``<out>.manifest.json`` beside its primary output
listing the command, its inputs, every emitted result file, and wall times.
Result files themselves contain no timing, so reruns with identical flags
are byte-identical.
"""

import argparse
import json
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import baselines, core, data_io, metrics, optim, transform

METHODS = ("mcct", "mcct-i", "ts", "vs", "hb", "ets-nll", "ets-mse")
UNCALIBRATED = "uncalibrated"

SCALAR_COLUMNS = (
    "ece",
    "eq_mass_ece",
    "ece_kde",
    "accuracy",
    "nll",
    "prediction_change_rate",
    "uncertain_alteration_rate",
)
# Higher is better only for accuracy; every other column ranks ascending.
RANK_DESCENDING = {"accuracy"}


def _resolve_format(path, fmt):
    if fmt is not None:
        return fmt
    try:
        return data_io.infer_format(path)
    except ValueError:
        return data_io.CSV


def _solver_config(args):
    if getattr(args, "solver_config", None):
        with open(args.solver_config) as fh:
            cfg = optim.SolverConfig.from_json(json.load(fh))
    else:
        cfg = optim.SolverConfig()
    overrides = {
        name: getattr(args, name)
        for name in ("max_iterations", "stationarity_tol", "constraint_tol", "w_floor")
        if getattr(args, name, None) is not None
    }
    if overrides:
        cfg = optim.SolverConfig(**{**cfg.to_json(), **overrides})
    return cfg


def _fit_method(method, z, y, topk=None, cfg=None):
    """Fit one method by name; returns (model, solver-diagnostics dict)."""
    if method in (baselines.MCCT, baselines.MCCT_I):
        mode = transform.DIRECT if method == baselines.MCCT else transform.INVERSE
        result = optim.fit_mcct(z, y, mode=mode, k=topk, cfg=cfg)
        return baselines.from_monotone_params(result.params), {
            "final_loss": result.final_loss,
            "iterations": result.iterations,
            "converged": result.converged,
            "constraint_violation": result.constraint_violation,
            "dropped_samples": result.dropped_samples,
        }
    if topk is not None:
        warnings.warn(f"--topk only affects mcct/mcct-i; ignored for {method}")
    model = baselines.fit_baseline(method, z, y)
    return model, {
        "final_loss": core.nll(model.apply(z), y),
        "iterations": None,
        "converged": True,
    }


def _dump_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _write_manifest(primary_out, doc):
    path = str(primary_out) + ".manifest.json"
    _dump_json(path, doc)
    return path


def _format_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(v) for v in row) + "\n")


def _json_base(out):
    return out[: -len(".json")] if out.endswith(".json") else out


def _rank(values, descending=False):
    """1-based ranks, best first; ties and order resolved by list position."""
    keyed = [(-v if descending else v, i) for i, v in enumerate(values)]
    ranks = [0] * len(values)
    for rank, (_, i) in enumerate(sorted(keyed), start=1):
        ranks[i] = rank
    return ranks


def _run_cells(cells, worker, threads):
    """Evaluate independent cells, optionally across threads.

    Results are collected by cell index, so output order and content do not
    depend on scheduling.  Failures are captured per cell as strings.
    """
    results = [None] * len(cells)

    def guarded(i):
        try:
            results[i] = ("ok", worker(*cells[i]))
        except Exception as exc:  # recorded per-cell, run continues
            results[i] = ("error", f"{type(exc).__name__}: {exc}")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(guarded, range(len(cells))))
    else:
        for i in range(len(cells)):
            guarded(i)
    return results


def cmd_gen_synth(args):
    cfg = data_io.SynthConfig(
        n=args.n,
        m=args.m,
        alpha=args.alpha,
        overconfidence=args.overconfidence,
        noise_sd=args.noise_sd,
        seed=args.seed,
    )
    fmt = _resolve_format(args.out, args.format)
    t0 = time.perf_counter()
    z, y, true_probs = data_io.generate_synthetic(cfg)
    data_io.write_dataset(args.out, z, y, fmt=fmt)
    true_path = f"{args.out}.true_probs.{fmt}"
    data_io.write_matrix(true_path, true_probs, fmt=fmt)
    outputs = [args.out, true_path]
    if fmt == data_io.RAW_BINARY:
        outputs += [args.out + data_io.SIDECAR_SUFFIX, true_path + data_io.SIDECAR_SUFFIX]
    _write_manifest(
        args.out,
        {
            "command": "gen-synth",
            "inputs": {},
            "config": {
                "n": cfg.n,
                "m": cfg.m,
                "alpha": cfg.alpha,
                "overconfidence": cfg.overconfidence,
                "noise_sd": cfg.noise_sd,
            },
            "seed": args.seed,
            "outputs": outputs,
            "wall_time_s": {"generate": time.perf_counter() - t0},
        },
    )
    return 0


def cmd_fit(args):
    z, y = data_io.read_dataset(args.data, _resolve_format(args.data, args.format))
    cfg = _solver_config(args)
    t0 = time.perf_counter()
    model, info = _fit_method(args.method, z, y, topk=args.topk, cfg=cfg)
    wall = time.perf_counter() - t0
    model.save(args.out)
    _write_manifest(
        args.out,
        {
            "command": "fit",
            "inputs": {"data": args.data},
            "method": args.method,
            "topk": args.topk,
            "solver_config": cfg.to_json(),
            "seed": args.seed,
            "outputs": [args.out],
            "fit": info,
            "wall_time_s": {"fit": wall},
        },
    )
    if not info["converged"]:
        print(f"fit did not converge; best iterate written to {args.out}", file=sys.stderr)
        return 3
    return 0


def cmd_eval(args):
    z, y = data_io.read_dataset(args.data, _resolve_format(args.data, args.format))
    model = baselines.CalibratedModel.load(args.model)
    if model.m != z.shape[1]:
        print(f"model expects m={model.m} classes, data has m={z.shape[1]}", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    p_base = core.softmax_rows(z)
    report = metrics.compute_report(model.apply(z), y, p_base, num_bins=args.bins)
    wall = time.perf_counter() - t0
    _dump_json(args.out, report.to_json())
    reliability_path = _json_base(args.out) + ".reliability.csv"
    with open(reliability_path, "w") as fh:
        fh.write(report.bins.to_csv())
    _write_manifest(
        args.out,
        {
            "command": "eval",
            "inputs": {"data": args.data, "model": args.model},
            "bins": args.bins,
            "seed": args.seed,
            "outputs": [args.out, reliability_path],
            "wall_time_s": {"eval": wall},
        },
    )
    return 0


def _method_list(raw):
    methods = [m.strip() for m in raw.split(",") if m.strip()]
    if not methods:
        raise ValueError("need at least one method")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods {unknown}; choose from {METHODS}")
    return methods


def _report_row(prefix, report_or_error):
    status, payload = report_or_error
    if status == "error":
        return list(prefix) + [None] * len(SCALAR_COLUMNS) + [payload]
    scalars = payload.scalars()
    return list(prefix) + [scalars[c] for c in SCALAR_COLUMNS] + ["ok"]


def cmd_compare(args):
    z, y = data_io.read_dataset(args.data, _resolve_format(args.data, args.format))
    methods = _method_list(args.methods)
    cfg = _solver_config(args)
    seeds = [args.seed + i for i in range(args.runs)]
    t0 = time.perf_counter()

    splits = {seed: data_io.split_dataset(z, y, args.split, seed) for seed in seeds}
    base_probs = {seed: core.softmax_rows(splits[seed][1][0]) for seed in seeds}

    def run_cell(seed, method):
        (zc, yc), (zt, yt) = splits[seed]
        p_base = base_probs[seed]
        if method == UNCALIBRATED:
            p = p_base
        else:
            model, _ = _fit_method(method, zc, yc, cfg=cfg)
            p = model.apply(zt)
        return metrics.compute_report(p, yt, p_base, num_bins=args.bins)

    all_methods = [UNCALIBRATED] + methods
    cells = [(seed, method) for method in all_methods for seed in seeds]
    results = _run_cells(cells, run_cell, args.threads)

    rows = []
    per_method = {method: [] for method in all_methods}
    failures = []
    for (seed, method), outcome in zip(cells, results):
        rows.append(_report_row([method, seed], outcome))
        if outcome[0] == "ok":
            per_method[method].append(outcome[1].scalars())
        else:
            failures.append({"method": method, "seed": seed, "error": outcome[1]})

    means = {}
    for method in all_methods:
        reports = per_method[method]
        if reports:
            means[method] = {
                c: (
                    float(np.mean([r[c] for r in reports]))
                    if all(r[c] is not None for r in reports)
                    else None
                )
                for c in SCALAR_COLUMNS
            }
    for method in all_methods:
        if method in means:
            rows.append([method, "mean"] + [means[method][c] for c in SCALAR_COLUMNS] + ["ok"])

    ranked = [m for m in all_methods if m in means]
    rank_by_column = {}
    for c in SCALAR_COLUMNS:
        values = [means[m][c] for m in ranked]
        if any(v is None for v in values):
            rank_by_column[c] = {m: None for m in ranked}
        else:
            ranks = _rank(values, descending=c in RANK_DESCENDING)
            rank_by_column[c] = dict(zip(ranked, ranks))
    for method in ranked:
        rows.append([method, "rank"] + [rank_by_column[c][method] for c in SCALAR_COLUMNS] + ["ok"])

    header = ["method", "seed"] + list(SCALAR_COLUMNS) + ["status"]
    csv_path = _json_base(args.out) + ".csv"
    _write_csv(csv_path, header, rows)
    _dump_json(
        args.out,
        {
            "methods": all_methods,
            "seeds": seeds,
            "split": args.split,
            "per_seed": [
                {"method": method, "seed": seed, "status": outcome[0],
                 **(outcome[1].scalars() if outcome[0] == "ok" else {"error": outcome[1]})}
                for (seed, method), outcome in zip(cells, results)
            ],
            "mean": means,
            "rank": rank_by_column,
        },
    )
    _write_manifest(
        args.out,
        {
            "command": "compare",
            "inputs": {"data": args.data},
            "methods": methods,
            "split": args.split,
            "runs": args.runs,
            "solver_config": cfg.to_json(),
            "seed": args.seed,
            "outputs": [args.out, csv_path],
            "failures": failures,
            "wall_time_s": {"total": time.perf_counter() - t0},
        },
    )
    return 0 if not failures else 1


def cmd_sweep_size(args):
    z, y = data_io.read_dataset(args.data, _resolve_format(args.data, args.format))
    methods = _method_list(args.methods)
    cfg = _solver_config(args)
    fractions = [float(f) for f in args.fractions.split(",")]
    if any(not 0.0 < f <= 1.0 for f in fractions):
        raise ValueError("fractions must lie in (0, 1]")
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [args.seed]
    t0 = time.perf_counter()

    (zc, yc), (zt, yt) = data_io.split_dataset(z, y, args.split, args.seed)
    p_base = core.softmax_rows(zt)
    n_cal = zc.shape[0]

    def run_cell(fraction, seed, method):
        size = int(round(fraction * n_cal))
        if size < 2:
            raise ValueError(f"subsample of {size} samples is too small to fit")
        if size >= n_cal:
            zs, ys = zc, yc
        else:
            idx = np.random.default_rng(seed).permutation(n_cal)[:size]
            zs, ys = zc[idx], yc[idx]
        model, _ = _fit_method(method, zs, ys, cfg=cfg)
        return size, metrics.compute_report(model.apply(zt), yt, p_base, num_bins=args.bins)

    cells = [(f, s, m) for f in fractions for s in seeds for m in methods]
    results = _run_cells(cells, run_cell, args.threads)

    rows = []
    failures = []
    for (fraction, seed, method), outcome in zip(cells, results):
        if outcome[0] == "ok":
            size, report = outcome[1]
            rows.append(_report_row([fraction, seed, method, size], ("ok", report)))
        else:
            rows.append(_report_row([fraction, seed, method, None], outcome))
            failures.append({"fraction": fraction, "seed": seed, "method": method, "error": outcome[1]})

    header = ["fraction", "seed", "method", "n_calib"] + list(SCALAR_COLUMNS) + ["status"]
    _write_csv(args.out, header, rows)
    json_path = args.out + ".json"
    _dump_json(
        json_path,
        {
            "rows": [dict(zip(header, row)) for row in rows],
            "fractions": fractions,
            "seeds": seeds,
            "methods": methods,
        },
    )
    _write_manifest(
        args.out,
        {
            "command": "sweep-size",
            "inputs": {"data": args.data},
            "methods": methods,
            "fractions": fractions,
            "seeds": seeds,
            "split": args.split,
            "solver_config": cfg.to_json(),
            "seed": args.seed,
            "outputs": [args.out, json_path],
            "failures": failures,
            "wall_time_s": {"total": time.perf_counter() - t0},
        },
    )
    return 0 if not failures else 1


def cmd_sweep_topk(args):
    z, y = data_io.read_dataset(args.data, _resolve_format(args.data, args.format))
    cfg = _solver_config(args)
    kvalues = [int(k) for k in args.kvalues.split(",")]
    mode = transform.DIRECT if args.mode == "direct" else transform.INVERSE
    t0 = time.perf_counter()

    (zc, yc), (zt, yt) = data_io.split_dataset(z, y, args.split, args.seed)
    p_base = core.softmax_rows(zt)

    rows = []
    failures = []
    wall_times = {}
    # Cells run serially: the per-k wall time is part of the output.
    for k in kvalues:
        try:
            fit_start = time.perf_counter()
            result = optim.fit_mcct(zc, yc, mode=mode, k=k, cfg=cfg)
            fit_seconds = time.perf_counter() - fit_start
            model = baselines.from_monotone_params(result.params)
            report = metrics.compute_report(model.apply(zt), yt, p_base, num_bins=args.bins)
            scalars = report.scalars()
            rows.append(
                [k]
                + [scalars[c] for c in SCALAR_COLUMNS]
                + [fit_seconds, result.dropped_samples, result.iterations, result.converged, "ok"]
            )
            wall_times[str(k)] = fit_seconds
        except Exception as exc:
            rows.append([k] + [None] * len(SCALAR_COLUMNS) + [None, None, None, None, f"{type(exc).__name__}: {exc}"])
            failures.append({"k": k, "error": f"{type(exc).__name__}: {exc}"})

    header = ["k"] + list(SCALAR_COLUMNS) + ["fit_seconds", "dropped_samples", "iterations", "converged", "status"]
    _write_csv(args.out, header, rows)
    json_path = args.out + ".json"
    _dump_json(json_path, {"rows": [dict(zip(header, row)) for row in rows], "mode": args.mode})
    _write_manifest(
        args.out,
        {
            "command": "sweep-topk",
            "inputs": {"data": args.data},
            "mode": args.mode,
            "kvalues": kvalues,
            "split": args.split,
            "solver_config": cfg.to_json(),
            "seed": args.seed,
            "outputs": [args.out, json_path],
            "failures": failures,
            "wall_time_s": {"total": time.perf_counter() - t0, "fit_per_k": wall_times},
        },
    )
    return 0 if not failures else 1


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="monocal",
        description="Order-preserving post-hoc calibration of classifier logits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="base random seed (default 0)")
    common.add_argument("--threads", type=int, default=1, help="parallel workers for sweep cells")
    common.add_argument(
        "--format",
        choices=data_io.FORMATS,
        default=None,
        help="dataset file format; inferred from the file extension by default",
    )

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--solver-config", default=None, help="JSON file with solver settings")
    solver.add_argument("--max-iterations", type=int, default=None)
    solver.add_argument("--stationarity-tol", type=float, default=None)
    solver.add_argument("--constraint-tol", type=float, default=None)
    solver.add_argument("--w-floor", type=float, default=None)

    p = sub.add_parser("gen-synth", parents=[common], help="generate a synthetic logit dataset")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--overconfidence", type=float, default=1.0)
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("fit", parents=[common, solver], help="fit a calibrator on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--topk", type=int, default=None, help="retained ranks for mcct/mcct-i")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", parents=[common], help="evaluate a fitted model on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--bins", type=int, default=15)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", parents=[common, solver], help="fit and evaluate several methods over seeded splits")
    p.add_argument("--data", required=True)
    p.add_argument("--methods", required=True, help="comma-separated method list")
    p.add_argument("--split", type=float, default=0.5, help="calibration fraction of each split")
    p.add_argument("--runs", type=int, default=1, help="number of consecutive split seeds")
    p.add_argument("--bins", type=int, default=15)
    p.add_argument("--out", required=True, help="JSON output path (.csv written beside it)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep-size", parents=[common, solver], help="calibration-set-size sweep")
    p.add_argument("--data", required=True)
    p.add_argument("--fractions", required=True, help="comma-separated fractions in (0, 1]")
    p.add_argument("--methods", required=True)
    p.add_argument("--seeds", default=None, help="comma-separated subsample seeds (default: --seed)")
    p.add_argument("--split", type=float, default=0.5)
    p.add_argument("--bins", type=int, default=15)
    p.add_argument("--out", required=True, help="CSV output path")
    p.set_defaults(func=cmd_sweep_size)

    p = sub.add_parser("sweep-topk", parents=[common, solver], help="retained-rank sweep with fit timing")
    p.add_argument("--data", required=True)
    p.add_argument("--kvalues", required=True, help="comma-separated k values")
    p.add_argument("--mode", choices=("direct", "inverse"), default="direct")
    p.add_argument("--split", type=float, default=0.5)
    p.add_argument("--bins", type=int, default=15)
    p.add_argument("--out", required=True, help="CSV output path")
    p.set_defaults(func=cmd_sweep_topk)

    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
