"""Command-line interface: ``gplab simulate|estimate|predict|experiment``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from typing import Any

import numpy as np

from gplab.errors import ConfigError, NumericalError
from gplab.harness import ExperimentConfig, run_experiment, summary_path
from gplab.mixing import MixingSpec
from gplab.partition import PartitionState, SuffStats, make_rng, replicate_seed
from gplab.predict import (SimplexKind, delta_rule, estimate_simplex, kl, local_ci,
                           sample_subset_In, subset_mass, tv, uniform_ci)
from gplab.qmle import ci_alpha, naive_estimate, qmle
from gplab.sibuya import fisher_info

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _add_model_args(p: argparse.ArgumentParser, n_default: int | None = 1000) -> None:
    p.add_argument("--n", type=int, default=n_default, help="partition size")
    p.add_argument("--alpha", type=float, default=0.5, help="discount parameter in (0, 1)")
    p.add_argument("--mixing", default="dirac:0",
                   help="mixing distribution as JSON or inline, e.g. dirac:0, atoms:0@0.5,3@0.5, "
                        "uniform:0,3, halfnormal:1, halft:3,1")
    p.add_argument("--seed", type=int, default=0, help="master seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gplab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample partitions and print sufficient statistics as CSV")
    _add_model_args(p)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--dump-state", metavar="PATH",
                   help="also write block sizes and configuration of every replicate as JSON")

    p = sub.add_parser("estimate", help="QMLE of alpha with its confidence interval")
    p.add_argument("input", nargs="?", help="CSV from `simulate` or a JSON object/list of stats")
    _add_model_args(p, n_default=None)
    p.add_argument("--eps", type=float, default=0.05)

    p = sub.add_parser("predict", help="predictive simplex, divergences and CI widths")
    p.add_argument("--state", help="JSON written by `simulate --dump-state`")
    p.add_argument("--replicate", type=int, default=0, help="replicate to read from --state")
    _add_model_args(p)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--subset", help="comma-separated block indices (1-based) for the local CI")
    p.add_argument("--delta-rule", default="k_pow", choices=("k_pow", "sqrt_log"))
    p.add_argument("--top", type=int, default=10, help="blocks shown in the simplex printout")

    p = sub.add_parser("experiment", help="run a replicated Monte Carlo experiment")
    p.add_argument("--config", help="JSON experiment configuration")
    p.add_argument("--experiment", choices=("DiversityHist", "QQ", "Coverage", "RateSweep"))
    _add_model_args(p, n_default=None)
    p.add_argument("--reps", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--delta-rule", choices=("k_pow", "sqrt_log"))
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="CSV output path; the summary goes next to it")
    p.add_argument("--preset", choices=("desk",), help="scale n and replicates down by 4")
    p.add_argument("--full", action="store_true", help="print QQ pairs and histogram in the summary")
    return parser


def _emit(obj: Any) -> None:
    json.dump(obj, sys.stdout, indent=2, default=_json_default)
    sys.stdout.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _state_from_args(args) -> PartitionState:
    mixing = MixingSpec.parse(args.mixing)
    if args.n is None or args.n < 1:
        raise ConfigError("--n must be a positive integer")
    state = PartitionState(args.alpha, mixing, seed=replicate_seed(args.seed, 0), capacity=args.n)
    state.run_to(args.n)
    return state


# -- subcommands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    mixing = MixingSpec.parse(args.mixing)
    if args.n < 1 or args.reps < 1:
        raise ConfigError("--n and --reps must be positive")
    rows, dumps = [], []
    for r in range(args.reps):
        state = PartitionState(args.alpha, mixing, seed=replicate_seed(args.seed, r),
                               capacity=args.n)
        stats = state.run_to(args.n)
        rows.append(stats.csv_row(r))
        if args.dump_state:
            dumps.append({"replicate_id": r, "alpha": args.alpha, "mixing": mixing.to_dict(),
                          "master_seed": args.seed, **stats.to_dict(),
                          "block_sizes": state.block_sizes.tolist(),
                          "true_simplex_new_block": state.true_simplex()[0]})
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["replicate_id", "n", "k_n", "size_counts"])
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()
    if args.dump_state:
        with open(args.dump_state, "w") as fh:
            json.dump(dumps, fh, indent=1)
    return EXIT_OK


def _read_stats(path: str) -> list[tuple[int, SuffStats]]:
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith(("{", "[")):
        data = json.loads(text)
        items = data if isinstance(data, list) else [data]
        return [(int(d.get("replicate_id", i)), SuffStats.from_dict(d)) for i, d in enumerate(items)]
    reader = csv.reader(text.splitlines())
    out = []
    for row in reader:
        if not row or row[0] == "replicate_id":
            continue
        out.append(SuffStats.from_csv_row(row))
    return out


def _estimate_one(rid: int, stats: SuffStats, eps: float) -> dict[str, Any]:
    res = qmle(stats)
    rec = {"replicate_id": rid, "n": stats.n, "k_n": stats.k_n, **res.to_dict(),
           "naive_estimate": naive_estimate(stats)}
    if res.interior:
        ci = ci_alpha(stats, res, eps)
        rec["ci"] = {"eps": eps, "lower": ci.lower, "upper": ci.upper, "half_width": ci.half_width}
        rec["fisher_info"] = fisher_info(res.alpha_hat).value
    else:
        rec["ci"] = None
        rec["note"] = "CI undefined at boundary"
    return rec


def cmd_estimate(args) -> int:
    if args.input:
        items = _read_stats(args.input)
    else:
        items = [(0, _state_from_args(args).suff_stats())]
    out = [_estimate_one(rid, s, args.eps) for rid, s in items]
    _emit(out[0] if len(out) == 1 else out)
    return EXIT_OK


def _load_state(args) -> PartitionState:
    with open(args.state) as fh:
        data = json.load(fh)
    items = data if isinstance(data, list) else [data]
    match = [d for d in items if int(d.get("replicate_id", 0)) == args.replicate]
    if not match:
        raise ConfigError(f"replicate {args.replicate} not found in {args.state}")
    d = match[0]
    try:
        return PartitionState.from_block_sizes(d["block_sizes"], float(d["alpha"]),
                                               MixingSpec.from_dict(d["mixing"]))
    except KeyError as exc:
        raise ConfigError(f"state file lacks field {exc}") from exc


def cmd_predict(args) -> int:
    state = _load_state(args) if args.state else _state_from_args(args)
    stats = state.suff_stats()
    res = qmle(stats)
    pair = estimate_simplex(state, res.alpha_hat)
    order = np.argsort(-state.block_sizes, kind="stable")[: args.top] + 1
    shown = np.concatenate(([0], order))
    out: dict[str, Any] = {
        "n": stats.n, "k_n": stats.k_n, **res.to_dict(),
        "indices": shown.tolist(),
        "truth": pair.truth[shown].tolist(),
        "estimate": pair.estimate[shown].tolist(),
        "tv": tv(pair), "kl": kl(pair),
        "tv_frequency": tv(estimate_simplex(state, res.alpha_hat, SimplexKind.FREQUENCY)),
    }
    if res.interior:
        delta = delta_rule(stats.k_n, stats.n, args.delta_rule)
        if args.subset:
            try:
                subset = [int(x) for x in args.subset.split(",") if x.strip()]
            except ValueError as exc:
                raise ConfigError(f"bad --subset {args.subset!r}") from exc
        else:
            subset = list(sample_subset_In(state.block_sizes, delta, make_rng(args.seed)))
        ci = local_ci(state.block_sizes, res.alpha_hat, args.eps, subset, delta)
        out["uniform_ci_half_width"] = uniform_ci(stats, res.alpha_hat, args.eps)
        out["local_ci"] = {"subset_size": len(ci.subset), "delta_n": delta, "center": ci.center,
                           "half_width": ci.half_width,
                           "truth": subset_mass(pair.truth, ci.subset),
                           "covered": ci.covers(subset_mass(pair.truth, ci.subset))}
    else:
        out["note"] = "CI undefined at boundary"
    _emit(out)
    return EXIT_OK


def _experiment_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config).to_dict()
    else:
        cfg = {"experiment": args.experiment or "QQ", "n": 20000, "replicates": 1000,
               "alpha": 0.8, "mixing": "dirac:0"}
    overrides = {"experiment": args.experiment, "n": args.n, "replicates": args.reps,
                 "eps": args.eps, "delta_rule": args.delta_rule, "threads": args.threads,
                 "output_path": args.out}
    if not args.config:
        overrides.update(alpha=args.alpha, mixing=args.mixing, master_seed=args.seed)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(cfg).with_preset(args.preset)


def _compact(summary: dict[str, Any]) -> dict[str, Any]:
    out = {}
    for k, v in summary.items():
        if isinstance(v, dict):
            v = {kk: vv for kk, vv in v.items() if kk not in ("qq",)}
        if k != "histogram":
            out[k] = v
    return out


def cmd_experiment(args) -> int:
    cfg = _experiment_config(args)
    res = run_experiment(cfg)
    summary = res.summary if args.full else _compact(res.summary)
    if cfg.output_path:
        summary = {**summary, "csv": cfg.output_path,
                   "summary_json": str(summary_path(cfg.output_path))}
    _emit(summary)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "predict": cmd_predict,
            "experiment": cmd_experiment}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ValueError as exc:  # ConfigError, MembershipError, bad JSON
        print(f"gplab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError) as exc:
        print(f"gplab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"gplab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
