"""Command-line front end.

One binary with subcommands: ``aggregate`` fits convex/linear weights to a
dataset or a precomputed prediction matrix, ``bench``/``gamma-sweep``/
``contract`` drive the replicated studies, and ``concentration`` estimates
prior tail mass. Everything a command writes is CSV with a header; failures
print one JSON line to stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .bench import (
    BenchmarkConfig,
    _cell,
    contraction_study,
    export_diagnostics,
    gamma_sensitivity,
    run_benchmark,
    write_concentration_report,
    write_contraction_report,
    write_csv,
    write_rmse_report,
    write_sweep_report,
)
from .ca import CaHyper, run_chain_ca
from .dirichlet import DirichletHyper, estimate_concentration
from .la import LaHyper, run_chain_la
from .pipeline import (
    aggregate,
    default_learners,
    read_dataset_csv,
    read_prediction_matrix_csv,
)

__all__ = ["main", "build_parser"]


class UsageError(Exception):
    """Bad command-line arguments."""


class _Parser(argparse.ArgumentParser):
    # raise instead of exiting so main() can emit the JSON error line
    def error(self, message):
        raise UsageError(message)


def _default_threads() -> int:
    return os.cpu_count() or 1


def _add_chain_flags(p, iters=2000, burnin=1000):
    p.add_argument("--iters", type=int, default=iters, help="total MCMC sweeps")
    p.add_argument("--burnin", type=int, default=burnin, help="discarded initial sweeps")
    p.add_argument("--alpha", type=float, default=1.0, help="Dirichlet total-mass parameter")
    p.add_argument("--gamma", type=float, default=2.0, help="concentration decay exponent")


def _add_common(p):
    p.add_argument("--seed", type=int, default=0, help="master seed (unsigned 64-bit)")
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help="worker processes for replicates (default: logical cores)")


def _parse_list(text: str, kind, flag: str):
    try:
        vals = [kind(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"{flag}: {exc}") from None
    if not vals:
        raise UsageError(f"{flag}: empty list")
    return vals


def _print_paths(paths: dict):
    for key in sorted(paths):
        print(f"{key}: {paths[key]}")


# ---------------------------------------------------------------- subcommands

def _cmd_aggregate(args) -> int:
    seed = [int(args.seed)]
    if args.pred_matrix is not None:
        ids, F, y = read_prediction_matrix_csv(args.pred_matrix, require_y=False)
        if y is None:
            if args.data is None:
                raise UsageError("--pred-matrix has no y column, so --data is required")
            data = read_dataset_csv(args.data)
            if data.n != F.shape[0]:
                raise ValueError(
                    f"row mismatch: prediction matrix has {F.shape[0]} rows, data has {data.n}"
                )
            y = data.Y
        M = F.shape[1]
        d = DirichletHyper(alpha=args.alpha, gamma=args.gamma, M=M)
        if args.mode == "ca":
            hyper = CaHyper(dirichlet=d, n_iter=args.iters, burn_in=args.burnin)
            samples = run_chain_ca(y, F, hyper, seed)
            weights = samples.draws.mean(axis=0)
        else:
            hyper = LaHyper(dirichlet=d, n_iter=args.iters, burn_in=args.burnin)
            samples = run_chain_la(y, F, hyper, seed)
            weights = np.median(samples.draws, axis=0)
        names = [f"f_{j + 1}" for j in range(M)]
    else:
        if args.data is None:
            raise UsageError("--data is required (or provide --pred-matrix)")
        data = read_dataset_csv(args.data)
        learners = default_learners()
        d = DirichletHyper(alpha=args.alpha, gamma=args.gamma, M=len(learners))
        if args.mode == "ca":
            hyper = CaHyper(dirichlet=d, n_iter=args.iters, burn_in=args.burnin)
        else:
            hyper = LaHyper(dirichlet=d, n_iter=args.iters, burn_in=args.burnin)
        model = aggregate(data, learners, args.mode, hyper=hyper, seed=seed)
        samples, weights = model.samples, model.weights
        names = [p.name for p in model.predictors]
    paths = export_diagnostics(samples, args.out)
    rows = [[j + 1, names[j], float(weights[j])] for j in range(len(names))]
    paths["weights"] = write_csv(
        os.path.join(args.out, "weights.csv"), ["coordinate", "name", "weight"], rows
    )
    _print_paths(paths)
    return 0


def _bench_config(args, methods) -> BenchmarkConfig:
    return BenchmarkConfig(
        model=args.model, M=args.M, n=args.n, n_test=args.ntest,
        replicates=args.replicates, methods=methods, alpha=args.alpha,
        gamma=args.gamma, n_iter=args.iters, burn_in=args.burnin,
        seed=args.seed, threads=args.threads,
    )


def _cmd_bench(args) -> int:
    if args.methods is None:
        methods = ("ca",) if args.model == "nonlin" else ("la",)
    else:
        methods = tuple(_parse_list(args.methods, str, "--methods"))
    report = run_benchmark(_bench_config(args, methods))
    paths = write_rmse_report(report, args.out)
    _print_paths(paths)
    for m, r, msg in report.failures:
        print(f"warning: {m} replicate {r} failed: {msg}", file=sys.stderr)
    return 0


def _cmd_gamma_sweep(args) -> int:
    gammas = _parse_list(args.gammas, float, "--gammas")
    report = gamma_sensitivity(_bench_config(args, (args.method,)), gammas)
    paths = write_sweep_report(report, args.out)
    _print_paths(paths)
    return 0


def _cmd_contract(args) -> int:
    ns = _parse_list(args.ns, int, "--ns")
    report = contraction_study(
        model=args.model, M=args.M, s=args.s, n_grid=ns,
        replicates=args.replicates, alpha=args.alpha, gamma=args.gamma,
        n_iter=args.iters, burn_in=args.burnin, seed=args.seed,
        threads=args.threads,
    )
    paths = write_contraction_report(report, args.out)
    _print_paths(paths)
    print(f"slope: {report.slope:.4f}  r_squared: {report.r_squared:.4f}")
    return 0


def _cmd_concentration(args) -> int:
    hyper = DirichletHyper(alpha=args.alpha, gamma=args.gamma, M=args.M)
    # ball centre: the s-sparse uniform point (tail mass is centre-free anyway)
    center = np.zeros(args.M)
    center[: args.s] = 1.0 / args.s
    est = estimate_concentration(hyper, center, s=args.s, eps=args.eps,
                                 n_draws=args.draws,
                                 rng=np.random.default_rng(args.seed))
    header = ["M", "gamma", "alpha", "s", "eps", "draws",
              "p_ball", "se_ball", "p_tail", "se_tail"]
    row = [hyper.M, hyper.gamma, hyper.alpha, args.s, args.eps, est.draws_used,
           est.p_ball, est.se_ball, est.p_tail, est.se_tail]
    if args.out is not None:
        paths = write_concentration_report(est, hyper, args.s, args.eps, args.out)
        _print_paths(paths)
    else:
        print(",".join(header))
        print(",".join(_cell(x) for x in row))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="diragg",
                     description="Bayesian aggregation of regression predictors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("aggregate", help="fit aggregation weights to one dataset")
    p.add_argument("--mode", choices=("ca", "la"), required=True)
    p.add_argument("--data", help="CSV with feature columns and response last")
    p.add_argument("--pred-matrix",
                   help="CSV of precomputed predictions (id,f_1..f_M[,y])")
    _add_chain_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_aggregate)

    p = sub.add_parser("bench", help="replicated RMSE benchmark")
    p.add_argument("--model", choices=("s", "ns1", "ns2", "nonlin"), required=True)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--ntest", type=int, default=1000)
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--methods", help="comma list of ca,la (default by model)")
    _add_chain_flags(p)
    _add_common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("gamma-sweep", help="paired RMSE sweep over gamma values")
    p.add_argument("--model", choices=("s", "ns1", "ns2", "nonlin"), required=True)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--ntest", type=int, default=1000)
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--gammas", default="0,0.5,1,2,3,4")
    p.add_argument("--method", choices=("ca", "la"), default="la")
    _add_chain_flags(p)
    _add_common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gamma_sweep)

    p = sub.add_parser("contract", help="posterior prediction error vs sample size")
    p.add_argument("--model", choices=("s", "ns1", "ns2"), default="s")
    p.add_argument("--M", type=int, default=100)
    p.add_argument("--s", type=int, default=5)
    p.add_argument("--ns", default="100,200,400,800",
                   help="comma list of training sizes")
    p.add_argument("--replicates", type=int, default=5)
    _add_chain_flags(p)
    _add_common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_contract)

    p = sub.add_parser("concentration", help="Monte Carlo prior tail mass")
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--draws", type=int, default=100_000)
    _add_common(p)
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(func=_cmd_concentration)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except Exception as exc:
        line = json.dumps({"error": type(exc).__name__, "message": str(exc)})
        print(line, file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
