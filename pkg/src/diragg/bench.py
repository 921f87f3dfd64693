"""Replicate orchestration: RMSE benchmarks, gamma sweeps, contraction study,
diagnostic exports, and deterministic CSV reporting.

Seed discipline: replicate r of a study with master seed S draws its dataset
from stream [S, r, 0] and the chain for method/grid-point k from [S, r, 1+k],
so every method and every gamma value sees identical data within a replicate.
"""
from __future__ import annotations

import hashlib
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .ca import CaHyper, run_chain_ca
from .dirichlet import DirichletHyper
from .la import LaHyper, run_chain_la
from .mcmc import PosteriorSamples, summarize_posterior
from .pipeline import aggregate, build_prediction_matrix, default_learners
from .simulate import SimSpec, generate, true_coefficients

__all__ = [
    "rmse",
    "BenchmarkConfig",
    "RmseReport",
    "SweepReport",
    "ContractionReport",
    "run_benchmark",
    "gamma_sensitivity",
    "contraction_study",
    "export_diagnostics",
    "score_external_predictions",
    "write_rmse_report",
    "write_sweep_report",
    "write_contraction_report",
    "write_concentration_report",
    "write_csv",
    "read_csv_rows",
]


def rmse(predictions, truth) -> float:
    """Root mean squared error between two equal-length vectors."""
    p = np.asarray(predictions, dtype=float).reshape(-1)
    t = np.asarray(truth, dtype=float).reshape(-1)
    if p.size != t.size:
        raise ValueError(f"length mismatch: {p.size} predictions vs {t.size} truths")
    if p.size == 0:
        raise ValueError("empty vectors")
    d = p - t
    return float(np.sqrt(d @ d / p.size))


@dataclass(frozen=True)
class BenchmarkConfig:
    """Declarative description of one replicated experiment."""

    model: str
    M: int
    n: int
    n_test: int = 1000
    replicates: int = 20
    methods: tuple = ("la",)
    alpha: float = 1.0
    gamma: float = 2.0
    a0: float = 0.01
    b0: float = 0.01
    c0: float = 0.01
    d0: float = 0.01
    n_iter: int = 2000
    burn_in: int = 1000
    seed: int = 0
    threads: int = 1
    n_subsets: int = 8
    frac: float = 0.75
    noise_sd: float | None = None

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        if not self.methods:
            raise ValueError("need at least one method")
        for m in self.methods:
            if m not in ("ca", "la"):
                raise ValueError(f"unknown method {m!r}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")


@dataclass(frozen=True)
class RmseReport:
    """Replicate-level RMSE results for each method of a BenchmarkConfig."""

    config: BenchmarkConfig
    values: dict          # method -> (R,) array, NaN where the method failed
    summaries: dict       # method -> list of per-replicate posterior summaries (None on failure)
    failures: list        # (method, replicate, message)
    seconds: dict         # method -> total wall-clock seconds
    data_hashes: list     # per-replicate dataset hash (paired across methods)

    def ok(self, method: str) -> np.ndarray:
        v = self.values[method]
        return v[np.isfinite(v)]

    def mean_rmse(self, method: str):
        v = self.ok(method)
        return float(v.mean()) if v.size else None

    def sd_rmse(self, method: str):
        v = self.ok(method)
        return float(v.std(ddof=1)) if v.size >= 2 else None


def _hash_dataset(data) -> str:
    h = hashlib.sha256()
    for arr in (data.train.X, data.train.Y, data.test.X, data.test.Y):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]


def _chain_hyper(config: BenchmarkConfig, method: str, M: int, gamma: float | None = None):
    d = DirichletHyper(alpha=config.alpha, gamma=config.gamma if gamma is None else gamma, M=M)
    if method == "ca":
        return CaHyper(dirichlet=d, a0=config.a0, b0=config.b0,
                       n_iter=config.n_iter, burn_in=config.burn_in)
    return LaHyper(dirichlet=d, a0=config.a0, b0=config.b0, c0=config.c0, d0=config.d0,
                   n_iter=config.n_iter, burn_in=config.burn_in)


def _summary_record(samples: PosteriorSamples) -> dict:
    rec = summarize_posterior(samples)
    rec["acceptance"] = dict(samples.acceptance_rates)
    rec["step_sizes"] = dict(samples.step_sizes)
    return rec


def _linear_method(config, data, method, chain_seed, gamma=None):
    hyper = _chain_hyper(config, method, config.M, gamma)
    if method == "ca":
        samples = run_chain_ca(data.train.Y, data.train.X, hyper, chain_seed)
        estimate = samples.draws.mean(axis=0)
    else:
        samples = run_chain_la(data.train.Y, data.train.X, hyper, chain_seed)
        estimate = np.median(samples.draws, axis=0)
    score = rmse(data.test.X @ estimate, data.test.Y)
    return score, _summary_record(samples)


def _pipeline_method(config, data, method, chain_seed):
    learners = default_learners(config.n_subsets)
    hyper = _chain_hyper(config, method, len(learners))
    model = aggregate(data.train, learners, method, hyper=hyper,
                      seed=list(chain_seed), frac=config.frac)
    score = rmse(model.predict(data.test.X), data.test.Y)
    rec = _summary_record(model.samples)
    F_test = build_prediction_matrix(model.predictors, data.test)
    rec["learner_rmse"] = {
        p.name: rmse(F_test[:, j], data.test.Y) for j, p in enumerate(model.predictors)
    }
    rec["weights"] = model.weights
    return score, rec


def _run_replicate(config: BenchmarkConfig, r: int, gammas=None):
    """All methods (or all gamma values) for one replicate on shared data."""
    spec = SimSpec(model=config.model, M=config.M, n_train=config.n,
                   n_test=config.n_test, noise_sd=config.noise_sd,
                   seed=[config.seed, r, 0])
    data = generate(spec)
    digest = _hash_dataset(data)
    results = {}
    keys = list(config.methods) if gammas is None else list(gammas)
    for k, key in enumerate(keys):
        t0 = time.perf_counter()
        try:
            if gammas is not None:
                val, rec = _linear_method(config, data, config.methods[0],
                                          [config.seed, r, 1 + k], gamma=key)
            elif config.model == "nonlin":
                val, rec = _pipeline_method(config, data, key, [config.seed, r, 1 + k])
            else:
                val, rec = _linear_method(config, data, key, [config.seed, r, 1 + k])
            results[key] = (val, rec, None, time.perf_counter() - t0)
        except Exception as exc:  # failure recorded, replicate continues
            results[key] = (None, None, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0)
    return r, digest, results


def _map_replicates(config: BenchmarkConfig, gammas=None):
    args = [(config, r, gammas) for r in range(config.replicates)]
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            out = list(pool.map(_replicate_star, args))
    else:
        out = [_run_replicate(*a) for a in args]
    out.sort(key=lambda t: t[0])
    return out


def _replicate_star(args):
    return _run_replicate(*args)


def run_benchmark(config: BenchmarkConfig) -> RmseReport:
    """Run every method over seeded replicates and collect RMSEs.

    Replicate r regenerates its dataset from the master seed, runs each
    method on the same data, and scores on the fresh test set. Failures are
    recorded and excluded from the aggregates.
    """
    rows = _map_replicates(config)
    values = {m: np.full(config.replicates, np.nan) for m in config.methods}
    summaries = {m: [None] * config.replicates for m in config.methods}
    seconds = {m: 0.0 for m in config.methods}
    failures = []
    hashes = [""] * config.replicates
    for r, digest, results in rows:
        hashes[r] = digest
        for m in config.methods:
            val, rec, err, secs = results[m]
            seconds[m] += secs
            if err is None:
                values[m][r] = val
                summaries[m][r] = rec
            else:
                failures.append((m, r, err))
    return RmseReport(config=config, values=values, summaries=summaries,
                      failures=failures, seconds=seconds, data_hashes=hashes)


@dataclass(frozen=True)
class SweepReport:
    """Per-gamma RMSE results on paired data (one method)."""

    config: BenchmarkConfig
    gammas: tuple
    values: dict          # gamma -> (R,) array
    failures: list
    seconds: dict
    data_hashes: list

    def mean_rmse(self, gamma):
        v = self.values[gamma]
        v = v[np.isfinite(v)]
        return float(v.mean()) if v.size else None

    def sd_rmse(self, gamma):
        v = self.values[gamma]
        v = v[np.isfinite(v)]
        return float(v.std(ddof=1)) if v.size >= 2 else None

    def paired_se(self, g1, g2) -> float:
        """Standard error of the mean paired RMSE difference between two gammas."""
        d = self.values[g1] - self.values[g2]
        d = d[np.isfinite(d)]
        if d.size < 2:
            raise ValueError("paired SE needs at least 2 complete replicates")
        return float(d.std(ddof=1) / np.sqrt(d.size))


def gamma_sensitivity(config: BenchmarkConfig, gammas) -> SweepReport:
    """RMSE at each gamma on a shared per-replicate data stream.

    The first entry of config.methods picks the sampler; within a replicate
    every gamma sees the same dataset so comparisons are paired.
    """
    gammas = tuple(float(g) for g in gammas)
    if not gammas:
        raise ValueError("empty gamma grid")
    rows = _map_replicates(config, gammas=gammas)
    values = {g: np.full(config.replicates, np.nan) for g in gammas}
    seconds = {g: 0.0 for g in gammas}
    failures = []
    hashes = [""] * config.replicates
    for r, digest, results in rows:
        hashes[r] = digest
        for g in gammas:
            val, rec, err, secs = results[g]
            seconds[g] += secs
            if err is None:
                values[g][r] = val
            else:
                failures.append((g, r, err))
    return SweepReport(config=config, gammas=gammas, values=values,
                       failures=failures, seconds=seconds, data_hashes=hashes)


@dataclass(frozen=True)
class ContractionReport:
    """Mean posterior prediction error against n, with the log-log slope."""

    model: str
    M: int
    s: int
    n_grid: tuple
    errors: dict          # n -> (R,) array of replicate-level mean posterior errors
    mean_error: dict      # n -> float
    se: dict              # n -> float
    slope: float
    intercept: float
    r_squared: float


def _contraction_job(args):
    (model, M, n, r, seed, hyper_kw, noise_sd) = args
    spec = SimSpec(model=model, M=M, n_train=n, n_test=2, noise_sd=noise_sd,
                   seed=[seed, n, r, 0])
    data = generate(spec)
    beta = true_coefficients(model, M)
    hyper = LaHyper(**hyper_kw)
    samples = run_chain_la(data.train.Y, data.train.X, hyper, [seed, n, r, 1])
    dev = samples.draws - beta
    proj = dev @ data.train.X.T
    err = float(np.mean(np.linalg.norm(proj, axis=1) / np.sqrt(n)))
    return n, r, err


def contraction_study(
    model: str = "s",
    M: int = 100,
    s: int = 5,
    n_grid=(100, 200, 400, 800),
    replicates: int = 5,
    alpha: float = 1.0,
    gamma: float = 2.0,
    a0: float = 0.01,
    b0: float = 0.01,
    c0: float = 0.01,
    d0: float = 0.01,
    n_iter: int = 2000,
    burn_in: int = 1000,
    seed: int = 0,
    threads: int = 1,
    noise_sd: float | None = None,
) -> ContractionReport:
    """Empirical decay of the posterior prediction error with sample size.

    For each n in the grid the study averages ||F(theta - theta*)||_2 / sqrt(n)
    over all posterior draws and replicates (F is the aggregation design, here
    the raw feature matrix), then fits a least-squares line to log error vs
    log n.
    """
    n_grid = tuple(int(n) for n in n_grid)
    if len(n_grid) < 4:
        raise ValueError(f"need an n grid of at least 4 sizes, got {len(n_grid)}")
    hyper_kw = dict(
        dirichlet=DirichletHyper(alpha=alpha, gamma=gamma, M=M),
        a0=a0, b0=b0, c0=c0, d0=d0, n_iter=n_iter, burn_in=burn_in,
    )
    jobs = [(model, M, n, r, seed, hyper_kw, noise_sd) for n in n_grid for r in range(replicates)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(_contraction_job, jobs))
    else:
        out = [_contraction_job(j) for j in jobs]
    errors = {n: np.full(replicates, np.nan) for n in n_grid}
    for n, r, err in out:
        errors[n][r] = err
    mean_error = {n: float(errors[n].mean()) for n in n_grid}
    se = {n: float(errors[n].std(ddof=1) / np.sqrt(replicates)) if replicates > 1 else 0.0
          for n in n_grid}
    logn = np.log(np.array(n_grid, dtype=float))
    loge = np.log(np.array([mean_error[n] for n in n_grid]))
    slope, intercept = np.polyfit(logn, loge, 1)
    fit = slope * logn + intercept
    ss_res = float(np.sum((loge - fit) ** 2))
    ss_tot = float(np.sum((loge - loge.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ContractionReport(model=model, M=M, s=s, n_grid=n_grid, errors=errors,
                             mean_error=mean_error, se=se, slope=float(slope),
                             intercept=float(intercept), r_squared=r_squared)


# ------------------------------------------------------------------ CSV output

def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _atomic_write_text(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows):
    """Write a CSV with header atomically (temp file + rename)."""
    lines = [",".join(header)]
    lines.extend(",".join(_cell(c) for c in row) for row in rows)
    _atomic_write_text(path, "\n".join(lines) + "\n")
    return Path(path)


def read_csv_rows(path):
    """Read back a CSV written by write_csv: (header, rows of strings)."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln != ""]
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def write_rmse_report(report: RmseReport, out_dir) -> dict:
    """report.csv (per-method aggregates) and replicates.csv (per-replicate)."""
    out = Path(out_dir)
    rows = []
    for m in report.config.methods:
        nfail = sum(1 for f in report.failures if f[0] == m)
        rows.append([m, report.mean_rmse(m), report.sd_rmse(m),
                     int(report.ok(m).size), nfail])
    # wall-clock seconds stay off disk so reruns with one seed are byte-identical
    p1 = write_csv(out / "report.csv",
                   ["method", "mean_rmse", "sd_rmse", "replicates_ok", "failures"],
                   rows)
    rep_rows = []
    for m in report.config.methods:
        for r in range(report.config.replicates):
            v = report.values[m][r]
            rep_rows.append([m, r, None if np.isnan(v) else float(v), report.data_hashes[r]])
    p2 = write_csv(out / "replicates.csv", ["method", "replicate", "rmse", "data_hash"], rep_rows)
    return {"report": p1, "replicates": p2}


def write_sweep_report(report: SweepReport, out_dir) -> dict:
    out = Path(out_dir)
    rows = [[g, report.mean_rmse(g), report.sd_rmse(g),
             int(np.sum(np.isfinite(report.values[g])))]
            for g in report.gammas]
    p1 = write_csv(out / "sweep.csv",
                   ["gamma", "mean_rmse", "sd_rmse", "replicates_ok"], rows)
    rep_rows = []
    for g in report.gammas:
        for r in range(report.config.replicates):
            v = report.values[g][r]
            rep_rows.append([g, r, None if np.isnan(v) else float(v), report.data_hashes[r]])
    p2 = write_csv(out / "sweep_replicates.csv",
                   ["gamma", "replicate", "rmse", "data_hash"], rep_rows)
    return {"sweep": p1, "replicates": p2}


def write_contraction_report(report: ContractionReport, out_dir) -> dict:
    out = Path(out_dir)
    rows = [[n, report.mean_error[n], report.se[n], int(report.errors[n].size)]
            for n in report.n_grid]
    p1 = write_csv(out / "contract.csv", ["n", "mean_error", "se", "replicates"], rows)
    p2 = write_csv(out / "fit.csv", ["slope", "intercept", "r_squared"],
                   [[report.slope, report.intercept, report.r_squared]])
    return {"table": p1, "fit": p2}


def write_concentration_report(est, hyper, s, eps, out_dir) -> dict:
    out = Path(out_dir)
    p = write_csv(
        out / "concentration.csv",
        ["M", "gamma", "alpha", "s", "eps", "draws", "p_ball", "se_ball", "p_tail", "se_tail"],
        [[hyper.M, hyper.gamma, hyper.alpha, s, eps, est.draws_used,
          est.p_ball, est.se_ball, est.p_tail, est.se_tail]],
    )
    return {"concentration": p}


def score_external_predictions(config: BenchmarkConfig, path) -> np.ndarray:
    """Per-replicate RMSEs for test-set predictions produced outside this package.

    The CSV must have header ``replicate,id,prediction`` with ids 1..n_test for
    every replicate 0..replicates-1. Test sets are regenerated from the config
    seed, so external columns line up with run_benchmark rows for side-by-side
    tables.
    """
    header, rows = read_csv_rows(path)
    if header != ["replicate", "id", "prediction"]:
        raise ValueError(f"expected header replicate,id,prediction, got {header}")
    by_rep: dict = {}
    for rep_s, id_s, pred_s in rows:
        by_rep.setdefault(int(rep_s), []).append((int(id_s), float(pred_s)))
    out = np.full(config.replicates, np.nan)
    for r in range(config.replicates):
        if r not in by_rep:
            raise ValueError(f"replicate {r} missing from {path}")
        entries = sorted(by_rep[r])
        ids = [i for i, _ in entries]
        if ids != list(range(1, config.n_test + 1)):
            raise ValueError(f"replicate {r}: ids must be exactly 1..{config.n_test}")
        spec = SimSpec(model=config.model, M=config.M, n_train=config.n,
                       n_test=config.n_test, noise_sd=config.noise_sd,
                       seed=[config.seed, r, 0])
        data = generate(spec)
        out[r] = rmse([p for _, p in entries], data.test.Y)
    return out


def export_diagnostics(samples: PosteriorSamples, out_dir, level: float = 0.95) -> dict:
    """Trace, credible-interval, and acceptance-rate CSVs for one chain.

    trace.csv is long-format (coordinate, iteration, value) with one row per
    stored draw per coordinate; iteration numbers are absolute sweep indices.
    """
    if samples.draws.shape[0] == 0:
        raise ValueError("no stored draws to export")
    out = Path(out_dir)
    kept, M = samples.draws.shape
    iters = np.arange(samples.burn_in, samples.n_iter)
    trace_rows = []
    for j in range(M):
        col = samples.draws[:, j]
        trace_rows.extend([j + 1, int(iters[k]), float(col[k])] for k in range(kept))
    p1 = write_csv(out / "trace.csv", ["coordinate", "iteration", "value"], trace_rows)
    summ = summarize_posterior(samples, level=level)
    int_rows = [[j + 1, float(summ["lo"][j]), float(summ["median"][j]), float(summ["hi"][j])]
                for j in range(M)]
    p2 = write_csv(out / "intervals.csv", ["coordinate", "lo", "median", "hi"], int_rows)
    acc_rows = [[name, rate, samples.step_sizes.get(name)]
                for name, rate in sorted(samples.acceptance_rates.items())]
    p3 = write_csv(out / "acceptance.csv", ["block", "rate", "step_size"], acc_rows)
    return {"trace": p1, "intervals": p2, "acceptance": p3}
