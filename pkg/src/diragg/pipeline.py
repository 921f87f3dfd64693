"""Split / fit / aggregate / refit pipeline.

The aggregation scheme: split the data, fit the base learners on the training
part, run the aggregation chain on the held-out part's prediction matrix, then
refit every learner on all rows and combine them with the estimated weights.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ca import CaHyper, run_chain_ca
from .dirichlet import DirichletHyper, check_simplex
from .la import LaHyper, run_chain_la
from .mcmc import PosteriorSamples, summarize_posterior

__all__ = [
    "Dataset",
    "BaseLearner",
    "RidgeLearner",
    "KnnLearner",
    "PolySubsetLearner",
    "FittedLearner",
    "AggregatedModel",
    "default_learners",
    "split_data",
    "build_prediction_matrix",
    "aggregate",
    "read_dataset_csv",
    "read_prediction_matrix_csv",
]


@dataclass(frozen=True)
class Dataset:
    """Feature matrix X (n, d) and response vector Y (n,), all finite."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim != 2 or Y.ndim != 1 or X.shape[0] != Y.size:
            raise ValueError(f"shape mismatch: X {X.shape}, Y {Y.shape}")
        if X.shape[0] < 2:
            raise ValueError(f"need at least 2 rows, got {X.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("dataset entries must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(X=self.X[idx], Y=self.Y[idx])


@dataclass(frozen=True)
class FittedLearner:
    """A fitted base learner: a name and a total predictor on feature rows."""

    name: str
    predict: Callable[[np.ndarray], np.ndarray]


class BaseLearner:
    """A named fit procedure. fit(data, rng) returns a FittedLearner."""

    name = "base"

    def fit(self, data: Dataset, rng: np.random.Generator) -> FittedLearner:
        raise NotImplementedError


class RidgeLearner(BaseLearner):
    """Ridge regression with the penalty chosen by internal cross-validation.

    Uses 5-fold CV over a log-spaced penalty grid when the training part has
    at least 10 rows, and leave-one-out generalized CV below that; both are
    deterministic.
    """

    def __init__(self, alphas=None):
        self.alphas = np.logspace(-3.0, 3.0, 13) if alphas is None else np.asarray(alphas, float)
        self.name = "ridge"

    def fit(self, data: Dataset, rng) -> FittedLearner:
        from sklearn.linear_model import RidgeCV

        cv = 5 if data.n >= 10 else None
        model = RidgeCV(alphas=self.alphas, cv=cv).fit(data.X, data.Y)
        return FittedLearner(self.name, lambda X: model.predict(np.asarray(X, dtype=float)))


class KnnLearner(BaseLearner):
    """k-nearest-neighbours regression (k capped at the training size)."""

    def __init__(self, k: int):
        self.k = int(k)
        self.name = f"knn{k}"

    def fit(self, data: Dataset, rng) -> FittedLearner:
        from sklearn.neighbors import KNeighborsRegressor

        model = KNeighborsRegressor(n_neighbors=min(self.k, data.n)).fit(data.X, data.Y)
        return FittedLearner(self.name, lambda X: model.predict(np.asarray(X, dtype=float)))


class PolySubsetLearner(BaseLearner):
    """Cubic-polynomial least squares on a random feature subset.

    The subset has size floor(min(sqrt(n), d/3)) (at least 1) and is drawn
    from the learner's rng at fit time; the basis holds x_k, x_k^2, x_k^3
    for each selected coordinate plus an intercept.
    """

    def __init__(self, tag: int):
        self.name = f"poly{tag}"

    @staticmethod
    def _design(X: np.ndarray, subset: np.ndarray) -> np.ndarray:
        cols = [np.ones(X.shape[0])]
        for k in subset:
            x = X[:, k]
            cols.extend([x, x * x, x * x * x])
        return np.column_stack(cols)

    def fit(self, data: Dataset, rng: np.random.Generator) -> FittedLearner:
        q = max(1, int(min(math.isqrt(data.n), data.d // 3)))
        q = min(q, data.d)
        subset = np.sort(rng.choice(data.d, size=q, replace=False))
        design = self._design(data.X, subset)
        coef, *_ = np.linalg.lstsq(design, data.Y, rcond=None)
        return FittedLearner(
            self.name,
            lambda X: self._design(np.asarray(X, dtype=float), subset) @ coef,
        )


def default_learners(n_subsets: int = 8) -> list:
    """Ridge + two kNNs + random-subset cubic learners."""
    out = [RidgeLearner(), KnnLearner(5), KnnLearner(15)]
    out.extend(PolySubsetLearner(i) for i in range(n_subsets))
    return out


@dataclass(frozen=True)
class AggregatedModel:
    """Final aggregated predictor: weights over refit base learners.

    predict(X) is exactly sum_j weights[j] * predictors[j](X).
    """

    mode: str
    weights: np.ndarray
    predictors: list
    samples: PosteriorSamples
    summary: dict
    train_indices: np.ndarray
    aggregation_indices: np.ndarray

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        F = build_prediction_matrix(self.predictors, Dataset(X=X, Y=np.zeros(X.shape[0])))
        return F @ self.weights


def _split_indices(n: int, frac: float, rng: np.random.Generator):
    n_train = math.ceil(frac * n)
    n_agg = n - n_train
    if n_train < 2 or n_agg < 2:
        raise ValueError(f"split of {n} rows at frac={frac} leaves a part with fewer than 2 rows")
    perm = rng.permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def split_data(data: Dataset, frac: float = 0.75, seed=0):
    """Random partition into a training part of ceil(frac*n) rows and the rest."""
    if not (0.0 < frac < 1.0):
        raise ValueError(f"frac must be in (0, 1), got {frac}")
    rng = np.random.default_rng(seed)
    idx_train, idx_agg = _split_indices(data.n, frac, rng)
    return data.subset(idx_train), data.subset(idx_agg)


def build_prediction_matrix(predictors: list, data: Dataset) -> np.ndarray:
    """Stack learner predictions into the (n, M) aggregation design.

    Raises a ValueError naming the learner and first offending row if any
    prediction is non-finite.
    """
    cols = []
    for p in predictors:
        vals = np.asarray(p.predict(data.X), dtype=float).reshape(-1)
        if vals.size != data.n:
            raise ValueError(f"learner {p.name!r} returned {vals.size} predictions for {data.n} rows")
        bad = ~np.isfinite(vals)
        if np.any(bad):
            row = int(np.argmax(bad))
            raise ValueError(f"learner {p.name!r} produced a non-finite prediction at row {row}")
        cols.append(vals)
    return np.column_stack(cols)


def aggregate(
    data: Dataset,
    learners: list,
    mode: str,
    hyper=None,
    seed=0,
    frac: float = 0.75,
) -> AggregatedModel:
    """Split, fit, aggregate on held-out rows, refit on everything.

    Parameters
    ----------
    data : Dataset
        Full sample (at least 4 rows).
    learners : list of BaseLearner
        At least two.
    mode : {"ca", "la"}
        Convex (simplex weights, posterior mean) or linear (signed
        coefficients, posterior median per coordinate).
    hyper : CaHyper or LaHyper, optional
        Defaults to alpha=1, gamma=2 and the standard chain lengths.
    seed : int or sequence of int
        Master seed; the split, each learner fit and the chain use
        independent substreams derived from it. Each refit reuses its
        learner's fit stream: a stochastic learner (a random feature
        subset, say) is the same learner after the refit, so the weights
        estimated for it still apply.
    frac : float
        Training fraction (default 0.75).

    Returns
    -------
    AggregatedModel
    """
    if len(learners) < 2:
        raise ValueError(f"need at least 2 learners, got {len(learners)}")
    if data.n < 4:
        raise ValueError(f"aggregation needs at least 4 rows, got {data.n}")
    if mode not in ("ca", "la"):
        raise ValueError(f"mode must be 'ca' or 'la', got {mode!r}")

    ss = np.random.SeedSequence(seed if isinstance(seed, (list, tuple)) else [int(seed)])
    k_split, k_fit, k_chain = ss.spawn(3)

    idx_train, idx_agg = _split_indices(data.n, frac, np.random.default_rng(k_split))
    train, agg_part = data.subset(idx_train), data.subset(idx_agg)

    fit_keys = k_fit.spawn(len(learners))
    fitted = [lr.fit(train, np.random.default_rng(k)) for lr, k in zip(learners, fit_keys)]
    F = build_prediction_matrix(fitted, agg_part)

    M = F.shape[1]
    if hyper is None:
        dir_hyper = DirichletHyper(alpha=1.0, gamma=2.0, M=M)
        hyper = CaHyper(dirichlet=dir_hyper) if mode == "ca" else LaHyper(dirichlet=dir_hyper)
    if hyper.dirichlet.M != M:
        raise ValueError(f"hyper.dirichlet.M = {hyper.dirichlet.M} but there are {M} learners")

    if mode == "ca":
        samples = run_chain_ca(agg_part.Y, F, hyper, k_chain)
        weights = samples.draws.mean(axis=0)
        weights = check_simplex(weights, atol=1e-8)
        weights = weights / weights.sum()
    else:
        samples = run_chain_la(agg_part.Y, F, hyper, k_chain)
        weights = np.median(samples.draws, axis=0)
    summary = summarize_posterior(samples)

    # refit on all rows from the same per-learner streams as the first fit,
    # so a learner whose identity involves a random draw refits as itself
    refit = [lr.fit(data, np.random.default_rng(k)) for lr, k in zip(learners, fit_keys)]

    return AggregatedModel(
        mode=mode,
        weights=weights,
        predictors=refit,
        samples=samples,
        summary=summary,
        train_indices=idx_train,
        aggregation_indices=idx_agg,
    )


# ------------------------------------------------------------------ CSV input

def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    try:
        values = np.array([[float(x) for x in r] for r in rows])
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric value ({exc})") from None
    if values.shape[1] != len(header):
        raise ValueError(f"{path}: rows have {values.shape[1]} fields, header has {len(header)}")
    return [h.strip() for h in header], values


def read_dataset_csv(path) -> Dataset:
    """Dataset from a headed CSV: last column is the response."""
    header, values = _read_csv(path)
    if values.shape[1] < 2:
        raise ValueError(f"{path}: need at least one feature column plus the response")
    return Dataset(X=values[:, :-1], Y=values[:, -1])


def read_prediction_matrix_csv(path, require_y: bool = True):
    """Prediction matrix from a CSV with header id,f_1,...,f_M[,y].

    Returns (ids, F, y); y is None when the column is absent (allowed only
    with require_y=False).
    """
    header, values = _read_csv(path)
    if header[0] != "id":
        raise ValueError(f"{path}: first column must be 'id', got {header[0]!r}")
    has_y = header[-1] == "y"
    if require_y and not has_y:
        raise ValueError(f"{path}: last column must be 'y'")
    f_names = header[1:-1] if has_y else header[1:]
    expected = [f"f_{j}" for j in range(1, len(f_names) + 1)]
    if f_names != expected:
        raise ValueError(f"{path}: predictor columns must be f_1..f_{len(f_names)}, got {f_names}")
    if not f_names:
        raise ValueError(f"{path}: no predictor columns")
    ids = values[:, 0]
    F = values[:, 1:-1] if has_y else values[:, 1:]
    y = values[:, -1] if has_y else None
    return ids, F, y
