"""Seeded generators for the synthetic benchmark models.

Linear designs draw i.i.d. standard-normal features; responses follow one of

    s       y = -0.5 x1 + x2 + 0.4 x3 - x4 + 0.6 x5 + eps,      sd 0.5
    ns1     y = sum_j 3(-1)^j / j^2 x_j + eps,                    sd 0.1
    ns2     y = sum_{j <= floor(M/2)} (5 / floor(M/2)) x_j + eps, sd 0.1
    nonlin  y = x1 + x2 + 3 x3^2 - 2 exp(-x4) + eps,              var 0.5

Train and test sets come from disjoint seeded streams; noise_sd = 0 is an
accepted test hook that disables the noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .pipeline import Dataset

__all__ = [
    "DEFAULT_NOISE_SD",
    "SimSpec",
    "SimData",
    "true_coefficients",
    "gen_sparse_linear",
    "gen_nonsparse",
    "gen_nonlinear",
    "generate",
]

DEFAULT_NOISE_SD = {"s": 0.5, "ns1": 0.1, "ns2": 0.1, "nonlin": math.sqrt(0.5)}

MODELS = ("s", "ns1", "ns2", "nonlin")


@dataclass(frozen=True)
class SimSpec:
    """Description of one synthetic experiment.

    M is the number of predictors for the linear models and the feature
    dimension for the nonlinear one. noise_sd = None selects the model's
    default noise level.
    """

    model: str
    M: int
    n_train: int
    n_test: int = 1000
    noise_sd: float | None = None
    seed: object = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; choose from {MODELS}")
        if self.M < 1 or self.n_train < 2 or self.n_test < 1:
            raise ValueError("sizes must be positive (n_train >= 2)")
        if self.noise_sd is not None and self.noise_sd < 0:
            raise ValueError(f"noise_sd must be >= 0, got {self.noise_sd}")

    @property
    def sd(self) -> float:
        return DEFAULT_NOISE_SD[self.model] if self.noise_sd is None else float(self.noise_sd)


@dataclass(frozen=True)
class SimData:
    """Generated train/test pair plus the ground truth behind it."""

    train: Dataset
    test: Dataset
    coefficients: np.ndarray | None
    truth: Callable[[np.ndarray], np.ndarray]


def true_coefficients(model: str, M: int) -> np.ndarray:
    """Exact coefficient vector of a linear benchmark model."""
    if model == "s":
        if M < 5:
            raise ValueError(f"model 's' needs M >= 5, got {M}")
        beta = np.zeros(M)
        beta[:5] = (-0.5, 1.0, 0.4, -1.0, 0.6)
        return beta
    if model == "ns1":
        if M < 2:
            raise ValueError(f"model 'ns1' needs M >= 2, got {M}")
        j = np.arange(1, M + 1, dtype=float)
        return np.where(np.arange(1, M + 1) % 2 == 0, 3.0, -3.0) / (j * j)
    if model == "ns2":
        if M < 2:
            raise ValueError(f"model 'ns2' needs M >= 2, got {M}")
        half = M // 2
        beta = np.zeros(M)
        beta[:half] = 5.0 / half
        return beta
    raise ValueError(f"model {model!r} has no coefficient vector")


def _nonlin_truth(X: np.ndarray) -> np.ndarray:
    return X[:, 0] + X[:, 1] + 3.0 * X[:, 2] ** 2 - 2.0 * np.exp(-X[:, 3])


def _draw(truth, spec: SimSpec, n: int, stream: int) -> Dataset:
    rng = np.random.default_rng([_entropy(spec.seed), stream])
    X = rng.standard_normal((n, spec.M))
    y = truth(X)
    if spec.sd > 0:
        y = y + spec.sd * rng.standard_normal(n)
    return Dataset(X=X, Y=y)


def _entropy(seed) -> int:
    # flatten into a single integer key so [key, stream] seeds the substreams
    if isinstance(seed, (list, tuple)):
        return int(np.random.SeedSequence(list(seed)).generate_state(1, np.uint64)[0])
    return int(seed)


def _linear_simdata(spec: SimSpec) -> SimData:
    beta = true_coefficients(spec.model, spec.M)
    truth = lambda X: X @ beta
    return SimData(
        train=_draw(truth, spec, spec.n_train, 0),
        test=_draw(truth, spec, spec.n_test, 1),
        coefficients=beta,
        truth=truth,
    )


def gen_sparse_linear(spec: SimSpec) -> SimData:
    """Model 's': five fixed nonzero coefficients, the rest exactly zero."""
    if spec.model != "s":
        raise ValueError(f"expected model 's', got {spec.model!r}")
    return _linear_simdata(spec)


def gen_nonsparse(spec: SimSpec) -> SimData:
    """Models 'ns1' (quadratically decaying) and 'ns2' (half equal, half zero)."""
    if spec.model not in ("ns1", "ns2"):
        raise ValueError(f"expected model 'ns1' or 'ns2', got {spec.model!r}")
    return _linear_simdata(spec)


def gen_nonlinear(spec: SimSpec) -> SimData:
    """Model 'nonlin': additive nonlinear truth in the first four features."""
    if spec.model != "nonlin":
        raise ValueError(f"expected model 'nonlin', got {spec.model!r}")
    if spec.M < 4:
        raise ValueError(f"model 'nonlin' needs at least 4 features, got {spec.M}")
    return SimData(
        train=_draw(_nonlin_truth, spec, spec.n_train, 0),
        test=_draw(_nonlin_truth, spec, spec.n_test, 1),
        coefficients=None,
        truth=_nonlin_truth,
    )


def generate(spec: SimSpec) -> SimData:
    """Dispatch on spec.model."""
    if spec.model == "s":
        return gen_sparse_linear(spec)
    if spec.model in ("ns1", "ns2"):
        return gen_nonsparse(spec)
    return gen_nonlinear(spec)
