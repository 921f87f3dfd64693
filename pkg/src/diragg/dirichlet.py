"""Symmetric Dirichlet and double-Dirichlet machinery.

Prior samplers, log-densities, the tail-mass sparsity functional, Monte Carlo
estimates of the prior's concentration behaviour, and the multinomial m-sparse
approximation of a simplex point.

All sampling of Gamma(rho, 1) variables with small shape rho is done in log
space: for rho below ~1e-3 most plain-space draws underflow to exact zero,
which would destroy simplex normalization. The identity

    Gamma(rho, 1)  =d  Gamma(rho + 1, 1) * U^(1/rho),   U ~ Uniform(0, 1),

gives log T = log G + log(U)/rho with both terms well scaled.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

__all__ = [
    "SIMPLEX_ATOL",
    "DirichletHyper",
    "SignedCoefficients",
    "ConcentrationEstimate",
    "SparseApproximationError",
    "check_simplex",
    "sample_log_gamma",
    "sample_symmetric_dirichlet",
    "log_density_dirichlet",
    "sample_double_dirichlet",
    "tail_mass",
    "estimate_concentration",
    "sparse_approximation",
]

# absolute tolerance on "sums to one" checks
SIMPLEX_ATOL = 1e-10


@dataclass(frozen=True)
class DirichletHyper:
    """Hyperparameters of the symmetric Dirichlet prior Diri(rho, ..., rho).

    The concentration is tied to the dimension through rho = alpha / M**gamma.
    gamma > 1 pushes rho below alpha/M and makes draws nearly sparse; values
    down to gamma = 0 are accepted so that sensitivity sweeps can include the
    non-sparse regime.
    """

    alpha: float
    gamma: float
    M: int

    def __post_init__(self):
        if self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M}")
        if not (self.alpha > 0):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        rho = self.rho
        if not (rho > 0 and np.isfinite(rho)):
            raise ValueError(f"concentration alpha/M^gamma = {rho} is not a positive real")

    @property
    def rho(self) -> float:
        try:
            scale = float(self.M) ** self.gamma
        except OverflowError:
            return 0.0
        return self.alpha / scale if scale > 0.0 else float("inf")


@dataclass(frozen=True)
class SignedCoefficients:
    """An l1 decomposition theta = scale * direction.

    direction has unit l1 norm; its absolute values live on the simplex and
    its signs carry the orientation, so scale recovers ||theta||_1 exactly.
    """

    scale: float
    direction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "direction", np.asarray(self.direction, dtype=float))
        if not (self.scale > 0):
            raise ValueError(f"scale must be positive, got {self.scale}")
        l1 = np.abs(self.direction).sum()
        if abs(l1 - 1.0) > SIMPLEX_ATOL:
            raise ValueError(f"direction has l1 norm {l1!r}, expected 1")

    @property
    def coefficients(self) -> np.ndarray:
        return self.scale * self.direction

    @classmethod
    def from_coefficients(cls, theta) -> "SignedCoefficients":
        theta = np.asarray(theta, dtype=float)
        scale = np.abs(theta).sum()
        if scale == 0.0:
            raise ValueError("cannot decompose the zero vector")
        return cls(scale=float(scale), direction=theta / scale)


@dataclass(frozen=True)
class ConcentrationEstimate:
    """Monte Carlo estimates of the ball and tail-escape probabilities.

    p_ball estimates P(||lam - lam*||_2 <= eps); p_tail estimates the escape
    probability P(sum of all but the s largest entries > eps). Standard errors
    are the binomial plug-in sqrt(p(1-p)/draws_used).
    """

    p_ball: float
    se_ball: float
    p_tail: float
    se_tail: float
    draws_used: int


class SparseApproximationError(RuntimeError):
    """Raised when no trial nor the deterministic fallback meets the error bound."""

    def __init__(self, best_error: float, bound: float):
        self.best_error = best_error
        self.bound = bound
        super().__init__(
            f"sparse approximation failed: best error {best_error:.6g} exceeds bound {bound:.6g}"
        )


def check_simplex(values, atol: float = SIMPLEX_ATOL) -> np.ndarray:
    """Validate and return a point on the probability simplex.

    Parameters
    ----------
    values : array_like
        Candidate weight vector.
    atol : float
        Absolute tolerance on the sum-to-one constraint.

    Returns
    -------
    ndarray
        The validated vector as a float array.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("simplex point must be a nonempty 1-d vector")
    if np.any(v < 0):
        raise ValueError("simplex point has a negative entry")
    total = v.sum()
    if abs(total - 1.0) > atol:
        raise ValueError(f"simplex point sums to {total!r}, not 1")
    return v


def sample_log_gamma(rho: float, size, rng: np.random.Generator) -> np.ndarray:
    """log of Gamma(rho, 1) draws, stable for arbitrarily small shape."""
    g = rng.gamma(rho + 1.0, size=size)
    u = rng.random(size=size)
    # u in [0, 1) so 1-u is in (0, 1] and the log stays finite
    return np.log(g) + np.log1p(-u) / rho


def _log_dirichlet_draws(hyper: DirichletHyper, n: int, rng: np.random.Generator) -> np.ndarray:
    """(n, M) matrix of log lambda rows, each lambda ~ Diri(rho, ..., rho)."""
    log_t = sample_log_gamma(hyper.rho, (n, hyper.M), rng)
    return log_t - logsumexp(log_t, axis=1, keepdims=True)


def sample_symmetric_dirichlet(hyper: DirichletHyper, rng: np.random.Generator) -> np.ndarray:
    """One draw lambda ~ Diri(rho, ..., rho) with rho = alpha / M**gamma.

    Parameters
    ----------
    hyper : DirichletHyper
    rng : numpy Generator

    Returns
    -------
    ndarray of shape (M,)
        Nonnegative weights summing to one. Entries whose log-scale draw is
        hundreds of nats below the maximum underflow to exact zero, which is
        the correct limiting weight.
    """
    return np.exp(_log_dirichlet_draws(hyper, 1, rng)[0])


def log_density_dirichlet(lam, hyper: DirichletHyper) -> float:
    """Log pdf of Diri(rho, ..., rho) at an interior simplex point.

    The density is Gamma(M rho) / Gamma(rho)^M * prod_j lam_j^(rho-1);
    boundary points (any lam_j = 0) are outside the support of the density
    and raise a ValueError.
    """
    lam = check_simplex(lam)
    if lam.size != hyper.M:
        raise ValueError(f"point has dimension {lam.size}, hyper says {hyper.M}")
    if np.any(lam == 0.0):
        raise ValueError("density is evaluated off the open simplex (zero entry)")
    rho = hyper.rho
    norm = gammaln(hyper.M * rho) - hyper.M * gammaln(rho)
    return float(norm + (rho - 1.0) * np.log(lam).sum())


def sample_double_dirichlet(hyper: DirichletHyper, rng: np.random.Generator) -> np.ndarray:
    """One draw eta with |eta| ~ Diri(rho, ..., rho) and independent fair signs.

    Returns a vector with unit l1 norm; each sign pattern has probability 2^-M.
    """
    mu = sample_symmetric_dirichlet(hyper, rng)
    signs = 2.0 * rng.integers(0, 2, size=hyper.M) - 1.0
    return signs * mu


def tail_mass(lam, s: int) -> float:
    """Sum of all but the s largest entries of a simplex point.

    lam belongs to the s-sparse approximability set at level eps iff the
    returned value is <= eps.
    """
    lam = check_simplex(lam)
    if not (1 <= s <= lam.size):
        raise ValueError(f"s must be in [1, {lam.size}], got {s}")
    if s == lam.size:
        return 0.0
    srt = np.sort(lam)
    return float(srt[: lam.size - s].sum())


def _batch_tail_mass(lam_rows: np.ndarray, s: int) -> np.ndarray:
    """Row-wise tail mass of an (n, M) matrix of simplex points."""
    if s >= lam_rows.shape[1]:
        return np.zeros(lam_rows.shape[0])
    top = np.partition(lam_rows, lam_rows.shape[1] - s, axis=1)[:, -s:]
    return 1.0 - top.sum(axis=1)


def estimate_concentration(
    hyper: DirichletHyper,
    lambda_star,
    s: int,
    eps: float,
    n_draws: int,
    rng: np.random.Generator,
    batch: int = 200_000,
) -> ConcentrationEstimate:
    """Monte Carlo estimate of the prior's ball and tail-escape probabilities.

    Parameters
    ----------
    hyper : DirichletHyper
    lambda_star : array_like
        s-sparse simplex point at the centre of the ball.
    s : int
        Sparsity level of the tail functional.
    eps : float
        Radius / tail threshold, in (0, 1).
    n_draws : int
        Number of fresh prior draws (>= 1000).
    rng : numpy Generator
    batch : int
        Draws per vectorized batch; memory knob only.

    Returns
    -------
    ConcentrationEstimate
        p_ball = P(||lam - lam*||_2 <= eps), p_tail = P(tail_mass(lam, s) > eps),
        with binomial standard errors.
    """
    lambda_star = check_simplex(lambda_star)
    if lambda_star.size != hyper.M:
        raise ValueError("lambda_star dimension does not match hyper.M")
    if not (1 <= s <= hyper.M):
        raise ValueError(f"s must be in [1, {hyper.M}], got {s}")
    if np.count_nonzero(lambda_star) > s:
        raise ValueError("lambda_star has more than s nonzero entries")
    if not (0.0 < eps < 1.0):
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    if n_draws < 1000:
        raise ValueError(f"n_draws must be at least 1000, got {n_draws}")

    n_ball = 0
    n_tail = 0
    left = n_draws
    while left > 0:
        b = min(batch, left)
        lam = np.exp(_log_dirichlet_draws(hyper, b, rng))
        n_ball += int(np.sum(np.linalg.norm(lam - lambda_star, axis=1) <= eps))
        n_tail += int(np.sum(_batch_tail_mass(lam, s) > eps))
        left -= b
    p_ball = n_ball / n_draws
    p_tail = n_tail / n_draws
    return ConcentrationEstimate(
        p_ball=p_ball,
        se_ball=float(np.sqrt(p_ball * (1.0 - p_ball) / n_draws)),
        p_tail=p_tail,
        se_tail=float(np.sqrt(p_tail * (1.0 - p_tail) / n_draws)),
        draws_used=n_draws,
    )


def _weighted_sq_error(v: np.ndarray, lambda_star: np.ndarray, gram: np.ndarray) -> float:
    d = v - lambda_star
    return float(d @ gram @ d)


def _truncate_top_m(lambda_star: np.ndarray, m: int) -> np.ndarray:
    """Keep the m largest entries (ties by lower index) and renormalize."""
    order = np.argsort(-lambda_star, kind="stable")[:m]
    out = np.zeros_like(lambda_star)
    out[order] = lambda_star[order]
    total = out.sum()
    if total == 0.0:
        out[order[0]] = 1.0
        return out
    return out / total


def sparse_approximation(
    lambda_star,
    m: int,
    gram,
    n_trials: int = 64,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Best-of-trials multinomial m-sparse approximation of a simplex point.

    Draws counts ~ Multinomial(m, lambda_star) and keeps the empirical
    frequency vector V = counts/m minimizing the quadratic-form error
    d(V) = sqrt((V - lam*)' G (V - lam*)). The expected squared error is at
    most kappa/m (kappa = max diagonal of G), so the target bound
    sqrt(2*kappa/m) is met by some trial except with probability ~2^-n_trials;
    a deterministic truncate-to-top-m fallback is tried before giving up.

    Raises
    ------
    SparseApproximationError
        If neither the trials nor the fallback meet the bound.
    """
    lambda_star = check_simplex(lambda_star)
    gram = np.asarray(gram, dtype=float)
    if gram.shape != (lambda_star.size, lambda_star.size):
        raise ValueError("gram matrix shape does not match lambda_star")
    if not np.allclose(gram, gram.T, atol=1e-8):
        raise ValueError("gram matrix must be symmetric")
    if np.any(np.diag(gram) < 0):
        raise ValueError("gram matrix has a negative diagonal entry")
    if m < 1:
        raise ValueError(f"m must be a positive integer, got {m}")
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    if rng is None:
        rng = np.random.default_rng()

    kappa = float(np.max(np.diag(gram)))
    bound_sq = 2.0 * kappa / m

    best_v = None
    best_err = np.inf
    for _ in range(n_trials):
        counts = rng.multinomial(m, lambda_star)
        v = counts / m
        err = max(_weighted_sq_error(v, lambda_star, gram), 0.0)
        if err < best_err:
            best_err = err
            best_v = v
        if best_err <= bound_sq:
            break
    if best_err <= bound_sq:
        return best_v

    fallback = _truncate_top_m(lambda_star, m)
    fb_err = max(_weighted_sq_error(fallback, lambda_star, gram), 0.0)
    if fb_err <= bound_sq:
        return fallback
    raise SparseApproximationError(np.sqrt(min(best_err, fb_err)), np.sqrt(bound_sq))
