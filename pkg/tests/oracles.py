"""Independent reference implementations used to check the package's numerics.

Nothing here imports from the package: the samplers, quadratures and error
estimates are written from the underlying distributions directly, so a bug in
the package cannot hide in its own test oracle.
"""
import math

import numpy as np
from scipy.special import betainc, gammaln


def johnk_log_beta(a: float, b: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """log of Beta(a, b) draws by Johnk's rejection method, carried in log space.

    Valid for arbitrarily small shapes, where plain-space Beta sampling
    underflows to exact 0/1. Accepted pairs satisfy U^(1/a) + V^(1/b) <= 1;
    the comparison and the ratio are both done on logs.
    """
    out = np.empty(size)
    filled = 0
    while filled < size:
        m = max(2 * (size - filled), 512)
        # log U for U uniform on (0, 1]: log1p(-random) never hits -inf
        log_x = np.log1p(-rng.random(m)) / a
        log_y = np.log1p(-rng.random(m)) / b
        log_m = np.maximum(log_x, log_y)
        # log(e^lx + e^ly) <= 0  <=>  x + y <= 1
        log_sum = log_m + np.log(np.exp(log_x - log_m) + np.exp(log_y - log_m))
        ok = log_sum <= 0.0
        take = min(int(ok.sum()), size - filled)
        out[filled : filled + take] = (log_x[ok] - log_sum[ok])[:take]
        filled += take
    return out


def stick_dirichlet(rho: float, M: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """(size, M) Dirichlet(rho, ..., rho) draws by stick breaking.

    lambda_j = V_j * prod_{k<j} (1 - V_k) with V_j ~ Beta(rho, (M-j)*rho);
    each stick fraction comes from the log-space Johnk sampler, so the
    construction shares no code with the package's boosted-gamma identity.
    """
    log_lam = np.full((size, M), -np.inf)
    log_rest = np.zeros(size)
    for j in range(M - 1):
        log_v = johnk_log_beta(rho, (M - 1 - j) * rho, size, rng)
        log_lam[:, j] = log_rest + log_v
        with np.errstate(divide="ignore"):
            log_rest = log_rest + np.log1p(-np.exp(log_v))
    log_lam[:, M - 1] = log_rest
    return np.exp(log_lam)


def batch_se(x, n_batches: int = 50) -> float:
    """Batch-means standard error of the mean of a correlated sequence."""
    x = np.asarray(x, dtype=float)
    k = x.size // n_batches
    if k < 2:
        raise ValueError("sequence too short for the requested batches")
    means = x[: k * n_batches].reshape(n_batches, k).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def dirichlet_log_pdf(lam, rho: float) -> float:
    """Symmetric Dirichlet log density, written out directly."""
    lam = np.asarray(lam, dtype=float)
    M = lam.size
    return float(
        gammaln(M * rho) - M * gammaln(rho) + (rho - 1.0) * np.sum(np.log(lam))
    )


def ca_log_posterior(log_T, Y, F, phi, rho, prior_only=False) -> float:
    """Joint log density of the convex chain's T block, up to a constant.

    Gamma(rho, 1) prior on each T, Gaussian likelihood through
    lambda = T / sum(T), plus the log-scale change of variables (the chain
    walks in log T, so each coordinate carries a +log T Jacobian term).
    """
    log_T = np.asarray(log_T, dtype=float)
    T = np.exp(log_T)
    lam = T / T.sum()
    val = float(np.sum((rho - 1.0) * log_T - T) + np.sum(log_T))
    if not prior_only:
        r = Y - F @ lam
        val -= 0.5 * phi * float(r @ r)
    return val


def la_log_posterior(log_T, signs, log_A, Y, F, phi, rho, c0, d0, prior_only=False) -> float:
    """Joint log density of the linear chain's (T, z, A) blocks, up to a constant."""
    base = float(np.sum((rho - 1.0) * np.asarray(log_T) - np.exp(log_T))
                 + np.sum(np.asarray(log_T)))
    A = math.exp(log_A)
    base += (c0 - 1.0) * log_A - d0 * A + log_A  # gamma prior + log-scale Jacobian
    if not prior_only:
        T = np.exp(np.asarray(log_T))
        lam = T / T.sum()
        r = Y - F @ (A * np.asarray(signs) * lam)
        base -= 0.5 * phi * float(r @ r)
    return base


def beta_cell_masses(a: float, b: float, edges: np.ndarray) -> np.ndarray:
    """Exact Beta(a, b) probability masses of the cells defined by edges.

    Integrating the (possibly edge-singular) prior factor analytically per
    cell keeps a midpoint-rule quadrature accurate even when the density
    blows up at 0 or 1."""
    return np.diff(betainc(a, b, edges))


def ca_mean_lambda1_m2(Y, F, rho: float, a0: float, b0: float, mesh: float = 1e-3) -> float:
    """Posterior mean of lambda_1 for the two-predictor convex model by quadrature.

    phi is integrated out in closed form: the marginal likelihood factor is
    (b0 + ssr(lambda)/2)^-(a0 + n/2). Cell masses of the Beta(rho, rho) prior
    are exact; the smooth likelihood factor is evaluated at cell midpoints.
    """
    n = Y.size
    edges = np.arange(0.0, 1.0 + 0.5 * mesh, mesh)
    mass = beta_cell_masses(rho, rho, edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    d = F[:, 0] - F[:, 1]
    base = Y - F[:, 1]
    ssr = np.array([float((base - l1 * d) @ (base - l1 * d)) for l1 in mid])
    log_lik = -(a0 + 0.5 * n) * np.log(b0 + 0.5 * ssr)
    w = mass * np.exp(log_lik - log_lik.max())
    return float(np.sum(mid * w) / np.sum(w))


def la_mean_theta_m1(Y, F, a0, b0, c0, d0, lim: float = 8.0, mesh: float = 1e-3) -> float:
    """Posterior mean of the single coefficient theta = A z by 1-D quadrature.

    Density over theta != 0: |theta|^(c0-1) e^(-d0 |theta|) / 2 times the
    phi-marginalized likelihood (b0 + ssr(theta)/2)^-(a0 + n/2).
    """
    n = Y.size
    f = np.asarray(F, dtype=float).reshape(-1)
    th = np.arange(-lim, lim + 0.5 * mesh, mesh)
    yy = float(Y @ Y)
    fy = float(f @ Y)
    ff = float(f @ f)
    ssr = yy - 2.0 * th * fy + th * th * ff
    with np.errstate(divide="ignore"):
        log_f = (
            (c0 - 1.0) * np.log(np.abs(th))
            - d0 * np.abs(th)
            - (a0 + 0.5 * n) * np.log(b0 + 0.5 * ssr)
        )
    finite = np.isfinite(log_f)
    dens = np.zeros_like(th)
    dens[finite] = np.exp(log_f[finite] - log_f[finite].max())
    return float(np.trapezoid(th * dens, th) / np.trapezoid(dens, th))
