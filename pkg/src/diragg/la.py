"""Block MCMC for Bayesian linear aggregation under the double-Dirichlet-gamma prior.

The coefficient vector factors as theta_j = A z_j lambda_j with the l1 scale
A ~ Gamma(c0, d0), independent fair signs z_j, and simplex magnitudes lambda
carried by gamma augmentation variables exactly as in the convex sampler.
Each sweep extends the convex sweep with two extra blocks:

    Gibbs phi -> MH T (per-coordinate pass) -> MH A (log-scale) -> MH z (per-coordinate flips)

The T and z passes visit coordinates sequentially with one accept decision
each (see the convex module for why a joint proposal cannot empty the
inactive coordinates). The likelihood is always evaluated at the full
coefficient theta = A z lambda.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ca import (
    _accept,
    _anchor_scale,
    _softmax,
    _ssr,
    _init_phi,
    _t_values,
    _validate_inputs,
    gibbs_update_phi,
)
from .dirichlet import DirichletHyper
from .mcmc import (
    CONTEST_TOL,
    FREE_CUT,
    FREE_STEP,
    LOG_CLAMP,
    ChainOverflowError,
    PosteriorSamples,
    StepSizeTuner,
)

__all__ = [
    "LaHyper",
    "LaChainState",
    "log_accept_ratio_A",
    "log_accept_ratio_z",
    "mh_update_T_la",
    "mh_update_A",
    "mh_update_z",
    "run_chain_la",
]


@dataclass(frozen=True)
class LaHyper:
    """Hyperparameters of the linear-aggregation chain.

    (a0, b0) is the gamma prior on the error precision phi, (c0, d0) the
    gamma prior on the l1 scale A. beta_T and beta_A are initial MH step
    sizes, tuned independently toward 40% acceptance during burn-in.
    """

    dirichlet: DirichletHyper
    a0: float = 0.01
    b0: float = 0.01
    c0: float = 0.01
    d0: float = 0.01
    beta_T: float = 1.0
    beta_A: float = 1.0
    n_iter: int = 2000
    burn_in: int = 1000

    def __post_init__(self):
        for name in ("a0", "b0", "c0", "d0", "beta_T", "beta_A"):
            if not (getattr(self, name) > 0):
                raise ValueError(f"{name} must be positive")
        if not (0 <= self.burn_in < self.n_iter):
            raise ValueError(f"need 0 <= burn_in < n_iter, got {self.burn_in}, {self.n_iter}")


@dataclass
class LaChainState:
    """Mutable chain state; lam, theta and fitted are caches of (log_T, signs, log_A)."""

    log_T: np.ndarray
    signs: np.ndarray
    log_A: float
    phi: float
    lam: np.ndarray
    theta: np.ndarray
    fitted: np.ndarray


INIT_T_STAT = 3.8   # |t| needed to start (and stay) inside the warm-start fit
INIT_FREE_DROP = 1e-6   # starting T of the remaining coordinates, relative to the largest
INIT_REFINE = 4   # rounds of keep-set refinement on least-squares refits


def initial_la_state(Y: np.ndarray, F: np.ndarray) -> LaChainState:
    """Data-driven warm start from a thresholded ridge fit.

    Coordinates whose ridge coefficient (penalty n/10) clears INIT_T_STAT
    standard errors start at that coefficient's magnitude; the rest start
    INIT_FREE_DROP times the largest one -- well below the two-scale walk's
    FREE_CUT, outside the fit. A joint fit, unlike marginal correlations,
    hands each coordinate its conditional contribution, and the threshold
    matters beyond that: handing every coordinate its ridge weight lets the
    chain wire chance correlations into the early fit, and a few true zeros
    then enter the recorded draws holding real weight. Started outside, a
    spurious coordinate faces the cut-crossing barrier and stays out, while
    every coordinate with real support starts inside the likelihood's grip.

    The keep set is then refined against least-squares refits, because the
    one-shot ridge test is both biased and noisy: the ridge residual keeps
    a shrunk slice of the signal (sigma^2 biased high, so moderate true
    coefficients miss the cut), and among many correlated columns a single
    coefficient estimate can wander (so a miss -- or a spurious keep --
    survives the first pass). Each round refits the current set, drops
    members whose joint-fit |t| falls below the gate, and admits outsiders
    whose correlation with the refit residual clears the same gate -- a
    coordinate the set wrongly excludes still has its whole signal in that
    residual, which is a far sharper signal than its original shrunk
    coefficient. Least-squares orthogonality zeroes the residual score of
    every member, so the two moves cannot fight, and the set reaches its
    fixed point in a round or two. The chain depends on that set more than
    on anything else here: a coordinate started outside faces the
    cut-crossing barrier for the rest of the run, so a recall mistake is
    permanent, while membership at the right noise level is exactly what
    the data resolve. Kept coordinates start at their refit magnitudes
    with refit signs; the scale A is the least-squares coefficient of Y on
    the resulting direction, and phi moment-matches the residuals.
    Starting the scale near its conditional optimum keeps the chain out of
    the flat likelihood region around A = 0, where the spike of a vague
    Ga(c0, d0) prior can hold it for many sweeps.
    """
    n, m = F.shape
    ridge = 0.1 * n
    U, d, Vt = np.linalg.svd(F, full_matrices=False)
    shrink = d / (d * d + ridge)
    b = Vt.T @ (shrink * (U.T @ Y))
    signs = np.where(b >= 0.0, 1.0, -1.0)
    w = np.abs(b)
    wmax = w.max()
    if wmax == 0.0:
        log_T = np.zeros(m)
    else:
        # ridge df and coefficient standard errors from the same SVD
        df = float(np.sum(d * d / (d * d + ridge)))
        resid = Y - U @ ((d * shrink) * (U.T @ Y))
        sigma2 = float(resid @ resid) / max(n - df, 1.0)
        # Var(b) = sigma^2 (V s U'U s V')_jj with s = d/(d^2+ridge), which
        # reduces to sigma^2 sum_k V_jk^2 s_k^2; the sigma-free part is fixed
        unit_se = np.sqrt(np.einsum("kj,k->j", Vt ** 2, shrink ** 2))
        keep = w >= INIT_T_STAT * np.sqrt(sigma2) * unit_se
        col_norm = np.sqrt(np.einsum("ij,ij->j", F, F))
        col_norm[col_norm == 0.0] = 1.0
        for _ in range(INIT_REFINE):
            if not keep.any():
                break
            Fk = F[:, keep]
            sub, *_ = np.linalg.lstsq(Fk, Y, rcond=None)
            r = Y - Fk @ sub
            sigma = math.sqrt(float(r @ r) / max(n - int(keep.sum()), 1.0))
            # joint-fit |t| of the members ...
            se_in = sigma * np.sqrt(np.maximum(np.diag(np.linalg.pinv(Fk.T @ Fk)), 0.0))
            t_in = np.abs(sub) / np.where(se_in > 0.0, se_in, np.inf)
            # ... and residual-correlation |t| of everyone (zero for members)
            t_out = np.abs(F.T @ r) / (sigma * col_norm)
            grown = keep.copy()
            grown[keep] = t_in >= INIT_T_STAT
            grown |= t_out >= INIT_T_STAT
            if (grown == keep).all():
                break
            keep = grown
        if not keep.any():
            keep = w == wmax
        # final refit on the settled set fixes the magnitudes and signs;
        # ridge shrinkage is uneven across a correlated design, and the
        # global scale A can only undo a common factor
        sub, *_ = np.linalg.lstsq(F[:, keep], Y, rcond=None)
        w = np.zeros(m)
        w[keep] = np.abs(sub)
        signs[keep] = np.where(sub >= 0.0, 1.0, -1.0)
        wmax = w.max()
        if wmax == 0.0:
            wmax = 1.0
        w = np.where(w > 0.0, w, wmax * INIT_FREE_DROP)
        log_T = np.log(w)
    lam = _softmax(log_T)
    g = F @ (signs * lam)
    gg = float(g @ g)
    a0 = float(Y @ g) / gg if gg > 0.0 else 1.0
    a0 = a0 if a0 > 1e-3 else 1.0
    theta = a0 * signs * lam
    fitted = F @ theta
    ssr = _ssr(Y, fitted)
    phi = Y.size / ssr if ssr > 0.0 else _init_phi(Y)
    return LaChainState(
        log_T=log_T,
        signs=signs,
        log_A=float(np.log(a0)),
        phi=phi,
        lam=lam,
        theta=theta,
        fitted=fitted,
    )


def _scale_value(log_a: float) -> float:
    if log_a > LOG_CLAMP:
        raise ChainOverflowError(f"log A reached {log_a:.3g} (> {LOG_CLAMP:g}); exp would overflow")
    return float(np.exp(log_a))


def mh_update_T_la(state, Y, F, hyper, rng, beta: float | None = None, prior_only: bool = False):
    """One sequential pass of per-coordinate log-scale T moves at theta = A z lambda.

    Identical to the convex pass -- including the FREE_CUT/FREE_STEP
    two-scale proposal and the CONTEST_TOL bookkeeping -- except that the
    signed column signs[j] F[:, j] carries each coordinate's contribution
    and the fit is scaled by A.  Returns ``(state, accepted, contested)``.
    """
    if beta is None:
        beta = hyper.beta_T
    rho = hyper.dirichlet.rho
    M = state.log_T.size
    log_T = _anchor_scale(state.log_T, rho, rng)
    T = _t_values(log_T)
    S = float(T.sum())
    a = _scale_value(state.log_A)
    v = F @ (state.signs * T)
    phi = state.phi
    ssr = _ssr(Y, a * v / S)
    u_steps = rng.uniform(-0.5, 0.5, size=M)
    accept_u = rng.random(size=M)
    accepted = contested_n = 0
    wide = FREE_STEP * beta
    for j in range(M):
        scale_old = beta if T[j] >= FREE_CUT * S else wide
        delta = scale_old * u_steps[j]
        lt_new = log_T[j] + delta
        if lt_new > LOG_CLAMP:
            # certain rejection, as in the convex pass: the jump lands far
            # on the attached side with an impossible reverse step
            continue
        t_new = math.exp(lt_new)
        d_t = t_new - T[j]
        if d_t == 0.0:
            # numerically weightless on both sides (same side of the cut,
            # scales cancel): a pure prior-ratio decision
            if math.log1p(-accept_u[j]) < rho * delta:
                log_T[j] = lt_new
            continue
        S_new = S + d_t
        if S_new <= 0.0 or not math.isfinite(S_new):
            continue
        scale_new = beta if t_new >= FREE_CUT * S_new else wide
        if abs(delta) > 0.5 * scale_new:
            # the reverse step cannot reach back: reverse density is zero
            continue
        contested = True
        lik = 0.0
        if not prior_only:
            v_new = v + state.signs[j] * d_t * F[:, j]
            ssr_new = _ssr(Y, a * v_new / S_new)
            lik = -0.5 * phi * (ssr_new - ssr)
            contested = abs(lik) > CONTEST_TOL
        if contested:
            contested_n += 1
        log_r = lik + rho * delta - d_t
        if scale_new != scale_old:
            log_r += math.log(scale_old / scale_new)
        if not math.isfinite(log_r):
            raise ChainOverflowError(f"non-finite T log-ratio at coordinate {j}")
        if math.log1p(-accept_u[j]) < log_r:
            if contested:
                accepted += 1
            log_T[j] = lt_new
            T[j] = t_new
            S = S_new
            if not prior_only:
                v = v_new
                ssr = ssr_new
    state.log_T = log_T
    lam = T / S
    state.lam = lam
    state.theta = a * state.signs * lam
    state.fitted = F @ state.theta if prior_only else a * v / S
    return state, accepted, contested_n


def _log_ratio_A(log_A_old, log_A_new, ssr_old, ssr_new, phi, c0, d0, prior_only=False):
    # likelihood + gamma prior on A + Jacobian; (c0-1)*logA and the Jacobian
    # logA combine into c0*logA
    lik = 0.0 if prior_only else -0.5 * phi * (ssr_new - ssr_old)
    a_old = _scale_value(log_A_old)
    a_new = _scale_value(log_A_new)
    log_r = lik + c0 * (log_A_new - log_A_old) - d0 * (a_new - a_old)
    if not np.isfinite(log_r):
        raise ChainOverflowError(f"non-finite A log-ratio ({log_r})")
    return float(log_r)


def log_accept_ratio_A(
    log_A_old, log_A_new, Y, F, lam, signs, phi, c0, d0, prior_only: bool = False
) -> float:
    """Log MH acceptance ratio for the scale move, computed from raw inputs."""
    lam = np.asarray(lam, dtype=float)
    signs = np.asarray(signs, dtype=float)
    ssr_old = _ssr(Y, F @ (_scale_value(log_A_old) * signs * lam))
    ssr_new = _ssr(Y, F @ (_scale_value(log_A_new) * signs * lam))
    return _log_ratio_A(log_A_old, log_A_new, ssr_old, ssr_new, phi, c0, d0, prior_only)


def mh_update_A(state, Y, F, hyper, rng, beta: float | None = None, prior_only: bool = False):
    """Log-scale random-walk update of the l1 scale A.

    Proposes A' = A e^(beta U) with U ~ Uniform(-1/2, 1/2); the whole
    coefficient vector rescales by the same factor, so the cached fitted
    values rescale without touching F.
    """
    if beta is None:
        beta = hyper.beta_A
    log_A_new = state.log_A + beta * float(rng.uniform(-0.5, 0.5))
    factor = np.exp(log_A_new - state.log_A)
    fitted_new = factor * state.fitted
    ssr_old = _ssr(Y, state.fitted)
    ssr_new = _ssr(Y, fitted_new)
    log_r = _log_ratio_A(
        state.log_A, log_A_new, ssr_old, ssr_new, state.phi, hyper.c0, hyper.d0, prior_only
    )
    accepted = _accept(log_r, rng)
    if accepted:
        state.log_A = log_A_new
        # rebuild theta from its parts so the decomposition stays exact
        state.theta = _scale_value(log_A_new) * state.signs * state.lam
        state.fitted = fitted_new
    return state, accepted, log_r


def log_accept_ratio_z(signs_old, signs_new, Y, F, lam, log_A, phi) -> float:
    """Log MH acceptance ratio for a sign-flip move: likelihood difference only."""
    lam = np.asarray(lam, dtype=float)
    a = _scale_value(log_A)
    ssr_old = _ssr(Y, F @ (a * np.asarray(signs_old, dtype=float) * lam))
    ssr_new = _ssr(Y, F @ (a * np.asarray(signs_new, dtype=float) * lam))
    log_r = -0.5 * phi * (ssr_new - ssr_old)
    if not np.isfinite(log_r):
        raise ChainOverflowError(f"non-finite z log-ratio ({log_r})")
    return float(log_r)


def mh_update_z(state, Y, F, hyper, rng, prior_only: bool = False):
    """One pass of per-coordinate sign flips z_j' = z_j V_j with fair signs V_j.

    V_j = +1 proposes no change, so each coordinate effectively proposes a
    flip with probability one half.  The prior on z is uniform and the
    proposal symmetric, so a flip is decided by the likelihood ratio alone;
    the returned ``(state, accepted, contested)`` counts flips the data
    contest by more than CONTEST_TOL nats, which excludes in particular
    every weightless coordinate.
    """
    M = state.signs.size
    propose = rng.integers(0, 2, size=M)
    accept_u = rng.random(size=M)
    T = _t_values(state.log_T)
    S = float(T.sum())
    a = _scale_value(state.log_A)
    signs = state.signs.copy()
    v = F @ (signs * T)
    phi = state.phi
    ssr = _ssr(Y, a * v / S)
    accepted = 0
    engaged = 0
    for j in range(M):
        if propose[j] == 0:
            continue
        if T[j] == 0.0 or prior_only:
            # free flip: no weight to move, or the likelihood is switched
            # off; either way the symmetric prior accepts
            signs[j] = -signs[j]
            continue
        v_new = v - 2.0 * signs[j] * T[j] * F[:, j]
        ssr_new = _ssr(Y, a * v_new / S)
        log_r = -0.5 * phi * (ssr_new - ssr)
        if not math.isfinite(log_r):
            raise ChainOverflowError(f"non-finite z log-ratio at coordinate {j}")
        contested = abs(log_r) > CONTEST_TOL
        if contested:
            engaged += 1
        if math.log1p(-accept_u[j]) < log_r:
            if contested:
                accepted += 1
            signs[j] = -signs[j]
            v = v_new
            ssr = ssr_new
    state.signs = signs
    lam = T / S
    state.lam = lam
    state.theta = a * signs * lam
    state.fitted = F @ state.theta if prior_only else a * v / S
    return state, accepted, engaged


def run_chain_la(Y, F, hyper: LaHyper, seed, prior_only: bool = False) -> PosteriorSamples:
    """Run the linear-aggregation chain and record post-burn-in coefficient draws.

    Parameters
    ----------
    Y : array_like, shape (n,)
        Responses on the aggregation rows.
    F : array_like, shape (n, M)
        Prediction matrix; M = 1 is allowed (the simplex part is degenerate
        and the chain reduces to scale and sign updates).
    hyper : LaHyper
    seed : int, sequence of int, SeedSequence, or Generator
    prior_only : bool
        Test hook: drop the likelihood from every update so the chain
        targets the prior exactly.

    Returns
    -------
    PosteriorSamples
        Rows of draws are signed coefficients theta; acceptance rates are
        reported for the T pass ("T"), the scale ("A") and the sign flips
        ("z"), with frozen step sizes for "T" and "A".  The T and z rates
        are over contested proposals (likelihood factor above CONTEST_TOL
        nats); the A rate is over all post-burn-in sweeps.
    """
    Y, F = _validate_inputs(Y, F, min_M=1)
    if F.shape[1] != hyper.dirichlet.M:
        raise ValueError(f"F has {F.shape[1]} columns but hyper.dirichlet.M = {hyper.dirichlet.M}")
    rng = np.random.default_rng(seed)
    state = initial_la_state(Y, F)
    tuner_t = StepSizeTuner(hyper.beta_T)
    tuner_a = StepSizeTuner(hyper.beta_A)
    if not prior_only:
        # Start the scale step near its conditional optimum instead of at the
        # configured default: the log-likelihood curvature in log A at the
        # warm start is about phi A^2 g'g, and ~2.4 conditional sds is the
        # 1-D random-walk optimum. On a tight fit the conditional is orders
        # of magnitude narrower than beta_A = 1, more than burn-in
        # adaptation alone can close; started here, the tuner only trims.
        g = F @ (state.signs * state.lam)
        curv = state.phi * math.exp(2.0 * state.log_A) * float(g @ g)
        if curv > 0.0:
            tuner_a.value = min(hyper.beta_A, max(2.4 / math.sqrt(curv), tuner_a.min_value))
    kept = hyper.n_iter - hyper.burn_in
    draws = np.empty((kept, F.shape[1]))
    phis = np.empty(kept)
    acc_t_sum = eng_t_sum = 0
    acc_z_sum = eng_z_sum = 0
    acc_a_sum = 0
    for it in range(hyper.n_iter):
        if it == hyper.burn_in:
            tuner_t.freeze()
            tuner_a.freeze()
        state.phi = gibbs_update_phi(state, Y, F, hyper, rng, prior_only=prior_only)
        _, acc_t, eng_t = mh_update_T_la(
            state, Y, F, hyper, rng, beta=tuner_t.value, prior_only=prior_only
        )
        _, acc_a, _ = mh_update_A(state, Y, F, hyper, rng, beta=tuner_a.value, prior_only=prior_only)
        _, acc_z, eng_z = mh_update_z(state, Y, F, hyper, rng, prior_only=prior_only)
        if it < hyper.burn_in:
            tuner_t.observe_counts(acc_t, eng_t)
            tuner_a.observe(acc_a)
        else:
            acc_t_sum += acc_t
            eng_t_sum += eng_t
            acc_z_sum += acc_z
            eng_z_sum += eng_z
            acc_a_sum += acc_a
            k = it - hyper.burn_in
            draws[k] = state.theta
            phis[k] = state.phi
    return PosteriorSamples(
        draws=draws,
        phi=phis,
        acceptance_rates={
            "T": acc_t_sum / eng_t_sum if eng_t_sum else 0.0,
            "A": acc_a_sum / kept if kept else 0.0,
            "z": acc_z_sum / eng_z_sum if eng_z_sum else 0.0,
        },
        step_sizes={"T": tuner_t.value, "A": tuner_a.value},
        seed=seed,
        n_iter=hyper.n_iter,
        burn_in=hyper.burn_in,
    )
