import numpy as np
import pytest

from diragg.dirichlet import DirichletHyper
from diragg.la import (
    LaHyper,
    initial_la_state,
    log_accept_ratio_A,
    log_accept_ratio_z,
    mh_update_A,
    mh_update_T_la,
    mh_update_z,
    run_chain_la,
)
from diragg.mcmc import ChainOverflowError
from diragg.simulate import SimSpec, generate
from oracles import la_log_posterior


def _toy_problem(seed=0, n=50, M=6, noise=0.4):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((n, M))
    beta = np.zeros(M)
    beta[0], beta[2] = 1.5, -0.8
    Y = F @ beta + noise * rng.standard_normal(n)
    return Y, F, beta


def _hyper(M, rho=0.5, **kw):
    return LaHyper(dirichlet=DirichletHyper(alpha=rho, gamma=0.0, M=M), **kw)


def test_la_hyper_validations():
    d = DirichletHyper(alpha=1.0, gamma=2.0, M=3)
    for field in ("a0", "b0", "c0", "d0", "beta_T", "beta_A"):
        with pytest.raises(ValueError, match=field):
            LaHyper(dirichlet=d, **{field: 0.0})
    with pytest.raises(ValueError):
        LaHyper(dirichlet=d, n_iter=10, burn_in=10)


# ------------------------------------------------------------------ warm start

def test_initial_state_recovers_exact_support():
    # noiseless data: the warm start must find exactly the two active
    # coordinates, their signs, and (through A) their magnitudes
    rng = np.random.default_rng(3)
    n, M = 80, 12
    X = rng.standard_normal((n, M))
    beta = np.zeros(M)
    beta[1], beta[3] = 2.0, -3.0
    Y = X @ beta
    state = initial_la_state(Y, X)
    # free coordinates start at 1e-6 of the largest weight, so theta carries
    # that floor instead of exact zeros
    assert set(np.flatnonzero(state.lam > 1e-3)) == {1, 3}
    np.testing.assert_allclose(state.theta, beta, atol=1e-4)
    assert state.signs[1] == 1.0 and state.signs[3] == -1.0
    assert np.exp(state.log_A) == pytest.approx(5.0, rel=1e-4)
    assert state.phi > 1e6   # residuals are numerically zero


def test_initial_state_caches_are_consistent():
    Y, F, _ = _toy_problem(seed=5)
    state = initial_la_state(Y, F)
    lam = np.exp(state.log_T - state.log_T.max())
    lam = lam / lam.sum()
    np.testing.assert_allclose(state.lam, lam, rtol=1e-12)
    np.testing.assert_allclose(
        state.theta, np.exp(state.log_A) * state.signs * state.lam, rtol=1e-12
    )
    np.testing.assert_allclose(state.fitted, F @ state.theta, atol=1e-10)


# ----------------------------------------------------------- acceptance ratios

def test_log_accept_ratio_A_matches_density_difference():
    Y, F, _ = _toy_problem(seed=7, M=4)
    rng = np.random.default_rng(11)
    lam = rng.dirichlet(np.ones(4))
    signs = np.array([1.0, -1.0, 1.0, -1.0])
    log_T = np.log(lam) + 0.3          # any representative with these ratios
    c0, d0, phi, rho = 2.0, 1.5, 3.0, 0.5
    for prior_only in (False, True):
        for _ in range(8):
            a_old, a_new = rng.normal(0.0, 1.0, size=2)
            got = log_accept_ratio_A(a_old, a_new, Y, F, lam, signs, phi, c0, d0,
                                     prior_only=prior_only)
            want = la_log_posterior(log_T, signs, a_new, Y, F, phi, rho, c0, d0,
                                    prior_only) - la_log_posterior(
                log_T, signs, a_old, Y, F, phi, rho, c0, d0, prior_only)
            assert got == pytest.approx(want, rel=1e-9, abs=1e-9)


def test_log_accept_ratio_A_overflow_guard():
    Y, F, _ = _toy_problem(seed=8, M=2)
    with pytest.raises(ChainOverflowError):
        log_accept_ratio_A(0.0, 800.0, Y, F, [0.5, 0.5], [1.0, 1.0], 1.0, 1.0, 1.0)


def test_log_accept_ratio_z_is_likelihood_only():
    Y, F, _ = _toy_problem(seed=9, M=3)
    lam = np.array([0.6, 0.3, 0.1])
    log_A, phi = 0.4, 2.0
    signs_old = np.array([1.0, 1.0, -1.0])
    signs_new = np.array([1.0, -1.0, -1.0])
    a = np.exp(log_A)
    r_old = Y - F @ (a * signs_old * lam)
    r_new = Y - F @ (a * signs_new * lam)
    want = -0.5 * phi * float(r_new @ r_new - r_old @ r_old)
    got = log_accept_ratio_z(signs_old, signs_new, Y, F, lam, log_A, phi)
    assert got == pytest.approx(want, rel=1e-12)


# ------------------------------------------------------------------- MH blocks

def test_mh_T_sweep_keeps_caches_consistent():
    Y, F, _ = _toy_problem(seed=12)
    hyper = _hyper(6)
    state = initial_la_state(Y, F)
    rng = np.random.default_rng(13)
    for _ in range(40):
        mh_update_T_la(state, Y, F, hyper, rng)
    T = np.exp(state.log_T)
    np.testing.assert_allclose(state.lam, T / T.sum(), rtol=1e-12)
    np.testing.assert_allclose(
        state.theta, np.exp(state.log_A) * state.signs * state.lam, rtol=1e-12
    )
    np.testing.assert_allclose(state.fitted, F @ state.theta, atol=1e-8)


def test_mh_A_reports_the_exact_ratio_it_used():
    Y, F, _ = _toy_problem(seed=14)
    hyper = _hyper(6, c0=2.0, d0=2.0)
    state = initial_la_state(Y, F)
    before_log_A = state.log_A
    lam, signs, phi = state.lam.copy(), state.signs.copy(), state.phi
    seed_rng = np.random.default_rng(17)
    _, accepted, log_r = mh_update_A(state, Y, F, hyper, seed_rng)
    # replay the proposal from the same stream
    replay = np.random.default_rng(17)
    log_A_new = before_log_A + hyper.beta_A * float(replay.uniform(-0.5, 0.5))
    want = log_accept_ratio_A(before_log_A, log_A_new, Y, F, lam, signs, phi,
                              hyper.c0, hyper.d0)
    assert log_r == pytest.approx(want, rel=1e-9, abs=1e-9)
    if accepted:
        assert state.log_A == pytest.approx(log_A_new)
        np.testing.assert_allclose(
            state.theta, np.exp(log_A_new) * signs * lam, rtol=1e-12
        )
    else:
        assert state.log_A == before_log_A


def test_mh_z_prior_only_flips_freely():
    Y, F, _ = _toy_problem(seed=15)
    hyper = _hyper(6)
    state = initial_la_state(Y, F)
    before = state.signs.copy()
    _, accepted, engaged = mh_update_z(state, Y, F, hyper,
                                       np.random.default_rng(19), prior_only=True)
    proposed = np.random.default_rng(19).integers(0, 2, size=6)
    np.testing.assert_array_equal(state.signs, np.where(proposed == 1, -before, before))
    assert accepted == 0 and engaged == 0   # free flips are not contested


def test_mh_z_moves_weight_against_data_rarely():
    # a sign flip on the dominant coordinate is strongly rejected
    rng = np.random.default_rng(20)
    n = 60
    f = rng.standard_normal(n)
    Y = 2.0 * f
    F = f.reshape(-1, 1)
    hyper = _hyper(1)
    state = initial_la_state(Y, F)
    flips = 0
    chain_rng = np.random.default_rng(21)
    for _ in range(200):
        s0 = state.signs[0]
        mh_update_z(state, Y, F, hyper, chain_rng)
        flips += int(state.signs[0] != s0)
    assert flips == 0


# ------------------------------------------------------------------- full chain

def test_chain_is_deterministic():
    Y, F, _ = _toy_problem(seed=22)
    hyper = _hyper(6, n_iter=300, burn_in=100)
    a = run_chain_la(Y, F, hyper, seed=4)
    b = run_chain_la(Y, F, hyper, seed=4)
    np.testing.assert_array_equal(a.draws, b.draws)
    np.testing.assert_array_equal(a.phi, b.phi)
    assert a.acceptance_rates == b.acceptance_rates


def test_chain_reports_all_blocks():
    Y, F, _ = _toy_problem(seed=23)
    hyper = _hyper(6, n_iter=200, burn_in=100)
    s = run_chain_la(Y, F, hyper, seed=1)
    assert set(s.acceptance_rates) == {"T", "A", "z"}
    assert set(s.step_sizes) == {"T", "A"}
    assert s.draws.shape == (100, 6)
    assert np.all(np.isfinite(s.draws))


def test_chain_single_predictor():
    rng = np.random.default_rng(24)
    n = 40
    f = rng.standard_normal(n)
    Y = 1.4 * f + 0.5 * rng.standard_normal(n)
    hyper = _hyper(1, n_iter=600, burn_in=200)
    s = run_chain_la(Y, f.reshape(-1, 1), hyper, seed=6)
    assert s.draws.shape == (400, 1)
    assert s.draws.mean() == pytest.approx(1.4, abs=0.3)


def test_chain_shrinks_null_coordinates():
    spec = SimSpec(model="s", M=20, n_train=100, n_test=10, seed=31)
    data = generate(spec)
    hyper = LaHyper(dirichlet=DirichletHyper(alpha=1.0, gamma=2.0, M=20),
                    n_iter=1200, burn_in=400)
    s = run_chain_la(data.train.Y, data.train.X, hyper, seed=7)
    med = np.median(s.draws, axis=0)
    # five leading true coefficients, fifteen exact zeros
    assert np.max(np.abs(med[5:])) < 1e-4
    np.testing.assert_allclose(med[:5], data.coefficients[:5], atol=0.2)


def test_chain_validations():
    Y, F, _ = _toy_problem(seed=25)
    with pytest.raises(ValueError, match="hyper.dirichlet.M"):
        run_chain_la(Y, F, _hyper(5), seed=0)
    with pytest.raises(ValueError, match="shape mismatch"):
        run_chain_la(Y[:-1], F, _hyper(6), seed=0)
