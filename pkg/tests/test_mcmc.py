import math

import numpy as np
import pytest

from diragg.mcmc import (
    TUNE_GAIN,
    TUNE_TARGET,
    TUNE_WINDOW,
    PosteriorSamples,
    StepSizeTuner,
    summarize_posterior,
)


# ------------------------------------------------------------ step size tuner

def test_tuner_window_update_exact():
    t = StepSizeTuner(1.0)
    t.observe_counts(20, TUNE_WINDOW)      # rate exactly at target: no move
    assert t.value == pytest.approx(1.0)
    t.observe_counts(TUNE_WINDOW, TUNE_WINDOW)
    assert t.value == pytest.approx(math.exp(TUNE_GAIN * (1.0 - TUNE_TARGET)))


def test_tuner_accumulates_partial_batches():
    t = StepSizeTuner(2.0)
    t.observe_counts(10, 30)
    assert t.value == 2.0                  # window not full yet
    t.observe_counts(5, 20)                # closes the window at rate 0.3
    assert t.value == pytest.approx(2.0 * math.exp(TUNE_GAIN * (0.3 - TUNE_TARGET)))


def test_tuner_observe_bool_form():
    t = StepSizeTuner(1.0)
    for _ in range(TUNE_WINDOW):
        t.observe(True)
    assert t.value == pytest.approx(math.exp(TUNE_GAIN * (1.0 - TUNE_TARGET)))


def test_tuner_single_update_for_oversized_batch():
    # a whole coordinate sweep can exceed the window; it still counts as one
    # window at the batch's rate
    t = StepSizeTuner(1.0)
    t.observe_counts(0, 4 * TUNE_WINDOW)
    assert t.value == pytest.approx(math.exp(TUNE_GAIN * (0.0 - TUNE_TARGET)))


def test_tuner_clamps():
    t = StepSizeTuner(1e-4)
    for _ in range(20):
        t.observe_counts(0, TUNE_WINDOW)
    assert t.value == t.min_value
    t = StepSizeTuner(50.0)
    for _ in range(20):
        t.observe_counts(TUNE_WINDOW, TUNE_WINDOW)
    assert t.value == t.max_value


def test_tuner_freeze_geometric_mean_of_trailing_half():
    t = StepSizeTuner(1.0)
    rates = (0.9, 0.8, 0.2, 0.6)
    values = []
    for r in rates:
        t.observe_counts(int(r * TUNE_WINDOW), TUNE_WINDOW)
        values.append(t.value)
    t.freeze()
    expected = math.exp(0.5 * (math.log(values[2]) + math.log(values[3])))
    assert t.value == pytest.approx(expected)
    # the path is consumed: freezing again changes nothing
    frozen = t.value
    t.freeze()
    assert t.value == frozen


def test_tuner_freeze_without_history_is_noop():
    t = StepSizeTuner(0.7)
    t.observe_counts(3, 10)   # window never filled
    t.freeze()
    assert t.value == 0.7


# --------------------------------------------------------- posterior container

def _samples(draws, n_iter, burn_in, rates=None):
    draws = np.asarray(draws, dtype=float)
    return PosteriorSamples(
        draws=draws,
        phi=np.ones(draws.shape[0]),
        acceptance_rates={"T": 0.4} if rates is None else rates,
        step_sizes={"T": 0.5},
        seed=0,
        n_iter=n_iter,
        burn_in=burn_in,
    )


def test_posterior_samples_validates_row_count():
    with pytest.raises(ValueError, match="expected n_iter - burn_in"):
        _samples(np.zeros((5, 2)), n_iter=10, burn_in=0)


def test_posterior_samples_validates_rates():
    with pytest.raises(ValueError, match="acceptance rate"):
        _samples(np.zeros((5, 2)), n_iter=5, burn_in=0, rates={"T": 1.5})
    with pytest.raises(ValueError, match="acceptance rate"):
        _samples(np.zeros((5, 2)), n_iter=5, burn_in=0, rates={"A": -0.1})


def test_posterior_samples_allows_empty_chain():
    s = _samples(np.zeros((0, 3)), n_iter=7, burn_in=7)
    assert s.draws.shape == (0, 3)


# -------------------------------------------------------------------- summaries

def test_summary_quantile_convention():
    # linear interpolation on 1..1000: the 95% interval is (25.975, 975.025)
    draws = np.arange(1.0, 1001.0).reshape(-1, 1)
    s = _samples(draws, n_iter=1000, burn_in=0)
    out = summarize_posterior(s)
    assert out["lo"][0] == pytest.approx(25.975)
    assert out["hi"][0] == pytest.approx(975.025)
    assert out["median"][0] == pytest.approx(500.5)
    assert out["mean"][0] == pytest.approx(500.5)


def test_summary_per_coordinate_shapes():
    rng = np.random.default_rng(5)
    draws = rng.standard_normal((200, 4))
    out = summarize_posterior(_samples(draws, n_iter=200, burn_in=0), level=0.5)
    for key in ("mean", "median", "lo", "hi"):
        assert out[key].shape == (4,)
    assert np.all(out["lo"] <= out["median"])
    assert np.all(out["median"] <= out["hi"])


def test_summary_level_validation():
    s = _samples(np.zeros((150, 1)), n_iter=150, burn_in=0)
    for bad in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(ValueError, match="level"):
            summarize_posterior(s, level=bad)


def test_summary_needs_enough_draws():
    s = _samples(np.zeros((99, 1)), n_iter=99, burn_in=0)
    with pytest.raises(ValueError, match="at least 100 draws"):
        summarize_posterior(s)
