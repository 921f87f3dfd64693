"""Shared MCMC plumbing: sample containers, step-size adaptation, summaries."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TUNE_WINDOW",
    "TUNE_TARGET",
    "TUNE_GAIN",
    "CONTEST_TOL",
    "FREE_CUT",
    "FREE_STEP",
    "LOG_CLAMP",
    "ChainOverflowError",
    "StepSizeTuner",
    "PosteriorSamples",
    "summarize_posterior",
]

TUNE_WINDOW = 50   # MH proposals per adaptation window
TUNE_TARGET = 0.4  # target acceptance rate
TUNE_GAIN = 1.0    # log-scale gain: beta *= exp(gain * (rate - target))

# A per-coordinate proposal counts toward acceptance bookkeeping only when
# the likelihood factor of its MH ratio exceeds this many nats, i.e. when the
# data push the acceptance odds by more than e^CONTEST_TOL. In a sparse fit
# almost all coordinates carry (essentially) no weight, their moves are
# likelihood-flat and accept nearly always, and any rate that includes them
# saturates near 1 no matter the step size -- tuning to 40% would be
# impossible and the reported number meaningless. The cut sits well below
# one nat: on a diffuse fit (low phi) every move is only weakly informed,
# and a larger cut would throw away so many proposals that the windowed
# rates degenerate into coin flips over a handful of events.
CONTEST_TOL = 0.01

# Two-scale walk. A coordinate whose weight lambda_j is below FREE_CUT is
# "free": it contributes (essentially) nothing to the fit, its moves are
# likelihood-flat, and the only thing that matters is how fast it can
# diffuse. Free coordinates therefore take FREE_STEP times the tuned step,
# with the proposal-density ratio log(scale_old/scale_new) entering the MH
# ratio whenever a move crosses the cut, which keeps the kernel exact. The
# wide step lets an unsupported coordinate fall thousands of nats below the
# fit during burn-in -- far beyond where its recorded weight could matter,
# and far enough that the recorded half of the chain cannot diffuse back to
# the cut -- while a supported coordinate, held near its mode by the
# likelihood, never crosses the cut and only ever sees the tuned step. The
# asymmetry is the point: a free coordinate re-attaches only through the
# narrow slice of wide proposals that land above the cut AND are short
# enough for the tuned reverse step, so a coordinate the data once rejected
# stays out of the fit instead of flickering at the edge of visibility.
# (The near-zero tail of the weight prior is ~exponential in log-weight with
# scale 1/rho ~ 1e4 nats, so there is no depth the walk could overshoot:
# deeper is always closer to where that tail actually puts its mass.)
FREE_CUT = 1e-3
FREE_STEP = 1000.0

# guard before exp(); beyond this float64 overflows
LOG_CLAMP = 700.0


class ChainOverflowError(RuntimeError):
    """A chain state left the representable range (non-finite log-ratio or exp overflow)."""


@dataclass
class StepSizeTuner:
    """Windowed multiplicative adaptation of a random-walk step size.

    During burn-in, after every TUNE_WINDOW proposals the step is multiplied
    by exp(TUNE_GAIN * (window rate - target)); at the end of burn-in the
    chain runner calls freeze(), which replaces the step by the geometric
    mean of the trailing half of its adaptation path and stops it moving,
    so the recorded part of the chain uses a fixed kernel. The constant
    gain is deliberate: the acceptance curve itself drifts during burn-in
    (phi tightens as the fit forms, moving the step a given rate needs),
    and a decaying-gain schedule freezes wherever it was when the gain ran
    out -- tracking the drift and then averaging the stationary
    oscillation away lands within a few percent of the target instead.
    """

    value: float
    target: float = TUNE_TARGET
    min_value: float = 1e-4
    max_value: float = 50.0
    _accepted: int = field(default=0, repr=False)
    _proposed: int = field(default=0, repr=False)
    _log_path: list = field(default_factory=list, repr=False)

    def observe(self, accepted: bool):
        self.observe_counts(int(bool(accepted)), 1)

    def observe_counts(self, accepted: int, proposed: int):
        """Record a batch of proposals (e.g. one coordinate sweep) at once."""
        self._proposed += proposed
        self._accepted += accepted
        if self._proposed >= TUNE_WINDOW:
            rate = self._accepted / self._proposed
            # clamp so a temporarily flat (or razor-sharp) target cannot run
            # the step size off to an unusable scale
            self.value = min(
                max(self.value * math.exp(TUNE_GAIN * (rate - self.target)), self.min_value),
                self.max_value,
            )
            self._log_path.append(math.log(self.value))
            self._accepted = 0
            self._proposed = 0

    def freeze(self):
        """Settle on the geometric mean of the trailing half of the path."""
        if self._log_path:
            tail = self._log_path[len(self._log_path) // 2 :]
            self.value = min(
                max(math.exp(sum(tail) / len(tail)), self.min_value), self.max_value
            )
            self._log_path.clear()


@dataclass(frozen=True)
class PosteriorSamples:
    """Post-burn-in draws from an aggregation chain.

    draws holds one row per recorded sweep: simplex weights for the convex
    sampler, signed coefficients for the linear one. acceptance_rates and
    step_sizes are keyed by MH block name ("T", and "A"/"z" for the linear
    sampler); acceptance rates count post-burn-in sweeps only.
    """

    draws: np.ndarray
    phi: np.ndarray
    acceptance_rates: dict
    step_sizes: dict
    seed: object
    n_iter: int
    burn_in: int

    def __post_init__(self):
        kept = self.n_iter - self.burn_in
        if self.draws.shape[0] != kept or self.phi.shape[0] != kept:
            raise ValueError(
                f"stored {self.draws.shape[0]} draws, expected n_iter - burn_in = {kept}"
            )
        for name, rate in self.acceptance_rates.items():
            if not (0.0 <= rate <= 1.0):
                raise ValueError(f"acceptance rate for block {name!r} is {rate}")


def summarize_posterior(samples: PosteriorSamples, level: float = 0.95) -> dict:
    """Per-coordinate mean, median, and equal-tailed credible interval.

    Parameters
    ----------
    samples : PosteriorSamples
        At least 100 stored draws.
    level : float
        Credible level in (0, 1); the interval uses the (1-level)/2 and
        1-(1-level)/2 empirical quantiles with linear interpolation.

    Returns
    -------
    dict with arrays "mean", "median", "lo", "hi", each of length M.
    """
    if not (0.0 < level < 1.0):
        raise ValueError(f"level must be in (0, 1), got {level}")
    if samples.draws.shape[0] < 100:
        raise ValueError(f"need at least 100 draws, have {samples.draws.shape[0]}")
    a = (1.0 - level) / 2.0
    lo, med, hi = np.quantile(samples.draws, [a, 0.5, 1.0 - a], axis=0)
    return {
        "mean": samples.draws.mean(axis=0),
        "median": med,
        "lo": lo,
        "hi": hi,
    }
