"""Model-based BDFT cancellation.

u_can = u - u_mod, where u_mod is the causal response of the discretized
BDFT model to the measured perturbation. The batch path runs
`scipy.signal.lfilter`; the streaming path performs the same transposed
direct-form II recursion one sample at a time in the same operation
order, so both produce identical floats.
"""
from __future__ import annotations

import copy

from .bdft_model import BdftParams, LpvSchedule, discretize, evaluate_schedule, simulate_response
from .signals import TimeSeries


class CancellerState:
    """Single-axis streaming canceller. One owner advances it."""

    def __init__(self, params: BdftParams, sample_rate: float, prewarp: bool = False):
        self.sample_rate = float(sample_rate)
        self.prewarp = prewarp
        self._set_params(params)
        self.reset()

    def _set_params(self, params: BdftParams) -> None:
        b, a = discretize(params, self.sample_rate, self.prewarp)
        self.params = params
        self.b = tuple(float(v) for v in b)
        self.a = tuple(float(v) for v in a)

    def reset(self) -> None:
        self.z0 = 0.0
        self.z1 = 0.0

    def push(self, fd_sample: float, u_sample: float) -> float:
        b0, b1, b2 = self.b
        _, a1, a2 = self.a
        x = fd_sample
        y = self.z0 + b0 * x
        self.z0 = self.z1 + x * b1 - y * a1
        self.z1 = x * b2 - y * a2
        return u_sample - y

    def run(self, fd, u) -> list[float]:
        push = self.push
        return [push(f, v) for f, v in zip(fd, u)]

    def with_params(self, params: BdftParams) -> "CancellerState":
        """Copy with new coefficients and the current filter state."""
        new = copy.copy(self)
        new._set_params(params)
        return new


def make_canceller(params: BdftParams, sample_rate: float, prewarp: bool = False) -> CancellerState:
    return CancellerState(params, sample_rate, prewarp)


def canceller_push(state: CancellerState, fd_sample: float, u_sample: float) -> float:
    return state.push(fd_sample, u_sample)


def update_params(state: CancellerState, schedule: LpvSchedule, variable_value: float) -> CancellerState:
    """Swap in scheduled coefficients, carrying the filter state over.

    The swap is not bumpless: the carried state belongs to the old
    coefficients, so a short transient follows a large parameter jump.
    """
    return state.with_params(evaluate_schedule(schedule, variable_value))


def cancel_series(perturbation: TimeSeries, recorded: TimeSeries, params: BdftParams, prewarp: bool = False) -> TimeSeries:
    if perturbation.sample_rate != recorded.sample_rate or len(perturbation) != len(recorded):
        raise ValueError("perturbation and recorded input must share sample rate and length")
    predicted = simulate_response(params, perturbation, prewarp)
    return recorded.with_samples(recorded.samples - predicted.samples)


def cancel_batch(trial, params_y: BdftParams, params_z: BdftParams, prewarp: bool = False):
    """Cancelled (y, z) inputs of a trial."""
    return (
        cancel_series(trial.perturbation_y, trial.recorded_y, params_y, prewarp),
        cancel_series(trial.perturbation_z, trial.recorded_z, params_z, prewarp),
    )
