"""Second-order BDFT transfer function and its LPV schedules.

    H(s) = G * wn^2 / (s^2 + 2*zeta*wn*s + wn^2)

Gain is in mm of finger displacement per m/s^2 of vehicle acceleration,
natural frequency in rad/s.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidResult, InvalidValue, OutOfRange, SampleRateTooLow, SchemaError
from .signals import TimeSeries


@dataclass(frozen=True)
class BdftParams:
    gain: float
    natural_frequency: float
    damping_ratio: float

    def __post_init__(self):
        for name in ("gain", "natural_frequency", "damping_ratio"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidValue(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, float(v))
        if self.natural_frequency <= 0:
            raise InvalidValue(f"natural_frequency must be > 0, got {self.natural_frequency}")
        if self.damping_ratio <= 0:
            raise InvalidValue(f"damping_ratio must be > 0, got {self.damping_ratio}")

    @property
    def decay_rate(self) -> float:
        """Decay rate of the slowest free-response mode, 1/s.

        zeta*wn when under- or critically damped; the slow real pole
        wn*(zeta - sqrt(zeta^2 - 1)) when overdamped.
        """
        z, wn = self.damping_ratio, self.natural_frequency
        if z <= 1.0:
            return z * wn
        return wn / (z + math.sqrt(z * z - 1.0))

    def as_array(self) -> np.ndarray:
        return np.array([self.gain, self.natural_frequency, self.damping_ratio])

    def to_dict(self) -> dict:
        return {
            "gain": self.gain,
            "natural_frequency_rad_s": self.natural_frequency,
            "damping_ratio": self.damping_ratio,
        }

    @classmethod
    def from_dict(cls, d) -> "BdftParams":
        try:
            return cls(float(d["gain"]), float(d["natural_frequency_rad_s"]), float(d["damping_ratio"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"BDFT params need gain, natural_frequency_rad_s, damping_ratio: {exc!r}") from None


@dataclass(frozen=True, eq=False)
class FrequencyResponse:
    """Complex response values at strictly increasing frequencies (rad/s).

    `weights` are per-point coherence weights in [0, 1]. `sample_rate` is
    set when the points were measured on sampled data.
    """

    omegas: np.ndarray
    values: np.ndarray
    weights: np.ndarray = None
    sample_rate: float | None = None

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.omegas, dtype=float))
        h = np.atleast_1d(np.asarray(self.values, dtype=complex))
        wt = np.ones_like(w) if self.weights is None else np.atleast_1d(np.asarray(self.weights, dtype=float))
        if not (w.shape == h.shape == wt.shape) or w.ndim != 1:
            raise InvalidValue("omegas, values and weights must be 1-D and equally long")
        if np.any(np.diff(w) <= 0):
            raise InvalidValue("FRF frequencies must be strictly increasing")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(h))):
            raise InvalidValue("FRF points must be finite")
        if np.any((wt < 0) | (wt > 1)) or not np.all(np.isfinite(wt)):
            raise InvalidValue("coherence weights must lie in [0, 1]")
        for name, arr in (("omegas", w), ("values", h), ("weights", wt)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.omegas.size

    @property
    def points(self) -> list[tuple[float, complex, float]]:
        return list(zip(self.omegas.tolist(), self.values.tolist(), self.weights.tolist()))

    def to_dict(self) -> dict:
        return {
            "sample_rate_hz": self.sample_rate,
            "points": [
                {"omega_rad_s": w, "re": h.real, "im": h.imag, "weight": c}
                for w, h, c in self.points
            ],
        }

    @classmethod
    def from_dict(cls, d) -> "FrequencyResponse":
        try:
            pts = d["points"]
            return cls(
                [p["omega_rad_s"] for p in pts],
                [complex(p["re"], p["im"]) for p in pts],
                [p.get("weight", 1.0) for p in pts],
                d.get("sample_rate_hz"),
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"frequency response JSON: {exc!r}") from None


def frf_values(params: BdftParams, omegas) -> np.ndarray:
    """H(j*omega) for any real omegas (negative allowed)."""
    r = np.asarray(omegas, dtype=float) / params.natural_frequency
    return params.gain / ((1.0 - r * r) + 2j * params.damping_ratio * r)


def evaluate_frf(params: BdftParams, omegas) -> FrequencyResponse:
    w = np.atleast_1d(np.asarray(omegas, dtype=float))
    if np.any(w < 0):
        raise InvalidValue("omegas must be non-negative")
    return FrequencyResponse(w, frf_values(params, w))


def bilinear_constant(sample_rate: float, prewarp_at: float | None = None) -> float:
    """Map constant c in s = c (1 - z^-1) / (1 + z^-1)."""
    if prewarp_at is None:
        return 2.0 * sample_rate
    return prewarp_at / math.tan(prewarp_at / (2.0 * sample_rate))


def warp_frequencies(omegas, sample_rate: float, prewarp_at: float | None = None) -> np.ndarray:
    """Continuous frequency seen by the bilinear model at digital frequency omega."""
    c = bilinear_constant(sample_rate, prewarp_at)
    return c * np.tan(np.asarray(omegas, dtype=float) / (2.0 * sample_rate))


def discrete_frf_values(params: BdftParams, omegas, sample_rate: float, prewarp: bool = False) -> np.ndarray:
    """Exact frequency response of the bilinear discretization at omegas (rad/s)."""
    _check_rate(params, sample_rate)
    at = params.natural_frequency if prewarp else None
    return frf_values(params, warp_frequencies(omegas, sample_rate, at))


def _check_rate(params: BdftParams, sample_rate: float) -> None:
    if sample_rate <= params.natural_frequency / math.pi:
        raise SampleRateTooLow(
            f"{sample_rate} Hz sampling cannot represent a {params.natural_frequency:.6g} rad/s resonance"
        )


def discretize(params: BdftParams, sample_rate: float, prewarp: bool = False):
    """Bilinear-transform coefficients (b, a), normalized so a[0] == 1."""
    _check_rate(params, sample_rate)
    c = bilinear_constant(sample_rate, params.natural_frequency if prewarp else None)
    g, wn, z = params.gain, params.natural_frequency, params.damping_ratio
    w2 = wn * wn
    a0 = c * c + 2.0 * z * wn * c + w2
    a1 = 2.0 * (w2 - c * c)
    a2 = c * c - 2.0 * z * wn * c + w2
    k = g * w2 / a0
    b = np.array([k, 2.0 * k, k])
    a = np.array([1.0, a1 / a0, a2 / a0])
    return b, a


def simulate_response(params: BdftParams, input: TimeSeries, prewarp: bool = False) -> TimeSeries:
    """Zero-initial-condition response of the discretized model to `input`."""
    b, a = discretize(params, input.sample_rate, prewarp)
    return input.with_samples(lfilter(b, a, input.samples))


def settling_time(params: BdftParams, n_tau: float = 5.0) -> float:
    return n_tau / params.decay_rate


def transient_samples(params: BdftParams, sample_rate: float, n_tau: float = 5.0) -> int:
    """Samples to discard before the free response has decayed by exp(-n_tau)."""
    return int(math.ceil(settling_time(params, n_tau) * sample_rate))


def periodic_response(params: BdftParams, input: TimeSeries, n_tau: float = 36.0, prewarp: bool = False) -> TimeSeries:
    """Steady-state response to `input` repeated periodically.

    The record is prepended with whole copies of itself until the free
    response has decayed by exp(-n_tau), then the final copy is returned.
    Only meaningful when `input` holds an integer number of periods.
    """
    n = len(input)
    lead = int(math.ceil(settling_time(params, n_tau) * input.sample_rate / n))
    tiled = np.tile(input.samples, lead + 1)
    b, a = discretize(params, input.sample_rate, prewarp)
    return input.with_samples(lfilter(b, a, tiled)[-n:])


# LPV scheduling ----------------------------------------------------------------

class ParamSlopes(NamedTuple):
    """Change of each parameter per unit of the scheduling variable."""

    gain: float = 0.0
    natural_frequency: float = 0.0
    damping_ratio: float = 0.0


@dataclass(frozen=True)
class LpvSchedule:
    """Parameters affine in one scheduling variable over a closed range.

    params(v) = base + sensitivities * (v - reference)
    """

    base: BdftParams
    sensitivities: ParamSlopes
    variable_range: tuple[float, float]
    reference: float | None = None
    variable_name: str = "perturbation_rms"

    def __post_init__(self):
        lo, hi = map(float, self.variable_range)
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
            raise InvalidValue(f"invalid scheduling range {self.variable_range}")
        object.__setattr__(self, "variable_range", (lo, hi))
        object.__setattr__(self, "sensitivities", ParamSlopes(*map(float, self.sensitivities)))
        ref = 0.5 * (lo + hi) if self.reference is None else float(self.reference)
        object.__setattr__(self, "reference", ref)
        # affine in v, so the range endpoints bound every parameter
        for v in (lo, hi):
            try:
                self._params_at(v)
            except InvalidValue as exc:
                raise InvalidResult(f"schedule leaves the valid parameter set at {self.variable_name}={v}: {exc}") from None

    def _params_at(self, value: float) -> BdftParams:
        d = value - self.reference
        s = self.sensitivities
        return BdftParams(
            self.base.gain + s.gain * d,
            self.base.natural_frequency + s.natural_frequency * d,
            self.base.damping_ratio + s.damping_ratio * d,
        )

    def to_dict(self) -> dict:
        return {
            "variable_name": self.variable_name,
            "variable_range": list(self.variable_range),
            "reference": self.reference,
            "base": self.base.to_dict(),
            "sensitivities": {
                "gain": self.sensitivities.gain,
                "natural_frequency_rad_s": self.sensitivities.natural_frequency,
                "damping_ratio": self.sensitivities.damping_ratio,
            },
        }

    @classmethod
    def from_dict(cls, d) -> "LpvSchedule":
        try:
            s = d["sensitivities"]
            return cls(
                BdftParams.from_dict(d["base"]),
                ParamSlopes(s["gain"], s["natural_frequency_rad_s"], s["damping_ratio"]),
                tuple(d["variable_range"]),
                d.get("reference"),
                d.get("variable_name", "perturbation_rms"),
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"LPV schedule JSON: {exc!r}") from None


def evaluate_schedule(schedule: LpvSchedule, variable_value: float) -> BdftParams:
    lo, hi = schedule.variable_range
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    if not (lo - tol <= variable_value <= hi + tol):
        raise OutOfRange(f"{schedule.variable_name}={variable_value} outside [{lo}, {hi}]")
    try:
        return schedule._params_at(float(variable_value))
    except InvalidValue as exc:
        raise InvalidResult(str(exc)) from None
