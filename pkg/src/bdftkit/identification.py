"""Nonparametric and parametric BDFT identification.

The nonparametric estimate divides the perturbation-to-input cross
spectrum by the perturbation auto spectrum at the multisine excitation
bins. The parametric fit is a damped Gauss-Newton (Levenberg-Marquardt)
solve of the weighted complex least-squares problem over
(G, log wn, log zeta).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bdft_model import (
    BdftParams,
    FrequencyResponse,
    LpvSchedule,
    ParamSlopes,
    periodic_response,
    warp_frequencies,
)
from .errors import (
    DegenerateVariable,
    InvalidValue,
    NonConvergence,
    TooFewPoints,
    ZeroExcitation,
    ZeroVariance,
)
from .signals import MultisineSpec, TimeSeries, common_periods, excitation_bins

__all__ = [
    "FrequencyResponse",
    "FitResult",
    "estimate_frf",
    "fit_bdft_model",
    "vaf",
    "fit_lpv_schedule",
    "average_params",
    "excitation_component",
    "measured_bdft",
    "model_vaf",
]


def estimate_frf(
    perturbation: TimeSeries,
    response: TimeSeries,
    spec: MultisineSpec,
    periods: int | None = None,
) -> FrequencyResponse:
    """FRF estimate S_fu / S_ff at each excitation bin.

    The record is split into `periods` equal segments (default: every
    whole multisine period it contains). Values come from the full-record
    DFT; with two or more segments the spread of the per-segment estimates
    sets the coherence weight 1 - var / |mean|^2, clipped to [0, 1].
    """
    if perturbation.sample_rate != response.sample_rate or len(perturbation) != len(response):
        raise InvalidValue("perturbation and response must share sample rate and length")
    n, fs = len(perturbation), perturbation.sample_rate
    bins = excitation_bins(spec, fs, n)
    P = common_periods(bins) if periods is None else int(periods)
    if P < 1 or common_periods(bins) % P or n % P:
        raise InvalidValue(f"record cannot be split into {P} whole periods")

    X = np.fft.rfft(perturbation.samples)
    Y = np.fft.rfft(response.samples)
    Sff = (X.conj() * X).real
    total = Sff.sum()
    low = Sff[bins] < 1e-12 * total if total > 0 else np.ones(bins.size, bool)
    if np.any(low):
        k = int(np.argmax(low))
        raise ZeroExcitation(f"no perturbation power at excitation bin {int(bins[k])}")
    H = (X[bins].conj() * Y[bins]) / Sff[bins]

    weights = np.ones(bins.size)
    if P >= 2:
        xs = np.fft.rfft(perturbation.samples.reshape(P, n // P), axis=1)[:, bins // P]
        ys = np.fft.rfft(response.samples.reshape(P, n // P), axis=1)[:, bins // P]
        Hp = ys / xs
        mean = Hp.mean(axis=0)
        var = np.sum(np.abs(Hp - mean) ** 2, axis=0) / (P - 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(np.abs(mean) > 0, var / np.abs(mean) ** 2, np.inf)
        weights = np.clip(1.0 - ratio, 0.0, 1.0)
    omegas = 2 * np.pi * bins * fs / n
    return FrequencyResponse(omegas, H, weights, fs)


# Parametric fit ----------------------------------------------------------------------

@dataclass
class FitResult:
    params: BdftParams
    residual: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.converged and not math.isfinite(self.residual):
            raise InvalidValue("a converged fit must have a finite residual")

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d) -> "FitResult":
        return cls(BdftParams.from_dict(d["params"]), float(d["residual"]), int(d["iterations"]), bool(d["converged"]))


def _model_and_jacobian(theta, w):
    g, lwn, lz = theta
    wn, z = math.exp(lwn), math.exp(lz)
    D = (wn * wn - w * w) + 2j * z * wn * w
    unit = wn * wn / D
    H = g * unit
    dD_dwn = 2 * wn + 2j * z * w
    dH_dlwn = wn * (2 * g * wn / D - H * dD_dwn / D)
    dH_dlz = -H * (2j * z * wn * w) / D
    return H, np.stack([unit, dH_dlwn, dH_dlz], axis=1)


def _lm(theta0, w, h, sw, max_iter, rtol):
    """Levenberg-Marquardt on r = sqrt(weight) * (h - H(theta)); returns accepted-cost history."""
    theta = np.array(theta0, dtype=float)

    def evaluate(th):
        H, J = _model_and_jacobian(th, w)
        r = sw * (h - H)
        return r, J

    r, J = evaluate(theta)
    cost = float(np.vdot(r, r).real)
    history = [cost]
    scale = float(np.sum(sw ** 2 * np.abs(h) ** 2)) or 1.0
    lam = 1e-3
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        Jr = -sw[:, None] * J
        A = np.concatenate([Jr.real, Jr.imag])
        rr = np.concatenate([r.real, r.imag])
        JTJ = A.T @ A
        g = A.T @ rr
        diag = np.diag(JTJ).copy()
        diag[diag == 0] = 1.0
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(JTJ + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = theta + step
            if not np.all(np.isfinite(trial)) or abs(trial[1]) > 50 or abs(trial[2]) > 50:
                lam *= 10
                continue
            r_new, J_new = evaluate(trial)
            c_new = float(np.vdot(r_new, r_new).real)
            if c_new < cost:
                accepted = True
                break
            lam *= 10
        if not accepted:
            # no descent direction left at any damping: a stationary point
            converged = True
            break
        rel = (cost - c_new) / cost if cost > 0 else 0.0
        theta, r, J, cost = trial, r_new, J_new, c_new
        history.append(cost)
        lam = max(lam / 10, 1e-12)
        if rel < rtol or cost <= 1e-30 * scale:
            converged = True
            break
    return theta, cost, it, converged, history


def _starts(frf: FrequencyResponse, w_model):
    lowest = frf.values[0]
    g0 = abs(lowest) * (1.0 if lowest.real >= 0 else -1.0)
    if g0 == 0:
        g0 = 1.0
    wns = np.geomspace(w_model[0], w_model[-1], 5)
    return [(g0, math.log(wn), math.log(z)) for wn in wns for z in (0.2, 0.7)]


def fit_bdft_model(
    frf: FrequencyResponse,
    init: BdftParams | None = None,
    sample_rate: float | None = None,
    max_iter: int = 500,
    rtol: float = 1e-10,
) -> FitResult:
    """Fit (G, wn, zeta) to a measured FRF.

    Minimizes sum_k w_k |H_k - H(j w_k; theta)|^2. With `sample_rate` the
    model is the bilinear discretization at that rate, i.e. the filter the
    canceller will run; without it, the continuous-time model. Without
    `init`, the best of ten starts (five wn across the measured band, zeta
    0.2 and 0.7) is returned.
    """
    if len(frf) < 3:
        raise TooFewPoints(f"need >= 3 FRF points for 3 parameters, got {len(frf)}")
    w = frf.omegas if sample_rate is None else warp_frequencies(frf.omegas, sample_rate)
    weights = frf.weights
    if not np.any(weights > 0):
        warnings.warn("all coherence weights are zero; fitting with uniform weights", RuntimeWarning, stacklevel=2)
        weights = np.ones_like(weights)
    sw = np.sqrt(weights)
    if init is not None:
        starts = [(init.gain, math.log(init.natural_frequency), math.log(init.damping_ratio))]
    else:
        starts = _starts(frf, w)
    best = None
    for th0 in starts:
        res = _lm(th0, w, frf.values, sw, max_iter, rtol)
        if best is None or res[1] < best[1]:
            best = res
    theta, cost, iters, converged, history = best
    params = BdftParams(theta[0], math.exp(theta[1]), math.exp(theta[2]))
    if not converged:
        warnings.warn(f"BDFT fit stopped after {iters} iterations without converging", NonConvergence, stacklevel=2)
    return FitResult(params, cost, iters, converged, history)


# Quality of fit -------------------------------------------------------------------------

def _samples(x) -> np.ndarray:
    return x.samples if isinstance(x, TimeSeries) else np.asarray(x, dtype=float)


def vaf(measured, predicted) -> float:
    """Variance accounted for, percent: 100 * (1 - var(m - p) / var(m)).

    Not clipped; a prediction worse than zero gives a negative value.
    """
    m, p = _samples(measured), _samples(predicted)
    if isinstance(measured, TimeSeries) and isinstance(predicted, TimeSeries):
        if measured.sample_rate != predicted.sample_rate:
            raise InvalidValue("measured and predicted sample rates differ")
    if m.shape != p.shape:
        raise InvalidValue(f"length mismatch: {m.size} vs {p.size}")
    vm = np.var(m)
    if vm == 0:
        raise ZeroVariance("measured signal has zero variance")
    return float(100.0 * (1.0 - np.var(m - p) / vm))


def excitation_component(series: TimeSeries, spec: MultisineSpec) -> TimeSeries:
    """The part of `series` at the multisine excitation bins."""
    n = len(series)
    bins = excitation_bins(spec, series.sample_rate, n)
    X = np.fft.rfft(series.samples)
    keep = np.zeros_like(X)
    keep[bins] = X[bins]
    return series.with_samples(np.fft.irfft(keep, n))


def measured_bdft(trial, axis: str, spec: MultisineSpec | None = None) -> TimeSeries:
    """BDFT channel of a trial: ground truth when present, else the recorded
    input's content at the excitation bins (voluntary and remnant removed)."""
    truth = trial.channel("truth_bdft", axis)
    if truth is not None:
        return truth
    if spec is None:
        raise InvalidValue("a multisine spec is needed to isolate BDFT from a recording without truth")
    return excitation_component(trial.channel("recorded", axis), spec)


def model_vaf(trial, axis: str, params: BdftParams, spec: MultisineSpec | None = None, mode: str = "bdft") -> float:
    """VAF of a BDFT model on one trial axis.

    mode "bdft": measured BDFT channel vs the model's steady-state
    response to the perturbation.
    mode "position": voluntary input vs the cancelled input
    recorded - model response (voluntary estimated as recorded minus its
    excitation-bin content when no ground truth is stored).
    """
    fd = trial.channel("perturbation", axis)
    pred = periodic_response(params, fd)
    if mode == "bdft":
        return vaf(measured_bdft(trial, axis, spec), pred)
    if mode == "position":
        rec = trial.channel("recorded", axis)
        vol = trial.channel("voluntary", axis)
        if vol is None:
            vol = rec.with_samples(rec.samples - measured_bdft(trial, axis, spec).samples)
        return vaf(vol, rec.samples - pred.samples)
    raise InvalidValue(f"unknown VAF mode {mode!r}")


# Population / scheduling ------------------------------------------------------------------

def average_params(fits) -> BdftParams:
    """Parameter-wise arithmetic mean."""
    arr = np.array([p.as_array() for p in fits])
    if arr.size == 0:
        raise InvalidValue("no parameter sets to average")
    return BdftParams(*arr.mean(axis=0))


def fit_lpv_schedule(per_condition_fits, variable_name: str = "perturbation_rms") -> LpvSchedule:
    """Least-squares line per parameter against the scheduling variable."""
    pairs = list(per_condition_fits)
    x = np.array([float(v) for v, _ in pairs])
    if x.size < 2 or np.all(x == x[0]):
        raise DegenerateVariable("need at least two distinct scheduling-variable values")
    P = np.array([p.as_array() for _, p in pairs])
    xm = x.mean()
    dx = x - xm
    slopes = dx @ (P - P.mean(axis=0)) / (dx @ dx)
    base = BdftParams(*P.mean(axis=0))
    return LpvSchedule(base, ParamSlopes(*slopes), (float(x.min()), float(x.max())), float(xm), variable_name)
