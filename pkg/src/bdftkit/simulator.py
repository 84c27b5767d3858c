"""Synthetic touchscreen participants under multisine vehicle perturbation.

Per axis the recorded finger position is

    recorded = voluntary + remnant + bdft

where `voluntary` is a first-order lag on the commanded reference,
`remnant` is Gaussian noise shaped by the same lag and scaled to a target
RMS, and `bdft` is the steady-state response of the participant's BDFT
model to the perturbation. Positions are screen-centred mm; accelerations
are m/s^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .bdft_model import BdftParams, periodic_response
from .errors import InvalidValue, ReferenceOverlap
from .signals import MultisineSpec, TimeSeries, excitation_bins, generate_multisine

SCREEN_WIDTH_MM = 150.0
SCREEN_HEIGHT_MM = 100.0
AXES = ("y", "z")
# relative DFT magnitude above which a reference counts as exciting a bin
OVERLAP_TOL = 1e-9


@dataclass(frozen=True)
class SyntheticParticipant:
    bdft_y: BdftParams
    bdft_z: BdftParams
    tracking_bandwidth: float = 2.0
    remnant_level: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not self.tracking_bandwidth > 0:
            raise InvalidValue("tracking_bandwidth must be > 0")
        if not self.remnant_level >= 0:
            raise InvalidValue("remnant_level must be >= 0")

    def bdft(self, axis: str) -> BdftParams:
        return self.bdft_y if axis == "y" else self.bdft_z

    def to_dict(self) -> dict:
        return {
            "bdft_y": self.bdft_y.to_dict(),
            "bdft_z": self.bdft_z.to_dict(),
            "tracking_bandwidth_rad_s": self.tracking_bandwidth,
            "remnant_level_mm": self.remnant_level,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, d) -> "SyntheticParticipant":
        return cls(
            BdftParams.from_dict(d["bdft_y"]),
            BdftParams.from_dict(d["bdft_z"]),
            float(d.get("tracking_bandwidth_rad_s", 2.0)),
            float(d.get("remnant_level_mm", 0.0)),
            int(d.get("rng_seed", 0)),
        )


@dataclass(frozen=True, eq=False)
class Trial:
    """One recorded two-axis trial.

    Ground-truth channels (`voluntary_*`, `remnant_*`, `truth_bdft_*`) are
    None for ingested real recordings; `reference_*` may be None as well.
    """

    perturbation_y: TimeSeries
    perturbation_z: TimeSeries
    recorded_y: TimeSeries
    recorded_z: TimeSeries
    reference_y: TimeSeries | None = None
    reference_z: TimeSeries | None = None
    voluntary_y: TimeSeries | None = None
    voluntary_z: TimeSeries | None = None
    remnant_y: TimeSeries | None = None
    remnant_z: TimeSeries | None = None
    truth_bdft_y: TimeSeries | None = None
    truth_bdft_z: TimeSeries | None = None
    out_of_box: int = field(default=0, compare=False)

    def __post_init__(self):
        series = [s for s in self._all() if s is not None]
        fs, n = series[0].sample_rate, len(series[0])
        if any(s.sample_rate != fs or len(s) != n for s in series):
            raise InvalidValue("all trial channels must share sample rate and length")
        for ax in AXES:
            parts = [self.channel("voluntary", ax), self.channel("remnant", ax), self.channel("truth_bdft", ax)]
            if all(p is not None for p in parts):
                rec = self.channel("recorded", ax).samples
                resid = rec - parts[0].samples - parts[1].samples - parts[2].samples
                scale = max(1.0, float(np.max(np.abs(rec))))
                if np.max(np.abs(resid)) > 1e-9 * scale:
                    raise InvalidValue(f"recorded_{ax} is not voluntary + remnant + bdft")

    def _all(self):
        return [
            self.perturbation_y, self.perturbation_z, self.recorded_y, self.recorded_z,
            self.reference_y, self.reference_z, self.voluntary_y, self.voluntary_z,
            self.remnant_y, self.remnant_z, self.truth_bdft_y, self.truth_bdft_z,
        ]

    def channel(self, kind: str, axis: str) -> TimeSeries | None:
        return getattr(self, f"{kind}_{axis}")

    @property
    def sample_rate(self) -> float:
        return self.perturbation_y.sample_rate

    @property
    def n_samples(self) -> int:
        return len(self.perturbation_y)

    @property
    def has_truth(self) -> bool:
        return self.truth_bdft_y is not None and self.truth_bdft_z is not None

    def __eq__(self, other):
        if not isinstance(other, Trial):
            return NotImplemented
        return all(a == b for a, b in zip(self._all(), other._all()))

    __hash__ = None


# Reference trajectories ----------------------------------------------------------

def ramp_hold_knots(duration: float, seed: int, n_segments: int = 4, ramp_fraction: float = 0.5):
    """Knot times and (y, z) targets of a ramp-hold trajectory.

    Segment i starts at t_i = i*duration/n_segments at target p_i, ramps
    linearly to p_{i+1} over `ramp_fraction` of the segment, then holds.
    p_0 is the screen centre; later targets are uniform in the inner 80 %
    of the screen box.
    """
    rng = np.random.default_rng(seed)
    targets = np.zeros((n_segments + 1, 2))
    targets[1:, 0] = rng.uniform(-0.4, 0.4, n_segments) * SCREEN_WIDTH_MM
    targets[1:, 1] = rng.uniform(-0.4, 0.4, n_segments) * SCREEN_HEIGHT_MM
    seg = duration / n_segments
    times, ys, zs = [], [], []
    for i in range(n_segments):
        t0 = i * seg
        times += [t0, t0 + ramp_fraction * seg]
        ys += [targets[i, 0], targets[i + 1, 0]]
        zs += [targets[i, 1], targets[i + 1, 1]]
    times.append(duration)
    ys.append(targets[-1, 0])
    zs.append(targets[-1, 1])
    return np.array(times), np.array(ys), np.array(zs)


def make_reference(
    kind: str,
    duration: float,
    sample_rate: float,
    seed: int = 0,
    amplitude: tuple[float, float] = (50.0, 30.0),
    n_segments: int = 4,
):
    """Commanded 2-D finger trajectory (y, z) in screen-centred mm.

    lissajous: y = Ay sin(2 pi cy t / T), z = Az sin(2 pi cz (t + d) / T),
    with distinct whole cycle counts cy, cz in [2, 6] over the record so
    the reference occupies only its own DFT bins; d is a whole number of
    samples.
    """
    if duration <= 0 or sample_rate <= 0:
        raise InvalidValue("duration and sample_rate must be positive")
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    rng = np.random.default_rng(seed)
    if kind == "fixed-point":
        y0 = rng.uniform(-0.4, 0.4) * SCREEN_WIDTH_MM
        z0 = rng.uniform(-0.4, 0.4) * SCREEN_HEIGHT_MM
        y, z = np.full(n, y0), np.full(n, z0)
    elif kind == "lissajous":
        cy, cz = rng.choice(np.arange(2, 7), size=2, replace=False)
        shift = int(rng.integers(0, n))  # z offset by whole samples, so both peaks land on the grid when they can
        y = amplitude[0] * np.sin(2 * np.pi * cy * t / duration)
        z = amplitude[1] * np.sin(2 * np.pi * cz * (t + shift / sample_rate) / duration)
    elif kind == "ramp-hold":
        kt, ky, kz = ramp_hold_knots(duration, seed, n_segments)
        y, z = np.interp(t, kt, ky), np.interp(t, kt, kz)
    else:
        raise InvalidValue(f"unknown reference kind {kind!r}")
    return TimeSeries(y, sample_rate), TimeSeries(z, sample_rate)


# Trials -----------------------------------------------------------------------------

def _lag(x: np.ndarray, sample_rate: float, bandwidth: float) -> np.ndarray:
    """Periodic steady-state output of 1 / (1 + s/bandwidth)."""
    n = x.size
    w = 2 * np.pi * np.fft.rfftfreq(n, 1.0 / sample_rate)
    return np.fft.irfft(np.fft.rfft(x) / (1.0 + 1j * w / bandwidth), n)


def _check_overlap(reference: TimeSeries, bins, axis: str) -> None:
    spec = np.abs(np.fft.rfft(reference.samples))
    peak = spec.max()
    if peak == 0:
        return
    hit = spec[bins] > OVERLAP_TOL * peak
    if np.any(hit):
        raise ReferenceOverlap(
            f"reference_{axis} has power at excitation bin {int(np.asarray(bins)[hit][0])}"
        )


def run_trial(
    participant: SyntheticParticipant,
    reference: tuple[TimeSeries, TimeSeries],
    perturbation_spec: MultisineSpec,
    sample_rate: float,
    duration: float,
    perturbation_spec_z: MultisineSpec | None = None,
    check_overlap: bool = True,
) -> Trial:
    """Simulate one trial.

    The perturbation must complete whole cycles of every component over
    the record. BDFT responses are taken in periodic steady state (the
    record is preceded by repeats of itself until the model transient has
    died out), so the recorded window carries no start-up transient.
    """
    specs = {"y": perturbation_spec, "z": perturbation_spec_z or perturbation_spec}
    refs = dict(zip(AXES, reference))
    n = int(round(duration * sample_rate))
    for ax in AXES:
        if len(refs[ax]) != n or refs[ax].sample_rate != float(sample_rate):
            raise InvalidValue(f"reference_{ax} does not match {duration} s at {sample_rate} Hz")

    rng = np.random.default_rng(participant.rng_seed)
    white = rng.standard_normal((2, n))
    out = {}
    box = {"y": SCREEN_WIDTH_MM / 2, "z": SCREEN_HEIGHT_MM / 2}
    outside = 0
    for i, ax in enumerate(AXES):
        fd = generate_multisine(specs[ax], sample_rate, duration)
        bins = excitation_bins(specs[ax], sample_rate, n)
        if check_overlap:
            _check_overlap(refs[ax], bins, ax)
        vol = _lag(refs[ax].samples, sample_rate, participant.tracking_bandwidth)
        if participant.remnant_level > 0:
            shaped = _lag(white[i], sample_rate, participant.tracking_bandwidth)
            shaped -= shaped.mean()
            rem = shaped * (participant.remnant_level / math.sqrt(np.mean(shaped ** 2)))
        else:
            rem = np.zeros(n)
        if np.any(specs[ax].amplitudes > 0):
            bdft = periodic_response(participant.bdft(ax), fd).samples
        else:
            bdft = np.zeros(n)
        rec = vol + rem + bdft
        outside += int(np.count_nonzero(np.abs(rec) > box[ax]))
        out[ax] = dict(
            perturbation=fd, recorded=TimeSeries(rec, sample_rate), reference=refs[ax],
            voluntary=TimeSeries(vol, sample_rate), remnant=TimeSeries(rem, sample_rate),
            truth_bdft=TimeSeries(bdft, sample_rate),
        )
    kwargs = {f"{k}_{ax}": v for ax in AXES for k, v in out[ax].items()}
    return Trial(**kwargs, out_of_box=outside)


def make_population(n: int, spread: float, base: SyntheticParticipant, seed: int) -> list[SyntheticParticipant]:
    """Participants with log-normally scattered BDFT parameters.

    Each of G, wn, zeta on each axis is multiplied by exp(N(0, spread)).
    Gains keep their sign. Participant i gets remnant seed base.rng_seed + i.
    """
    if n < 1:
        raise InvalidValue("population size must be >= 1")
    if spread < 0:
        raise InvalidValue("spread must be >= 0")
    rng = np.random.default_rng(seed)
    factors = np.exp(spread * rng.standard_normal((n, 2, 3)))
    people = []
    for i in range(n):
        scaled = []
        for a, p in enumerate((base.bdft_y, base.bdft_z)):
            f = factors[i, a]
            scaled.append(BdftParams(p.gain * f[0], p.natural_frequency * f[1], p.damping_ratio * f[2]))
        people.append(replace(base, bdft_y=scaled[0], bdft_z=scaled[1], rng_seed=base.rng_seed + i))
    return people


def _bin_powers(trial: Trial, spec: MultisineSpec, axis: str):
    bins = excitation_bins(spec, trial.sample_rate, trial.n_samples)
    sig = np.abs(np.fft.rfft(trial.channel("truth_bdft", axis).samples)[bins]) ** 2
    noise = np.abs(np.fft.rfft(trial.channel("remnant", axis).samples)[bins]) ** 2
    return sig, noise


def _snr_stat(sig, noise, statistic: str) -> float:
    if statistic == "total":
        return float(10 * np.log10(sig.sum() / noise.sum()))
    per_bin = 10 * np.log10(sig / noise)
    if statistic == "median":
        return float(np.median(per_bin))
    if statistic == "min":
        return float(per_bin.min())
    raise InvalidValue(f"unknown SNR statistic {statistic!r}")


def bin_snr_db(trial: Trial, spec: MultisineSpec, axis: str, statistic: str = "total") -> float:
    """BDFT-to-remnant power ratio at the excitation bins, dB.

    statistic: "total" (summed powers), "median" or "min" of the per-bin ratios.
    """
    return _snr_stat(*_bin_powers(trial, spec, axis), statistic)


def remnant_for_snr(
    participant: SyntheticParticipant,
    axis: str,
    reference,
    spec: MultisineSpec,
    sample_rate: float,
    duration: float,
    target_db: float,
    statistic: str = "min",
    n_probe: int = 20,
) -> float:
    """Remnant RMS (mm) whose expected bin SNR on `axis` is `target_db`.

    Per-bin powers are averaged over `n_probe` unit-level remnant draws
    before the statistic is taken; the remnant scales linearly with its
    level, so the SNR shifts by -20 log10(level).
    """
    sig, noise = 0.0, 0.0
    for s in range(n_probe):
        p = replace(participant, remnant_level=1.0, rng_seed=participant.rng_seed + 7919 * (s + 1))
        a, b = _bin_powers(run_trial(p, reference, spec, sample_rate, duration), spec, axis)
        sig, noise = sig + a, noise + b
    return float(10 ** ((_snr_stat(sig, noise, statistic) - target_db) / 20))
