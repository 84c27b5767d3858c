"""Multisine perturbation signals.

Generation, crest-factor diagnostics, phase selection, commensurate bin
mapping, and fitting of multisine amplitude spectra to target vehicle
acceleration PSDs.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import (
    BandEmpty,
    EmptySpec,
    InvalidValue,
    NonCommensurate,
    NyquistViolation,
    SchemaError,
    SnapCollision,
    ZeroSignal,
)

TWO_PI = 2.0 * np.pi
COMMENSURATE_TOL = 1e-9


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Uniformly sampled scalar signal."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.samples, dtype=float))
        if x.ndim != 1 or x.size < 1:
            raise InvalidValue("TimeSeries needs a non-empty 1-D sample array")
        if not np.all(np.isfinite(x)):
            raise InvalidValue("TimeSeries samples must be finite")
        if not (self.sample_rate > 0 and math.isfinite(self.sample_rate)):
            raise InvalidValue(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", _frozen(x))
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    def __len__(self):
        return self.samples.size

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(self.samples, other.samples)

    __hash__ = None

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate

    def with_samples(self, samples) -> "TimeSeries":
        return TimeSeries(samples, self.sample_rate)

    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples ** 2)))


@dataclass(frozen=True, eq=False)
class MultisineSpec:
    """Amplitudes (m/s^2), frequencies (rad/s) and phases (rad) of a multisine.

    Components are kept sorted by frequency and phases are wrapped to
    [0, 2*pi). An all-zero amplitude set is accepted and yields a silent
    perturbation; negative amplitudes and repeated frequencies are not.
    """

    amplitudes: np.ndarray
    frequencies: np.ndarray
    phases: np.ndarray = None

    def __post_init__(self):
        amp = np.atleast_1d(np.asarray(self.amplitudes, dtype=float))
        w = np.atleast_1d(np.asarray(self.frequencies, dtype=float))
        ph = np.zeros_like(w) if self.phases is None else np.atleast_1d(np.asarray(self.phases, dtype=float))
        if not (amp.shape == w.shape == ph.shape) or amp.ndim != 1:
            raise InvalidValue("amplitudes, frequencies and phases must be 1-D and equally long")
        if not (np.all(np.isfinite(amp)) and np.all(np.isfinite(w)) and np.all(np.isfinite(ph))):
            raise InvalidValue("multisine fields must be finite")
        if np.any(w <= 0):
            raise InvalidValue("multisine frequencies must be strictly positive")
        if np.any(amp < 0):
            raise InvalidValue("multisine amplitudes must be non-negative")
        order = np.argsort(w, kind="stable")
        amp, w, ph = amp[order], w[order], ph[order]
        if np.any(np.diff(w) <= 0):
            raise InvalidValue("multisine frequencies must be pairwise distinct")
        ph = np.mod(ph, TWO_PI)
        ph[ph >= TWO_PI] = 0.0
        object.__setattr__(self, "amplitudes", _frozen(amp))
        object.__setattr__(self, "frequencies", _frozen(w))
        object.__setattr__(self, "phases", _frozen(ph))

    def __eq__(self, other):
        if not isinstance(other, MultisineSpec):
            return NotImplemented
        return (
            np.array_equal(self.amplitudes, other.amplitudes)
            and np.array_equal(self.frequencies, other.frequencies)
            and np.array_equal(self.phases, other.phases)
        )

    __hash__ = None

    def __len__(self):
        return self.frequencies.size

    @property
    def count(self) -> int:
        return int(self.frequencies.size)

    @property
    def components(self) -> list[tuple[float, float, float]]:
        return list(zip(self.amplitudes.tolist(), self.frequencies.tolist(), self.phases.tolist()))

    @property
    def frequencies_hz(self) -> np.ndarray:
        return self.frequencies / TWO_PI

    @property
    def variance(self) -> float:
        return float(np.sum(self.amplitudes ** 2) / 2.0)

    def with_phases(self, phases) -> "MultisineSpec":
        return MultisineSpec(self.amplitudes, self.frequencies, phases)

    def scaled(self, factor: float) -> "MultisineSpec":
        return MultisineSpec(self.amplitudes * factor, self.frequencies, self.phases)

    def to_json(self) -> list[dict]:
        return [
            {"amplitude": a, "freq_rad_s": w, "phase_rad": p}
            for a, w, p in self.components
        ]

    @classmethod
    def from_json(cls, items) -> "MultisineSpec":
        if not isinstance(items, list):
            raise SchemaError("multisine spec must be a JSON array of components")
        amp, w, ph = [], [], []
        for i, item in enumerate(items):
            try:
                amp.append(float(item["amplitude"]))
                w.append(float(item["freq_rad_s"]))
                ph.append(float(item.get("phase_rad", 0.0)))
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"multisine component [{i}]: {exc!r}") from None
        if not items:
            raise EmptySpec("multisine spec has no components")
        return cls(amp, w, ph)


@dataclass(frozen=True)
class MeasurementWindow:
    """Record length holding an integer number of periods of the slowest component."""

    duration: float
    periods: int

    def __post_init__(self):
        if self.duration <= 0 or self.periods < 1:
            raise InvalidValue("MeasurementWindow needs duration > 0 and periods >= 1")

    @classmethod
    def for_spec(cls, spec: MultisineSpec, periods: int = 1) -> "MeasurementWindow":
        return cls(periods * TWO_PI / float(spec.frequencies[0]), int(periods))

    def check(self, spec: MultisineSpec) -> None:
        cycles = self.duration * float(spec.frequencies[0]) / TWO_PI
        if abs(cycles - self.periods) > COMMENSURATE_TOL * max(1.0, cycles):
            raise NonCommensurate(
                f"window of {self.duration} s holds {cycles:.6g} periods of the lowest component, "
                f"expected {self.periods}"
            )


def _check_nyquist(spec: MultisineSpec, sample_rate: float) -> None:
    fmax = float(spec.frequencies_hz[-1])
    if fmax >= sample_rate / 2.0:
        raise NyquistViolation(
            f"component at {fmax:.6g} Hz is at or above Nyquist for {sample_rate} Hz sampling"
        )


def generate_multisine(spec: MultisineSpec, sample_rate: float, duration: float) -> TimeSeries:
    """Sample sum_k A_k sin(w_k t + phi_k) at t = i / sample_rate."""
    if spec.count == 0:
        raise EmptySpec("multisine spec has no components")
    if duration <= 0:
        raise InvalidValue("duration must be positive")
    _check_nyquist(spec, sample_rate)
    n = int(round(duration * sample_rate))
    if n < 1:
        raise InvalidValue("duration shorter than one sample")
    t = np.arange(n) / sample_rate
    x = np.zeros(n)
    for a, w, p in spec.components:
        if a != 0.0:
            x += a * np.sin(w * t + p)
    return TimeSeries(x, sample_rate)


def crest_factor(series) -> float:
    """Peak-to-RMS ratio max|x| / sqrt(mean(x^2))."""
    x = series.samples if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)
    if x.size == 0:
        raise ZeroSignal("empty signal")
    rms = np.sqrt(np.mean(x ** 2))
    if rms == 0:
        raise ZeroSignal("signal RMS is zero")
    return float(np.max(np.abs(x)) / rms)


def fundamental_period(spec: MultisineSpec, max_period: float = 1e4) -> float:
    """Common period of all components in seconds.

    Frequencies are rationalized; if the resulting period exceeds
    `max_period` the set is treated as non-commensurate and ten periods of
    the slowest component are returned instead.
    """
    fracs = [Fraction(float(f)).limit_denominator(1_000_000) for f in spec.frequencies_hz]
    num = 0
    den = 1
    for fr in fracs:
        den = den * fr.denominator // math.gcd(den, fr.denominator)
    for fr in fracs:
        num = math.gcd(num, fr.numerator * (den // fr.denominator))
    period = den / num if num else math.inf
    if not math.isfinite(period) or period > max_period:
        return 10.0 / float(spec.frequencies_hz[0])
    return period


def _crest_grid(spec: MultisineSpec, sample_rate, duration):
    if sample_rate is None:
        sample_rate = max(20.0 * float(spec.frequencies_hz[-1]), 1.0)
    if duration is None:
        duration = fundamental_period(spec)
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    return t, sample_rate


def randomize_phases(
    spec: MultisineSpec,
    seed: int,
    trials: int = 100,
    sample_rate: float | None = None,
    duration: float | None = None,
) -> MultisineSpec:
    """Pick the lowest-crest-factor phase set out of `trials` uniform draws.

    Draws come from one generator stream, so the first k trials are the
    same for any `trials >= k`. Crest factors are evaluated on a sampled
    grid; by default one common period at 20 samples per cycle of the
    fastest component.
    """
    if trials < 1:
        raise InvalidValue("trials must be >= 1")
    if spec.count == 0:
        raise EmptySpec("multisine spec has no components")
    t, _ = _crest_grid(spec, sample_rate, duration)
    rng = np.random.default_rng(seed)
    draws = rng.uniform(0.0, TWO_PI, size=(trials, spec.count))
    best, best_cf = None, np.inf
    amp, w = spec.amplitudes, spec.frequencies
    for phases in draws:
        x = np.sin(np.outer(t, w) + phases) @ amp
        cf = crest_factor(x)
        if cf < best_cf:
            best, best_cf = phases, cf
    return spec.with_phases(best)


def crest_factor_of_spec(spec: MultisineSpec, sample_rate=None, duration=None) -> float:
    """Crest factor on the same grid `randomize_phases` uses."""
    t, _ = _crest_grid(spec, sample_rate, duration)
    x = np.sin(np.outer(t, spec.frequencies) + spec.phases) @ spec.amplitudes
    return crest_factor(x)


def excitation_bins(spec: MultisineSpec, sample_rate: float, n_samples: int) -> np.ndarray:
    """DFT bin index of each component on an `n_samples` record."""
    exact = spec.frequencies_hz * n_samples / sample_rate
    bins = np.rint(exact)
    bad = np.abs(exact - bins) > COMMENSURATE_TOL * np.maximum(1.0, np.abs(exact))
    if np.any(bad):
        k = int(np.argmax(bad))
        raise NonCommensurate(
            f"component {k} at {spec.frequencies_hz[k]:.9g} Hz completes {exact[k]:.9g} cycles "
            f"in {n_samples} samples at {sample_rate} Hz"
        )
    bins = bins.astype(int)
    if np.any(bins < 1) or np.any(bins >= (n_samples + 1) // 2):
        raise NyquistViolation("excitation bin outside (0, Nyquist) for this record")
    return bins


def common_periods(bins) -> int:
    """Number of whole multisine periods contained in the record."""
    return int(np.gcd.reduce(np.asarray(bins, dtype=int)))


# PSD fitting ---------------------------------------------------------------

def _as_psd_table(target_psd):
    table = np.asarray(target_psd, dtype=float)
    if table.ndim != 2 or table.shape[1] != 2 or table.shape[0] < 1:
        raise InvalidValue("target PSD must be a sequence of (frequency_hz, psd) pairs")
    f, p = table[:, 0], table[:, 1]
    if np.any(np.diff(f) <= 0):
        raise InvalidValue("target PSD frequencies must be strictly increasing")
    if np.any(p < 0) or not np.all(np.isfinite(table)):
        raise InvalidValue("target PSD values must be finite and non-negative")
    return f, p


def psd_integral(freqs, psd, lo: float, hi: float) -> float:
    """Exact integral over [lo, hi] of the piecewise-linear interpolant."""
    inner = (freqs > lo) & (freqs < hi)
    x = np.concatenate(([lo], freqs[inner], [hi]))
    y = np.interp(x, freqs, psd)
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def _snap_cycles(centers_hz, edges_hz, base_record):
    """Integer cycle counts per component, avoiding harmonics of lower ones."""
    chosen: list[int] = []
    for k, fc in enumerate(centers_hz):
        lo_c = max(1, math.ceil(edges_hz[k] * base_record - 1e-9))
        hi_c = math.floor(edges_hz[k + 1] * base_record + 1e-9)
        target = fc * base_record
        inside = sorted(range(lo_c, hi_c + 1), key=lambda c: (abs(c - target), c))
        free = [c for c in inside if c not in chosen]
        clean = [c for c in free if all(c % prev for prev in chosen)]
        if clean:
            chosen.append(clean[0])
        elif free:
            chosen.append(free[0])
        else:
            # sub-band holds no unused integer cycle count; take the nearest unused one
            cand = max(1, int(round(target)))
            chosen.append(next(
                c for step in itertools.count() for c in (cand + step, cand - step)
                if c >= 1 and c not in chosen
            ))
    if len(set(chosen)) != len(chosen) or any(b <= a for a, b in zip(chosen, chosen[1:])):
        raise SnapCollision(
            f"cannot place {len(centers_hz)} distinct increasing components on a "
            f"{base_record} s grid inside the band"
        )
    return chosen


def fit_multisine_to_psd(
    target_psd,
    n_components: int,
    band: tuple[float, float],
    base_record: float = 60.0,
) -> MultisineSpec:
    """Multisine whose component powers reproduce a target PSD over `band`.

    The band is split into `n_components` log-equal sub-bands. Each
    component sits near its sub-band's geometric centre, snapped to a whole
    number of cycles in `base_record` seconds, and carries A_k^2/2 equal to
    the PSD integral over its sub-band. Phases are zero.
    """
    f, p = _as_psd_table(target_psd)
    lo, hi = map(float, band)
    if n_components < 1:
        raise InvalidValue("n_components must be >= 1")
    if not (0 < lo < hi):
        raise InvalidValue(f"band must satisfy 0 < lo < hi, got {band}")
    if lo < f[0] - 1e-12 or hi > f[-1] + 1e-12:
        raise InvalidValue(f"band {band} outside target PSD range [{f[0]}, {f[-1]}] Hz")
    if psd_integral(f, p, lo, hi) <= 0:
        raise BandEmpty(f"target PSD has no power inside {band} Hz")
    edges = np.geomspace(lo, hi, n_components + 1)
    centers = np.sqrt(edges[:-1] * edges[1:])
    cycles = _snap_cycles(centers, edges, base_record)
    power = np.array([psd_integral(f, p, a, b) for a, b in zip(edges[:-1], edges[1:])])
    amps = np.sqrt(2.0 * power)
    freqs = TWO_PI * np.asarray(cycles, dtype=float) / base_record
    return MultisineSpec(amps, freqs, np.zeros(n_components))


def sub_band_edges(n_components: int, band) -> np.ndarray:
    return np.geomspace(float(band[0]), float(band[1]), n_components + 1)


# Vehicle presets -------------------------------------------------------------
# Illustrative acceleration PSD shapes, (m/s^2)^2/Hz. Not measured data.

VEHICLE_PRESETS = {
    "road": {
        "axis": "y",
        "band": (0.5, 8.0),
        "psd": [(0.1, 0.002), (0.5, 0.08), (2.0, 0.08), (8.0, 0.01), (20.0, 0.0005)],
    },
    "air": {
        "axis": "z",
        "band": (1.0, 10.0),
        "psd": [(0.2, 0.01), (1.0, 0.15), (4.0, 0.15), (10.0, 0.02), (25.0, 0.001)],
    },
    "water": {
        "axis": "z",
        "band": (0.05, 0.5),
        "psd": [(0.01, 0.01), (0.05, 0.6), (0.15, 1.2), (0.5, 0.05), (1.0, 0.002)],
    },
}


def vehicle_psd(name: str):
    try:
        preset = VEHICLE_PRESETS[name]
    except KeyError:
        raise InvalidValue(f"unknown vehicle preset {name!r}; choose from {sorted(VEHICLE_PRESETS)}") from None
    return np.array(preset["psd"], dtype=float), tuple(preset["band"])


# File formats -----------------------------------------------------------------

def read_psd_csv(path) -> np.ndarray:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["freq_hz", "psd"]:
            raise SchemaError(f"{path}: expected header 'freq_hz,psd', got {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise SchemaError(f"{path}: row {lineno}: expected 2 columns, got {len(row)}")
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                col = "freq_hz" if not _is_float(row[0]) else "psd"
                raise SchemaError(f"{path}: row {lineno}, column {col}: not a number") from None
    if not rows:
        raise SchemaError(f"{path}: no PSD rows")
    return np.array(rows)


def _is_float(s) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def write_psd_csv(path, table) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["freq_hz", "psd"])
        for f, p in np.asarray(table, dtype=float):
            w.writerow([repr(float(f)), repr(float(p))])


def write_spec_json(path, spec: MultisineSpec) -> None:
    Path(path).write_text(json.dumps(spec.to_json(), indent=2) + "\n")


def read_spec_json(path) -> MultisineSpec:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    try:
        return MultisineSpec.from_json(data)
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from None
