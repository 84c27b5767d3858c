"""JSON run configuration with eager, path-qualified validation."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .bdft_model import BdftParams
from .errors import BdftError, ConfigError
from .signals import (
    MultisineSpec,
    fit_multisine_to_psd,
    randomize_phases,
    read_psd_csv,
    read_spec_json,
    vehicle_psd,
)
from .simulator import SyntheticParticipant

_MISSING = object()
REFERENCE_KINDS = ("lissajous", "ramp-hold", "fixed-point")
VAF_MODES = ("bdft", "position")

PAPER_STYLE = {
    "seed": 1,
    "population": {"n": 18, "spread": 0.2},
    "participant": {
        "bdft_y": {"gain": 3.0, "natural_frequency_rad_s": 15.707963267948966, "damping_ratio": 0.35},
        "bdft_z": {"gain": 5.0, "natural_frequency_rad_s": 11.309733552923255, "damping_ratio": 0.3},
        "tracking_bandwidth_rad_s": 2.0,
        "remnant_level_mm": 1.0,
    },
    "perturbation": {"psd_preset": "air", "n_components": 10, "base_record_s": 60.0},
    "phase_trials": 100,
    "reference": {"kind": "lissajous"},
    "duration_s": 60.0,
    "sample_rate_hz": 100.0,
    "vaf_mode": "bdft",
    "workers": 1,
}
PRESETS = {"paper-style": PAPER_STYLE}


class Fields:
    """Typed access to a JSON object that reports dotted field paths."""

    def __init__(self, data, source: str, path: str = ""):
        if not isinstance(data, dict):
            raise ConfigError(f"{source}: {path or 'top level'} must be a JSON object")
        self.data, self.source, self.path = data, source, path

    def where(self, key) -> str:
        return f"{self.path}.{key}" if self.path else key

    def fail(self, key, msg):
        raise ConfigError(f"{self.source}: field {self.where(key)}: {msg}")

    def has(self, key) -> bool:
        return key in self.data

    def get(self, key, kind=float, default=_MISSING, check=None, desc=""):
        if key not in self.data:
            if default is _MISSING:
                self.fail(key, "required field missing")
            return default
        v = self.data[key]
        try:
            if kind is float:
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise TypeError
                v = float(v)
                if not math.isfinite(v):
                    raise TypeError
            elif kind is int:
                if isinstance(v, bool) or not (isinstance(v, int) or (isinstance(v, float) and v.is_integer())):
                    raise TypeError
                v = int(v)
            elif kind is str:
                if not isinstance(v, str):
                    raise TypeError
        except TypeError:
            self.fail(key, f"expected {kind.__name__}, got {json.dumps(v)}")
        if check is not None and not check(v):
            self.fail(key, f"{json.dumps(v)} {desc or 'is not allowed'}")
        return v

    def sub(self, key, default=_MISSING) -> "Fields":
        if key not in self.data:
            if default is _MISSING:
                self.fail(key, "required section missing")
            return Fields(default, self.source, self.where(key))
        return Fields(self.data[key], self.source, self.where(key))

    def file(self, key, base_dir: Path) -> Path:
        p = Path(self.get(key, str))
        if not p.is_absolute():
            p = base_dir / p
        if not p.is_file():
            self.fail(key, f"file not found: {p}")
        return p


def load_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


def merged_with_preset(data: dict, source: str) -> dict:
    """Overlay `data` on a named preset when it carries a `preset` key."""
    if "preset" not in data:
        return data
    name = data["preset"]
    if name not in PRESETS:
        raise ConfigError(f"{source}: field preset: unknown preset {json.dumps(name)}; choose from {sorted(PRESETS)}")
    out = copy.deepcopy(PRESETS[name])
    for k, v in data.items():
        if k == "preset":
            continue
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "perturbation":
            out[k] = {**out[k], **v}
        else:
            out[k] = v
    return out


def parse_params(f: Fields) -> BdftParams:
    positive = dict(check=lambda v: v > 0, desc="must be > 0")
    return BdftParams(
        f.get("gain"),
        f.get("natural_frequency_rad_s", **positive),
        f.get("damping_ratio", **positive),
    )


def parse_participant(f: Fields, seed: int) -> SyntheticParticipant:
    return SyntheticParticipant(
        parse_params(f.sub("bdft_y")),
        parse_params(f.sub("bdft_z")),
        f.get("tracking_bandwidth_rad_s", default=2.0, check=lambda v: v > 0, desc="must be > 0"),
        f.get("remnant_level_mm", default=0.0, check=lambda v: v >= 0, desc="must be >= 0"),
        f.get("rng_seed", int, default=seed),
    )


def parse_perturbation(f: Fields, base_dir: Path, seed: int, phase_trials: int | None) -> MultisineSpec:
    """Multisine from an inline list, a spec file, a PSD preset or a PSD CSV.

    Phases are randomized (crest-factor selection) when `phase_trials` is
    set; PSD-derived specs default to 100 trials.
    """
    try:
        if f.has("multisine"):
            spec = MultisineSpec.from_json(f.data["multisine"])
            trials = phase_trials
        elif f.has("multisine_file"):
            spec = read_spec_json(f.file("multisine_file", base_dir))
            trials = phase_trials
        elif f.has("psd_preset") or f.has("psd_file"):
            if f.has("psd_preset"):
                table, band = vehicle_psd(f.get("psd_preset", str))
            else:
                table, band = read_psd_csv(f.file("psd_file", base_dir)), None
            if f.has("band"):
                b = f.data["band"]
                if not (isinstance(b, list) and len(b) == 2 and all(isinstance(x, (int, float)) for x in b)):
                    f.fail("band", "expected [low_hz, high_hz]")
                band = (float(b[0]), float(b[1]))
            elif band is None:
                f.fail("band", "required with psd_file")
            n = f.get("n_components", int, default=10, check=lambda v: v >= 1, desc="must be >= 1")
            base = f.get("base_record_s", default=60.0, check=lambda v: v > 0, desc="must be > 0")
            spec = fit_multisine_to_psd(table, n, band, base)
            trials = 100 if phase_trials is None else phase_trials
        else:
            raise ConfigError(
                f"{f.source}: field {f.path}: needs one of multisine, multisine_file, psd_preset, psd_file"
            )
    except ConfigError:
        raise
    except BdftError as exc:
        raise ConfigError(f"{f.source}: field {f.path}: {exc}") from None
    if trials:
        spec = randomize_phases(spec, seed, trials)
    return spec


@dataclass(frozen=True)
class SignalConfig:
    spec: MultisineSpec
    sample_rate: float
    duration: float
    seed: int
    output_dir: Path | None


@dataclass(frozen=True)
class SimulationConfig:
    spec: MultisineSpec
    participant: SyntheticParticipant
    reference_kind: str
    sample_rate: float
    duration: float
    seed: int
    output_dir: Path | None


@dataclass(frozen=True)
class ExperimentConfig:
    n_participants: int
    spread: float
    base: SyntheticParticipant
    spec: MultisineSpec
    reference_kind: str
    sample_rate: float
    duration: float
    seed: int
    vaf_mode: str = "bdft"
    workers: int = 1
    output_dir: Path | None = None


def _common(f: Fields, seed_override):
    seed = f.get("seed", int, default=0) if seed_override is None else int(seed_override)
    fs = f.get("sample_rate_hz", check=lambda v: v > 0, desc="must be > 0")
    dur = f.get("duration_s", check=lambda v: v > 0, desc="must be > 0")
    trials = f.get("phase_trials", int, default=None, check=lambda v: v >= 0, desc="must be >= 0")
    out = Path(f.get("output_dir", str)) if f.has("output_dir") else None
    return seed, fs, dur, trials, out


def _reference_kind(f: Fields) -> str:
    ref = f.sub("reference", {})
    return ref.get("kind", str, default="lissajous", check=lambda v: v in REFERENCE_KINDS,
                   desc=f"is not one of {list(REFERENCE_KINDS)}")


def parse_signal_config(data: dict, source: str, base_dir: Path, seed_override=None) -> SignalConfig:
    f = Fields(merged_with_preset(data, source), source)
    seed, fs, dur, trials, out = _common(f, seed_override)
    spec = parse_perturbation(f.sub("perturbation"), base_dir, seed + 1, trials)
    return SignalConfig(spec, fs, dur, seed, out)


def parse_simulation_config(data: dict, source: str, base_dir: Path, seed_override=None) -> SimulationConfig:
    f = Fields(merged_with_preset(data, source), source)
    seed, fs, dur, trials, out = _common(f, seed_override)
    spec = parse_perturbation(f.sub("perturbation"), base_dir, seed + 1, trials)
    part = parse_participant(f.sub("participant"), seed + 3)
    return SimulationConfig(spec, part, _reference_kind(f), fs, dur, seed, out)


def parse_experiment_config(data: dict, source: str, base_dir: Path, seed_override=None) -> ExperimentConfig:
    f = Fields(merged_with_preset(data, source), source)
    seed, fs, dur, trials, out = _common(f, seed_override)
    pop = f.sub("population")
    n = pop.get("n", int, check=lambda v: v >= 1, desc="must be >= 1")
    spread = pop.get("spread", check=lambda v: v >= 0, desc="must be >= 0")
    spec = parse_perturbation(f.sub("perturbation"), base_dir, seed + 1, trials)
    base = parse_participant(f.sub("participant"), seed + 3)
    mode = f.get("vaf_mode", str, default="bdft", check=lambda v: v in VAF_MODES, desc=f"is not one of {list(VAF_MODES)}")
    workers = f.get("workers", int, default=1, check=lambda v: v >= 1, desc="must be >= 1")
    return ExperimentConfig(n, spread, base, spec, _reference_kind(f), fs, dur, seed, mode, workers, out)
