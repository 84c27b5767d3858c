"""CSV and JSON file formats."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .bdft_model import BdftParams, FrequencyResponse
from .errors import SchemaError
from .signals import TimeSeries
from .simulator import Trial

TRIAL_COLUMNS = ["t", "fd_y", "fd_z", "u_y", "u_z", "uvol_y", "uvol_z", "ubdft_y", "ubdft_z"]
REQUIRED_TRIAL_COLUMNS = TRIAL_COLUMNS[:5]
FRF_COLUMNS = ["omega_rad_s", "re", "im", "weight"]
STREAM_IN_COLUMNS = ["t", "fd_y", "fd_z", "u_y", "u_z"]


def fmt(x: float) -> str:
    return repr(float(x))


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{path}: no such file")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _read_table(path, required, optional=()):
    """Rows of a numeric CSV as {column: array}; errors name row and column."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{path}: no such file")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file")
        header = [h.strip() for h in header]
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column {missing[0]!r} (header: {','.join(header)})")
        unknown = [c for c in header if c not in required and c not in optional]
        if unknown:
            raise SchemaError(f"{path}: unexpected column {unknown[0]!r}")
        cols = {c: [] for c in header}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}: row {lineno}: expected {len(header)} fields, got {len(row)}")
            for name, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise SchemaError(f"{path}: row {lineno}, column {name}: {cell!r} is not a number") from None
                if not np.isfinite(v):
                    raise SchemaError(f"{path}: row {lineno}, column {name}: non-finite value")
                cols[name].append(v)
    if not cols[header[0]]:
        raise SchemaError(f"{path}: no data rows")
    return {k: np.array(v) for k, v in cols.items()}


def infer_sample_rate(t: np.ndarray, path="input") -> float:
    if t.size < 2:
        raise SchemaError(f"{path}: need at least two rows to infer the sample rate")
    dt = np.diff(t)
    step = float(np.median(dt))
    if step <= 0 or np.max(np.abs(dt - step)) > 1e-6 * step:
        raise SchemaError(f"{path}: column t is not uniformly increasing")
    return float(np.round(1.0 / step, 6))


def write_trial_csv(path, trial: Trial, include_truth: bool = True) -> None:
    fs = trial.sample_rate
    cols = [np.arange(trial.n_samples) / fs, trial.perturbation_y.samples, trial.perturbation_z.samples,
            trial.recorded_y.samples, trial.recorded_z.samples]
    header = list(REQUIRED_TRIAL_COLUMNS)
    if include_truth and trial.voluntary_y is not None and trial.truth_bdft_y is not None:
        header += TRIAL_COLUMNS[5:]
        cols += [trial.voluntary_y.samples, trial.voluntary_z.samples,
                 trial.truth_bdft_y.samples, trial.truth_bdft_z.samples]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*(c.tolist() for c in cols)):
            w.writerow([repr(v) for v in row])


def read_trial_csv(path, sample_rate: float | None = None) -> Trial:
    """Load a trial; truth columns are optional (real recordings lack them)."""
    cols = _read_table(path, REQUIRED_TRIAL_COLUMNS, TRIAL_COLUMNS[5:])
    fs = sample_rate or infer_sample_rate(cols["t"], path)
    ts = lambda k: TimeSeries(cols[k], fs)  # noqa: E731
    kw = {}
    for ax in ("y", "z"):
        kw[f"perturbation_{ax}"] = ts(f"fd_{ax}")
        kw[f"recorded_{ax}"] = ts(f"u_{ax}")
        if f"uvol_{ax}" in cols:
            kw[f"voluntary_{ax}"] = ts(f"uvol_{ax}")
        if f"ubdft_{ax}" in cols:
            kw[f"truth_bdft_{ax}"] = ts(f"ubdft_{ax}")
        if f"uvol_{ax}" in cols and f"ubdft_{ax}" in cols:
            kw[f"remnant_{ax}"] = TimeSeries(cols[f"u_{ax}"] - cols[f"uvol_{ax}"] - cols[f"ubdft_{ax}"], fs)
    return Trial(**kw)


def write_frf_csv(path, frf: FrequencyResponse) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FRF_COLUMNS)
        for om, h, c in frf.points:
            w.writerow([fmt(om), fmt(h.real), fmt(h.imag), fmt(c)])


def read_frf_csv(path, sample_rate: float | None = None) -> FrequencyResponse:
    cols = _read_table(path, FRF_COLUMNS)
    return FrequencyResponse(cols["omega_rad_s"], cols["re"] + 1j * cols["im"], cols["weight"], sample_rate)


def read_frf(path) -> FrequencyResponse:
    if str(path).endswith(".csv"):
        return read_frf_csv(path)
    return FrequencyResponse.from_dict(read_json(path))


def read_params(path) -> BdftParams:
    data = read_json(path)
    if isinstance(data, dict) and "params" in data:
        data = data["params"]
    try:
        return BdftParams.from_dict(data)
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def write_cancelled_csv(path, t, ucan_y, ucan_z) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "ucan_y", "ucan_z"])
        for row in zip(np.asarray(t).tolist(), np.asarray(ucan_y).tolist(), np.asarray(ucan_z).tolist()):
            w.writerow([repr(v) for v in row])


def write_series_csv(path, series: TimeSeries, name: str = "fd") -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", name])
        for t, v in zip(series.t.tolist(), series.samples.tolist()):
            w.writerow([repr(t), repr(v)])
