"""Individual-vs-average BDFT model experiment on a synthetic population.

Pipeline per participant: trial -> FRF estimate per axis -> individual
fit. The average model is the parameter-wise mean of all individual fits.
Each participant is then scored with its own model, the average model,
and no model at all.
"""
from __future__ import annotations

import csv
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bdft_model import BdftParams, transient_samples
from .cancellation import cancel_batch
from .config import ExperimentConfig
from .identification import average_params, estimate_frf, fit_bdft_model, model_vaf, vaf
from .io import dumps
from .simulator import AXES, make_population, make_reference, run_trial
from .svgplot import bode_svg

SUMMARY_KEYS = ("vaf_individual", "vaf_average", "vaf_none")


@dataclass
class ExperimentResult:
    records: list[dict]
    summary: dict
    failures: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"records": self.records, "summary": self.summary, "failures": self.failures}

    def check_summary(self, tol: float = 1e-12) -> None:
        fresh = summarize(self.records, self.summary.get("average_params"))
        for key in SUMMARY_KEYS:
            for part in ("y", "z", "mean"):
                a = self.summary[f"mean_{key}"][part]
                b = fresh[f"mean_{key}"][part]
                if abs(a - b) > tol:
                    raise AssertionError(f"summary mean_{key}.{part} = {a} but records give {b}")


def _identify(args):
    """Trial, FRFs and individual fits for one participant (worker entry point)."""
    index, participant, cfg, reference = args
    try:
        trial = run_trial(participant, reference, cfg.spec, cfg.sample_rate, cfg.duration)
        frfs, fits = {}, {}
        for ax in AXES:
            frfs[ax] = estimate_frf(trial.channel("perturbation", ax), trial.channel("recorded", ax), cfg.spec)
            fits[ax] = fit_bdft_model(frfs[ax], sample_rate=cfg.sample_rate)
        return index, trial, frfs, fits, None
    except Exception as exc:  # noqa: BLE001 - collected into the failure manifest
        return index, None, None, None, f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}"


def _cancel_vafs(trial, params_by_axis):
    """Cancellation-domain VAF of voluntary input vs u_can, start-up transient dropped."""
    out = {}
    if params_by_axis is None:
        for ax in AXES:
            out[ax] = vaf(trial.channel("voluntary", ax).samples, trial.channel("recorded", ax).samples)
        return out
    can = dict(zip(AXES, cancel_batch(trial, params_by_axis["y"], params_by_axis["z"])))
    for ax in AXES:
        skip = min(transient_samples(params_by_axis[ax], trial.sample_rate), trial.n_samples // 2)
        out[ax] = vaf(trial.channel("voluntary", ax).samples[skip:], can[ax].samples[skip:])
    return out


def _with_mean(d):
    return {"y": d["y"], "z": d["z"], "mean": 0.5 * (d["y"] + d["z"])}


def summarize(records, average):
    n = len(records)
    summary = {"n_participants": n, "average_params": average}
    for key in SUMMARY_KEYS:
        summary[f"mean_{key}"] = {
            part: (float(np.mean([r[key][part] for r in records])) if n else None)
            for part in ("y", "z", "mean")
        }
    if n:
        summary["mean_vaf_gap"] = float(np.mean([r["vaf_individual"]["mean"] - r["vaf_average"]["mean"] for r in records]))
        summary["individual_ge_average"] = int(sum(r["vaf_individual"]["mean"] >= r["vaf_average"]["mean"] for r in records))
    return summary


def run_experiment(cfg: ExperimentConfig) -> tuple[ExperimentResult, dict]:
    """Run the experiment; returns the result and per-participant plot data."""
    people = make_population(cfg.n_participants, cfg.spread, cfg.base, cfg.seed)
    reference = make_reference(cfg.reference_kind, cfg.duration, cfg.sample_rate, cfg.seed + 2)
    jobs = [(i, p, cfg, reference) for i, p in enumerate(people)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            done = list(pool.map(_identify, jobs))
    else:
        done = [_identify(j) for j in jobs]
    done.sort(key=lambda r: r[0])

    failures = [{"index": i, "error": err} for i, _, _, _, err in done if err]
    ok = [(i, trial, frfs, fits) for i, trial, frfs, fits, err in done if not err]
    if not ok:
        return ExperimentResult([], summarize([], None), failures), {}
    avg = {ax: average_params([fits[ax].params for _, _, _, fits in ok]) for ax in AXES}

    records, plots = [], {}
    for i, trial, frfs, fits in ok:
        indiv = {ax: fits[ax].params for ax in AXES}
        try:
            rec = {
                "index": i,
                "true_params": {ax: people[i].bdft(ax).to_dict() for ax in AXES},
                "fitted_params": {ax: indiv[ax].to_dict() for ax in AXES},
                "fit": {ax: {k: v for k, v in fits[ax].to_dict().items() if k != "params"} for ax in AXES},
                "frf": {ax: frfs[ax].to_dict()["points"] for ax in AXES},
                "vaf_individual": _with_mean({ax: model_vaf(trial, ax, indiv[ax], cfg.spec, cfg.vaf_mode) for ax in AXES}),
                "vaf_average": _with_mean({ax: model_vaf(trial, ax, avg[ax], cfg.spec, cfg.vaf_mode) for ax in AXES}),
                "vaf_none": _with_mean({ax: _vaf_none(trial, ax, cfg) for ax in AXES}),
                "cancel_vaf": {
                    "individual": _with_mean(_cancel_vafs(trial, indiv)),
                    "average": _with_mean(_cancel_vafs(trial, avg)),
                    "none": _with_mean(_cancel_vafs(trial, None)),
                },
                "out_of_box_samples": trial.out_of_box,
            }
        except Exception as exc:  # noqa: BLE001
            failures.append({"index": i, "error": f"{type(exc).__name__}: {exc}"})
            continue
        records.append(rec)
        plots[i] = {ax: (frfs[ax], {"individual": indiv[ax], "average": avg[ax]}) for ax in AXES}
    failures.sort(key=lambda f: f["index"])
    summary = summarize(records, {ax: avg[ax].to_dict() for ax in AXES})
    return ExperimentResult(records, summary, failures), plots


def _vaf_none(trial, ax, cfg):
    zero = BdftParams(0.0, 1.0, 1.0)
    return model_vaf(trial, ax, zero, cfg.spec, cfg.vaf_mode)


TABLE_COLUMNS = [
    "participant", "vaf_individual_y", "vaf_individual_z", "vaf_individual",
    "vaf_average_y", "vaf_average_z", "vaf_average", "vaf_none_y", "vaf_none_z", "vaf_none",
]


def write_experiment(result: ExperimentResult, plots: dict, out_dir, sample_rate: float) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    p = out / "result.json"
    p.write_text(dumps(result.to_dict()))
    written.append(p)
    p = out / "vaf_table.csv"
    with p.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_COLUMNS)
        for r in result.records:
            row = [r["index"]]
            for key in SUMMARY_KEYS:
                row += [f"{r[key]['y']:.6f}", f"{r[key]['z']:.6f}", f"{r[key]['mean']:.6f}"]
            w.writerow(row)
    written.append(p)
    p = out / "failures.json"
    p.write_text(dumps(result.failures))
    written.append(p)
    for i, cols in sorted(plots.items()):
        p = out / f"bode_p{i:02d}.svg"
        p.write_text(bode_svg(
            f"Participant {i}: BDFT frequency response",
            [(f"{ax}-axis", frf, models) for ax, (frf, models) in cols.items()],
            sample_rate,
        ))
        written.append(p)
    return written
