import csv
import io
import json
import math
import xml.etree.ElementTree as ET
from types import SimpleNamespace

import numpy as np
import pytest

from bdftkit.bdft_model import BdftParams, discrete_frf_values, evaluate_frf, transient_samples
from bdftkit.cli import cmd_stream_cancel, main
from bdftkit.experiment import ExperimentResult
from bdftkit.io import read_frf_csv, read_trial_csv, write_json, write_trial_csv
from bdftkit.signals import MultisineSpec, fit_multisine_to_psd, generate_multisine, read_spec_json
from bdftkit.simulator import Trial

FS = 100.0
SPEC = [{"amplitude": a, "freq_rad_s": 2 * math.pi * c / 20.0, "phase_rad": ph}
        for a, c, ph in zip([1.0, 0.9, 0.8, 0.6, 0.5, 0.4], [11, 17, 31, 53, 89, 173], [0.3, 2.0, 4.1, 1.2, 5.5, 3.3])]
PARTICIPANT = {
    "bdft_y": {"gain": 3.0, "natural_frequency_rad_s": 15.7, "damping_ratio": 0.35},
    "bdft_z": {"gain": 5.0, "natural_frequency_rad_s": 11.3, "damping_ratio": 0.3},
    "tracking_bandwidth_rad_s": 2.0,
    "remnant_level_mm": 0.0,
}


def write_cfg(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def assert_error(code, err, expected_code):
    assert code == expected_code
    lines = err.strip().splitlines()
    assert len(lines) == 1 and lines[0].startswith("error: ")


@pytest.fixture
def sim_dir(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {
        "seed": 3, "sample_rate_hz": FS, "duration_s": 20.0,
        "perturbation": {"multisine": SPEC}, "participant": PARTICIPANT,
    })
    out = tmp_path / "sim"
    code, _, _ = run(["simulate", "--config", cfg, "--out-dir", out], capsys)
    assert code == 0
    return out


# gen-signal

def test_gen_signal_single_sine(tmp_path, capsys):
    item = {"amplitude": 1.5, "freq_rad_s": 2 * math.pi, "phase_rad": 0.25}
    cfg = write_cfg(tmp_path, {"sample_rate_hz": FS, "duration_s": 3.0, "perturbation": {"multisine": [item]}})
    code, out, _ = run(["gen-signal", "--config", cfg, "--out-dir", tmp_path / "o"], capsys)
    assert code == 0 and "crest factor" in out
    header, rows = read_csv(tmp_path / "o" / "signal.csv")
    assert header == ["t", "fd"]
    expected = generate_multisine(MultisineSpec([1.5], [2 * math.pi], [0.25]), FS, 3.0)
    np.testing.assert_array_equal(rows[:, 1], expected.samples)
    report = json.loads((tmp_path / "o" / "crest.json").read_text())
    assert report["crest_factor"] == pytest.approx(math.sqrt(2), rel=1e-6)


def test_gen_signal_flat_psd(tmp_path, capsys):
    psd = tmp_path / "psd.csv"
    psd.write_text("freq_hz,psd\n0.1,1.0\n1.0,1.0\n")
    cfg = write_cfg(tmp_path, {
        "sample_rate_hz": FS, "duration_s": 60.0, "phase_trials": 0,
        "perturbation": {"psd_file": "psd.csv", "band": [0.1, 1.0], "n_components": 3},
    })
    code, _, _ = run(["gen-signal", "--config", cfg, "--out-dir", tmp_path / "o"], capsys)
    assert code == 0
    got = read_spec_json(tmp_path / "o" / "spec.json")
    oracle = fit_multisine_to_psd([(0.1, 1.0), (1.0, 1.0)], 3, (0.1, 1.0))
    assert got == oracle


def test_gen_signal_missing_file(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"sample_rate_hz": FS, "duration_s": 60.0,
                               "perturbation": {"psd_file": "nope.csv", "band": [0.1, 1.0]}})
    code, _, err = run(["gen-signal", "--config", cfg], capsys)
    assert_error(code, err, 2)
    assert "nope.csv" in err and "perturbation.psd_file" in err
    code, _, err = run(["gen-signal", "--config", tmp_path / "absent.json"], capsys)
    assert_error(code, err, 2)
    assert "absent.json" in err


@pytest.mark.parametrize("data, field", [
    ({"sample_rate_hz": -1.0, "duration_s": 1.0, "perturbation": {"multisine": SPEC}}, "sample_rate_hz"),
    ({"sample_rate_hz": FS, "perturbation": {"multisine": SPEC}}, "duration_s"),
    ({"sample_rate_hz": FS, "duration_s": 1.0, "perturbation": {}}, "perturbation"),
    ({"sample_rate_hz": FS, "duration_s": 1.0, "perturbation": {"psd_preset": "rail"}}, "perturbation"),
])
def test_config_errors_name_field(tmp_path, capsys, data, field):
    code, _, err = run(["gen-signal", "--config", write_cfg(tmp_path, data)], capsys)
    assert_error(code, err, 2)
    assert field in err


def test_config_parse_error_reports_line(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "seed": 1,\n  oops\n}')
    code, _, err = run(["gen-signal", "--config", p], capsys)
    assert_error(code, err, 2)
    assert "line 3" in err


def test_runtime_error_exit_one(tmp_path, capsys):
    item = {"amplitude": 1.0, "freq_rad_s": 2 * math.pi * 60, "phase_rad": 0.0}
    cfg = write_cfg(tmp_path, {"sample_rate_hz": FS, "duration_s": 1.0, "perturbation": {"multisine": [item]}})
    code, _, err = run(["gen-signal", "--config", cfg], capsys)
    assert_error(code, err, 1)
    assert "Nyquist" in err


def test_usage_errors(capsys):
    code, _, err = run(["frobnicate"], capsys)
    assert_error(code, err, 2)
    code, _, err = run(["gen-signal"], capsys)
    assert_error(code, err, 2)


# simulate / identify / fit / cancel

def test_identify_matches_analytic(sim_dir, tmp_path, capsys):
    code, _, _ = run(["identify", "--trial", sim_dir / "trial.csv", "--spec", sim_dir / "spec.json",
                      "--out-dir", tmp_path / "id"], capsys)
    assert code == 0
    for ax, key in (("y", "bdft_y"), ("z", "bdft_z")):
        frf = read_frf_csv(tmp_path / "id" / f"frf_{ax}.csv")
        p = BdftParams.from_dict(PARTICIPANT[key])
        np.testing.assert_allclose(frf.values, discrete_frf_values(p, frf.omegas, FS), rtol=1e-6)


def test_fit_exact_frf(tmp_path, capsys):
    p = BdftParams(2.5, 13.0, 0.4)
    frf = evaluate_frf(p, 2 * math.pi * np.array([11, 17, 31, 53, 89, 173]) / 20.0)
    write_json(tmp_path / "frf_y.json", frf.to_dict())
    code, out, _ = run(["fit", "--frf", tmp_path / "frf_y.json", "--out-dir", tmp_path], capsys)
    assert code == 0 and "converged=True" in out
    got = BdftParams.from_dict(json.loads((tmp_path / "params_y.json").read_text()))
    np.testing.assert_allclose(got.as_array(), p.as_array(), rtol=1e-6)


def test_pipeline_round_trip(sim_dir, tmp_path, capsys):
    out = tmp_path / "p"
    assert run(["identify", "--trial", sim_dir / "trial.csv", "--spec", sim_dir / "spec.json", "--out-dir", out], capsys)[0] == 0
    assert run(["fit", "--frf", out / "frf_y.json", "--frf", out / "frf_z.csv", "--sample-rate", FS, "--out-dir", out],
               capsys)[0] == 0
    for ax, key in (("y", "bdft_y"), ("z", "bdft_z")):
        got = BdftParams.from_dict(json.loads((out / f"params_{ax}.json").read_text()))
        np.testing.assert_allclose(got.as_array(), BdftParams.from_dict(PARTICIPANT[key]).as_array(), rtol=1e-6)
    assert run(["cancel", "--trial", sim_dir / "trial.csv", "--params-y", out / "params_y.json",
                "--params-z", out / "fit_z.json", "--out-dir", out], capsys)[0] == 0
    header, rows = read_csv(out / "cancelled.csv")
    assert header == ["t", "ucan_y", "ucan_z"]
    tr = read_trial_csv(sim_dir / "trial.csv")
    k = transient_samples(BdftParams.from_dict(PARTICIPANT["bdft_y"]), FS, 20)
    np.testing.assert_allclose(rows[k:, 1], tr.voluntary_y.samples[k:], atol=1e-6)


def test_cancel_zero_gain(sim_dir, tmp_path, capsys):
    write_json(tmp_path / "zero.json", BdftParams(0.0, 10.0, 0.5).to_dict())
    code, _, _ = run(["cancel", "--trial", sim_dir / "trial.csv", "--params-y", tmp_path / "zero.json",
                      "--params-z", tmp_path / "zero.json", "--out-dir", tmp_path], capsys)
    assert code == 0
    _, rows = read_csv(tmp_path / "cancelled.csv")
    _, trial_rows = read_csv(sim_dir / "trial.csv")
    np.testing.assert_array_equal(rows[:, 1], trial_rows[:, 3])
    np.testing.assert_array_equal(rows[:, 2], trial_rows[:, 4])


def test_stream_cancel_equals_batch(sim_dir, tmp_path, capsys):
    pfile = tmp_path / "p.json"
    write_json(pfile, BdftParams(2.0, 14.0, 0.3).to_dict())
    assert run(["cancel", "--trial", sim_dir / "trial.csv", "--params-y", pfile, "--params-z", pfile,
                "--out-dir", tmp_path], capsys)[0] == 0
    _, batch = read_csv(tmp_path / "cancelled.csv")
    _, rows = read_csv(sim_dir / "trial.csv")
    lines = ["t,fd_y,fd_z,u_y,u_z"] + [",".join(repr(v) for v in r[:5]) for r in rows.tolist()]
    out = io.StringIO()
    args = SimpleNamespace(params_y=str(pfile), params_z=str(pfile), sample_rate=FS)
    assert cmd_stream_cancel(args, io.StringIO("\n".join(lines) + "\n"), out) == 0
    got = np.array([list(map(float, ln.split(","))) for ln in out.getvalue().splitlines()[1:]])
    np.testing.assert_array_equal(got, batch)


def test_stream_cancel_bad_line(tmp_path, capsys, monkeypatch):
    pfile = tmp_path / "p.json"
    write_json(pfile, BdftParams(2.0, 14.0, 0.3).to_dict())
    monkeypatch.setattr("sys.stdin", io.StringIO("0.0,1.0,2.0\n"))
    code, _, err = run(["stream-cancel", "--params-y", pfile, "--params-z", pfile, "--sample-rate", FS], capsys)
    assert_error(code, err, 2)
    assert "line 1" in err


def test_schema_errors_name_row_and_column(sim_dir, tmp_path, capsys):
    lines = (sim_dir / "trial.csv").read_text().splitlines()
    cells = lines[5].split(",")
    cells[3] = "abc"
    lines[5] = ",".join(cells)
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines) + "\n")
    code, _, err = run(["identify", "--trial", bad, "--spec", sim_dir / "spec.json"], capsys)
    assert_error(code, err, 2)
    assert "row 6" in err and "u_y" in err
    missing = tmp_path / "missing.csv"
    missing.write_text("t,fd_y,fd_z,u_y\n0,0,0,0\n")
    code, _, err = run(["identify", "--trial", missing, "--spec", sim_dir / "spec.json"], capsys)
    assert_error(code, err, 2)
    assert "u_z" in err


def test_missing_params_file(sim_dir, tmp_path, capsys):
    code, _, err = run(["cancel", "--trial", sim_dir / "trial.csv", "--params-y", tmp_path / "none.json",
                        "--params-z", tmp_path / "none.json"], capsys)
    assert_error(code, err, 2)
    assert "none.json" in err


def test_real_recording_without_truth(sim_dir, tmp_path, capsys):
    tr = read_trial_csv(sim_dir / "trial.csv")
    bare = Trial(tr.perturbation_y, tr.perturbation_z, tr.recorded_y, tr.recorded_z)
    write_trial_csv(tmp_path / "rec.csv", bare)
    assert (tmp_path / "rec.csv").read_text().splitlines()[0] == "t,fd_y,fd_z,u_y,u_z"
    out = tmp_path / "r"
    assert run(["identify", "--trial", tmp_path / "rec.csv", "--spec", sim_dir / "spec.json", "--out-dir", out], capsys)[0] == 0
    assert run(["fit", "--frf", out / "frf_y.json", "--frf", out / "frf_z.json", "--out-dir", out], capsys)[0] == 0
    assert run(["cancel", "--trial", tmp_path / "rec.csv", "--params-y", out / "params_y.json",
                "--params-z", out / "params_z.json", "--out-dir", out], capsys)[0] == 0
    assert (out / "cancelled.csv").is_file()


def test_global_flags_either_side(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"sample_rate_hz": FS, "duration_s": 2.0, "perturbation": {"multisine": SPEC[:1]}})
    assert run(["--out-dir", tmp_path / "a", "gen-signal", "--config", cfg], capsys)[0] == 0
    assert run(["--config", cfg, "gen-signal", "--out-dir", tmp_path / "b"], capsys)[0] == 0
    assert (tmp_path / "a" / "signal.csv").read_bytes() == (tmp_path / "b" / "signal.csv").read_bytes()


# experiment

def experiment_cfg(tmp_path, spread, remnant, n=4, name="exp.json", **extra):
    part = dict(PARTICIPANT, remnant_level_mm=remnant)
    data = {
        "seed": 5, "population": {"n": n, "spread": spread}, "participant": part,
        "perturbation": {"multisine": SPEC}, "reference": {"kind": "lissajous"},
        "duration_s": 20.0, "sample_rate_hz": FS, **extra,
    }
    return write_cfg(tmp_path, data, name)


def load_result(out):
    return json.loads((out / "result.json").read_text())


def test_experiment_spread_zero(tmp_path, capsys):
    out = tmp_path / "e0"
    assert run(["experiment", "--config", experiment_cfg(tmp_path, 0.0, 0.0), "--out-dir", out], capsys)[0] == 0
    for r in load_result(out)["records"]:
        for part in ("y", "z", "mean"):
            assert r["vaf_individual"][part] == pytest.approx(r["vaf_average"][part], abs=1e-6)


def test_experiment_ordering_zero_remnant(tmp_path, capsys):
    out = tmp_path / "e1"
    assert run(["experiment", "--config", experiment_cfg(tmp_path, 0.2, 0.0, n=6), "--out-dir", out], capsys)[0] == 0
    res = load_result(out)
    assert res["failures"] == []
    for r in res["records"]:
        assert r["vaf_individual"]["mean"] >= r["vaf_average"]["mean"] > r["vaf_none"]["mean"]
        c = r["cancel_vaf"]
        assert c["individual"]["mean"] > c["average"]["mean"] > c["none"]["mean"]
    ExperimentResult(res["records"], res["summary"], res["failures"]).check_summary()
    _, table = read_csv(out / "vaf_table.csv")
    assert table.shape == (6, 10)
    svg = ET.parse(out / "bode_p00.svg").getroot()
    assert svg.tag.endswith("svg")


def test_experiment_deterministic(tmp_path, capsys):
    cfg = experiment_cfg(tmp_path, 0.2, 1.0)
    assert run(["experiment", "--config", cfg, "--out-dir", tmp_path / "a"], capsys)[0] == 0
    assert run(["experiment", "--config", cfg, "--out-dir", tmp_path / "b"], capsys)[0] == 0
    for name in ("result.json", "vaf_table.csv", "bode_p01.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_experiment_workers_match_serial(tmp_path, capsys):
    a = experiment_cfg(tmp_path, 0.2, 1.0, name="a.json")
    b = experiment_cfg(tmp_path, 0.2, 1.0, name="b.json", workers=2)
    assert run(["experiment", "--config", a, "--out-dir", tmp_path / "a"], capsys)[0] == 0
    assert run(["experiment", "--config", b, "--out-dir", tmp_path / "b"], capsys)[0] == 0
    assert (tmp_path / "a" / "result.json").read_bytes() == (tmp_path / "b" / "result.json").read_bytes()


def test_experiment_seed_override(tmp_path, capsys):
    cfg = experiment_cfg(tmp_path, 0.2, 1.0)
    assert run(["experiment", "--config", cfg, "--out-dir", tmp_path / "a"], capsys)[0] == 0
    assert run(["experiment", "--config", cfg, "--seed", 6, "--out-dir", tmp_path / "b"], capsys)[0] == 0
    assert (tmp_path / "a" / "result.json").read_bytes() != (tmp_path / "b" / "result.json").read_bytes()


def test_experiment_failure_manifest(tmp_path, capsys):
    # a participant whose resonance the sample rate cannot represent fails alone
    part = dict(PARTICIPANT, bdft_y={"gain": 3.0, "natural_frequency_rad_s": 400.0, "damping_ratio": 0.35})
    data = {"seed": 5, "population": {"n": 2, "spread": 0.0}, "participant": part,
            "perturbation": {"multisine": SPEC}, "duration_s": 20.0, "sample_rate_hz": FS}
    out = tmp_path / "f"
    code, _, err = run(["experiment", "--config", write_cfg(tmp_path, data), "--out-dir", out], capsys)
    assert_error(code, err, 1)
    failures = json.loads((out / "failures.json").read_text())
    assert [f["index"] for f in failures] == [0, 1]
    assert "SampleRateTooLow" in failures[0]["error"]


def test_experiment_preset_and_config_conflict(tmp_path, capsys):
    code, _, err = run(["experiment", "--preset", "paper-style", "--config", experiment_cfg(tmp_path, 0, 0)], capsys)
    assert_error(code, err, 2)
