"""Command-line front end.

Exit status is 2 for configuration and input-schema problems, 1 for
failures while running; either way a single `error: ...` line goes to
stderr.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .cancellation import cancel_batch, make_canceller
from .config import (
    PRESETS,
    load_json,
    parse_experiment_config,
    parse_signal_config,
    parse_simulation_config,
)
from .errors import BdftError, ConfigError, SchemaError
from .experiment import run_experiment, write_experiment
from .identification import estimate_frf, fit_bdft_model
from .io import (
    STREAM_IN_COLUMNS,
    read_frf,
    read_params,
    read_trial_csv,
    write_cancelled_csv,
    write_frf_csv,
    write_json,
    write_series_csv,
    write_trial_csv,
)
from .signals import crest_factor, generate_multisine, read_spec_json, write_spec_json
from .simulator import AXES, make_reference, run_trial


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"error: {_one_line(message)}", file=sys.stderr)
        raise SystemExit(2)


def _out_dir(args, cfg_dir=None) -> Path:
    d = Path(args.out_dir) if args.out_dir else (cfg_dir or Path("."))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _config(args):
    if not args.config:
        raise UsageError("--config is required for this command")
    path = Path(args.config)
    return load_json(path), str(path), path.parent


def cmd_gen_signal(args) -> int:
    data, src, base = _config(args)
    cfg = parse_signal_config(data, src, base, args.seed)
    out = _out_dir(args, cfg.output_dir)
    series = generate_multisine(cfg.spec, cfg.sample_rate, cfg.duration)
    write_series_csv(out / "signal.csv", series, "fd")
    write_spec_json(out / "spec.json", cfg.spec)
    report = {
        "crest_factor": crest_factor(series),
        "rms": series.rms(),
        "peak": float(np.max(np.abs(series.samples))),
        "variance_from_spec": cfg.spec.variance,
        "n_components": cfg.spec.count,
    }
    write_json(out / "crest.json", report)
    print(f"wrote {out / 'signal.csv'} (crest factor {report['crest_factor']:.4f})")
    return 0


def cmd_simulate(args) -> int:
    data, src, base = _config(args)
    cfg = parse_simulation_config(data, src, base, args.seed)
    out = _out_dir(args, cfg.output_dir)
    ref = make_reference(cfg.reference_kind, cfg.duration, cfg.sample_rate, cfg.seed + 2)
    trial = run_trial(cfg.participant, ref, cfg.spec, cfg.sample_rate, cfg.duration)
    write_trial_csv(out / "trial.csv", trial)
    write_spec_json(out / "spec.json", cfg.spec)
    write_json(out / "participant.json", cfg.participant.to_dict())
    print(f"wrote {out / 'trial.csv'}")
    return 0


def cmd_identify(args) -> int:
    trial = read_trial_csv(args.trial)
    spec_y = read_spec_json(args.spec)
    spec_z = read_spec_json(args.spec_z) if args.spec_z else spec_y
    out = _out_dir(args)
    for ax, spec in zip(AXES, (spec_y, spec_z)):
        frf = estimate_frf(trial.channel("perturbation", ax), trial.channel("recorded", ax), spec, args.periods)
        write_json(out / f"frf_{ax}.json", frf.to_dict())
        write_frf_csv(out / f"frf_{ax}.csv", frf)
    print(f"wrote {out / 'frf_y.json'}, {out / 'frf_z.json'}")
    return 0


def cmd_fit(args) -> int:
    out = _out_dir(args)
    for path in args.frf:
        frf = read_frf(path)
        fs = args.sample_rate if args.sample_rate else frf.sample_rate
        if args.continuous:
            fs = None
        result = fit_bdft_model(frf, sample_rate=fs)
        stem = Path(path).stem
        tag = stem[4:] if stem.startswith("frf_") else stem
        write_json(out / f"params_{tag}.json", result.params.to_dict())
        write_json(out / f"fit_{tag}.json", result.to_dict())
        print(f"{tag}: G={result.params.gain:.6g} wn={result.params.natural_frequency:.6g} "
              f"zeta={result.params.damping_ratio:.6g} converged={result.converged}")
    return 0


def cmd_cancel(args) -> int:
    trial = read_trial_csv(args.trial)
    py, pz = read_params(args.params_y), read_params(args.params_z)
    uy, uz = cancel_batch(trial, py, pz)
    out = _out_dir(args)
    write_cancelled_csv(out / "cancelled.csv", uy.t, uy.samples, uz.samples)
    print(f"wrote {out / 'cancelled.csv'}")
    return 0


def cmd_stream_cancel(args, stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    params = {"y": read_params(args.params_y), "z": read_params(args.params_z)}
    fs = args.sample_rate
    cy, cz = make_canceller(params["y"], fs), make_canceller(params["z"], fs)
    stdout.write("t,ucan_y,ucan_z\n")
    for lineno, line in enumerate(stdin, start=1):
        line = line.strip()
        if not line:
            continue
        cells = line.split(",")
        if [c.strip() for c in cells] == STREAM_IN_COLUMNS:
            continue
        if len(cells) != 5:
            raise SchemaError(f"stdin line {lineno}: expected 5 fields t,fd_y,fd_z,u_y,u_z, got {len(cells)}")
        try:
            t, fdy, fdz, uy, uz = map(float, cells)
        except ValueError:
            raise SchemaError(f"stdin line {lineno}: non-numeric field") from None
        stdout.write(f"{t!r},{cy.push(fdy, uy)!r},{cz.push(fdz, uz)!r}\n")
    stdout.flush()
    return 0


def cmd_experiment(args) -> int:
    if args.preset:
        data, src, base = {"preset": args.preset}, f"preset {args.preset}", Path(".")
        if args.config:
            raise UsageError("give either --config or --preset, not both")
    else:
        data, src, base = _config(args)
    cfg = parse_experiment_config(data, src, base, args.seed)
    out = _out_dir(args, cfg.output_dir)
    result, plots = run_experiment(cfg)
    write_experiment(result, plots, out, cfg.sample_rate)
    s = result.summary
    if result.records:
        print(
            f"{s['n_participants']} participants: mean VAF individual {s['mean_vaf_individual']['mean']:.2f} %, "
            f"average {s['mean_vaf_average']['mean']:.2f} %, none {s['mean_vaf_none']['mean']:.2f} %"
        )
    if result.failures:
        print(f"error: {len(result.failures)} participant(s) failed; see {out / 'failures.json'}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the config seed")
    common.add_argument("--out-dir", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file")

    p = _Parser(prog="bdftkit", description="BDFT identification and cancellation toolkit")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--config", default=None)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-signal", parents=[common], help="generate a multisine perturbation")
    s.set_defaults(func=cmd_gen_signal)

    s = sub.add_parser("simulate", parents=[common], help="simulate one synthetic trial")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("identify", parents=[common], help="estimate FRFs from a trial CSV")
    s.add_argument("--trial", required=True)
    s.add_argument("--spec", required=True, help="multisine spec JSON (y axis, and z unless --spec-z)")
    s.add_argument("--spec-z")
    s.add_argument("--periods", type=int, default=None, help="segments for coherence weights")
    s.set_defaults(func=cmd_identify)

    s = sub.add_parser("fit", parents=[common], help="fit BDFT parameters to FRF files")
    s.add_argument("--frf", required=True, action="append", help="FRF JSON or CSV; repeatable")
    s.add_argument("--sample-rate", type=float, default=None,
                   help="fit the bilinear model at this rate (default: rate stored in the FRF JSON)")
    s.add_argument("--continuous", action="store_true", help="fit the continuous-time model")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("cancel", parents=[common], help="batch cancellation of a trial CSV")
    s.add_argument("--trial", required=True)
    s.add_argument("--params-y", required=True)
    s.add_argument("--params-z", required=True)
    s.set_defaults(func=cmd_cancel)

    s = sub.add_parser("stream-cancel", parents=[common], help="cancel t,fd_y,fd_z,u_y,u_z lines from stdin")
    s.add_argument("--params-y", required=True)
    s.add_argument("--params-z", required=True)
    s.add_argument("--sample-rate", type=float, required=True)
    s.set_defaults(func=cmd_stream_cancel)

    s = sub.add_parser("experiment", parents=[common], help="individual vs average model experiment")
    s.add_argument("--preset", choices=sorted(PRESETS), default=None)
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, SchemaError, UsageError, FileNotFoundError) as exc:
        print(f"error: {_one_line(exc)}", file=sys.stderr)
        return 2
    except (BdftError, ValueError, OSError, ArithmeticError) as exc:
        print(f"error: {_one_line(exc)}", file=sys.stderr)
        return 1


def _one_line(exc) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())
