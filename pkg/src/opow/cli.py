"""Command-line front end.

Subcommands: simulate (trajectory ensemble), oracle (master-equation
series on the same grid and CSV schema), cumulants (sigma-noise cumulant
table), compare (two series CSVs), scan-dt (sampling-variance growth).

Configuration is a YAML file with sections model / run / initial / oracle;
command-line --set key=value overrides take precedence and the fully
resolved configuration is echoed into each run's JSON metadata sidecar,
from which the run can be reproduced exactly.

Exit codes: 0 success, 2 validation error, 3 numerical failure (total
divergence or truncation breach), 4 comparison failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np
import yaml

from .ensemble import RunConfig, compare_series, divergence_scan, run_ensemble
from .errors import OracleInvariantError, ValidationError
from .integrators import InitialStateSpec, StepConfig
from .io import (
    atomic_write_text,
    cumulants_to_csv,
    read_series_csv,
    run_metadata,
    write_metadata,
    write_series_csv,
)
from .model import ModelParams
from .noise import RngStream, draw_sigma, empirical_cumulants, optimal_sigma_params
from .oracle import TRUNCATION_TOL, oracle_series

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_COMPARISON = 4

# section -> field -> (type, default); REQUIRED means no default.
REQUIRED = object()
CONFIG_SCHEMA = {
    "model": {
        "kappa": (float, REQUIRED),
        "gamma1": (float, REQUIRED),
        "gamma2": (float, REQUIRED),
        "epsilon_re": (float, REQUIRED),
        "epsilon_im": (float, 0.0),
    },
    "run": {
        "representation": (str, REQUIRED),
        "dt": (float, REQUIRED),
        "t_end": (float, REQUIRED),
        "n_traj": (int, REQUIRED),
        "record_every": (int, 1),
        "seed": (int, 0),
        "chi": (float, 0.33),
    },
    "initial": {
        "mode": (str, "coherent"),
        "alpha0_re": (float, 0.0),
        "alpha0_im": (float, 0.0),
        "beta0_re": (float, 0.0),
        "beta0_im": (float, 0.0),
    },
    "oracle": {
        "n_a": (int, 15),
        "n_b": (int, 10),
        "dt": (float, 1e-3),
    },
}


def load_config(path: str, overrides) -> dict:
    """Read the YAML config, apply key=value overrides, fill defaults and
    type-check everything against the schema."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ValidationError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValidationError(f"config {path} must be a mapping of sections")
    for item in overrides or ():
        if "=" not in item:
            raise ValidationError(f"override {item!r} is not of the form section.key=value")
        dotted, value = item.split("=", 1)
        parts = dotted.strip().split(".")
        if len(parts) != 2:
            raise ValidationError(f"override key {dotted!r} must be section.key")
        sec, key = parts
        raw.setdefault(sec, {})
        if not isinstance(raw[sec], dict):
            raise ValidationError(f"config section {sec!r} is not a mapping")
        raw[sec][key] = yaml.safe_load(value)

    resolved = {}
    for sec, fields in CONFIG_SCHEMA.items():
        given = raw.pop(sec, {})
        if not isinstance(given, dict):
            raise ValidationError(f"config section {sec!r} must be a mapping")
        out = {}
        for key, (typ, default) in fields.items():
            if key in given:
                val = given.pop(key)
                try:
                    out[key] = typ(val)
                except (TypeError, ValueError) as exc:
                    raise ValidationError(
                        f"config {sec}.{key}={val!r} is not a valid {typ.__name__}"
                    ) from exc
            elif default is REQUIRED:
                raise ValidationError(f"config is missing required field {sec}.{key}")
            else:
                out[key] = default
        if given:
            raise ValidationError(
                f"unknown field(s) in config section {sec!r}: {sorted(given)}"
            )
        resolved[sec] = out
    if raw:
        raise ValidationError(f"unknown config section(s): {sorted(raw)}")
    return resolved


def build_run_config(cfg: dict) -> RunConfig:
    model = ModelParams(
        kappa=cfg["model"]["kappa"],
        gamma1=cfg["model"]["gamma1"],
        gamma2=cfg["model"]["gamma2"],
        epsilon=complex(cfg["model"]["epsilon_re"], cfg["model"]["epsilon_im"]),
    )
    step = StepConfig(dt=cfg["run"]["dt"], representation=cfg["run"]["representation"])
    initial = InitialStateSpec(
        mode=cfg["initial"]["mode"],
        alpha0=complex(cfg["initial"]["alpha0_re"], cfg["initial"]["alpha0_im"]),
        beta0=complex(cfg["initial"]["beta0_re"], cfg["initial"]["beta0_im"]),
    )
    return RunConfig(
        model=model,
        step=step,
        initial=initial,
        n_traj=cfg["run"]["n_traj"],
        t_end=cfg["run"]["t_end"],
        record_every=cfg["run"]["record_every"],
        seed=cfg["run"]["seed"],
        chi=cfg["run"]["chi"],
    )


def _out_paths(args, base: str):
    base = args.output_name or base
    d = args.output_dir
    return os.path.join(d, base + ".csv"), os.path.join(d, base + ".meta.json")


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.seed is not None:
        cfg["run"]["seed"] = int(args.seed)
    run_cfg = build_run_config(cfg)
    run_cfg.resolved_sigma()  # sigma validation before any compute
    t0 = time.perf_counter()
    series = run_ensemble(run_cfg, backend=args.backend)
    wall = time.perf_counter() - t0
    csv_path, meta_path = _out_paths(args, "series")
    write_series_csv(csv_path, series)
    meta = run_metadata(cfg, seed=run_cfg.seed, wall_time_s=wall, extra={
        "diverged_fraction": float(series.diverged_fraction[-1]),
        "truncated": bool(series.truncated),
        "n_recorded": int(len(series.times)),
    })
    write_metadata(meta_path, meta)
    print(f"wrote {csv_path} ({len(series.times)} grid points, "
          f"diverged {series.diverged_fraction[-1]:.3%}, {wall:.1f}s)")
    if series.truncated:
        print("error: all trajectories diverged before t_end; series is truncated",
              file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = load_config(args.config, args.set)
    model = ModelParams(
        kappa=cfg["model"]["kappa"],
        gamma1=cfg["model"]["gamma1"],
        gamma2=cfg["model"]["gamma2"],
        epsilon=complex(cfg["model"]["epsilon_re"], cfg["model"]["epsilon_im"]),
    )
    run = cfg["run"]
    nsteps = int(np.floor(run["t_end"] / run["dt"] + 1e-9))
    n_rec = nsteps // run["record_every"] + 1
    times = np.arange(n_rec) * (run["dt"] * run["record_every"])
    t0 = time.perf_counter()
    series = oracle_series(
        model,
        alpha0=complex(cfg["initial"]["alpha0_re"], cfg["initial"]["alpha0_im"]),
        beta0=complex(cfg["initial"]["beta0_re"], cfg["initial"]["beta0_im"]),
        dims=(cfg["oracle"]["n_a"], cfg["oracle"]["n_b"]),
        dt=cfg["oracle"]["dt"],
        times=times,
        truncation_tol=args.truncation_tol,
    )
    wall = time.perf_counter() - t0
    csv_path, meta_path = _out_paths(args, "oracle")
    write_series_csv(csv_path, series)
    write_metadata(meta_path, run_metadata(cfg, seed=run["seed"], wall_time_s=wall,
                                           extra={"truncation_tol": args.truncation_tol,
                                                  "diverged_fraction": 0.0}))
    print(f"wrote {csv_path} ({len(series.times)} grid points, {wall:.1f}s)")
    return EXIT_OK


def cmd_cumulants(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.samples < 10_000:
        raise ValidationError(f"--samples must be >= 10^4, got {args.samples}")
    kappa = cfg["model"]["kappa"]
    params = optimal_sigma_params(kappa, cfg["run"]["chi"])
    stream = RngStream(cfg["run"]["seed"] if args.seed is None else args.seed)
    t0 = time.perf_counter()
    samples = draw_sigma(params, stream, n=args.samples)
    table = empirical_cumulants(samples)
    wall = time.perf_counter() - t0
    csv_path, meta_path = _out_paths(args, "cumulants")
    atomic_write_text(csv_path, cumulants_to_csv(table, kappa))
    write_metadata(meta_path, run_metadata(cfg, seed=stream.seed, wall_time_s=wall,
                                           extra={"n_samples": args.samples}))
    print(f"wrote {csv_path} ({args.samples} samples, {wall:.1f}s)")
    return EXIT_OK


def cmd_compare(args) -> int:
    a = read_series_csv(args.series_a)
    b = read_series_csv(args.series_b)
    result = compare_series(a, b, observable=args.observable,
                            zero_error_atol=args.zero_error_atol)
    passed = result.passes(args.threshold)
    report = {
        "observable": result.observable,
        "max_normalized_deviation": result.max_deviation,
        "argmax_time": result.argmax_time,
        "threshold": args.threshold,
        "passed": passed,
        "series_a": args.series_a,
        "series_b": args.series_b,
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.report:
        atomic_write_text(args.report, text + "\n")
    return EXIT_OK if passed else EXIT_COMPARISON


def cmd_scan_dt(args) -> int:
    cfg = load_config(args.config, args.set)
    if args.seed is not None:
        cfg["run"]["seed"] = int(args.seed)
    base = build_run_config(cfg)
    dt_list = [float(v) for v in args.dt_list.split(",") if v.strip()]
    t0 = time.perf_counter()
    scan = divergence_scan(base, dt_list, disable_sigma=args.no_sigma,
                           backend=args.backend)
    wall = time.perf_counter() - t0
    csv_path, meta_path = _out_paths(args, "scan")
    lines = ["dt,variance,scaled_variance,diverged_fraction,flagged"]
    for pt in scan.points:
        lines.append(f"{pt.dt:.17g},{pt.variance:.17g},{pt.scaled_variance:.17g},"
                     f"{pt.diverged_fraction:.17g},{int(pt.flagged)}")
    atomic_write_text(csv_path, "\n".join(lines) + "\n")
    write_metadata(meta_path, run_metadata(cfg, seed=base.seed, wall_time_s=wall, extra={
        "slope": scan.slope,
        "dt_list": dt_list,
        "sigma_disabled": bool(args.no_sigma),
    }))
    print(f"wrote {csv_path}; log-log slope of variance*n vs dt: {scan.slope:+.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="opow", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        if needs_config:
            p.add_argument("-c", "--config", required=True, help="YAML config file")
            p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                           help="override a config value (repeatable)")
            p.add_argument("--seed", type=int, default=None, help="override run.seed")
        p.add_argument("-o", "--output-dir", default=".", help="output directory")
        p.add_argument("--output-name", default=None, help="basename for outputs")

    p = sub.add_parser("simulate", help="run a trajectory ensemble")
    add_common(p)
    p.add_argument("--backend", choices=("numba", "numpy"), default=None)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("oracle", help="run the master-equation oracle on the run grid")
    add_common(p)
    p.add_argument("--truncation-tol", type=float, default=TRUNCATION_TOL,
                   help="cutoff-population budget before the run aborts")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("cumulants", help="sigma-noise cumulant table")
    add_common(p)
    p.add_argument("--samples", type=int, default=1_000_000)
    p.set_defaults(fn=cmd_cumulants)

    p = sub.add_parser("compare", help="compare two series CSVs")
    p.add_argument("series_a")
    p.add_argument("series_b")
    p.add_argument("--observable", default="Xa")
    p.add_argument("--threshold", type=float, default=3.0)
    p.add_argument("--zero-error-atol", type=float, default=0.0,
                   help="absolute agreement allowed where both errors are zero")
    p.add_argument("--report", default=None, help="also write the JSON report here")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("scan-dt", help="variance growth against time step")
    add_common(p)
    p.add_argument("--dt-list", required=True,
                   help="comma-separated dt values, e.g. 0.02,0.01,0.005,0.0025")
    p.add_argument("--no-sigma", action="store_true",
                   help="disable the third-order noise (Wiener part only)")
    p.add_argument("--backend", choices=("numba", "numpy"), default=None)
    p.set_defaults(fn=cmd_scan_dt)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OracleInvariantError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
