"""Command-line front end: propagate, detect, mc, sweep, curve.

Exit codes: 0 success, 1 detection-pipeline failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import harness
from .dynamics import RK_SET_NAME, IntegrationError, jacobi_constant, propagate_many
from .harness import CASES, SWEEP_PARAMS, ConfigError, ScenarioConfig, atomic_write, dumps
from .indicator import CURVE_CSV_HEADER, MODES, CdmiCase, DetectionError
from .observation import ObservationSet
from .rpo import SubproblemError

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON scenario config (missing keys take the standard-case defaults)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key; repeatable")
    p.add_argument("--rk-set", choices=[RK_SET_NAME], default=None, help="RK7(8) coefficient family")


def _detector_args(p: argparse.ArgumentParser, default_mode: str) -> None:
    p.add_argument("--mode", choices=MODES, default=default_mode)
    p.add_argument("--alpha-x", type=float, default=None, help="state confidence for --mode single")
    p.add_argument("--trace", action="store_true", help="record per-iteration solver traces")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cdmi", description="Confidence-dominance maneuver detection")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("propagate", help="propagate a state and report it at given epochs")
    _common(p)
    p.add_argument("--state", help="JSON list of 6 nd components (default: target apolune)")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--epochs", required=True, help="JSON list of nd epochs, ascending or descending from t0")
    p.add_argument("--out", required=True)

    p = sub.add_parser("detect", help="run one detection")
    _common(p)
    _detector_args(p, "integrated-adaptive")
    p.add_argument("--case", choices=CASES, default="table4-maneuver")
    p.add_argument("--custom", help="JSON file with error[6], dv[3] (nd) and noise[2N] (rad) for --case custom")
    p.add_argument("--obs", help="observation file; the estimate is the configured nominal state")
    p.add_argument("--out", required=True)

    p = sub.add_parser("curve", help="export the alpha_x-alpha_z curve of one case")
    _common(p)
    _detector_args(p, "integrated-dense")
    p.add_argument("--case", choices=CASES, default="table4-maneuver")
    p.add_argument("--custom")
    p.add_argument("--obs")
    p.add_argument("--out", required=True)

    for name, help_text in (("mc", "Monte Carlo campaign"), ("sweep", "robustness sweep")):
        p = sub.add_parser(name, help=help_text)
        _common(p)
        _detector_args(p, "integrated-adaptive")
        p.add_argument("--runs", type=int, default=300, help="runs per class")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
        p.add_argument("--out", required=True, help="output directory, or a .json path for the summary")
        if name == "mc":
            p.add_argument("--dv-ms", type=float, default=None, help="maneuver magnitude (default: config dv_ms)")
            p.add_argument("--curves", action="store_true", help="also write per-run curves")
            p.add_argument("--sensitivity", action="store_true",
                           help="also write separation angles from the most sensitive direction")
        else:
            p.add_argument("--param", choices=SWEEP_PARAMS, required=True)
            p.add_argument("--values", required=True, help="JSON list of sweep values")
    return ap


def _load_cfg(args) -> ScenarioConfig:
    cfg = harness.load_config(args.config) if args.config else ScenarioConfig()
    overrides = list(args.overrides)
    if args.rk_set:
        overrides.append(f"rk_set={args.rk_set}")
    return cfg.with_overrides(overrides) if overrides else cfg


def _json_arg(text: str, what: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what}: {exc.msg} at column {exc.colno}") from None


def _check_alpha(args) -> None:
    if args.mode == "single":
        if args.alpha_x is None:
            raise UsageError("--mode single requires --alpha-x")
        if not 0.0 <= args.alpha_x <= 1.0:
            raise UsageError(f"--alpha-x must lie in [0, 1], got {args.alpha_x}")
    elif args.alpha_x is not None:
        raise UsageError(f"--alpha-x is only accepted with --mode single, not {args.mode}")


def _report_for(args, cfg: ScenarioConfig):
    if args.obs:
        obs = ObservationSet.load(args.obs)
        scn = harness.build_scenario(cfg)
        if tuple(obs.epochs) != tuple(scn.epochs):
            raise ConfigError(f"observation epochs {obs.epochs} differ from configured epochs {list(scn.epochs)}")
        case = CdmiCase(scn.meas, obs, scn.prior, cfg.eta, cfg.max_iter, cfg.mahalanobis_half, Path(args.obs).stem,
                        args.trace)
        rep = harness.run_detector(case, cfg, args.mode, args.alpha_x)
        rep.timings["expansion_s"] = scn.expansion_s
        return rep, Path(args.obs).stem
    custom = None
    if args.custom:
        custom = _json_arg(Path(args.custom).read_text(), args.custom)
    return harness.run_one(cfg, args.case, args.mode, args.alpha_x, custom, args.trace), args.case


def _campaign_paths(out: str, default_name: str) -> tuple[Path, Path, str]:
    """(main json path, directory, prefix for sibling files).

    ``--out results/`` writes standard names inside the directory; ``--out
    s.json`` writes ``s.json`` plus ``s.runs.csv`` and friends next to it.
    """
    p = Path(out)
    if p.suffix == ".json":
        return p, p.parent, p.stem + "."
    return p / default_name, p, ""


def cmd_propagate(args) -> int:
    cfg = _load_cfg(args)
    state = np.array(_json_arg(args.state, "--state") if args.state else cfg.target_apolune, dtype=float)
    if state.shape != (6,):
        raise UsageError("--state needs 6 components")
    epochs = [float(t) for t in _json_arg(args.epochs, "--epochs")]
    states = propagate_many(state, args.t0, epochs, cfg.params, cfg.tol)
    doc = {"t0": args.t0, "state0": state.tolist(), "epochs_nd": epochs, "states": states.tolist(),
           "jacobi": [jacobi_constant(s, cfg.params) for s in states], "config": cfg.to_dict()}
    atomic_write(args.out, dumps(doc))
    return EXIT_OK


def cmd_detect(args) -> int:
    _check_alpha(args)
    cfg = _load_cfg(args)
    rep, case_id = _report_for(args, cfg)
    doc = rep.to_json()
    doc["case"] = case_id
    doc["config"] = cfg.to_dict()
    atomic_write(args.out, dumps(doc))
    print(f"{case_id}: mode={rep.mode} flag={rep.flag}" + (f" P={rep.P:.4f}" if rep.P is not None else ""))
    return EXIT_OK


def cmd_curve(args) -> int:
    _check_alpha(args)
    cfg = _load_cfg(args)
    rep, case_id = _report_for(args, cfg)
    atomic_write(args.out, "\n".join([CURVE_CSV_HEADER] + rep.curve.csv_rows(case_id)) + "\n")
    return EXIT_OK


def cmd_mc(args) -> int:
    _check_alpha(args)
    cfg = _load_cfg(args)
    scn = harness.build_scenario(cfg)
    summary = harness.run_campaign(scn, args.runs, cfg.dv_ms if args.dv_ms is None else args.dv_ms, args.seed,
                                   args.mode, args.jobs, args.alpha_x, keep_curves=args.curves)
    main_path, out_dir, prefix = _campaign_paths(args.out, "summary.json")
    atomic_write(main_path, dumps(summary.to_json()))
    atomic_write(out_dir / f"{prefix}runs.csv", harness.runs_csv(summary))
    atomic_write(out_dir / f"{prefix}timings.json", dumps(summary.timings_json()))
    if args.curves:
        atomic_write(out_dir / f"{prefix}curves.csv", harness.curves_csv(summary))
    if args.sensitivity:
        atomic_write(out_dir / f"{prefix}sensitivity.csv",
                     harness.sensitivity_csv(harness.sensitivity_report(scn, summary)))
    d = summary.to_json()
    print(f"non-maneuver {d['accuracy_non_maneuver']}  maneuver {d['accuracy_maneuver']}  "
          f"overall {d['accuracy_overall']}  failed {d['failed_runs']}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    _check_alpha(args)
    cfg = _load_cfg(args)
    values = _json_arg(args.values, "--values")
    if not isinstance(values, list):
        raise UsageError("--values must be a JSON list")
    results = harness.run_sweep(cfg, args.param, values, args.runs, args.seed, args.mode, args.jobs, args.alpha_x)
    main_path, out_dir, prefix = _campaign_paths(args.out, "sweep.json")
    table = []
    for v, s in results:
        d = s.to_json()
        d.pop("config")
        table.append({"value": v, **d})
        atomic_write(out_dir / f"{prefix}runs_{args.param}_{v:g}.csv", harness.runs_csv(s))
    doc = {"param": args.param, "values": [v for v, _ in results], "points": table, "config": cfg.to_dict(),
           "rk_set": cfg.rk_set}
    atomic_write(main_path, dumps(doc))
    return EXIT_OK


COMMANDS = {"propagate": cmd_propagate, "detect": cmd_detect, "curve": cmd_curve, "mc": cmd_mc, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DetectionError, IntegrationError, SubproblemError, ArithmeticError, ValueError) as exc:
        print(f"detection failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
