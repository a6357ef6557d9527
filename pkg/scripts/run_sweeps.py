"""Accuracy against maneuver size and against prior / noise covariance scaling."""
import argparse
import os
from pathlib import Path

from cdmi import harness
from cdmi.harness import ScenarioConfig

DEFAULT_VALUES = {
    "dv": [0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0],
    "p0_scale_exp": [-2.0, -1.0, 0.0, 1.0, 2.0],
    "r_scale_exp": [-2.0, -1.0, 0.0, 1.0, 2.0],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--params", nargs="+", choices=harness.SWEEP_PARAMS, default=list(harness.SWEEP_PARAMS))
    ap.add_argument("--runs", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out", default="results/sweeps")
    args = ap.parse_args()
    cfg = ScenarioConfig()
    scn = harness.build_scenario(cfg)
    lines = ["param,value,accuracy_non_maneuver,accuracy_maneuver,accuracy_overall,failed"]
    for param in args.params:
        for v, s in harness.run_sweep(cfg, param, DEFAULT_VALUES[param], args.runs, args.seed, jobs=args.jobs,
                                      scenario=scn):
            row = f"{param},{v:g},{s.accuracy_non_maneuver:.4f},{s.accuracy_maneuver:.4f},{s.accuracy_overall:.4f},{s.n_failed}"
            print(row)
            lines.append(row.replace("nan", ""))
    harness.atomic_write(Path(args.out) / "sweeps.csv", "\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
