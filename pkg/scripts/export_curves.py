"""Dense alpha_x -> alpha_z curves of the one-run cases, for plotting."""
import argparse

from cdmi import harness
from cdmi.harness import ScenarioConfig
from cdmi.indicator import CURVE_CSV_HEADER


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grid-step", type=float, default=0.01)
    ap.add_argument("--out", default="results/curves.csv")
    args = ap.parse_args()
    cfg = ScenarioConfig(grid_step=args.grid_step)
    rows = [CURVE_CSV_HEADER]
    for case in ("table4-nonmaneuver", "table4-maneuver"):
        rep = harness.run_one(cfg, case, "integrated-dense")
        rows += rep.curve.csv_rows(case)
        print(f"{case}: P={rep.P:.4f}, monotone violations {rep.diagnostics['monotone_violations']}")
    harness.atomic_write(args.out, "\n".join(rows) + "\n")


if __name__ == "__main__":
    main()
