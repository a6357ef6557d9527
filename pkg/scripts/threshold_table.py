"""Accuracy of a finished campaign at several decision thresholds, from its runs.csv."""
import argparse
from pathlib import Path

from cdmi.harness import read_runs_csv
from cdmi.indicator import threshold_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("runs_csv")
    ap.add_argument("--thresholds", type=float, nargs="+", default=[0.3, 0.4, 0.5, 0.6, 0.7])
    args = ap.parse_args()
    recs = [r for r in read_runs_csv(Path(args.runs_csv).read_text()) if r.status == "ok"]
    for row in threshold_sweep([r.P for r in recs], [r.cls == "maneuver" for r in recs], args.thresholds):
        print(f"threshold {row['threshold']:.2f}: non-maneuver {row['accuracy_non_maneuver']:.4f}  "
              f"maneuver {row['accuracy_maneuver']:.4f}  overall {row['accuracy_overall']:.4f}")


if __name__ == "__main__":
    main()
