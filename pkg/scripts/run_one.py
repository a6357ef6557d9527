"""Both one-run cases with the adaptive and dense integrated indicators."""
import argparse
import json

from cdmi import harness
from cdmi.harness import ScenarioConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--narrow", choices=["skip", "stop"], default="skip")
    ap.add_argument("--out", default="results/one_run.json")
    args = ap.parse_args()
    cfg = ScenarioConfig(adaptive_narrow=args.narrow)
    rows = {}
    for case in ("table4-nonmaneuver", "table4-maneuver"):
        ad = harness.run_one(cfg, case, "integrated-adaptive")
        de = harness.run_one(cfg, case, "integrated-dense")
        rows[case] = {"P_adaptive": ad.P, "samples": len(ad.curve), "P_dense": de.P, "flag": ad.flag,
                      "adaptive_curve": ad.to_json(include_timings=False)["curve"]}
        print(f"{case:20s} adaptive P={ad.P:.4f} ({len(ad.curve)} samples)  dense P={de.P:.4f}  "
              f"|diff|={abs(ad.P - de.P):.4f}")
    harness.atomic_write(args.out, harness.dumps(rows))


if __name__ == "__main__":
    main()
