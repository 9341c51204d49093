"""AP-count mode per user count across drop seeds (no failures, multi-AP)."""
import argparse

from owcnet.channel import build_channel_tensor
from owcnet.scenario import DropPlan, run_experiment

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--drops", type=int, default=20)
    args = ap.parse_args()
    ch = build_channel_tensor()
    print("seed  " + "  ".join(f"n={n}" for n in range(1, 8)))
    for seed in range(1, args.seeds + 1):
        modes = [run_experiment(ch, DropPlan(seed, n, args.drops)).ap_count_mode for n in range(1, 8)]
        print(f"{seed:4d}  " + "  ".join(f"{m:3d}" for m in modes))
