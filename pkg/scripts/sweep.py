"""Grid sweep over simulator / experiment settings; one summary line per grid point.

    python scripts/sweep.py '{"feature_noise": [0.1, 0.5], "regressor": ["ridge", "knn"]}' --repeats 30
"""
import argparse
import itertools
import json

import numpy as np

from run_bench import build_config
from ulda.harness import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("grid", help="JSON object mapping field name -> list of values")
    ap.add_argument("--repeats", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    grid = json.loads(args.grid)
    keys = list(grid)
    for values in itertools.product(*grid.values()):
        pairs = [f"{k}={json.dumps(v)}" for k, v in zip(keys, values)]
        cfg = build_config(pairs, args.repeats, args.seed)
        rep = run_experiment(cfg)
        s = rep["summary"]
        added = np.mean([
            r["strategies"]["tns+cwl"]["frames_added"] / r["strategies"]["baseline"]["train_frames"]
            for r in rep["runs"]
        ]) if "tns+cwl" in cfg.strategies else 0.0
        cells = "  ".join(
            f"{k}: {s[k]['mse_mean']:.5f} ({s[k].get('wins_vs_baseline', '-')})"
            for k in cfg.strategies
        )
        print(f"{dict(zip(keys, values))}  {cells}  range base/tns "
              f"{s['baseline']['mean_bin_mse_range']:.4f}/{s.get('tns+cwl', s['baseline'])['mean_bin_mse_range']:.4f}  "
              f"conv {s['distribution_pcc']['convolution_wins']}  added {added:.3f}", flush=True)


if __name__ == "__main__":
    main()
