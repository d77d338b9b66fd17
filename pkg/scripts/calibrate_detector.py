#!/usr/bin/env python3
"""Trigger rate and chi-square fit of the change test under an exactly matched model.

    python3 scripts/calibrate_detector.py --runs 3 --p-fa 0.05
"""

import argparse
import sys

import numpy as np
from scipy import stats

from nlos_track.calibration import MatchedModelConfig, matched_model_run


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--p-fa", type=float, default=0.05)
    p.add_argument("--paths", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    cfg = MatchedModelConfig(n_steps=args.steps, p_fa=args.p_fa, num_paths=args.paths)
    seeds = np.random.SeedSequence(args.seed).spawn(args.runs)
    print(f"{'run':>3s}  {'rate':>7s}  {'mean':>8s}  {'dof':>5s}  {'KS':>6s}")
    for k, s in enumerate(seeds):
        r = matched_model_run(cfg, np.random.default_rng(s))
        ks = stats.kstest(r.statistics, "chi2", args=(r.dof,)).statistic
        print(f"{k:3d}  {r.trigger_rate:7.4f}  {r.statistics.mean():8.1f}  {r.dof:5d}  {ks:6.3f}", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
