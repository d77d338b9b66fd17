#!/usr/bin/env python3
"""Paired two-stage / single-stage campaign at a given configuration.

    python3 scripts/run_campaign.py --seeds 20 --out out/campaign.json
"""

import argparse
import sys
from dataclasses import replace
import time
from pathlib import Path

from nlos_track.config import load_config
from nlos_track.pipeline import run_campaign
from nlos_track.reports import bundle_json, cdf_table_text


def _config(args):
    cfg = load_config(args.config)
    return cfg if args.steps is None else replace(cfg, n_steps=args.steps)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--steps", type=int, default=None, help="override n_steps")
    p.add_argument("--out", type=Path, default=Path("out/campaign.json"))
    args = p.parse_args(argv)

    cfg = _config(args)
    t0 = time.perf_counter()
    bundle = run_campaign(cfg, args.seeds)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(bundle_json(bundle))

    two, one = bundle["modes"]["two_stage"], bundle["modes"]["single_stage"]
    wins = sum(two["per_seed_median"][s] <= one["per_seed_median"][s] for s in two["per_seed_median"])
    print(f"{args.seeds} seeds in {time.perf_counter() - t0:.0f} s")
    print(f"median error: two-stage {two['median']:.3f} m, single-stage {one['median']:.3f} m; "
          f"two-stage better on {wins}/{args.seeds} seeds")
    print(cdf_table_text(bundle), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
