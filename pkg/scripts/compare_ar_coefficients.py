#!/usr/bin/env python3
"""Error CDFs of the two-stage tracker for several AR(1) coefficients of the channel filter.

The scenes and noise are the same for every coefficient (same seeds), so the
tables are paired.

    python3 scripts/compare_ar_coefficients.py --seeds 20 --a1 1.0 0.95
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from nlos_track.config import load_config
from nlos_track.pipeline import compare_ar_coefficients
from nlos_track.reports import CdfTable, bundle_json

POINTS = (0.25, 0.5, 1, 1.5, 2, 3, 5, 10)


def _config(args):
    cfg = load_config(args.config)
    return cfg if args.steps is None else replace(cfg, n_steps=args.steps)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--steps", type=int, default=None, help="override n_steps")
    p.add_argument("--a1", type=float, nargs="+", default=[1.0, 0.95])
    p.add_argument("--out", type=Path, default=None, help="directory for one bundle per coefficient")
    args = p.parse_args(argv)

    bundles = compare_ar_coefficients(_config(args), args.seeds, tuple(args.a1))
    tables = {}
    for a1, b in bundles.items():
        c = b["modes"]["two_stage"]["cdf"]
        tables[a1] = CdfTable(*map(list, (c["error_m"], c["cdf"])))
        if args.out:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / f"a1_{a1:g}.json").write_text(bundle_json(b))

    print("two-stage error CDF")
    print("error_m  " + "  ".join(f"a1={a:<8g}" for a in tables))
    for x in POINTS:
        print(f"{x:7g}  " + "  ".join(f"{t.at(x):11.4f}" for t in tables.values()))
    print("median   " + "  ".join(f"{bundles[a]['modes']['two_stage']['median']:11.3f}" for a in tables))
    print("p90      " + "  ".join(f"{bundles[a]['modes']['two_stage']['p90']:11.3f}" for a in tables))
    rates = {a: bundles[a]["detection"]["false_alarm_rate"] for a in tables}
    print("false alarms per tested step: " + json.dumps({f"{a:g}": round(r, 4) for a, r in rates.items()}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
