"""Command-line front end.

    nlos-track simulate        one seed, writes traces and a run summary
    nlos-track campaign        consecutive seeds, writes the aggregate bundle
    nlos-track report          rebuild a bundle from stored traces
    nlos-track validate-config parse a config and echo it with derived values
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, dump_config, effective_config, load_config
from .kalman import FilterDiagnosticError
from .pipeline import MODES, RunConfig, run_campaign_results, simulate
from .reports import (bundle_json, build_bundle, cdf_table_text, records_from_path, write_channel_csv,
                      write_position_csv, write_records_csv)
from .scene import GeometryError, write_scene_csv

def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "mode", None) is not None:
        cfg = replace(cfg, mode=args.mode)
    if getattr(args, "steps", None) is not None:
        cfg = replace(cfg, n_steps=args.steps)
    if getattr(args, "snr_db", None) is not None:
        cfg = replace(cfg, snr_db=args.snr_db)
    if getattr(args, "a1", None) is not None:
        coeffs = [args.a1] + list(cfg.process.ar_coeffs[1:])
        cfg = replace(cfg, process=replace(cfg.process, ar_coeffs=coeffs))
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(f"invalid configuration after command-line overrides: {exc}") from exc
    return cfg


def _write_run(result, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_records_csv(result.records, out / "steps.csv")
    write_channel_csv(result.channel, out / "channel.csv")
    write_scene_csv(result.frames, out / "scene.csv")
    write_position_csv(result.kf_means, out / "position.csv")


def cmd_simulate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out = Path(args.out)
    t0 = time.perf_counter()
    result = simulate(cfg)
    _write_run(result, out)
    (out / "config.yaml").write_text(dump_config(cfg))
    bundle = build_bundle(result.records, cfg.reacq_deadline)
    (out / "summary.json").write_text(bundle_json(bundle))
    s = bundle["modes"][cfg.mode]
    print(f"seed {cfg.seed} {cfg.mode}: {len(result.records)} steps in {time.perf_counter() - t0:.1f} s, "
          f"median {s['median']:.3f} m, p90 {s['p90']:.3f} m -> {out}")
    return 0


def cmd_campaign(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    results = run_campaign_results(cfg, args.seeds)
    records = []
    for seed, per_mode in results.items():
        for mode, res in per_mode.items():
            records.extend(res.records)
            if args.traces:
                _write_run(res, out / "traces" / f"seed_{seed:04d}" / mode)
    write_records_csv(records, out / "steps.csv")
    (out / "config.yaml").write_text(dump_config(cfg))
    bundle = build_bundle(records, cfg.reacq_deadline)
    (out / "campaign.json").write_text(bundle_json(bundle))
    print(f"{args.seeds} seeds in {time.perf_counter() - t0:.1f} s -> {out}")
    _print_summary(bundle)
    return 0


def _print_summary(bundle: dict) -> None:
    for mode, s in bundle["modes"].items():
        if s["median"] is None:
            print(f"{mode:>13s}: no finite errors")
            continue
        print(f"{mode:>13s}: median {s['median']:.3f} m  p90 {s['p90']:.3f} m  p95 {s['p95']:.3f} m")
    a = bundle["angle_mse"]["within_epoch"]
    if a["aod"] is not None:
        print(f"within-epoch angle MSE: AoD {a['aod']:.3e} rad^2, AoA {a['aoa']:.3e} rad^2")
    d = bundle["detection"]
    if d["boundaries"]:
        print(f"epoch boundaries detected within {d['deadline']} steps: {d['detected_within_deadline']}"
              f"/{d['boundaries']}")
    print(cdf_table_text(bundle), end="")


def cmd_report(args) -> int:
    path = Path(args.traces)
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such trace file or directory")
    deadline = args.deadline
    if deadline is None:
        deadline = load_config(args.config).reacq_deadline
    records = records_from_path(path)
    if not records:
        print(f"error: {path}: no records", file=sys.stderr)
        return 1
    bundle = build_bundle(records, deadline)
    text = bundle_json(bundle)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        _print_summary(bundle)
    else:
        sys.stdout.write(text)
    return 0


def cmd_validate_config(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    sys.stdout.write(dump_config(cfg))
    print("derived:")
    for key, value in effective_config(cfg)["derived"].items():
        print(f"  {key}: {value!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlos-track", description="Two-stage NLoS positioning simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None, help="YAML run configuration (default: built-in)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--mode", choices=MODES, default=None)
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--snr-db", dest="snr_db", type=float, default=None)
        p.add_argument("--a1", type=float, default=None, help="first AR coefficient of the channel filter")

    p = sub.add_parser("simulate", help="run one seed and write traces")
    common(p)
    p.add_argument("--out", default="out/simulate")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("campaign", help="run consecutive seeds in both modes")
    common(p)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--out", default="out/campaign")
    p.add_argument("--traces", action="store_true", help="also write per-seed trace directories")
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("report", help="rebuild the summary bundle from steps.csv traces")
    p.add_argument("traces", help="a steps.csv file or a directory searched for them")
    p.add_argument("--config", type=Path, default=None, help="source of the detection deadline")
    p.add_argument("--deadline", type=int, default=None)
    p.add_argument("--out", default=None, help="bundle JSON path (default: stdout)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("validate-config", help="parse a config and echo it with derived quantities")
    common(p)
    p.set_defaults(func=cmd_validate_config)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, FilterDiagnosticError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
