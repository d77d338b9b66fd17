"""Error CDFs, summary bundles and trace files.

Trace CSVs store floats with ``repr`` so re-reading them gives the same
doubles, and every aggregate below is a deterministic reduction over records
sorted by ``(mode, seed, t)``.  Rebuilding a bundle from stored traces is
therefore bit-identical to the bundle written at campaign time.
"""

from __future__ import annotations

import csv
import json
import math
import typing
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .pipeline import StepRecord

SCHEMA_VERSION = 1
QUANTILES = {"median": 0.5, "p90": 0.9, "p95": 0.95}


class CdfTable(NamedTuple):
    error_m: np.ndarray
    cdf: np.ndarray

    def at(self, x: float) -> float:
        """Empirical CDF evaluated at ``x``."""
        k = np.searchsorted(self.error_m, x, side="right")
        return 0.0 if k == 0 else float(self.cdf[k - 1])


def compute_cdf(errors: Iterable[float]) -> CdfTable:
    """Empirical CDF at the sorted unique error values; the last entry is 1."""
    e = np.asarray(list(errors), dtype=float)
    if e.size == 0:
        raise ValueError("cannot build a CDF from no errors")
    if not np.all(np.isfinite(e)):
        raise ValueError("errors must be finite")
    values, counts = np.unique(e, return_counts=True)
    cdf = np.cumsum(counts) / e.size
    cdf[-1] = 1.0
    return CdfTable(values, cdf)


def quantile(errors: Sequence[float], q: float) -> float:
    """Smallest sample whose empirical CDF reaches ``q``."""
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise ValueError("cannot take a quantile of no errors")
    return float(np.quantile(e, q, method="inverted_cdf"))


def _finite_or_none(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _sorted(records: Iterable[StepRecord]) -> list:
    return sorted(records, key=lambda r: (r.mode, r.seed, r.t))


def _channel_records(records: list) -> list:
    """One record per ``(seed, t)``: the channel stage is shared by all modes."""
    seen, out = set(), []
    for r in records:
        if (r.seed, r.t) not in seen:
            seen.add((r.seed, r.t))
            out.append(r)
    return sorted(out, key=lambda r: (r.seed, r.t))


def _by_seed(records: list) -> dict:
    out: dict = {}
    for r in records:
        out.setdefault(r.seed, []).append(r)
    return out


def mode_summary(records: list) -> dict:
    errs = np.array([r.position_error for r in records], dtype=float)
    ok = errs[np.isfinite(errs)]
    out = {"n_steps": int(errs.size), "n_failed": int(errs.size - ok.size)}
    if ok.size == 0:
        out.update({k: None for k in QUANTILES}, mean=None, cdf={"error_m": [], "cdf": []}, per_seed_median={})
        return out
    for name, q in QUANTILES.items():
        out[name] = quantile(ok, q)
    out["mean"] = float(np.mean(ok))
    per_seed = {}
    for seed, rs in _by_seed(records).items():
        e = np.array([r.position_error for r in rs], dtype=float)
        e = e[np.isfinite(e)]
        per_seed[str(seed)] = quantile(e, 0.5) if e.size else None
    out["per_seed_median"] = per_seed
    table = compute_cdf(ok)
    out["cdf"] = {"error_m": table.error_m.tolist(), "cdf": table.cdf.tolist()}
    return out


def tracked_mask(records: list) -> np.ndarray:
    """Steps of an epoch from its first re-acquisition on (one seed, time order)."""
    mask = np.zeros(len(records), dtype=bool)
    acquired_epoch = None
    for k, r in enumerate(records):
        if r.reacquired:
            acquired_epoch = r.epoch_id
        mask[k] = acquired_epoch == r.epoch_id
    return mask


def angle_mse(records: list) -> dict:
    """Per-step MSE averaged over seeds, and the pooled within-epoch means."""
    chan = _channel_records(records)
    per_t: dict = {}
    tracked_aod, tracked_aoa = [], []
    for _, rs in sorted(_by_seed(chan).items()):
        mask = tracked_mask(rs)
        for r, m in zip(rs, mask):
            per_t.setdefault(r.t, []).append((r.aod_se, r.aoa_se))
            if m:
                tracked_aod.append(r.aod_se)
                tracked_aoa.append(r.aoa_se)
    steps = sorted(per_t)
    return {
        "t": steps,
        "aod": [float(np.mean([a for a, _ in per_t[t]])) for t in steps],
        "aoa": [float(np.mean([b for _, b in per_t[t]])) for t in steps],
        "within_epoch": {
            "n_steps": len(tracked_aod),
            "aod": float(np.mean(tracked_aod)) if tracked_aod else None,
            "aoa": float(np.mean(tracked_aoa)) if tracked_aoa else None,
        },
    }


def detection_stats(records: list, deadline: int) -> dict:
    """Epoch-boundary detection and false alarms of the change test.

    A boundary at step ``k`` counts as detected when the tracker re-acquires
    at one of the steps ``k .. k + deadline - 1``.  Triggers outside those
    windows are false alarms; the rate divides by the tested steps outside
    the windows.
    """
    if deadline < 1:
        raise ValueError("deadline must be >= 1")
    chan = _channel_records(records)
    boundaries = detected = false_alarms = tested = triggers = 0
    for _, rs in sorted(_by_seed(chan).items()):
        n = len(rs)
        window = np.zeros(n, dtype=bool)
        for k in range(1, n):
            if rs[k].epoch_id != rs[k - 1].epoch_id:
                boundaries += 1
                window[k:k + deadline] = True
                if any(r.reacquired for r in rs[k:k + deadline]):
                    detected += 1
        for k, r in enumerate(rs):
            if not math.isfinite(r.nis):
                continue
            triggers += bool(r.triggered)
            if not window[k]:
                tested += 1
                false_alarms += bool(r.triggered)
    return {
        "deadline": deadline,
        "boundaries": boundaries,
        "detected_within_deadline": detected,
        "detection_rate": detected / boundaries if boundaries else None,
        "triggers": triggers,
        "false_alarms": false_alarms,
        "tested_steps": tested,
        "false_alarm_rate": false_alarms / tested if tested else None,
    }


def build_bundle(records: Iterable[StepRecord], deadline: int = 3) -> dict:
    records = _sorted(records)
    if not records:
        raise ValueError("no records")
    modes = sorted({r.mode for r in records})
    return {
        "schema_version": SCHEMA_VERSION,
        "n_records": len(records),
        "seeds": sorted({r.seed for r in records}),
        "modes": {m: mode_summary([r for r in records if r.mode == m]) for m in modes},
        "angle_mse": angle_mse(records),
        "detection": detection_stats(records, deadline),
    }


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float):
        return _finite_or_none(obj)
    return obj


def bundle_json(bundle: dict) -> str:
    return json.dumps(_json_safe(bundle), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_bundle(bundle: dict, path) -> None:
    Path(path).write_text(bundle_json(bundle))


def cdf_table_text(bundle: dict, points: Sequence[float] = (0.5, 1, 2, 3, 5, 10, 20)) -> str:
    """Plain-text CDF of each mode at a few error levels."""
    modes = list(bundle["modes"])
    lines = ["error_m  " + "  ".join(f"{m:>12s}" for m in modes)]
    tables = {}
    for m in modes:
        c = bundle["modes"][m]["cdf"]
        tables[m] = CdfTable(np.asarray(c["error_m"]), np.asarray(c["cdf"])) if c["error_m"] else None
    for x in points:
        cells = [f"{tables[m].at(x):12.4f}" if tables[m] is not None else f"{'-':>12s}" for m in modes]
        lines.append(f"{x:7g}  " + "  ".join(cells))
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------
# traces


def _cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_records_csv(records: Sequence[StepRecord], path) -> None:
    cols = StepRecord.columns()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in records:
            w.writerow([_cell(getattr(r, c)) for c in cols])


_HINTS = typing.get_type_hints(StepRecord)


def _parse(value: str, hint, where: str):
    try:
        if hint is bool:
            if value not in ("0", "1"):
                raise ValueError(value)
            return value == "1"
        if hint is int:
            return int(value)
        if hint is float:
            return float(value)
        return value
    except ValueError as exc:
        raise ValueError(f"{where}: cannot parse {value!r}") from exc


def read_records_csv(path) -> list:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        cols = StepRecord.columns()
        if header != cols:
            missing = sorted(set(cols) - set(header))
            extra = sorted(set(header) - set(cols))
            raise ValueError(f"{path}: unexpected trace header (missing {missing}, unknown {extra})")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(cols):
                raise ValueError(f"{path}:{lineno}: expected {len(cols)} fields, got {len(row)}")
            kwargs = {c: _parse(v, _HINTS[c], f"{path}:{lineno}: {c}") for c, v in zip(cols, row)}
            out.append(StepRecord(**kwargs))
    return out


def write_channel_csv(channel: Sequence, path) -> None:
    """Per-step angle estimates, posterior variances and test outcome."""
    n = max(len(c.psi) for c in channel)
    L = n // 2
    cols = ["t"] + [f"aod_{l}" for l in range(1, L + 1)] + [f"aoa_{l}" for l in range(1, L + 1)]
    cols += [f"var_aod_{l}" for l in range(1, L + 1)] + [f"var_aoa_{l}" for l in range(1, L + 1)]
    cols += ["statistic", "threshold", "triggered", "reacquired"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for k, c in enumerate(channel):
            m = len(c.psi) // 2

            def padded(v, half):
                vals = [_cell(float(x)) for x in v[half * m:(half + 1) * m]]
                return vals + [""] * (L - m)

            w.writerow([k, *padded(c.psi, 0), *padded(c.psi, 1), *padded(c.cov_diag, 0), *padded(c.cov_diag, 1),
                        _cell(float(c.statistic)), _cell(float(c.threshold)), _cell(bool(c.triggered)),
                        _cell(bool(c.reacquired))])


def write_position_csv(kf_means: Sequence, path) -> None:
    """Position-filter posterior means, one row per step."""
    cols = ["t", "x", "y", "vx", "vy", "ax", "ay", "gamma"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for k, m in enumerate(kf_means):
            w.writerow([k, *(_cell(float(v)) for v in m)])


def records_from_path(path) -> list:
    """Records from a trace CSV, or every ``steps.csv`` below a directory."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.rglob("steps.csv"))
        if not files:
            raise FileNotFoundError(f"{path}: no steps.csv traces found")
        return [r for f in files for r in read_records_csv(f)]
    return read_records_csv(path)
