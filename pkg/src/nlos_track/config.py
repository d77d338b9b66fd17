"""YAML run configuration.

The document mirrors :class:`RunConfig` field by field.  Unknown keys are
rejected, values are coerced to the annotated types, and every error names
the offending field and its line.  :func:`dump_config` writes every field
with a one-line comment, so the dumped defaults double as documentation and
``dump_config(parse_config(text)) == text`` for any dumped document.
"""

from __future__ import annotations

import dataclasses
import math
import typing
from pathlib import Path
from typing import Any, Optional, Union

import yaml

from .pipeline import RunConfig


class ConfigError(ValueError):
    """Malformed configuration; the message carries the field and line."""


FIELD_DOCS = {
    "trajectory": "UE path",
    "trajectory.shape": "s_curve | waypoints",
    "trajectory.speed": "m/s (54 km/h)",
    "trajectory.duration": "s; null = set by n_steps",
    "trajectory.dt": "s between sweeps",
    "trajectory.area": "[width, height] m, BS at the origin corner",
    "trajectory.waypoint_list": "[[x, y], ...] for shape=waypoints",
    "trajectory.arc_radius": "m, S-curve bend radius",
    "scatterers": "single-bounce scatterer draws",
    "scatterers.redraw_distance": "m travelled between re-draws",
    "scatterers.placement_radius": "m, disk around the UE",
    "scatterers.num_paths": "L",
    "scatterers.rng_seed": "unused when a run seed is given",
    "scatterers.num_paths_choices": "null or list; L drawn per epoch",
    "scatterers.min_ue_distance": "m",
    "scatterers.aod_margin": "rad kept away from the BS array axis",
    "scatterers.aoa_margin": "rad kept away from the UE array axis",
    "scatterers.collinear_tol": "min |sin| between BS and UE legs",
    "scatterers.min_aod_separation": "min |cos difference| between AoDs",
    "scatterers.min_aoa_separation": "min |cos difference| between AoAs",
    "scatterers.max_retries": "draws per scatterer before giving up",
    "scatterers.max_paths": "upper bound on L",
    "arrays": "half-wavelength ULAs",
    "arrays.n_tx": "BS antennas",
    "arrays.n_rx": "UE antennas",
    "arrays.carrier_freq": "Hz",
    "process": "AR(p) angle dynamics of the channel filter",
    "process.ar_coeffs": "[a1, ..., ap]",
    "process.sigma_u2": "rad^2 driving noise",
    "process.noise_var": "filter sigma_w^2; null = from SNR",
    "process.ar_matrices": "null or explicit A_i blocks",
    "change": "innovation change test",
    "change.p_fa": "false-alarm probability",
    "change.window": "steps summed in the statistic",
    "poskf": "position Kalman filter",
    "poskf.dt": "s; null = trajectory.dt",
    "poskf.sigma_e2": "process noise variance",
    "poskf.sigma_r2": "measurement variances [x, y, vx, vy, ax, ay, gamma]",
    "snr_db": "dB; sigma_w^2 = N_r N_t / SNR",
    "mode": "two_stage | single_stage",
    "seed": "master seed",
    "n_steps": "time steps per run",
    "codebook": "dft | uniform_angle",
    "gain_model": "unit_rho | unit_gain | inverse_range",
    "init_noise_std": "rad, genie re-acquisition error",
    "imu_noise_std": "[velocity m/s, acceleration m/s^2]",
    "reacquisition": "detector | forced",
    "reacq_deadline": "steps allowed after an epoch boundary",
    "ekf_iterations": "Gauss-Newton passes per channel update",
    "weights": "uniform | innovation_inverse",
    "static_scatterers": "never re-draw",
}


# ----------------------------------------------------------------------------
# dataclass <-> plain data


def config_to_dict(cfg) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        out[f.name] = config_to_dict(v) if dataclasses.is_dataclass(v) else _plain(v)
    return out


def _plain(v):
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if hasattr(v, "tolist"):
        return v.tolist()
    return v


def _line_map(node, prefix: str = "", out: Optional[dict] = None) -> dict:
    """Dotted key path -> 1-based line, from a composed YAML node."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = f"{prefix}{key.value}"
            out[path] = key.start_mark.line + 1
            _line_map(value, path + ".", out)
    return out


def _coerce(value, hint, where: str):
    origin = typing.get_origin(hint)
    if origin is Union:
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], where)
    if value is None:
        raise ConfigError(f"{where}: null is not allowed")
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        if isinstance(value, (int, float)):
            return float(value)
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if hint in (list, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        if hint is tuple:
            return tuple(_coerce(v, float, f"{where}[{i}]") for i, v in enumerate(value))
        return value
    raise ConfigError(f"{where}: unsupported field type {hint!r}")


def config_from_dict(data: dict, cls=RunConfig, lines: Optional[dict] = None, prefix: str = "",
                     source: str = "<config>"):
    lines = lines or {}

    def where(path):
        line = lines.get(path)
        return f"{source}:{line}: field '{path}'" if line else f"{source}: field '{path}'"

    if not isinstance(data, dict):
        raise ConfigError(f"{where(prefix.rstrip('.') or '<root>')}: expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{where(prefix + str(key))}: unknown key")
    kwargs = {}
    for name in names & set(data):
        path = prefix + name
        hint = hints[name]
        if dataclasses.is_dataclass(hint):
            kwargs[name] = config_from_dict(data[name] or {}, hint, lines, path + ".", source)
        else:
            kwargs[name] = _coerce(data[name], hint, where(path))
    return cls(**kwargs)


# ----------------------------------------------------------------------------
# text


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse and validate a YAML document; missing keys take their defaults."""
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = f"{mark.line + 1}" if mark else "?"
        raise ConfigError(f"{source}:{line}: YAML syntax error: {exc.problem}") from exc
    if data is None:
        data = {}
    cfg = config_from_dict(data, RunConfig, _line_map(root) if root is not None else {}, "", source)
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(f"{source}: invalid configuration: {exc}") from exc
    return cfg


def load_config(path: Union[str, Path, None]) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    return parse_config(text, str(path))


def _scalar(v) -> str:
    if isinstance(v, float) and math.isnan(v):
        return ".nan"
    text = yaml.safe_dump(v, default_flow_style=True, width=1 << 16).strip()
    return text[:-4].rstrip() if text.endswith("\n...") or text.endswith(" ...") else text


def _emit(data: dict, prefix: str, indent: int, out: list):
    pad = "  " * indent
    for key, value in data.items():
        path = prefix + key
        doc = FIELD_DOCS.get(path)
        comment = f"  # {doc}" if doc else ""
        if isinstance(value, dict):
            out.append(f"{pad}{key}:{comment}")
            _emit(value, path + ".", indent + 1, out)
        else:
            out.append(f"{pad}{key}: {_scalar(value)}{comment}")


def dump_config(cfg: RunConfig) -> str:
    out: list = []
    _emit(config_to_dict(cfg), "", 0, out)
    return "\n".join(out) + "\n"


def effective_config(cfg: RunConfig) -> dict:
    """The configuration plus every derived quantity, for echoing."""
    return {"config": config_to_dict(cfg), "derived": cfg.derived()}
