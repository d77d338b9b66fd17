import math
from dataclasses import replace
from pathlib import Path

import pytest
import yaml

from nlos_track.channel_tracker import ChannelProcessConfig
from nlos_track.config import (FIELD_DOCS, ConfigError, config_to_dict, dump_config, effective_config, load_config,
                               parse_config)
from nlos_track.pipeline import RunConfig

DEFAULT = Path(__file__).resolve().parents[1] / "configs" / "default.yaml"


def dotted(d, prefix=""):
    for k, v in d.items():
        yield prefix + k
        if isinstance(v, dict):
            yield from dotted(v, prefix + k + ".")


def test_shipped_defaults_match_dataclasses():
    assert DEFAULT.read_text() == dump_config(RunConfig())
    assert load_config(DEFAULT) == RunConfig()


def test_published_parameter_values():
    cfg = load_config(DEFAULT)
    assert (cfg.arrays.n_tx, cfg.arrays.n_rx, cfg.arrays.carrier_freq) == (64, 8, 40e9)
    assert cfg.scatterers.num_paths == 4
    assert cfg.process.ar_coeffs == [0.95]
    assert cfg.process.sigma_u2 == pytest.approx((0.5 * math.pi / 180) ** 2)
    assert cfg.snr_db == 20.0
    assert cfg.trajectory.speed == pytest.approx(54 / 3.6)


def test_every_field_is_documented():
    keys = set(dotted(config_to_dict(RunConfig())))
    assert keys <= set(FIELD_DOCS)
    for line in dump_config(RunConfig()).splitlines():
        assert " # " in line


def test_round_trip():
    cfg = replace(RunConfig(seed=5, snr_db=13.5, weights="innovation_inverse"),
                  process=ChannelProcessConfig(ar_coeffs=[0.9, 0.05], noise_var=2.0))
    text = dump_config(cfg)
    back = parse_config(text)
    assert back == cfg
    assert dump_config(back) == text


def test_partial_document_takes_defaults():
    cfg = parse_config("seed: 3\narrays:\n  n_tx: 16\n")
    assert cfg.seed == 3 and cfg.arrays.n_tx == 16 and cfg.arrays.n_rx == 8
    assert parse_config("") == RunConfig()


def test_infinite_snr_round_trips():
    cfg = parse_config("snr_db: .inf\n")
    assert math.isinf(cfg.snr_db)
    assert parse_config(dump_config(cfg)) == cfg


def test_unknown_key_is_rejected_with_line():
    with pytest.raises(ConfigError, match=r"f\.yaml:3: field 'arrays\.n_txx': unknown key"):
        parse_config("seed: 1\narrays:\n  n_txx: 4\n", "f.yaml")


def test_type_error_names_field_and_line():
    with pytest.raises(ConfigError, match=r"f\.yaml:2: field 'arrays\.n_tx': expected an integer"):
        parse_config("arrays:\n  n_tx: sixty\n", "f.yaml")
    with pytest.raises(ConfigError, match="static_scatterers"):
        parse_config("static_scatterers: 3\n")


def test_syntax_error_has_line():
    with pytest.raises(ConfigError, match=r":3: YAML syntax error"):
        parse_config("seed: 1\narrays: {n_tx: 4\n  n_rx]: 2\n")


def test_invalid_values_are_rejected():
    with pytest.raises(ConfigError, match="invalid configuration"):
        parse_config("n_steps: 0\n")
    with pytest.raises(ConfigError):
        parse_config("- 1\n- 2\n")


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/run.yaml")


def test_effective_config_has_derived_quantities():
    eff = effective_config(RunConfig())
    d = eff["derived"]
    assert d["noise_var"] == pytest.approx(5.12)
    assert d["wavelength"] == pytest.approx(299792458.0 / 40e9)
    assert d["change_test_dof"] == 2 * 64 * 8 - 2 * 4
    assert yaml.safe_load(dump_config(RunConfig()))["seed"] == eff["config"]["seed"]
