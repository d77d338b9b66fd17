"""Change-test calibration under a model the channel filter matches exactly.

The true angles follow the filter's own random walk (``a1 = 1`` with the
filter's ``sigma_u2``), gains are fixed per segment and the sweep noise has
the filter's variance.  The innovation statistic is then chi-square with
:func:`change_test_dof` degrees of freedom, so its empirical distribution and
trigger rate check the detector's threshold.  Segments restart from exact
truth so the walk stays away from the array endfire directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .channel import AngleState, ArrayConfig, make_codebook, noise_variance_from_snr, observe, snr_db_to_linear, \
    synthesize_gains
from .channel_tracker import ChangeTestConfig, ChannelProcessConfig, ChannelTracker


class _Truth(NamedTuple):
    psi: np.ndarray


@dataclass
class MatchedModelConfig:
    arrays: ArrayConfig = field(default_factory=ArrayConfig)
    num_paths: int = 3
    sigma_u2: float = (0.5 * math.pi / 180.0) ** 2
    snr_db: float = 20.0
    p_fa: float = 0.05
    n_steps: int = 2000
    segment: int = 200
    angle_range: tuple = (0.6, math.pi - 0.6)
    iterations: int = 5


class MatchedRun(NamedTuple):
    statistics: np.ndarray
    triggered: np.ndarray
    threshold: float
    dof: int

    @property
    def trigger_rate(self) -> float:
        return float(np.mean(self.triggered))


def matched_model_run(cfg: MatchedModelConfig, rng: np.random.Generator) -> MatchedRun:
    """Test statistics of every tracked (non-acquisition) step."""
    noise_var = noise_variance_from_snr(snr_db_to_linear(cfg.snr_db), cfg.arrays)
    cb = make_codebook(cfg.arrays)
    process = ChannelProcessConfig(ar_coeffs=[1.0], sigma_u2=cfg.sigma_u2)
    tracker = ChannelTracker(process, ChangeTestConfig(p_fa=cfg.p_fa), cb, noise_var, init_noise_std=0.0,
                             iterations=cfg.iterations, act_on_trigger=False)
    sigma_u = math.sqrt(cfg.sigma_u2)
    L = cfg.num_paths
    stats, trig = [], []
    threshold = float("nan")
    psi = gains = None
    for k in range(cfg.n_steps):
        fresh = k % cfg.segment == 0
        if fresh:
            psi = _separated_angles(L, cfg, rng)
            lengths = rng.uniform(100.0, 600.0, L)
            gains = synthesize_gains(lengths, cfg.arrays, "unit_rho")
        else:
            psi = psi + sigma_u * rng.standard_normal(2 * L)
        obs = observe(AngleState(psi, gains), cb, noise_var, rng)
        step = tracker.step(obs, _Truth(psi), rng, force_reacquire=fresh)
        if not fresh:
            stats.append(step.statistic)
            trig.append(step.triggered)
            threshold = step.threshold
    return MatchedRun(np.array(stats), np.array(trig, dtype=bool), threshold, tracker.dof)


def _separated_angles(L: int, cfg: MatchedModelConfig, rng: np.random.Generator) -> np.ndarray:
    lo, hi = cfg.angle_range
    for _ in range(1000):
        aod, aoa = rng.uniform(lo, hi, L), rng.uniform(lo, hi, L)
        if _min_gap(np.cos(aod)) > 2.0 / cfg.arrays.n_tx and _min_gap(np.cos(aoa)) > 2.0 / cfg.arrays.n_rx:
            return np.concatenate([aod, aoa])
    raise RuntimeError("could not draw resolvable angles")


def _min_gap(c: np.ndarray) -> float:
    if c.size < 2:
        return math.inf
    return float(np.min(np.diff(np.sort(c))))

