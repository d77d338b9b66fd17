"""Two-stage positioning loop: channel EKF, change test, triangulation, position KF.

A run draws all randomness from one master seed split into named streams
(``scene``, ``noise``, ``init``, ``imu``) so switching one noise source off
leaves the others untouched.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .channel import (AngleState, ArrayConfig, make_codebook, noise_variance_from_snr, observe, snr_db_to_linear,
                      synthesize_gains)
from .channel_tracker import ChangeTestConfig, ChannelProcessConfig, ChannelStep, ChannelTracker, change_test_dof
from .kalman import nees, wrap_angle
from .position_kf import (GAMMA, PositionKFConfig, assemble_measurement, initial_belief, kf_predict, kf_update,
                          synthesize_imu)
from .scene import ScattererPolicy, TrajectoryConfig, build_scene
from .triangulation import path_weights, solve_pose

MODES = ("two_stage", "single_stage")
STREAMS = ("scene", "noise", "init", "imu")
CODEBOOKS = ("dft", "uniform_angle")
GAIN_MODELS = ("unit_rho", "unit_gain", "inverse_range")
WEIGHT_POLICIES = ("uniform", "innovation_inverse")


@dataclass
class RunConfig:
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    scatterers: ScattererPolicy = field(default_factory=ScattererPolicy)
    arrays: ArrayConfig = field(default_factory=ArrayConfig)
    process: ChannelProcessConfig = field(default_factory=ChannelProcessConfig)
    change: ChangeTestConfig = field(default_factory=ChangeTestConfig)
    poskf: PositionKFConfig = field(default_factory=PositionKFConfig)
    snr_db: float = 20.0
    mode: str = "two_stage"
    seed: int = 0
    n_steps: int = 500
    codebook: str = "dft"
    gain_model: str = "unit_rho"
    init_noise_std: float = math.radians(0.5)
    imu_noise_std: list = field(default_factory=lambda: [0.2, 0.2])
    reacquisition: str = "detector"
    reacq_deadline: int = 3
    ekf_iterations: int = 5
    weights: str = "uniform"
    static_scatterers: bool = False

    def validate(self):
        for sub in (self.trajectory, self.scatterers, self.arrays, self.process, self.change, self.poskf):
            sub.validate()
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        for name, allowed in (("codebook", CODEBOOKS), ("gain_model", GAIN_MODELS), ("weights", WEIGHT_POLICIES)):
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}")
        if self.reacquisition not in ("detector", "forced"):
            raise ValueError("reacquisition must be 'detector' or 'forced'")
        if self.ekf_iterations < 1:
            raise ValueError("ekf_iterations must be >= 1")
        if self.poskf.dt is not None and abs(self.poskf.dt - self.trajectory.dt) > 1e-12:
            raise ValueError("poskf.dt must match trajectory.dt")
        if self.init_noise_std < 0 or min(self.imu_noise_std) < 0:
            raise ValueError("noise standard deviations must be non-negative")

    @property
    def noise_var(self) -> float:
        if self.process.noise_var is not None:
            return self.process.noise_var
        return self.simulated_noise_var

    @property
    def simulated_noise_var(self) -> float:
        if math.isinf(self.snr_db) and self.snr_db > 0:
            return 0.0
        return noise_variance_from_snr(snr_db_to_linear(self.snr_db), self.arrays)

    def derived(self) -> dict:
        L = self.scatterers.num_paths
        return {
            "noise_var": self.simulated_noise_var,
            "filter_noise_var": self.noise_var,
            "wavelength": self.arrays.wavelength,
            "change_test_dof": change_test_dof(self.arrays.n_tx, self.arrays.n_rx, L),
            "snr_linear": snr_db_to_linear(self.snr_db),
        }


@dataclass
class StepRecord:
    mode: str
    seed: int
    t: int
    epoch_id: int
    num_paths: int
    true_x: float
    true_y: float
    true_gamma: float
    coarse_x: float
    coarse_y: float
    coarse_gamma: float
    coarse_status: str
    kf_x: float
    kf_y: float
    kf_gamma: float
    est_x: float
    est_y: float
    est_gamma: float
    position_error: float
    coarse_error: float
    gamma_error: float
    aod_se: float
    aoa_se: float
    nis: float
    threshold: float
    triggered: bool
    reacquired: bool
    kf_nees: float

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]


@dataclass
class RunResult:
    config: RunConfig
    mode: str
    frames: list
    channel: list
    records: list
    kf_means: list


def rng_streams(seed: int) -> dict:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(s) for name, s in zip(STREAMS, children)}


def make_scene(cfg: RunConfig, rng: np.random.Generator) -> list:
    policy = cfg.scatterers
    if cfg.static_scatterers:
        policy = replace(policy, redraw_distance=math.inf)
    return build_scene(cfg.trajectory, policy, n_steps=cfg.n_steps, rng=rng)


def run_channel_stage(cfg: RunConfig, frames: list, streams: dict) -> list:
    cb = make_codebook(cfg.arrays, cfg.codebook)
    # forced: oracle re-acquisition at epoch boundaries only; the test statistic is still reported
    tracker = ChannelTracker(cfg.process, cfg.change, cb, cfg.noise_var, cfg.init_noise_std, cfg.ekf_iterations,
                             act_on_trigger=cfg.reacquisition == "detector")
    sim_var = cfg.simulated_noise_var
    out = []
    for k, frame in enumerate(frames):
        gains = synthesize_gains(frame.path_lengths, cfg.arrays, cfg.gain_model)
        obs = observe(AngleState(frame.psi, gains), cb, sim_var, streams["noise"], t=k)
        boundary = k > 0 and frame.epoch_id != frames[k - 1].epoch_id
        force = (k == 0 or 2 * frame.num_paths != tracker.n_angles
                 or (boundary and cfg.reacquisition == "forced"))
        out.append(tracker.step(obs, frame, streams["init"], force_reacquire=force))
    return out


def _angle_errors(frame, step: ChannelStep):
    L = frame.num_paths
    err = wrap_angle(step.psi - frame.psi) ** 2
    return float(np.mean(err[:L])), float(np.mean(err[L:]))


def run_position_stage(cfg: RunConfig, frames: list, channel: list, mode: str,
                       imu_rng: np.random.Generator) -> tuple:
    kf = None
    prev_gamma = None
    dt = cfg.trajectory.dt
    records, kf_means = [], []
    nan = float("nan")
    for frame, cs in zip(frames, channel):
        L = frame.num_paths
        var = cs.cov_diag[:L] + cs.cov_diag[L:]
        beta = path_weights(cfg.weights, var, L)
        paths = np.column_stack([cs.psi[:L], cs.psi[L:], frame.path_lengths, beta])
        prior = None
        if mode == "two_stage":
            if kf is not None:
                prior = kf_predict(kf, cfg.poskf, dt)
            gamma0 = None if prior is None else float(prior.mean[GAMMA])
        else:
            gamma0 = prev_gamma
        pose = solve_pose(paths, frame.bs_pos, gamma0)
        prev_gamma = pose.gamma if pose.status != "degenerate" and math.isfinite(pose.gamma) else None
        kf_nees = nan
        if mode == "two_stage":
            imu_vel, imu_acc = synthesize_imu(frame.ue_vel, frame.ue_acc, cfg.imu_noise_std, imu_rng)
            z = assemble_measurement(pose, imu_vel, imu_acc)
            if prior is None:
                kf = initial_belief(z, cfg.poskf) if z is not None else None
            else:
                kf = prior
                if z is not None:
                    kf, _ = kf_update(prior, z, cfg.poskf)
            if kf is not None:
                kf_nees = nees(kf, frame.pose_state, angle_index=[GAMMA])
        kf_mean = kf.mean.copy() if (mode == "two_stage" and kf is not None) else np.full(7, nan)
        kf_means.append(kf_mean)
        if mode == "two_stage":
            est = (kf_mean[0], kf_mean[1], kf_mean[GAMMA])
        else:
            est = (pose.x, pose.y, pose.gamma)
        tx, ty = frame.ue_pos
        aod_se, aoa_se = _angle_errors(frame, cs)
        records.append(StepRecord(
            mode=mode, seed=cfg.seed, t=frame.t, epoch_id=frame.epoch_id, num_paths=L,
            true_x=tx, true_y=ty, true_gamma=frame.ue_orientation,
            coarse_x=pose.x, coarse_y=pose.y, coarse_gamma=pose.gamma, coarse_status=pose.status,
            kf_x=float(kf_mean[0]), kf_y=float(kf_mean[1]), kf_gamma=float(kf_mean[GAMMA]),
            est_x=float(est[0]), est_y=float(est[1]), est_gamma=float(est[2]),
            position_error=math.hypot(est[0] - tx, est[1] - ty),
            coarse_error=math.hypot(pose.x - tx, pose.y - ty),
            gamma_error=abs(wrap_angle(est[2] - frame.ue_orientation)),
            aod_se=aod_se, aoa_se=aoa_se, nis=cs.statistic, threshold=cs.threshold,
            triggered=cs.triggered, reacquired=cs.reacquired, kf_nees=kf_nees))
    return records, kf_means


def simulate_modes(cfg: RunConfig, modes=MODES) -> dict:
    """Run several position-stage modes on one shared channel-stage pass.

    The channel stage does not depend on the mode, so this is equivalent to
    separate runs with the same seed.
    """
    cfg.validate()
    streams = rng_streams(cfg.seed)
    frames = make_scene(cfg, streams["scene"])
    channel = run_channel_stage(cfg, frames, streams)
    out = {}
    for mode in modes:
        imu_rng = rng_streams(cfg.seed)["imu"]
        records, kf_means = run_position_stage(cfg, frames, channel, mode, imu_rng)
        out[mode] = RunResult(replace(cfg, mode=mode), mode, frames, channel, records, kf_means)
    return out


def simulate(cfg: RunConfig) -> RunResult:
    return simulate_modes(cfg, (cfg.mode,))[cfg.mode]


def run(cfg: RunConfig) -> list:
    """Per-step records of one run in ``cfg.mode``."""
    return simulate(cfg).records


def campaign_seeds(master_seed: int, n_seeds: int) -> list:
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    return [master_seed + i for i in range(n_seeds)]


def _campaign_worker(args):
    cfg, seed = args
    return seed, simulate_modes(replace(cfg, seed=seed))


def max_workers(n_jobs: int) -> int:
    cap = os.environ.get("NLOS_TRACK_THREADS")
    workers = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(workers, n_jobs))


def run_campaign_results(cfg: RunConfig, n_seeds: int) -> dict:
    """``{seed: {mode: RunResult}}`` for consecutive seeds from ``cfg.seed``."""
    seeds = campaign_seeds(cfg.seed, n_seeds)
    jobs = [(cfg, s) for s in seeds]
    workers = max_workers(len(jobs))
    if workers == 1:
        results = [_campaign_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_campaign_worker, jobs))
    return dict(sorted(results))


def run_campaign(cfg: RunConfig, n_seeds: int):
    """Campaign over ``n_seeds`` seeds in both modes; returns the aggregate bundle."""
    from .reports import build_bundle

    results = run_campaign_results(cfg, n_seeds)
    records = [r for per_seed in results.values() for res in per_seed.values() for r in res.records]
    return build_bundle(records, cfg.reacq_deadline)


def compare_ar_coefficients(cfg: RunConfig, n_seeds: int, a1_values=(1.0, 0.95)) -> dict:
    """Campaign bundle per AR(1) coefficient of the channel filter."""
    out = {}
    for a1 in a1_values:
        process = replace(cfg.process, ar_coeffs=[a1] + list(cfg.process.ar_coeffs[1:]))
        out[a1] = run_campaign(replace(cfg, process=process), n_seeds)
    return out
