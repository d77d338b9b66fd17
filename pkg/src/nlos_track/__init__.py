"""Two-stage Kalman tracking of a vehicle from single-bounce mmWave paths.

A channel EKF tracks the angles of departure and arrival of the NLoS paths,
a chi-square test on its innovation flags scatterer changes, each step's
angles are triangulated into a coarse pose, and a constant-acceleration
Kalman filter smooths the poses together with IMU readings.
"""

from .channel import ArrayConfig, make_codebook, noise_variance_from_snr, observe, steering_vector
from .channel_tracker import ChangeTestConfig, ChannelProcessConfig, ChannelTracker, change_test, predict, update
from .config import ConfigError, dump_config, load_config, parse_config
from .kalman import FilterDiagnosticError, GaussianBelief
from .pipeline import RunConfig, StepRecord, run, run_campaign, simulate, simulate_modes
from .position_kf import PositionKFConfig, kf_predict, kf_update
from .reports import build_bundle, compute_cdf
from .scene import GeometryError, ScattererPolicy, TrajectoryConfig, build_scene, generate_trajectory
from .triangulation import solve_pose

__all__ = [
    "ArrayConfig", "ChangeTestConfig", "ChannelProcessConfig", "ChannelTracker", "ConfigError",
    "FilterDiagnosticError", "GaussianBelief", "GeometryError", "PositionKFConfig", "RunConfig",
    "ScattererPolicy", "StepRecord", "TrajectoryConfig", "build_bundle", "build_scene", "change_test",
    "compute_cdf", "dump_config", "generate_trajectory", "kf_predict", "kf_update", "load_config",
    "make_codebook", "noise_variance_from_snr", "observe", "parse_config", "predict", "run", "run_campaign",
    "simulate", "simulate_modes", "solve_pose", "steering_vector", "update",
]
