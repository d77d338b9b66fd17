"""Constant-acceleration Kalman filter on ``s = [x, y, vx, vy, ax, ay, gamma]``.

Position and orientation measurements come from triangulation, velocity and
acceleration from a (synthesized) IMU in the global frame, so the
measurement matrix is the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .kalman import GaussianBelief, linear_update, symmetrize, wrap_angle

GAMMA = 6
STATE_DIM = 7


@dataclass
class PositionKFConfig:
    dt: Optional[float] = None
    sigma_e2: float = 0.01
    sigma_r2: list = field(default_factory=lambda: [1.0, 1.0, 0.04, 0.04, 0.04, 0.04, math.radians(1.0) ** 2])

    def validate(self):
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.sigma_e2 < 0 or np.any(np.asarray(self.sigma_r2) < 0):
            raise ValueError("variances must be non-negative")
        if np.ndim(self.sigma_r2) == 1 and len(self.sigma_r2) != STATE_DIM:
            raise ValueError("sigma_r2 must be a scalar or a 7-vector")

    def measurement_cov(self) -> np.ndarray:
        r = np.asarray(self.sigma_r2, dtype=float)
        return np.full(STATE_DIM, float(r)) if r.ndim == 0 else r


def transition_matrix(dt: float) -> np.ndarray:
    """7x7 constant-acceleration transition; orientation is a random walk."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    F = np.eye(STATE_DIM)
    for axis in (0, 1):
        F[axis, 2 + axis] = dt
        F[axis, 4 + axis] = 0.5 * dt * dt
        F[2 + axis, 4 + axis] = dt
    return F


def kf_predict(belief: GaussianBelief, cfg: PositionKFConfig, dt: Optional[float] = None) -> GaussianBelief:
    if belief.dim != STATE_DIM:
        raise ValueError(f"position belief must be {STATE_DIM}-dimensional, got {belief.dim}")
    F = transition_matrix(dt if dt is not None else cfg.dt)
    mean = F @ belief.mean
    mean[GAMMA] = wrap_angle(mean[GAMMA])
    P = F @ belief.cov @ F.T + cfg.sigma_e2 * np.eye(STATE_DIM)
    return GaussianBelief(mean, symmetrize(P))


def kf_update(belief: GaussianBelief, z, cfg: PositionKFConfig):
    """Linear update with ``M = I``; returns ``(posterior, nis)``.

    The orientation innovation is wrapped so the estimate moves the short way
    around the circle.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (STATE_DIM,) or not np.all(np.isfinite(z)):
        raise ValueError("measurement must be a finite 7-vector")
    if belief.dim != STATE_DIM:
        raise ValueError(f"position belief must be {STATE_DIM}-dimensional, got {belief.dim}")
    return linear_update(belief, z, np.eye(STATE_DIM), cfg.measurement_cov(), angle_index=[GAMMA])


def synthesize_imu(vel, acc, noise_std, rng: Optional[np.random.Generator]):
    """True velocity/acceleration plus i.i.d. Gaussian noise ``(vel_std, acc_std)``."""
    vel_std, acc_std = noise_std
    vel = np.asarray(vel, dtype=float)
    acc = np.asarray(acc, dtype=float)
    if vel_std > 0:
        vel = vel + vel_std * rng.standard_normal(2)
    if acc_std > 0:
        acc = acc + acc_std * rng.standard_normal(2)
    return vel, acc


def assemble_measurement(pose, imu_vel, imu_acc) -> Optional[np.ndarray]:
    """``[x, y, vx, vy, ax, ay, gamma]``, or ``None`` for a degenerate pose."""
    if pose is None or pose.status == "degenerate":
        return None
    return np.array([pose.x, pose.y, imu_vel[0], imu_vel[1], imu_acc[0], imu_acc[1], pose.gamma], dtype=float)


def initial_belief(z: np.ndarray, cfg: PositionKFConfig) -> GaussianBelief:
    """Start from the first measurement with its own noise as covariance."""
    R = cfg.measurement_cov()
    return GaussianBelief(np.asarray(z, dtype=float).copy(), np.diag(np.maximum(R, cfg.sigma_e2)))
