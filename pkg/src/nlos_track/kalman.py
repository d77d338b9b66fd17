"""Gaussian belief container and the linear-algebra helpers shared by both filters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SYMMETRY_TOL = 1e-10
EIG_FLOOR = -1e-10


class FilterDiagnosticError(RuntimeError):
    """Raised when an innovation covariance is not positive definite."""


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    if np.ndim(w) == 0:
        return float(w)
    return w


@dataclass
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        self.cov = np.asarray(self.cov, dtype=float)
        n = self.mean.size
        if self.cov.shape != (n, n):
            raise ValueError(f"covariance shape {self.cov.shape} does not match mean length {n}")

    @property
    def dim(self) -> int:
        return self.mean.size

    def copy(self) -> "GaussianBelief":
        return GaussianBelief(self.mean.copy(), self.cov.copy())


def symmetrize(P: np.ndarray) -> np.ndarray:
    """Re-symmetrize and clamp eigenvalues that rounding pushed below zero."""
    P = 0.5 * (P + P.T)
    w, V = np.linalg.eigh(P)
    if w.min() < 0.0:
        w = np.clip(w, 0.0, None)
        P = (V * w) @ V.T
        P = 0.5 * (P + P.T)
    return P


def joseph_update(P: np.ndarray, K: np.ndarray, H: np.ndarray, R) -> np.ndarray:
    """Joseph-form covariance update ``(I-KH) P (I-KH)^T + K R K^T``.

    ``R`` may be a full matrix, a vector of diagonal entries or a scalar
    multiple of the identity.
    """
    n = P.shape[0]
    A = np.eye(n) - K @ H
    R = np.asarray(R, dtype=float)
    if R.ndim == 0:
        KRK = float(R) * (K @ K.T)
    elif R.ndim == 1:
        KRK = (K * R) @ K.T
    else:
        KRK = K @ R @ K.T
    return A @ P @ A.T + KRK


def nees(belief: GaussianBelief, truth, angle_index=None) -> float:
    """Normalized estimation error squared of ``truth`` under ``belief``.

    Components listed in ``angle_index`` are differenced on the circle.
    A singular covariance (a filter that trusts a noiseless sensor fully)
    gives ``nan``.
    """
    err = np.asarray(truth, dtype=float) - belief.mean
    if angle_index is not None:
        err[angle_index] = wrap_angle(err[angle_index])
    try:
        c = np.linalg.cholesky(belief.cov)
    except np.linalg.LinAlgError:
        return float("nan")
    w = np.linalg.solve(c, err)
    return float(w @ w)


def linear_update(belief: GaussianBelief, z, H, R, angle_index=None):
    """Kalman correction for ``z = H x + r``, ``r ~ N(0, R)``; returns ``(posterior, nis)``.

    ``R`` may be a matrix, a vector of variances or a scalar.  Innovation and
    posterior components in ``angle_index`` are wrapped to (-pi, pi].
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if H.shape != (z.size, belief.dim):
        raise ValueError(f"H has shape {H.shape}, expected {(z.size, belief.dim)}")
    Rm = np.asarray(R, dtype=float)
    if Rm.ndim == 0:
        Rm = float(Rm) * np.eye(z.size)
    elif Rm.ndim == 1:
        Rm = np.diag(Rm)
    P = belief.cov
    nu = z - H @ belief.mean
    if angle_index is not None:
        nu[angle_index] = wrap_angle(nu[angle_index])
    S = H @ P @ H.T + Rm
    try:
        cS = np.linalg.cholesky(0.5 * (S + S.T))
    except np.linalg.LinAlgError as exc:
        raise FilterDiagnosticError("innovation covariance is not positive definite") from exc
    K = np.linalg.solve(cS.T, np.linalg.solve(cS, H @ P)).T
    mean = belief.mean + K @ nu
    w = np.linalg.solve(cS, nu)
    P_post = symmetrize(joseph_update(P, K, H, Rm))
    posterior = GaussianBelief(mean, P_post)
    if angle_index is not None:
        posterior.mean[angle_index] = wrap_angle(posterior.mean[angle_index])
    return posterior, float(w @ w)
