"""Extended Kalman filter over the AoD/AoA vector with abrupt-change detection.

The complex beam sweep is handled as a real measurement of dimension
``2 N_r N_t`` (real parts first, then imaginary parts); circular noise of
variance ``sigma_w^2`` becomes ``sigma_w^2 / 2`` per real component.  Path
gains are not part of the state: they are refit by least squares at every
step with the angles held at the prediction.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import gammainc

from .channel import (AngleState, Codebook, Observation, PathGain, path_signatures, steering_derivative,
                      steering_vector)
from .kalman import FilterDiagnosticError, GaussianBelief, joseph_update, symmetrize

# keeps S = J P J^T + r I invertible when sigma_w^2 = 0
NOISE_FLOOR = 1e-16


@dataclass
class ChannelProcessConfig:
    """AR(p) angle dynamics ``psi(t) = sum_i A_i psi(t-i) + u(t)``.

    ``ar_coeffs`` gives ``A_i = a_i I``; explicit ``ar_matrices`` override it.
    ``noise_var`` is the filter's ``sigma_w^2``; ``None`` lets the caller
    derive it from the SNR.
    """

    ar_coeffs: list = field(default_factory=lambda: [0.95])
    sigma_u2: float = (0.5 * math.pi / 180.0) ** 2
    noise_var: Optional[float] = None
    ar_matrices: Optional[list] = None

    @property
    def ar_order(self) -> int:
        return len(self.ar_matrices) if self.ar_matrices is not None else len(self.ar_coeffs)

    @property
    def a1(self) -> float:
        return float(self.ar_coeffs[0])

    def validate(self):
        if self.ar_order < 1:
            raise ValueError("AR order must be >= 1")
        if self.sigma_u2 < 0:
            raise ValueError("sigma_u2 must be non-negative")
        if self.noise_var is not None and self.noise_var < 0:
            raise ValueError("noise_var must be non-negative")

    def blocks(self, n_angles: int) -> list:
        if self.ar_matrices is not None:
            mats = [np.asarray(A, dtype=float) for A in self.ar_matrices]
            for A in mats:
                if A.shape != (n_angles, n_angles):
                    raise ValueError(f"AR matrix shape {A.shape} does not match {n_angles} angles")
            return mats
        return [a * np.eye(n_angles) for a in self.ar_coeffs]

    def transition(self, n_angles: int) -> np.ndarray:
        """Companion-form transition over ``[psi(t), ..., psi(t-p+1)]``."""
        blocks = self.blocks(n_angles)
        p = len(blocks)
        F = np.zeros((n_angles * p, n_angles * p))
        F[:n_angles, :] = np.hstack(blocks)
        if p > 1:
            F[n_angles:, :-n_angles] = np.eye(n_angles * (p - 1))
        radius = np.max(np.abs(np.linalg.eigvals(F)))
        if radius > 1.0 + 1e-12:
            warnings.warn(f"AR process is explosive (spectral radius {radius:.4f})", RuntimeWarning)
        return F


@dataclass
class ChangeTestConfig:
    p_fa: float = 0.05
    window: int = 1

    def validate(self):
        if not 0 < self.p_fa < 1:
            raise ValueError("p_fa must lie in (0, 1)")
        if self.window < 1:
            raise ValueError("window must be >= 1")


def change_test_dof(n_tx: int, n_rx: int, num_paths: int) -> int:
    """Degrees of freedom of the innovation statistic.

    The gains are fit to the same sweep, which removes ``2L`` real dimensions
    from the ``2 N_r N_t`` real measurements.
    """
    return 2 * n_tx * n_rx - 2 * num_paths


# ----------------------------------------------------------------------------
# measurement model


def stack_real(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real, z.imag])


def measurement_fn(state: AngleState, cb: Codebook) -> np.ndarray:
    """``vec(C^H H(psi) B)``."""
    return path_signatures(state.aod, state.aoa, cb) @ state.alphas


def measurement_jacobian(state: AngleState, cb: Codebook) -> np.ndarray:
    """Real Jacobian ``d stack_real(h~) / d psi`` of shape ``(2 N_r N_t, 2L)``."""
    n_tx, n_rx = cb.B.shape[0], cb.C.shape[0]
    alpha = state.alphas
    CH = cb.C.conj().T
    u = CH @ steering_vector(state.aoa, n_rx)
    du = CH @ steering_derivative(state.aoa, n_rx)
    v = cb.B.T @ steering_vector(state.aod, n_tx).conj()
    dv = cb.B.T @ steering_derivative(state.aod, n_tx).conj()
    d_aod = (dv[:, None, :] * u[None, :, :]).reshape(-1, u.shape[1]) * alpha
    d_aoa = (v[:, None, :] * du[None, :, :]).reshape(-1, u.shape[1]) * alpha
    return stack_real(np.hstack([d_aod, d_aoa]))


class InnovationCovariance:
    """``S = J P J^T + r I`` kept in factored form.

    The measurement dimension is large (``2 N_r N_t``) while the state is
    small, so products with ``S^{-1}`` go through the push-through identity
    instead of a dense factorization.
    """

    def __init__(self, J: np.ndarray, P: np.ndarray, r: float):
        self.J = J
        self.P = P
        self.r = float(r)
        if not self.r > 0:
            raise FilterDiagnosticError("innovation covariance needs a positive noise floor")
        n = P.shape[0]
        self._inner = self.r * np.eye(n) + J.T @ J @ P
        if not np.all(np.isfinite(self._inner)):
            raise FilterDiagnosticError("innovation covariance has non-finite entries")

    @property
    def dim(self) -> int:
        return self.J.shape[0]

    def dense(self) -> np.ndarray:
        return self.J @ self.P @ self.J.T + self.r * np.eye(self.dim)

    def solve(self, x: np.ndarray) -> np.ndarray:
        corr = self.J @ (self.P @ np.linalg.solve(self._inner, self.J.T @ x))
        return (x - corr) / self.r

    def quad(self, x: np.ndarray) -> float:
        return float(x @ self.solve(x))

    def gain(self) -> np.ndarray:
        """Kalman gain ``P J^T S^{-1}``."""
        return self.P @ np.linalg.solve(self._inner, self.J.T)


def _gain_regressor(G: np.ndarray) -> np.ndarray:
    # real regressor for [Re alpha, Im alpha]
    return np.hstack([stack_real(G), stack_real(1j * G)])


def estimate_gains(psi, obs: Observation, cb: Codebook, previous: Optional[list] = None,
                   rcond: float = 1e-10):
    """Least-squares path gains for fixed angles.

    Returns ``(gains, ok)``; ``ok`` is False when the path signatures are
    rank deficient, in which case ``previous`` is returned when available.
    """
    psi = np.asarray(psi, dtype=float)
    L = psi.size // 2
    G = path_signatures(psi[:L], psi[L:], cb)
    sv = np.linalg.svd(G, compute_uv=False)
    if sv[-1] <= rcond * sv[0]:
        if previous is not None:
            return list(previous), False
        alpha = np.linalg.lstsq(G, obs.y, rcond=None)[0]
        return [PathGain(complex(a)) for a in alpha], False
    alpha = np.linalg.lstsq(G, obs.y, rcond=None)[0]
    return [PathGain(complex(a)) for a in alpha], True


class _Projection(NamedTuple):
    gains: list
    residual: np.ndarray
    jacobian: np.ndarray
    ok: bool


def _profile_gains(psi, obs: Observation, cb: Codebook, y_r: np.ndarray, previous: Optional[list],
                   rcond: float = 1e-10) -> _Projection:
    """Least-squares gains at ``psi`` with the gain directions projected out.

    Residual and Jacobian are both mapped onto the orthogonal complement of
    the gain regressor, so a Gauss-Newton step on the angles accounts for the
    gains being refit.  When the regressor is rank deficient the previous
    gains are kept and nothing is projected.
    """
    L = psi.size // 2
    G = path_signatures(psi[:L], psi[L:], cb)
    Q, R = np.linalg.qr(_gain_regressor(G))
    d = np.abs(np.diag(R))
    if d.min() <= rcond * d.max():
        gains = list(previous) if previous is not None else estimate_gains(psi, obs, cb)[0]
        st = AngleState(psi, gains)
        return _Projection(gains, y_r - stack_real(measurement_fn(st, cb)), measurement_jacobian(st, cb), False)
    coef = np.linalg.solve(R, Q.T @ y_r)
    gains = [PathGain(complex(a)) for a in coef[:L] + 1j * coef[L:]]
    J = measurement_jacobian(AngleState(psi, gains), cb)
    resid = y_r - Q @ (Q.T @ y_r)
    return _Projection(gains, resid, J - Q @ (Q.T @ J), True)


# ----------------------------------------------------------------------------
# filter steps


def predict(belief: GaussianBelief, cfg: ChannelProcessConfig, n_angles: Optional[int] = None) -> GaussianBelief:
    p = cfg.ar_order
    if n_angles is None:
        if belief.dim % p:
            raise ValueError(f"belief dimension {belief.dim} is not a multiple of AR order {p}")
        n_angles = belief.dim // p
    if belief.dim != n_angles * p:
        raise ValueError(f"belief dimension {belief.dim} != {n_angles} angles x order {p}")
    F = cfg.transition(n_angles)
    P = F @ belief.cov @ F.T
    P[:n_angles, :n_angles] += cfg.sigma_u2 * np.eye(n_angles)
    return GaussianBelief(F @ belief.mean, symmetrize(P))


class EKFUpdate(NamedTuple):
    belief: GaussianBelief
    innovation: np.ndarray
    S: InnovationCovariance
    gains: list


def _pad(J: np.ndarray, dim: int) -> np.ndarray:
    if J.shape[1] == dim:
        return J
    out = np.zeros((J.shape[0], dim))
    out[:, : J.shape[1]] = J
    return out


def update(belief: GaussianBelief, obs: Observation, gains: Optional[list], cb: Codebook, noise_var: float,
           n_angles: Optional[int] = None, iterations: int = 1) -> EKFUpdate:
    """EKF measurement update of the angle belief.

    The complex gains are nuisance parameters: at every linearization point
    they are refit by least squares and their directions are projected out
    of the innovation and the Jacobian.  ``gains`` is only a fallback for a
    rank-deficient regressor.  With ``iterations > 1`` the update is iterated
    (Gauss-Newton relinearization).  The returned innovation and ``S`` belong
    to the last linearization, so the test statistic is the minimized
    Gauss-Newton cost rather than one inflated by curvature of the sweep
    response; for a linear model both coincide.  The innovation has
    ``2 N_r N_t - 2L`` effective real dimensions.
    """
    if n_angles is None:
        n_angles = belief.dim
    r = max(noise_var / 2.0, NOISE_FLOOR)
    y_r = stack_real(obs.y)
    prior = belief.mean
    P = belief.cov
    x = prior.copy()
    for it in range(max(1, iterations)):
        proj = _profile_gains(x[:n_angles], obs, cb, y_r, gains)
        gains = proj.gains
        J = _pad(proj.jacobian, belief.dim)
        S = InnovationCovariance(J, P, r)
        # innovation of the model linearized at x; at x = prior this is y - h(prior)
        innovation = proj.residual - J @ (prior - x)
        K = S.gain()
        x_new = prior + K @ innovation
        step = np.max(np.abs(x_new - x))
        x = x_new
        if step < 1e-10:
            break
    P_post = symmetrize(joseph_update(P, K, J, r))
    gains = _profile_gains(x[:n_angles], obs, cb, y_r, gains).gains
    return EKFUpdate(GaussianBelief(x, P_post), innovation, S, gains)


def chi2_cdf(x: float, dof: float) -> float:
    return float(gammainc(dof / 2.0, max(x, 0.0) / 2.0))


@lru_cache(maxsize=256)
def chi2_inverse_cdf(prob: float, dof: float, tol: float = 1e-10) -> float:
    """Chi-square quantile by bisection on the regularized lower incomplete gamma."""
    if not 0 < prob < 1:
        raise ValueError("probability must lie in (0, 1)")
    lo, hi = 0.0, max(1.0, float(dof))
    while chi2_cdf(hi, dof) < prob:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid, dof) < prob:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def change_test(innovation: np.ndarray, S, cfg: ChangeTestConfig, dof: Optional[int] = None):
    """Normalized-innovation chi-square test; returns ``(triggered, statistic, threshold)``.

    ``S`` may be a dense matrix or an :class:`InnovationCovariance`.
    """
    innovation = np.asarray(innovation, dtype=float)
    if isinstance(S, InnovationCovariance):
        stat = S.quad(innovation)
    else:
        try:
            c = np.linalg.cholesky(np.asarray(S, dtype=float))
        except np.linalg.LinAlgError as exc:
            raise FilterDiagnosticError("innovation covariance is not positive definite") from exc
        z = np.linalg.solve(c, innovation)
        stat = float(z @ z)
    if dof is None:
        dof = innovation.size
    thr = chi2_inverse_cdf(1.0 - cfg.p_fa, dof)
    return bool(stat > thr), stat, thr


def reacquire(frame, init_noise_std: float, rng: np.random.Generator, ar_order: int = 1):
    """Genie acquisition: the true angles plus Gaussian error of std ``init_noise_std``.

    Gains are left unset; they are refit from the next observation.
    """
    psi = frame.psi
    mean = psi + init_noise_std * rng.standard_normal(psi.size)
    n = psi.size
    belief = GaussianBelief(np.tile(mean, ar_order), init_noise_std ** 2 * np.eye(n * ar_order))
    return AngleState(mean), belief


def beam_scan_acquire(obs: Observation, cb: Codebook, num_paths: int) -> AngleState:
    """Non-genie initializer: grid angles of the ``num_paths`` strongest sweep entries."""
    mag = np.abs(obs.Y)
    order = np.argsort(mag, axis=None)[::-1][:num_paths]
    rx, tx = np.unravel_index(order, mag.shape)
    return AngleState(np.concatenate([cb.grid_angles_tx[tx], cb.grid_angles_rx[rx]]))


# ----------------------------------------------------------------------------
# stateful tracker


class ChannelStep(NamedTuple):
    psi: np.ndarray
    cov_diag: np.ndarray
    statistic: float
    threshold: float
    triggered: bool
    reacquired: bool
    gains_ok: bool


class ChannelTracker:
    """Predict / update / test / re-acquire loop for one run."""

    def __init__(self, process: ChannelProcessConfig, change: ChangeTestConfig, cb: Codebook, noise_var: float,
                 init_noise_std: float, iterations: int = 1, act_on_trigger: bool = True):
        self.process = process
        self.act_on_trigger = act_on_trigger
        self.change = change
        self.cb = cb
        self.noise_var = noise_var
        self.init_noise_std = init_noise_std
        self.iterations = iterations
        self.belief: Optional[GaussianBelief] = None
        self.gains: Optional[list] = None
        self.n_angles = 0
        self._stats: deque = deque(maxlen=change.window)

    @property
    def dof(self) -> int:
        return change_test_dof(self.cb.B.shape[0], self.cb.C.shape[0], self.n_angles // 2)

    def acquire(self, frame, obs: Observation, rng: np.random.Generator) -> None:
        _, self.belief = reacquire(frame, self.init_noise_std, rng, self.process.ar_order)
        self.n_angles = frame.psi.size
        self.gains, _ = estimate_gains(self.belief.mean[: self.n_angles], obs, self.cb)
        res = update(self.belief, obs, self.gains, self.cb, self.noise_var, self.n_angles, self.iterations)
        self.belief, self.gains = res.belief, res.gains
        self._stats.clear()

    def step(self, obs: Observation, frame=None, rng: Optional[np.random.Generator] = None,
             force_reacquire: bool = False) -> ChannelStep:
        """One time step.  ``frame``/``rng`` feed the genie re-acquisition."""
        if self.belief is None or force_reacquire:
            self.acquire(frame, obs, rng)
            return self._record(float("nan"), float("nan"), False, True, True)
        prior = predict(self.belief, self.process, self.n_angles)
        res = update(prior, obs, self.gains, self.cb, self.noise_var, self.n_angles, self.iterations)
        _, stat, _ = change_test(res.innovation, res.S, self.change, self.dof)
        self._stats.append(stat)
        total = float(sum(self._stats))
        thr = chi2_inverse_cdf(1.0 - self.change.p_fa, self.dof * len(self._stats))
        triggered = total > thr
        if triggered and self.act_on_trigger and frame is not None:
            self.acquire(frame, obs, rng)
            return self._record(total, thr, True, True, True)
        self.belief, self.gains = res.belief, res.gains
        return self._record(total, thr, triggered, False, True)

    def _record(self, stat, thr, trig, reacq, ok) -> ChannelStep:
        n = self.n_angles
        return ChannelStep(self.belief.mean[:n].copy(), np.diag(self.belief.cov)[:n].copy(), stat, thr, trig,
                           reacq, ok)
