"""ULA steering vectors, the L-scatterer channel, beam codebooks and beam-sweep observations.

Observations are vectorized column-major: ``y[i + n_rx * j] = Y[i, j]``.
The pilot symbol is fixed to 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


@dataclass
class ArrayConfig:
    n_tx: int = 64
    n_rx: int = 8
    carrier_freq: float = 40e9

    def validate(self):
        if self.n_tx < 1 or self.n_rx < 1:
            raise ValueError("antenna counts must be >= 1")
        if not self.carrier_freq > 0:
            raise ValueError("carrier_freq must be positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def n_meas(self) -> int:
        return self.n_tx * self.n_rx


@dataclass
class PathGain:
    alpha: complex
    rho: float = float("nan")
    delta: float = float("nan")


@dataclass
class AngleState:
    """Angles ``psi = [aod_1..aod_L, aoa_1..aoa_L]`` and optional path gains."""

    psi: np.ndarray
    gains: Optional[list] = None

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=float).reshape(-1)
        if self.psi.size % 2 or self.psi.size == 0:
            raise ValueError("psi must hold 2L angles")
        if not np.all(np.isfinite(self.psi)):
            raise ValueError("psi has non-finite entries")
        if self.gains is not None and len(self.gains) != self.num_paths:
            raise ValueError("one gain per path expected")

    @property
    def num_paths(self) -> int:
        return self.psi.size // 2

    @property
    def aod(self) -> np.ndarray:
        return self.psi[: self.num_paths]

    @property
    def aoa(self) -> np.ndarray:
        return self.psi[self.num_paths:]

    @property
    def alphas(self) -> np.ndarray:
        if self.gains is None:
            raise ValueError("path gains not available")
        return np.array([g.alpha for g in self.gains], dtype=complex)


@dataclass
class Codebook:
    B: np.ndarray
    C: np.ndarray
    grid_angles_tx: np.ndarray
    grid_angles_rx: np.ndarray


@dataclass
class Observation:
    Y: np.ndarray
    t: int = 0

    @property
    def y(self) -> np.ndarray:
        return vec(self.Y)


def vec(Y: np.ndarray) -> np.ndarray:
    return np.asarray(Y).reshape(-1, order="F")


def unvec(y: np.ndarray, n_rx: int, n_tx: int) -> np.ndarray:
    return np.asarray(y).reshape((n_rx, n_tx), order="F")


def steering_vector(angle, n: int) -> np.ndarray:
    """``(1/sqrt(n)) exp(-j pi k cos(angle))`` for ``k = 0..n-1``.

    ``angle`` may be an array, in which case one column per angle is returned.
    """
    if n < 1:
        raise ValueError("array size must be >= 1")
    k = np.arange(n)
    a = np.asarray(angle, dtype=float)
    return np.exp(-1j * np.pi * np.multiply.outer(k, np.cos(a))) / math.sqrt(n)


def steering_derivative(angle, n: int) -> np.ndarray:
    """Derivative of :func:`steering_vector` with respect to the angle."""
    k = np.arange(n)
    a = np.asarray(angle, dtype=float)
    return (1j * np.pi * np.multiply.outer(k, np.sin(a))) * steering_vector(a, n)


def steering_tx(phi, n: int) -> np.ndarray:
    return steering_vector(phi, n)


def steering_rx(theta, n: int) -> np.ndarray:
    return steering_vector(theta, n)


def build_channel(state: AngleState, arrays: ArrayConfig) -> np.ndarray:
    """``H = sum_l alpha_l a_r(aoa_l) a_t(aod_l)^H``."""
    At = steering_vector(state.aod, arrays.n_tx)
    Ar = steering_vector(state.aoa, arrays.n_rx)
    return (Ar * state.alphas) @ At.conj().T


def make_codebook(arrays: ArrayConfig, kind: str = "dft") -> Codebook:
    """Steering-vector beam codebooks covering ``[0, pi]``.

    ``dft`` puts the grid cosines at ``-1 + 2(k+1)/N`` so the codebook is
    unitary; ``uniform_angle`` uses the midpoint angle grid ``(k + 1/2) pi / N``.
    """

    def grid(n):
        k = np.arange(n)
        if kind == "dft":
            return np.sort(np.arccos(np.clip(-1.0 + 2.0 * (k + 1) / n, -1.0, 1.0)))
        if kind == "uniform_angle":
            return (k + 0.5) * np.pi / n
        raise ValueError(f"unknown codebook kind {kind!r}")

    gt = grid(arrays.n_tx)
    gr = grid(arrays.n_rx)
    return Codebook(B=steering_vector(gt, arrays.n_tx), C=steering_vector(gr, arrays.n_rx),
                    grid_angles_tx=gt, grid_angles_rx=gr)


def path_signatures(aod, aoa, cb: Codebook) -> np.ndarray:
    """Columns ``vec(C^H a_r(aoa_l) a_t(aod_l)^H B)``, one per path."""
    u = cb.C.conj().T @ steering_vector(aoa, cb.C.shape[0])
    v = cb.B.T @ steering_vector(aod, cb.B.shape[0]).conj()
    return _kron_columns(v, u)


def _kron_columns(v: np.ndarray, u: np.ndarray) -> np.ndarray:
    # column l is kron(v[:, l], u[:, l]) == vec(u_l v_l^T)
    return (v[:, None, :] * u[None, :, :]).reshape(-1, u.shape[1])


def noiseless_observation(state: AngleState, cb: Codebook) -> np.ndarray:
    """``h~(psi)``: the vectorized noise-free beam sweep."""
    return path_signatures(state.aod, state.aoa, cb) @ state.alphas


def observe(state: AngleState, cb: Codebook, noise_var: float, rng: Optional[np.random.Generator] = None,
            t: int = 0) -> Observation:
    """Beam sweep ``Y = C^H H B + C^H W`` with ``W`` i.i.d. CN(0, noise_var)."""
    if noise_var < 0:
        raise ValueError("noise variance must be non-negative")
    n_rx, n_tx = cb.C.shape[0], cb.B.shape[0]
    Y = unvec(noiseless_observation(state, cb), n_rx, n_tx)
    if noise_var > 0:
        W = math.sqrt(noise_var / 2.0) * (rng.standard_normal((n_rx, n_tx))
                                          + 1j * rng.standard_normal((n_rx, n_tx)))
        Y = Y + cb.C.conj().T @ W
    return Observation(Y=Y, t=t)


def snr_db_to_linear(snr_db: float) -> float:
    return 10.0 ** (snr_db / 10.0)


def noise_variance_from_snr(snr_linear: float, arrays: ArrayConfig) -> float:
    """``sigma_w^2 = N_r N_t / SNR``; an infinite SNR gives 0."""
    if not snr_linear > 0:
        raise ValueError("SNR must be positive")
    return arrays.n_rx * arrays.n_tx / snr_linear


def synthesize_gains(path_lengths: Sequence[float], arrays: ArrayConfig, gain_model: str = "unit_rho") -> list:
    """Complex gains ``rho_l sqrt(N_t N_r) exp(-j 2 pi Delta_l / lambda)`` with ``Delta_l = R_l``.

    ``unit_rho``: rho = 1, so |alpha| = sqrt(N_t N_r) and ``N_r N_t / sigma_w^2``
    is the per-path SNR after beamforming.  ``unit_gain``: |alpha| = 1.
    ``inverse_range``: rho proportional to 1/R, scaled so sum(rho^2) = L.
    """
    R = np.asarray(path_lengths, dtype=float)
    if np.any(R <= 0):
        raise ValueError("path lengths must be positive")
    scale = math.sqrt(arrays.n_tx * arrays.n_rx)
    if gain_model == "unit_rho":
        rho = np.ones_like(R)
    elif gain_model == "unit_gain":
        rho = np.full_like(R, 1.0 / scale)
    elif gain_model == "inverse_range":
        inv = 1.0 / R
        rho = inv * math.sqrt(R.size / np.sum(inv ** 2))
    else:
        raise ValueError(f"unknown gain model {gain_model!r}")
    phase = np.exp(-2j * np.pi * np.mod(R, arrays.wavelength) / arrays.wavelength)
    return [PathGain(alpha=complex(r * scale * p), rho=float(r), delta=float(d))
            for r, p, d in zip(rho, phase, R)]


def write_observation_csv(obs: Observation, path) -> None:
    """Dump ``Y`` as rows of interleaved real/imag parts."""
    Y = obs.Y
    out = np.empty((Y.shape[0], 2 * Y.shape[1]))
    out[:, 0::2] = Y.real
    out[:, 1::2] = Y.imag
    np.savetxt(path, out, delimiter=",", fmt="%.17g")
