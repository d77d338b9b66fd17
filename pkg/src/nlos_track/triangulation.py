"""Coarse UE position and orientation from single-bounce paths.

Each path ``(aod, aoa, R)`` puts the UE on the line through
``BS + R (cos(aoa + gamma), sin(aoa + gamma))`` with direction
``u(aod) - u(aoa + gamma)``.  After normalization the unit normal of that
line is ``(cos m, sin m)`` with ``m = (aod + aoa + gamma) / 2`` and the
signed distance of a point ``p`` is

    s = (p - BS) . (cos m, sin m) - R cos((aoa + gamma - aod) / 2)

so the cost ``sum beta_l s_l^2`` is quadratic in ``p`` for fixed ``gamma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .kalman import wrap_angle
from .scene import GeometryError


class PathLine(NamedTuple):
    a: float
    b: float
    c: float
    weight: float = 1.0


@dataclass
class PoseEstimate:
    x: float
    y: float
    gamma: float
    cost: float
    status: str  # converged | max_iter | degenerate


@dataclass
class SolveOptions:
    gamma_bracket: float = math.radians(10.0)
    max_iter: int = 200
    xtol: float = 1e-12
    grid_points: int = 720
    newton_steps: int = 8
    fix_gamma: bool = False
    max_condition: float = 1e8


def build_line(aod: float, aoa: float, gamma: float, R: float, bs=(0.0, 0.0), weight: float = 1.0) -> PathLine:
    """Line ``a x + b y + c = 0`` holding the UE for one path."""
    psi = aoa + gamma
    if abs(math.sin(aod - psi)) <= 1e-9:
        raise GeometryError("BS and UE legs are parallel; the path does not define a line")
    a = math.sin(aod) - math.sin(psi)
    b = math.cos(psi) - math.cos(aod)
    c = -a * (R * math.cos(psi) + bs[0]) - b * (R * math.sin(psi) + bs[1])
    return PathLine(a, b, c, weight)


def point_line_distance(p, line: PathLine) -> float:
    return abs(line.a * p[0] + line.b * p[1] + line.c) / math.hypot(line.a, line.b)


def cost(x: float, y: float, gamma: float, paths, bs=(0.0, 0.0)) -> float:
    """``sum beta_l d_l^2`` with the point-to-line distance of the raw lines."""
    total = 0.0
    for aod, aoa, R, beta in paths:
        total += beta * point_line_distance((x, y), build_line(aod, aoa, gamma, R, bs)) ** 2
    return total


def path_weights(policy: str, variances: Optional[Sequence[float]] = None, num_paths: Optional[int] = None):
    """Per-path weights.

    ``uniform`` gives ones; ``innovation_inverse`` weights each path by the
    inverse of its angle posterior variance, normalized to sum to L.
    """
    if policy == "uniform":
        n = num_paths if num_paths is not None else len(variances)
        return np.ones(n)
    if policy == "innovation_inverse":
        inv = 1.0 / np.asarray(variances, dtype=float)
        return inv * (inv.size / inv.sum())
    raise ValueError(f"unknown weight policy {policy!r}")


class _Profile:
    """Cost, gradient and Hessian in ``(x, y, gamma)`` for a set of paths."""

    def __init__(self, paths, bs):
        arr = np.asarray(paths, dtype=float).reshape(-1, 4)
        self.aod, self.aoa, self.R, self.beta = arr.T
        self.bs = np.asarray(bs, dtype=float)

    def _terms(self, gamma):
        m = 0.5 * (self.aod + self.aoa + gamma)
        half = 0.5 * (self.aoa + gamma - self.aod)
        n = np.stack([np.cos(m), np.sin(m)], axis=1)
        t = n @ self.bs + self.R * np.cos(half)
        return n, t, half

    def inner(self, gamma):
        """Weighted least-squares position for fixed ``gamma``; returns ``(p, cost, cond)``."""
        n, t, _ = self._terms(gamma)
        A = (n * self.beta[:, None]).T @ n
        cond = np.linalg.cond(A)
        if not np.isfinite(cond):
            return np.full(2, np.nan), np.inf, np.inf
        p = np.linalg.solve(A, (n * self.beta[:, None]).T @ t)
        s = n @ p - t
        return p, float(self.beta @ s ** 2), cond

    def value(self, gamma):
        return float(self.values([gamma])[0])

    def values(self, gammas):
        """Profile cost at many orientations at once (closed-form 2x2 solves)."""
        g = np.asarray(gammas, dtype=float)[:, None]
        m = 0.5 * (self.aod + self.aoa + g)
        c, s = np.cos(m), np.sin(m)
        t = c * self.bs[0] + s * self.bs[1] + self.R * np.cos(0.5 * (self.aoa + g - self.aod))
        b = self.beta
        a11, a12, a22 = (b * c * c).sum(1), (b * c * s).sum(1), (b * s * s).sum(1)
        r1, r2 = (b * c * t).sum(1), (b * s * t).sum(1)
        det = a11 * a22 - a12 * a12
        with np.errstate(divide="ignore", invalid="ignore"):
            x = (a22 * r1 - a12 * r2) / det
            y = (a11 * r2 - a12 * r1) / det
            res = c * x[:, None] + s * y[:, None] - t
            out = (b * res ** 2).sum(1)
        return np.where(np.isfinite(out), out, np.inf)

    def derivatives(self, p, gamma):
        n, t, half = self._terms(gamma)
        s = n @ p - t
        q = p - self.bs
        ds_dg = 0.5 * (-q[0] * n[:, 1] + q[1] * n[:, 0]) + 0.5 * self.R * np.sin(half)
        grad_s = np.column_stack([n, ds_dg])
        b = self.beta
        grad = 2.0 * grad_s.T @ (b * s)
        H = 2.0 * (grad_s * b[:, None]).T @ grad_s
        # second derivatives of s: d2s/dxdg = -0.5 sin m, d2s/dydg = 0.5 cos m, d2s/dg2 = -s/4
        H[0, 2] += 2.0 * np.sum(b * s * (-0.5 * n[:, 1]))
        H[1, 2] += 2.0 * np.sum(b * s * (0.5 * n[:, 0]))
        H[2, 0], H[2, 1] = H[0, 2], H[1, 2]
        H[2, 2] += 2.0 * np.sum(b * s * (-0.25 * s))
        return grad, H


def _brent(profile: _Profile, lo: float, hi: float, opts: SolveOptions):
    res = minimize_scalar(profile.value, bounds=(lo, hi), method="bounded",
                          options={"xatol": opts.xtol, "maxiter": opts.max_iter})
    return float(res.x), bool(res.success)


def solve_pose(paths, bs=(0.0, 0.0), gamma_init: Optional[float] = None,
               opts: Optional[SolveOptions] = None) -> PoseEstimate:
    """Minimize ``sum beta_l d_l^2`` over ``(x, y, gamma)``.

    ``paths`` holds ``(aod, aoa, R, beta)`` rows.  For fixed ``gamma`` the
    position is a closed-form weighted least-squares solve; ``gamma`` is
    searched with a bounded Brent search (golden section with parabolic
    steps) within ``opts.gamma_bracket`` of ``gamma_init`` and then polished
    by Newton steps on the full cost.  Without ``gamma_init`` a grid over
    ``(-pi, pi]`` seeds the bracket.  With fewer than three paths ``gamma``
    must be supplied and is held fixed.
    """
    opts = opts or SolveOptions()
    paths = [tuple(map(float, p)) for p in paths]
    nan = float("nan")
    if len(paths) < 2:
        return PoseEstimate(nan, nan, nan, nan, "degenerate")
    prof = _Profile(paths, bs)
    fix = opts.fix_gamma or len(paths) < 3
    if fix:
        if gamma_init is None:
            return PoseEstimate(nan, nan, nan, nan, "degenerate")
        g = wrap_angle(gamma_init)
        p, c, cond = prof.inner(g)
        status = "degenerate" if cond > opts.max_condition else "converged"
        return PoseEstimate(float(p[0]), float(p[1]), g, c, status)

    ok = True
    if gamma_init is None:
        g = _grid_search(prof, opts)
    else:
        lo, hi = gamma_init - opts.gamma_bracket, gamma_init + opts.gamma_bracket
        g, ok = _brent(prof, lo, hi, opts)
        edge = 1e-6 * opts.gamma_bracket
        if min(g - lo, hi - g) < edge:
            # minimizer pinned to the bracket: the seed was off, search globally
            g = _grid_search(prof, opts)
            ok = True
    p, c, cond = prof.inner(g)
    g, p, c, converged = _newton_polish(prof, g, p, c, opts)
    if cond > opts.max_condition or not np.all(np.isfinite(p)):
        status = "degenerate"
    elif ok and converged:
        status = "converged"
    else:
        status = "max_iter"
    return PoseEstimate(float(p[0]), float(p[1]), wrap_angle(g), c, status)


def _grid_search(prof: _Profile, opts: SolveOptions) -> float:
    grid = np.linspace(-np.pi, np.pi, opts.grid_points, endpoint=False) + 2 * np.pi / opts.grid_points
    vals = prof.values(grid)
    k = int(np.argmin(vals))
    step = grid[1] - grid[0]
    g, _ = _brent(prof, grid[k] - 2 * step, grid[k] + 2 * step, opts)
    return g


def _newton_polish(prof: _Profile, g, p, c, opts: SolveOptions):
    x = np.array([p[0], p[1], g])
    for _ in range(opts.newton_steps):
        grad, H = prof.derivatives(x[:2], x[2])
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            return x[2], x[:2], c, False
        cand = x - step
        p_c, c_c, _ = prof.inner(cand[2])
        # near the minimum cost differences are lost in rounding; judge by the gradient then
        flat = c_c <= c + 1e-10 * max(c, 1.0)
        if not (c_c <= c or (flat and np.linalg.norm(prof.derivatives(p_c, cand[2])[0]) < np.linalg.norm(grad))):
            return x[2], x[:2], c, True
        x = np.array([p_c[0], p_c[1], cand[2]])
        c = c_c
        if abs(step[2]) < 1e-15 * max(1.0, abs(x[2])):
            break
    return x[2], x[:2], c, True
