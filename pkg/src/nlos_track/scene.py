"""Vehicle trajectory, scatterer placement and per-step ground-truth geometry.

Coordinates: the base station sits at the origin in the corner of the
``width x height`` area, which spans ``[0, width] x [0, height]``.  Every
point of the area is therefore seen by the base-station array at an angle in
``[0, pi/2]`` from its axis (the x axis).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .kalman import wrap_angle


class GeometryError(ValueError):
    """Degenerate scene geometry (coincident points, parallel legs, ...)."""


class Point2(NamedTuple):
    x: float
    y: float


@dataclass
class TrajectoryConfig:
    shape: str = "s_curve"
    speed: float = 15.0
    duration: Optional[float] = None
    dt: float = 0.1
    area: tuple = (500.0, 600.0)
    waypoint_list: Optional[list] = None
    arc_radius: float = 125.0

    def validate(self):
        if self.shape not in ("s_curve", "waypoints"):
            raise ValueError(f"unknown trajectory shape {self.shape!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.speed < 0:
            raise ValueError("speed must be non-negative")
        if self.duration is not None and self.duration < 0:
            raise ValueError("duration must be non-negative")
        if self.shape == "waypoints" and not self.waypoint_list:
            raise ValueError("waypoints mode needs a non-empty waypoint_list")
        if self.shape == "s_curve" and not self.arc_radius > 0:
            raise ValueError("arc_radius must be positive")


@dataclass
class ScattererPolicy:
    """Scatterer re-draw rule.

    Besides the uniform-disk draw, a candidate is rejected while any pose of
    the coming epoch sees it nearly collinear with the BS (line degenerate
    for triangulation), too close to the vehicle, behind the BS array, or
    crossing the UE array axis (AoA leaving ``(0, pi)``).
    """

    redraw_distance: float = 50.0
    placement_radius: float = 80.0
    num_paths: int = 4
    rng_seed: int = 0
    num_paths_choices: Optional[list] = None
    min_ue_distance: float = 20.0
    aod_margin: float = 0.05
    aoa_margin: float = 0.15
    collinear_tol: float = 1e-3
    min_aod_separation: float = 0.02
    min_aoa_separation: float = 0.15
    max_retries: int = 1000
    max_paths: int = 16

    def validate(self):
        if not self.redraw_distance > 0:
            raise ValueError("redraw_distance must be positive")
        if not self.placement_radius > 0:
            raise ValueError("placement_radius must be positive")
        counts = self.num_paths_choices or [self.num_paths]
        for n in counts:
            if not 1 <= n <= self.max_paths:
                raise ValueError(f"number of paths {n} outside [1, {self.max_paths}]")


@dataclass
class Trajectory:
    """Sampled trajectory; row ``k`` is time ``k * dt``."""

    pos: np.ndarray
    heading: np.ndarray
    vel: np.ndarray
    acc: np.ndarray
    arclength: np.ndarray
    dt: float

    def __len__(self):
        return self.pos.shape[0]

    def __iter__(self):
        for k in range(len(self)):
            yield Point2(*self.pos[k]), float(self.heading[k]), tuple(self.vel[k]), tuple(self.acc[k])


@dataclass
class SceneFrame:
    t: int
    ue_pos: Point2
    ue_orientation: float
    ue_vel: tuple
    ue_acc: tuple
    scatterers: list
    true_aod: np.ndarray
    true_aoa: np.ndarray
    path_lengths: np.ndarray
    epoch_id: int
    bs_pos: Point2 = Point2(0.0, 0.0)

    @property
    def num_paths(self) -> int:
        return len(self.scatterers)

    @property
    def psi(self) -> np.ndarray:
        return np.concatenate([self.true_aod, self.true_aoa])

    @property
    def pose_state(self) -> np.ndarray:
        """True 7-vector ``[x, y, vx, vy, ax, ay, gamma]``."""
        return np.array([*self.ue_pos, *self.ue_vel, *self.ue_acc, self.ue_orientation])


# ----------------------------------------------------------------------------
# parametric paths


@dataclass
class _Segment:
    start: np.ndarray
    heading: float
    length: float
    center: Optional[np.ndarray] = None
    turn: int = 0

    def at(self, u: float):
        if self.center is None:
            d = np.array([math.cos(self.heading), math.sin(self.heading)])
            return self.start + u * d, self.heading
        r = float(np.hypot(*(self.start - self.center)))
        a0 = math.atan2(self.start[1] - self.center[1], self.start[0] - self.center[0])
        a = a0 + self.turn * u / r
        p = self.center + r * np.array([math.cos(a), math.sin(a)])
        return p, a + self.turn * math.pi / 2


@dataclass
class _Path:
    segments: list = field(default_factory=list)

    @property
    def length(self) -> float:
        return float(sum(s.length for s in self.segments))

    def _end(self):
        last = self.segments[-1]
        return last.at(last.length)

    def at(self, s: float):
        if s < 0.0:
            first = self.segments[0]
            d = np.array([math.cos(first.heading), math.sin(first.heading)])
            return first.start + s * d, first.heading
        for seg in self.segments:
            if s <= seg.length:
                return seg.at(s)
            s -= seg.length
        p, h = self._end()
        return p + s * np.array([math.cos(h), math.sin(h)]), h


def _s_curve(cfg: TrajectoryConfig) -> _Path:
    width, height = cfg.area
    r = cfg.arc_radius
    lead = r
    cx = width / 2.0
    y0 = (height - 4.0 * r) / 2.0
    if y0 < 0 or cx - max(r, lead) < 0 or cx + max(r, lead) > width:
        raise ValueError(f"arc_radius {r} does not fit an S-curve into area {cfg.area}")
    west = math.pi
    return _Path([
        _Segment(np.array([cx + lead, y0]), west, lead),
        _Segment(np.array([cx, y0]), west, math.pi * r, center=np.array([cx, y0 + r]), turn=-1),
        _Segment(np.array([cx, y0 + 2 * r]), 0.0, math.pi * r, center=np.array([cx, y0 + 3 * r]), turn=1),
        _Segment(np.array([cx, y0 + 4 * r]), west, lead),
    ])


def _polyline(cfg: TrajectoryConfig) -> _Path:
    width, height = cfg.area
    pts = [np.asarray(p, dtype=float) for p in cfg.waypoint_list]
    for p in pts:
        if not (-1e-9 <= p[0] <= width + 1e-9 and -1e-9 <= p[1] <= height + 1e-9):
            raise ValueError(f"waypoint {tuple(p)} lies outside the area {cfg.area}")
    segs = []
    for a, b in zip(pts[:-1], pts[1:]):
        d = b - a
        n = float(np.hypot(*d))
        if n > 0:
            segs.append(_Segment(a, math.atan2(d[1], d[0]), n))
    if not segs:
        segs.append(_Segment(pts[0], 0.0, 0.0))
    return _Path(segs)


def generate_trajectory(cfg: TrajectoryConfig, n_steps: Optional[int] = None) -> Trajectory:
    """Sample a constant-speed trajectory every ``cfg.dt`` seconds.

    Positions follow the path at arc length ``speed * k * dt``.  Velocity and
    acceleration are the central first and second differences of the sampled
    positions (the path is extrapolated along its end tangents by one sample
    so every step gets a central difference), and the orientation is the
    heading of that velocity.
    """
    cfg.validate()
    path = _s_curve(cfg) if cfg.shape == "s_curve" else _polyline(cfg)
    step = cfg.speed * cfg.dt
    if n_steps is None:
        if cfg.duration is not None:
            n_steps = int(round(cfg.duration / cfg.dt)) + 1
        elif step > 0:
            n_steps = int(math.floor(path.length / step + 1e-9)) + 1
        else:
            raise ValueError("a zero-speed trajectory needs an explicit duration")
    if n_steps < 1:
        raise ValueError("trajectory needs at least one sample")
    s = step * np.arange(-1, n_steps + 1)
    if s[-2] > path.length + 1e-9:
        raise ValueError(
            f"trajectory of {s[-2]:.1f} m exceeds the {path.length:.1f} m path; shorten duration or speed")
    samples = [path.at(float(si)) for si in s]
    p = np.array([q for q, _ in samples])
    tangent = np.array([h for _, h in samples])
    vel = (p[2:] - p[:-2]) / (2 * cfg.dt)
    acc = (p[2:] - 2 * p[1:-1] + p[:-2]) / cfg.dt ** 2
    speed = np.hypot(vel[:, 0], vel[:, 1])
    heading = np.where(speed > 0, np.arctan2(vel[:, 1], vel[:, 0]), wrap_angle(tangent[1:-1]))
    return Trajectory(pos=p[1:-1], heading=heading, vel=vel, acc=acc, arclength=s[1:-1], dt=cfg.dt)


# ----------------------------------------------------------------------------
# geometry


def compute_geometry(bs, ue, gamma: float, scatterers):
    """Per-path AoD, AoA and path length for single-bounce paths.

    The AoD is the global angle of the ray BS -> S_l; the AoA is the global
    angle of the ray S_l -> UE minus the UE orientation, wrapped to
    ``(-pi, pi]``.  Scenes built by :func:`build_scene` keep both in
    ``(0, pi)``.
    """
    bs = np.asarray(bs, dtype=float)
    ue = np.asarray(ue, dtype=float)
    S = np.atleast_2d(np.asarray(scatterers, dtype=float))
    leg1 = S - bs
    leg2 = ue - S
    r1 = np.hypot(leg1[:, 0], leg1[:, 1])
    r2 = np.hypot(leg2[:, 0], leg2[:, 1])
    if np.any(r1 == 0) or np.any(r2 == 0):
        raise GeometryError("a scatterer coincides with the BS or the UE")
    aod = np.arctan2(leg1[:, 1], leg1[:, 0])
    aoa = wrap_angle(np.arctan2(leg2[:, 1], leg2[:, 0]) - gamma)
    return aod, np.atleast_1d(aoa), r1 + r2


def reconstruct_ue(bs, aod, aoa, gamma, path_length, bs_leg):
    """Point at distance ``bs_leg`` from the BS along the AoD, then along the AoA ray."""
    bs = np.asarray(bs, dtype=float)
    psi = np.asarray(aoa) + gamma
    s = bs + np.stack([bs_leg * np.cos(aod), bs_leg * np.sin(aod)], axis=-1)
    rest = np.asarray(path_length) - bs_leg
    return s + np.stack([rest * np.cos(psi), rest * np.sin(psi)], axis=-1)


def _acceptable(cand, bs, poses, policy: ScattererPolicy) -> bool:
    leg1 = cand - bs
    if np.hypot(*leg1) <= 1e-6:
        return False
    aod = math.atan2(leg1[1], leg1[0])
    if not policy.aod_margin < aod < math.pi - policy.aod_margin:
        return False
    for pos, heading in poses:
        leg2 = pos - cand
        if np.hypot(*leg2) < max(policy.min_ue_distance, 1e-6):
            return False
        ray = math.atan2(leg2[1], leg2[0])
        if abs(math.sin(aod - ray)) < policy.collinear_tol:
            return False
        if heading is not None:
            aoa = wrap_angle(ray - heading)
            if not policy.aoa_margin < aoa < math.pi - policy.aoa_margin:
                return False
    return True


def _cosines(cand, bs, ue, heading):
    leg1 = cand - bs
    cos_aod = leg1[0] / np.hypot(*leg1)
    if heading is None:
        return cos_aod, math.inf
    leg2 = ue - cand
    return cos_aod, math.cos(math.atan2(leg2[1], leg2[0]) - heading)


def place_scatterers(ue_pos, bs_pos, policy: ScattererPolicy, rng: np.random.Generator,
                     num_paths: Optional[int] = None, poses: Optional[Sequence] = None,
                     ue_heading: Optional[float] = None) -> list:
    """Draw scatterers uniformly in a disk around the UE.

    Two scatterers must differ by ``min_aod_separation`` in AoD cosine or by
    ``min_aoa_separation`` in AoA cosine so their paths stay resolvable.

    ``poses`` is an optional sequence of ``(position, heading)`` pairs the
    scatterers must stay acceptable for (typically the rest of the epoch);
    when omitted only the current UE pose is checked.
    """
    if not policy.placement_radius > 0:
        raise ValueError("placement_radius must be positive")
    L = policy.num_paths if num_paths is None else num_paths
    ue = np.asarray(ue_pos, dtype=float)
    bs = np.asarray(bs_pos, dtype=float)
    if poses is None:
        poses = [(ue, ue_heading)]
    else:
        poses = [(np.asarray(p, dtype=float), h) for p, h in poses]
    out = []
    cosines = []
    pos0, head0 = poses[0]
    for _ in range(L):
        for _attempt in range(policy.max_retries):
            rad = policy.placement_radius * math.sqrt(rng.random())
            ang = 2.0 * math.pi * rng.random()
            cand = ue + rad * np.array([math.cos(ang), math.sin(ang)])
            if not _acceptable(cand, bs, poses, policy):
                continue
            c = _cosines(cand, bs, pos0, head0)
            if any(abs(c[0] - o[0]) < policy.min_aod_separation and abs(c[1] - o[1]) < policy.min_aoa_separation
                   for o in cosines):
                continue
            out.append(Point2(float(cand[0]), float(cand[1])))
            cosines.append(c)
            break
        else:
            raise GeometryError(
                f"no acceptable scatterer after {policy.max_retries} draws around {tuple(ue)}")
    return out


def epoch_ids(arclength: np.ndarray, redraw_distance: float) -> np.ndarray:
    if math.isinf(redraw_distance):
        return np.zeros(len(arclength), dtype=int)
    return np.floor(np.asarray(arclength) / redraw_distance + 1e-9).astype(int)


def build_scene(traj_cfg: TrajectoryConfig, policy: ScattererPolicy, bs=Point2(0.0, 0.0),
                n_steps: Optional[int] = None, rng: Optional[np.random.Generator] = None) -> list:
    """Trajectory plus scatterers re-drawn every ``policy.redraw_distance`` meters."""
    policy.validate()
    if rng is None:
        rng = np.random.default_rng(policy.rng_seed)
    traj = generate_trajectory(traj_cfg, n_steps)
    epochs = epoch_ids(traj.arclength, policy.redraw_distance)
    bs = Point2(*map(float, bs))
    frames = []
    scat = None
    for k in range(len(traj)):
        if k == 0 or epochs[k] != epochs[k - 1]:
            idx = np.flatnonzero(epochs == epochs[k])
            poses = [(traj.pos[i], traj.heading[i]) for i in idx]
            L = policy.num_paths
            if policy.num_paths_choices:
                L = int(rng.choice(policy.num_paths_choices))
            scat = place_scatterers(traj.pos[k], bs, policy, rng, num_paths=L, poses=poses)
        aod, aoa, R = compute_geometry(bs, traj.pos[k], traj.heading[k], scat)
        frames.append(SceneFrame(
            t=k, ue_pos=Point2(*map(float, traj.pos[k])), ue_orientation=float(traj.heading[k]),
            ue_vel=tuple(map(float, traj.vel[k])), ue_acc=tuple(map(float, traj.acc[k])),
            scatterers=list(scat), true_aod=aod, true_aoa=aoa, path_lengths=R,
            epoch_id=int(epochs[k]), bs_pos=bs))
    return frames


def write_scene_csv(frames: Sequence[SceneFrame], path) -> None:
    """One row per step; per-path columns are padded to the largest L."""
    lmax = max(f.num_paths for f in frames)
    header = ["t", "x", "y", "gamma", "vx", "vy", "ax", "ay", "epoch_id"]
    for l in range(1, lmax + 1):
        header += [f"phi_{l}", f"theta_{l}", f"R_{l}", f"s_x_{l}", f"s_y_{l}"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for f in frames:
            row = [f.t, *(repr(float(v)) for v in (*f.ue_pos, f.ue_orientation, *f.ue_vel, *f.ue_acc)), f.epoch_id]
            for l in range(lmax):
                if l < f.num_paths:
                    row += [repr(float(v)) for v in (f.true_aod[l], f.true_aoa[l], f.path_lengths[l],
                                                      *f.scatterers[l])]
                else:
                    row += [""] * 5
            w.writerow(row)
