import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from nlos_track.scene import GeometryError
from nlos_track.triangulation import (PathLine, SolveOptions, build_line, cost, path_weights, point_line_distance,
                                      solve_pose)

from oracles import central_difference, random_scene


def test_build_line_example():
    line = build_line(math.pi / 2, 0.0, 0.0, 10.0)
    assert (line.a, line.b, line.c) == pytest.approx((1.0, 1.0, -10.0))
    assert point_line_distance((0.0, 0.0), line) == pytest.approx(10 / math.sqrt(2))
    assert point_line_distance((4.0, 6.0), line) == pytest.approx(0.0, abs=1e-12)


def test_build_line_parallel_legs():
    with pytest.raises(GeometryError):
        build_line(1.0, 0.7, 0.3, 50.0)


@given(st.integers(0, 2**32 - 1))
def test_true_ue_lies_on_every_line(seed):
    rng = np.random.default_rng(seed)
    bs = tuple(rng.uniform(-100, 100, 2))
    ue, gamma, rows = random_scene(rng, 4, bs)
    for aod, aoa, R, _ in rows:
        assert point_line_distance(ue, build_line(aod, aoa, gamma, R, bs)) <= 1e-9


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(0.01, 100) | st.floats(-100, -0.01))
def test_distance_scale_invariant(x, y, k):
    line = PathLine(0.3, -1.2, 4.0)
    scaled = PathLine(k * line.a, k * line.b, k * line.c)
    assert point_line_distance((x, y), scaled) == pytest.approx(point_line_distance((x, y), line), rel=1e-12,
                                                                abs=1e-12)


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1))
def test_exact_round_trip(seed):
    rng = np.random.default_rng(seed)
    ue, gamma, rows = random_scene(rng, 4)
    est = solve_pose(rows, gamma_init=gamma + rng.uniform(-0.1, 0.1))
    assert est.status == "converged"
    assert math.hypot(est.x - ue[0], est.y - ue[1]) <= 1e-6
    assert abs(math.remainder(est.gamma - gamma, 2 * math.pi)) <= 1e-8
    assert 0.0 <= est.cost <= 1e-12


def test_exact_round_trip_without_initial_orientation():
    rng = np.random.default_rng(42)
    for _ in range(10):
        ue, gamma, rows = random_scene(rng, 4)
        est = solve_pose(rows)
        assert math.hypot(est.x - ue[0], est.y - ue[1]) <= 1e-6
        assert abs(math.remainder(est.gamma - gamma, 2 * math.pi)) <= 1e-8


def test_two_paths_with_fixed_orientation():
    rng = np.random.default_rng(3)
    ue, gamma, rows = random_scene(rng, 2)
    est = solve_pose(rows, gamma_init=gamma)
    assert est.gamma == gamma
    l1, l2 = (build_line(*r[:3][:2], gamma, r[2]) for r in rows)
    A = np.array([[l1.a, l1.b], [l2.a, l2.b]])
    p = np.linalg.solve(A, -np.array([l1.c, l2.c]))
    assert (est.x, est.y) == pytest.approx(tuple(p), abs=1e-9)
    assert (est.x, est.y) == pytest.approx(tuple(ue), abs=1e-9)


def test_too_few_paths_is_degenerate():
    rng = np.random.default_rng(8)
    _, gamma, rows = random_scene(rng, 2)
    assert solve_pose(rows).status == "degenerate"
    assert solve_pose(rows[:1], gamma_init=gamma).status == "degenerate"


def test_parallel_lines_are_degenerate():
    rows = [(1.0, 2.0, 100.0, 1.0), (1.0, 2.0, 150.0, 1.0), (1.0, 2.0, 200.0, 1.0)]
    assert solve_pose(rows, gamma_init=0.0, opts=SolveOptions(fix_gamma=True)).status == "degenerate"


def test_weight_additivity():
    rng = np.random.default_rng(5)
    ue, gamma, rows = random_scene(rng, 4)
    noisy = [(a + rng.normal(0, 0.01), b + rng.normal(0, 0.01), R, w) for a, b, R, w in rows]
    doubled = noisy[:3] + [noisy[3][:3] + (2.0,)]
    copies = noisy + [noisy[3]]
    e1, e2 = solve_pose(doubled, gamma_init=gamma), solve_pose(copies, gamma_init=gamma)
    assert (e1.x, e1.y, e1.gamma) == pytest.approx((e2.x, e2.y, e2.gamma), abs=1e-8)
    assert e1.cost == pytest.approx(e2.cost, rel=1e-8)


def test_path_weights():
    assert list(path_weights("uniform", num_paths=4)) == [1, 1, 1, 1]
    assert path_weights("innovation_inverse", [0.3, 0.3, 0.3]) == pytest.approx([1, 1, 1])
    assert path_weights("innovation_inverse", [4.0, 1.0]) == pytest.approx([0.4, 1.6])
    with pytest.raises(ValueError):
        path_weights("snr", [1.0])


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.floats(-500, 500), st.floats(-500, 500))
def test_translation_equivariance(seed, vx, vy):
    rng = np.random.default_rng(seed)
    _, gamma, rows = random_scene(rng, 4)
    noisy = [(a + rng.normal(0, 0.005), b + rng.normal(0, 0.005), R, w) for a, b, R, w in rows]
    e0 = solve_pose(noisy, (0.0, 0.0), gamma)
    e1 = solve_pose(noisy, (vx, vy), gamma)
    assert (e1.x - vx, e1.y - vy) == pytest.approx((e0.x, e0.y), abs=1e-6)
    assert e1.gamma == pytest.approx(e0.gamma, abs=1e-9)


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1))
def test_noisy_minimizer_beats_true_pose(seed):
    rng = np.random.default_rng(seed)
    ue, gamma, rows = random_scene(rng, 4)
    noisy = [(a + rng.normal(0, 0.01), b + rng.normal(0, 0.01), R + rng.normal(0, 1), w) for a, b, R, w in rows]
    est = solve_pose(noisy, gamma_init=gamma)
    assert est.cost <= cost(ue[0], ue[1], gamma, noisy) + 1e-10
    assert est.cost == pytest.approx(cost(est.x, est.y, est.gamma, noisy), rel=1e-9, abs=1e-12)
    if est.status == "converged":
        grad = central_difference(lambda v: np.array([cost(v[0], v[1], v[2], noisy)]), [est.x, est.y, est.gamma],
                                  h=1e-5)
        assert np.linalg.norm(grad) <= 1e-6


def test_gamma_seed_far_off_still_finds_minimum():
    rng = np.random.default_rng(12)
    ue, gamma, rows = random_scene(rng, 5)
    est = solve_pose(rows, gamma_init=gamma + math.radians(40))
    assert math.hypot(est.x - ue[0], est.y - ue[1]) <= 1e-6
