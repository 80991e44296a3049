import math

import numpy as np
import pytest

from gridloc.simulator import (NoiseSpec, Scenario, TrajectoryConfig, TruePose,
                               calibrate_constants, gen_trajectory, image_line_of, image_lines,
                               polyline_length, project_points, relative_truth, render_frame,
                               simulate, visible_grid_lines, waypoints_for_length)
from gridloc.types import CameraModel, GridSpec


def test_projection_of_nadir_and_axes():
    cam = CameraModel(f=600.0)
    pose = TruePose(0.5, 0.5, 2.0)
    # +X_W is up in the image, +Y_W is left
    px = project_points(np.array([[0.5, 0.5, 0.0], [1.5, 0.5, 0.0], [0.5, 1.5, 0.0]]), pose, cam)
    np.testing.assert_allclose(px, [[320, 240], [320, -60], [20, 240]], atol=1e-9)


def test_level_camera_sees_lines_150px_from_center():
    cam, grid = CameraModel(f=600.0), GridSpec()
    vis = visible_grid_lines(TruePose(0.5, 0.5, 2.0), cam, grid)
    lat = sorted(lt.rho * math.copysign(1, math.sin(lt.theta)) - cam.cy
                 for lt in vis if lt.family == "lat")
    lng = sorted(lt.rho * math.copysign(1, math.cos(lt.theta)) - cam.cx
                 for lt in vis if lt.family == "long")
    assert min(abs(v) for v in lat) == pytest.approx(150.0)
    assert min(abs(v) for v in lng) == pytest.approx(150.0)


def test_image_lines_vectorized_matches_scalar():
    cam = CameraModel()
    pose = TruePose(0.3, 0.8, 1.7, 0.1, -0.07, 0.2)
    p0 = np.array([[0.0, k, 0.0] for k in range(-2, 4)])
    p1 = p0 + [1.0, 0.0, 0.0]
    batch = image_lines(p0, p1, pose, cam)
    for k in range(len(p0)):
        one = image_line_of(p0[k], p1[k], pose, cam)
        assert batch[k].tolist() == pytest.approx(list(one))


def test_image_line_passes_through_projected_points():
    cam = CameraModel()
    pose = TruePose(0.3, 0.8, 1.7, 0.1, -0.07)
    a, b = np.array([1.0, -1.0, 0.0]), np.array([1.0, 2.0, 0.0])
    rho, theta = image_line_of(a, b, pose, cam)
    mid = project_points(np.array([[1.0, 0.5, 0.0], [1.0, 1.2, 0.0]]), pose, cam)
    np.testing.assert_allclose(mid @ [math.cos(theta), math.sin(theta)], rho, atol=1e-9)


def test_trajectory_sampling():
    poses = gen_trajectory([(0.0, 0.0), (9.0, 0.0)], v=1.0, fps=30.0)
    assert len(poses) == 271
    assert poses[-1].x == pytest.approx(9.0)
    steps = np.diff([p.x for p in poses])
    np.testing.assert_allclose(steps, 1.0 / 30.0)


def test_speed_limit_and_force():
    with pytest.raises(ValueError, match="exceeds"):
        gen_trajectory([(0.0, 0.0), (9.0, 0.0)], v=15.0, fps=30.0)
    assert len(gen_trajectory([(0.0, 0.0), (9.0, 0.0)], v=15.0, fps=30.0, force=True)) == 19


def test_attitude_follows_acceleration_and_is_clipped():
    cfg = TrajectoryConfig(max_tilt=math.radians(5))
    poses = gen_trajectory([(1.0, 1.0), (8.0, 1.0), (8.0, 8.0)], v=3.0, fps=30.0, cfg=cfg)
    roll = np.array([p.alpha for p in poses])
    pitch = np.array([p.beta for p in poses])
    assert np.abs(roll).max() <= cfg.max_tilt + 1e-12
    assert np.abs(pitch).max() <= cfg.max_tilt + 1e-12
    # braking in +X at the corner tilts backwards, turning into +Y tilts toward +Y
    assert pitch.min() < -math.radians(1) and roll.max() > math.radians(1)


def test_waypoints_for_length():
    wp = waypoints_for_length(123.4, 10.0, np.random.default_rng(0))
    assert polyline_length(wp) == pytest.approx(123.4)
    assert wp.min() >= 0.5 - 1e-9 and wp.max() <= 9.5 + 1e-9


def test_render_counts_duplicates_and_outliers():
    cam, grid = CameraModel(), GridSpec()
    noise = NoiseSpec(duplicates_per_line=(2, 2), outlier_count=(5, 5))
    fr = render_frame(TruePose(0.4, 0.4, 2.0), cam, grid, noise, rng=np.random.default_rng(1))
    n_vis = len(visible_grid_lines(TruePose(0.4, 0.4, 2.0), cam, grid))
    assert len(fr.lines) == 3 * n_vis + 5
    assert sum(lt.family == "outlier" for lt in fr.truth) == 5
    assert all(ln.rho >= 0 and -math.pi <= ln.theta < math.pi for ln in fr.lines)


def test_outlier_fraction():
    noise = NoiseSpec(duplicates_per_line=(3, 3), outlier_fraction=0.2)
    fr = render_frame(TruePose(0.4, 0.4, 2.0), CameraModel(), GridSpec(), noise,
                      rng=np.random.default_rng(1))
    frac = sum(lt.family == "outlier" for lt in fr.truth) / len(fr.truth)
    assert frac == pytest.approx(0.2, abs=0.02)


def test_calibration_recovers_unit_gain_and_mount_offsets():
    cam = CameraModel(eps_c_alpha=0.05, eps_c_beta=-0.03)
    sweep = [(a, b) for a in np.radians([-10, -5, 0, 5, 10]) for b in np.radians([-8, -4, 0, 4, 8])]
    cal = calibrate_constants(cam, GridSpec(), sweep)
    assert cal.eps_alpha == pytest.approx(1.0, abs=0.05)
    assert cal.eps_beta == pytest.approx(1.0, abs=0.05)
    assert cal.eps_c_alpha == pytest.approx(0.05, abs=0.01)
    assert cal.eps_c_beta == pytest.approx(-0.03, abs=0.01)
    with pytest.raises(ValueError):
        calibrate_constants(cam, GridSpec(), sweep[:3])


def test_simulate_is_deterministic_and_relative_truth():
    sc = Scenario(path_length=5.0, n_frames=12)
    a, b = simulate(sc), simulate(sc)
    assert a.poses == b.poses
    assert [f.lines for f in a.frames] == [f.lines for f in b.frames]
    rel = relative_truth(a.poses, sc.grid)
    assert rel.shape == (12, 5)
    assert 0 <= rel[0, 0] < 1 and 0 <= rel[0, 1] < 1
