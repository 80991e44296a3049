import math

import numpy as np
import pytest

from gridloc.types import (IMAGE_TO_WORLD, WORLD_TO_IMAGE, CameraModel, DetectedLine, GridSpec,
                           PipelineConfig, camera_tilts, max_speed, rot_x, rot_y, rot_z,
                           tilt_rotation)


@pytest.mark.parametrize("m, fps, eps_s, expected", [
    (1.0, 30.0, 3, 10.0),
    (1.0, 3.0, 3, 1.0),
    (0.5, 60.0, 4, 7.5),
])
def test_max_speed(m, fps, eps_s, expected):
    assert max_speed(GridSpec(m, m), fps, eps_s) == pytest.approx(expected)


def test_max_speed_uses_smaller_cell():
    assert max_speed(GridSpec(2.0, 1.0), 30.0, 3) == pytest.approx(10.0)


def test_max_speed_rejects_ambiguous_speed_factor():
    with pytest.raises(ValueError):
        max_speed(GridSpec(), 30.0, 2)
    with pytest.raises(ValueError):
        max_speed(GridSpec(), 0.0, 3)


def test_pipeline_defaults_match_published_thresholds():
    cfg = PipelineConfig()
    assert cfg.ransac_width_d == 0.1
    assert cfg.ransac_min_inliers_t == 10
    assert cfg.kde_bandwidth_b == 20.0
    assert cfg.cluster_threshold_fraction == 0.25
    assert cfg.energy_ratio_eps_E == 100.0
    assert cfg.speed_factor_eps_s == 3


@pytest.mark.parametrize("kw", [
    {"speed_factor_eps_s": 2}, {"ransac_width_d": 0.0}, {"kde_bandwidth_b": -1.0},
    {"energy_ratio_eps_E": 0.0}, {"slope_source": "x"}, {"drift_mode": "x"},
    {"ransac_residual": "x"}, {"energy_history": 0},
])
def test_pipeline_config_validation(kw):
    with pytest.raises(ValueError):
        PipelineConfig(**kw)


def test_camera_defaults_and_validation():
    cam = CameraModel(f=500.0, width=640, height=480)
    assert (cam.cx, cam.cy) == (320.0, 240.0)
    assert cam.diagonal == pytest.approx(800.0)
    np.testing.assert_allclose(cam.K, [[500, 0, 320], [0, 500, 240], [0, 0, 1]])
    with pytest.raises(ValueError):
        CameraModel(f=0.0)
    with pytest.raises(ValueError):
        CameraModel(cx=700.0)
    with pytest.raises(ValueError):
        GridSpec(0.0, 1.0)


def test_detected_line_normalization():
    ln = DetectedLine.normalized(-10.0, 0.5)
    assert ln.rho == 10.0
    assert ln.theta == pytest.approx(0.5 - math.pi)
    ln = DetectedLine.normalized(5.0, math.pi)
    assert ln.theta == pytest.approx(-math.pi)
    assert -math.pi <= DetectedLine.normalized(3.0, 7.0).theta < math.pi


def test_axis_conventions_are_an_involution():
    for img, world in IMAGE_TO_WORLD.items():
        assert WORLD_TO_IMAGE[world] == img
    assert IMAGE_TO_WORLD["+X_I"] == "-Y_W"
    assert IMAGE_TO_WORLD["+Y_I"] == "-X_W"


def test_rotations_are_orthonormal():
    for R in (rot_x(0.3), rot_y(-0.2), rot_z(1.1), tilt_rotation(0.1, -0.2, 0.05)):
        np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-15)
        assert np.linalg.det(R) == pytest.approx(1.0)


def test_tilt_toward_plus_x_moves_optical_axis_toward_plus_x():
    # camera-to-nadir; the optical axis (0, 0, 1) gains a +x component
    axis = tilt_rotation(0.2, 0.0) @ np.array([0.0, 0.0, 1.0])
    assert axis[0] == pytest.approx(math.sin(0.2))
    axis = tilt_rotation(0.0, 0.2) @ np.array([0.0, 0.0, 1.0])
    assert axis[1] == pytest.approx(math.sin(0.2))


def test_camera_tilts_combine_mounting_and_attitude():
    cam = CameraModel(eps_c_alpha=0.05, eps_c_beta=-0.02)
    assert camera_tilts(cam, 0.1, 0.2) == pytest.approx((0.05 - 0.1, -0.02 - 0.2))
