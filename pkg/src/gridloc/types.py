"""Shared domain types, frame conventions and configuration.

Frames
------
World (W): X_W forward, Y_W left, Z_W up; the grid floor is Z_W = 0.
Image (I): origin at the top-left pixel, X_I right, Y_I down.

The camera looks down, so with zero tilt Y_W = -X_I and X_W = -Y_I.  The
"nadir frame" used throughout is the untilted camera frame: x_n = -Y_W,
y_n = -X_W, z_n = -Z_W (pointing at the floor).

Attitude
--------
The camera tilt toward +X_I is ``eps_c_alpha - alpha`` and toward +Y_I is
``eps_c_beta - beta``.  ``alpha`` (roll) is a rotation about X_W and
``beta`` (pitch) about Y_W; ``eps_c_*`` are fixed mounting tilts.  With
this sign choice the same mounting constants appear in the orientation
read-out and in the per-axis projection model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class DetectedLine:
    """A line in Hough form: x*cos(theta) + y*sin(theta) = rho (pixels, radians)."""

    rho: float
    theta: float

    @classmethod
    def normalized(cls, rho: float, theta: float) -> "DetectedLine":
        """Return the same line with rho >= 0 and -pi <= theta < pi."""
        if rho < 0:
            rho, theta = -rho, theta + math.pi
        theta = (theta + math.pi) % TWO_PI - math.pi
        return cls(float(rho), float(theta))


@dataclass(frozen=True)
class LabeledLine:
    """Drift-corrected line with its grid label.

    ``offset`` is the signed pixel distance from the image center to the
    line, measured along +X_I (longitudinal lines, at the center row) or
    +Y_I (latitudinal lines, at the center column).
    """

    rho_c: float
    theta_c: float
    label: int
    offset: float


@dataclass(frozen=True)
class CameraModel:
    f: float = 240.0
    width: int = 640
    height: int = 480
    cx: Optional[float] = None
    cy: Optional[float] = None
    eps_c_alpha: float = 0.0
    eps_c_beta: float = 0.0
    eps_alpha: float = 1.0
    eps_beta: float = 1.0

    def __post_init__(self):
        if self.cx is None:
            object.__setattr__(self, "cx", self.width / 2.0)
        if self.cy is None:
            object.__setattr__(self, "cy", self.height / 2.0)
        if not (self.f > 0 and self.width > 0 and self.height > 0):
            raise ValueError("camera f, width and height must be positive")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise ValueError("image center must lie inside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.f, 0.0, self.cx], [0.0, self.f, self.cy], [0.0, 0.0, 1.0]])

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)


@dataclass(frozen=True)
class GridSpec:
    m_x: float = 1.0
    m_y: float = 1.0

    def __post_init__(self):
        if not (self.m_x > 0 and self.m_y > 0):
            raise ValueError("grid cell sizes must be positive")


@dataclass(frozen=True)
class PipelineConfig:
    """Thresholds and tuning knobs.  The first six fields are the published defaults."""

    ransac_width_d: float = 0.1
    ransac_min_inliers_t: int = 10
    kde_bandwidth_b: float = 20.0
    cluster_threshold_fraction: float = 0.25
    energy_ratio_eps_E: float = 1.0e2
    speed_factor_eps_s: int = 3

    ransac_iterations: int = 200
    ransac_early_exit_ratio: float = 0.8
    # "theta": |theta - model(rho)|; "normalized": distance in the (theta, rho/diag) plane
    ransac_residual: str = "theta"
    # bandwidth is scaled by (diagonal / 800) away from 640x480
    scale_bandwidth: bool = True
    # "inliers": fit tilt on raw filter inliers; "clusters": on cluster means
    slope_source: str = "inliers"
    # "rotation": exact homography undo; "shift": first-order pixel shift
    drift_mode: str = "rotation"
    nominal_height: float = 2.0
    h_min: float = 0.05
    h_max: float = 100.0
    solver_max_iter: int = 50
    solver_tol: float = 1e-10
    # RMS residual (px) below which the energy gate never fires
    energy_floor_rms: float = 2.0
    # the gate compares against the median of this many recent accepted costs
    energy_history: int = 5
    max_consecutive_drops: int = 15
    # drop lines off their family's vanishing direction before orientation
    orientation_trim: bool = True
    # cluster the drift-corrected inliers instead of the raw detections
    cluster_after_correction: bool = True
    # keep a frame whose second family fails RANSAC, holding that family's angle
    allow_single_family: bool = True

    def __post_init__(self):
        if self.speed_factor_eps_s < 3:
            raise ValueError("speed_factor_eps_s must be >= 3")
        for name in ("ransac_width_d", "ransac_min_inliers_t", "kde_bandwidth_b",
                     "cluster_threshold_fraction", "energy_ratio_eps_E"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.energy_history < 1:
            raise ValueError("energy_history must be at least 1")
        if self.slope_source not in ("inliers", "clusters"):
            raise ValueError("slope_source must be 'inliers' or 'clusters'")
        if self.ransac_residual not in ("theta", "normalized"):
            raise ValueError("ransac_residual must be 'theta' or 'normalized'")
        if self.drift_mode not in ("rotation", "shift"):
            raise ValueError("drift_mode must be 'rotation' or 'shift'")

    def bandwidth_for(self, cam: CameraModel) -> float:
        if not self.scale_bandwidth:
            return self.kde_bandwidth_b
        return self.kde_bandwidth_b * cam.diagonal / 800.0


@dataclass(frozen=True)
class PoseEstimate:
    x: float
    y: float
    o_x: float
    o_y: float
    h: float
    alpha: float
    beta: float
    final_cost_x: float = float("nan")
    final_cost_y: float = float("nan")
    accepted: bool = False


def max_speed(grid: GridSpec, fps: float, eps_s: float) -> float:
    """Largest speed (m/s) at which every cell is seen in at least ``eps_s`` frames."""
    if fps <= 0:
        raise ValueError("fps must be positive")
    if eps_s < 3:
        raise ValueError("speed factor below 3 makes the +-1 cell candidate set ambiguous")
    return min(grid.m_x, grid.m_y) * fps / eps_s


# --- axis conventions -------------------------------------------------------

# image axis label -> world axis label (with sign) for a level, zero-yaw camera
IMAGE_TO_WORLD = {"+X_I": "-Y_W", "-X_I": "+Y_W", "+Y_I": "-X_W", "-Y_I": "+X_W"}
WORLD_TO_IMAGE = {v: k for k, v in IMAGE_TO_WORLD.items()}


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def tilt_rotation(tilt_x: float, tilt_y: float, yaw: float = 0.0) -> np.ndarray:
    """Camera-to-nadir rotation for optical-axis tilts toward +X_I / +Y_I.

    ``yaw`` is the world yaw (about +Z_W).  Composition order is fixed:
    yaw, then tilt toward X_I, then tilt toward Y_I (applied right to left
    on camera vectors).
    """
    return rot_z(-yaw) @ rot_y(tilt_x) @ rot_x(-tilt_y)


def camera_tilts(cam: CameraModel, alpha: float, beta: float) -> tuple[float, float]:
    """Total optical-axis tilts (toward +X_I, toward +Y_I) for vehicle roll/pitch."""
    return cam.eps_c_alpha - alpha, cam.eps_c_beta - beta


__all__ = [
    "DetectedLine", "LabeledLine", "CameraModel", "GridSpec", "PipelineConfig",
    "PoseEstimate", "max_speed", "tilt_rotation", "camera_tilts", "rot_x", "rot_y",
    "rot_z", "IMAGE_TO_WORLD", "WORLD_TO_IMAGE",
]
