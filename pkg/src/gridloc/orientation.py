"""Roll/pitch from the two line families, drift correction and labelling.

A family of parallel floor lines images to lines through one vanishing
point, so in rho-theta space the family lies on rho = vx*cos(theta) +
vy*sin(theta).  Tilting the camera moves that vanishing point; level flight
sends it to infinity and makes the family's rho-theta curve vertical.  The
tilt slope of a family is read from its vanishing direction and turned into
an angle with the calibrated gain/offset form

    alpha = atan(m_lat) * eps_alpha + eps_c_alpha
    beta  = atan(m_long) * eps_beta + eps_c_beta
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cluster import ClusteredSet
from .types import CameraModel, LabeledLine, camera_tilts, tilt_rotation


@dataclass(frozen=True)
class OrientationEstimate:
    alpha: float
    beta: float
    m_lat: float
    m_long: float
    low_confidence_lat: bool = False
    low_confidence_long: bool = False
    # ordinary least-squares d(rho)/d(theta) of each family, for diagnostics
    ols_lat: float = 0.0
    ols_long: float = 0.0


@dataclass(frozen=True)
class LabeledSet:
    lat: tuple[LabeledLine, ...]
    long: tuple[LabeledLine, ...]


def _as_arrays(lines) -> tuple[np.ndarray, np.ndarray]:
    """(theta, rho) arrays from DetectedLine objects or (rho, theta) pairs."""
    th, rh = [], []
    for ln in lines:
        if hasattr(ln, "theta"):
            th.append(ln.theta)
            rh.append(ln.rho)
        else:
            rh.append(ln[0])
            th.append(ln[1])
    return np.asarray(th, dtype=float), np.asarray(rh, dtype=float)


def rho_theta_slope(thetas, rhos) -> float:
    """OLS slope of rho against theta; 0 when theta has no spread."""
    th = np.asarray(thetas, dtype=float)
    rh = np.asarray(rhos, dtype=float)
    if th.size < 2:
        return 0.0
    dt = th - th.mean()
    var = float(dt @ dt)
    if var <= 1e-18 * th.size:
        return 0.0
    return float(dt @ (rh - rh.mean()) / var)


def vanishing_direction(thetas, rhos, cam: CameraModel) -> np.ndarray | None:
    """Camera-frame unit direction shared by a family of image lines.

    Total least squares on the normalized lines (cos t, sin t, -rho_c / f),
    with rho_c measured from the image center.  Returns None when the lines
    do not pin down a single direction (fewer than two distinct lines).
    """
    th = np.asarray(thetas, dtype=float)
    rh = np.asarray(rhos, dtype=float)
    if th.size < 2:
        return None
    c, s = np.cos(th), np.sin(th)
    rho_c = rh - cam.cx * c - cam.cy * s
    A = np.column_stack([c, s, -rho_c / cam.f])
    _, sv, vt = np.linalg.svd(A, full_matrices=False)
    if sv.size < 3 or sv[1] <= 1e-9 * sv[0]:
        return None
    return vt[-1]


def family_inlier_mask(thetas, rhos, cam: CameraModel, k: float = 4.0,
                       floor: float = 0.03) -> np.ndarray:
    """Lines consistent with the family's common vanishing direction.

    Residuals of the total-least-squares fit are roughly angular errors in
    radians.  The worst line is dropped while its residual exceeds
    max(k * robust sigma of the others, floor), refitting after each drop,
    and at most half the family is removed.
    """
    th = np.asarray(thetas, dtype=float)
    rh = np.asarray(rhos, dtype=float)
    keep = np.ones(th.size, dtype=bool)
    if th.size < 4:
        return keep
    c, s = np.cos(th), np.sin(th)
    rows = np.column_stack([c, s, -(rh - cam.cx * c - cam.cy * s) / cam.f])
    while keep.sum() > max(3, th.size // 2):
        v = vanishing_direction(th[keep], rh[keep], cam)
        if v is None:
            break
        res = np.abs(rows @ v)
        worst = int(np.argmax(np.where(keep, res, -1.0)))
        others = res[keep & (np.arange(th.size) != worst)]
        sigma = 1.4826 * np.median(np.abs(others - np.median(others)))
        if res[worst] <= max(k * sigma, floor):
            break
        keep[worst] = False
    return keep


def _family_tilts(lat_dir, long_dir) -> tuple[float | None, float | None]:
    """Tilt toward +X_I from the latitudinal family, toward +Y_I from the longitudinal one."""
    t_y = None
    if long_dir is not None:
        d = long_dir if long_dir[1] >= 0 else -long_dir
        t_y = math.atan2(d[2], d[1])
    t_x = None
    if lat_dir is not None:
        d = lat_dir if lat_dir[0] >= 0 else -lat_dir
        # lat direction is (cos tx, -sin ty sin tx, cos ty sin tx)
        cy = math.cos(t_y) if t_y is not None else 1.0
        t_x = math.atan2(d[2], d[0] * cy)
    return t_x, t_y


def estimate_orientation(lat, long, cam: CameraModel) -> OrientationEstimate:
    """Roll and pitch from the latitudinal and longitudinal families.

    ``lat`` / ``long`` are iterables of DetectedLine or (rho, theta) pairs.
    A family with fewer than two distinct lines gives slope 0 and is
    flagged low-confidence.
    """
    th_lat, rh_lat = _as_arrays(lat)
    th_long, rh_long = _as_arrays(long)
    t_x, t_y = _family_tilts(vanishing_direction(th_lat, rh_lat, cam),
                             vanishing_direction(th_long, rh_long, cam))
    m_lat = -math.tan(t_x) if t_x is not None else 0.0
    m_long = -math.tan(t_y) if t_y is not None else 0.0
    return OrientationEstimate(
        alpha=math.atan(m_lat) * cam.eps_alpha + cam.eps_c_alpha,
        beta=math.atan(m_long) * cam.eps_beta + cam.eps_c_beta,
        m_lat=m_lat,
        m_long=m_long,
        low_confidence_lat=t_x is None,
        low_confidence_long=t_y is None,
        ols_lat=rho_theta_slope(th_lat, rh_lat),
        ols_long=rho_theta_slope(th_long, rh_long),
    )


def _line_homography_T(R: np.ndarray, cam: CameraModel) -> np.ndarray:
    # lines map with the inverse transpose of H = K R K^-1
    K = cam.K
    return np.linalg.inv(K).T @ R @ K.T


def rotate_lines(rho, theta, R: np.ndarray, cam: CameraModel, axis: int):
    """Re-render lines as seen by a camera rotated by ``R`` (old camera -> new camera).

    ``axis`` picks the normal's sign: 0 keeps cos(theta) >= 0 (near-vertical
    lines), 1 keeps sin(theta) >= 0 (near-horizontal lines).
    """
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    L = np.vstack([np.cos(theta), np.sin(theta), -rho])
    Lp = _line_homography_T(R, cam) @ L
    Lp = Lp / np.hypot(Lp[0], Lp[1])
    Lp = Lp * np.where(Lp[axis] < 0, -1.0, 1.0)
    return -Lp[2], np.arctan2(Lp[1], Lp[0])


def center_offsets(rho, theta, cam: CameraModel, axis: int) -> np.ndarray:
    """Signed distance from the image center along X_I (axis 0) or Y_I (axis 1)."""
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    if axis == 0:
        return (rho - cam.cy * s) / c - cam.cx
    return (rho - cam.cx * c) / s - cam.cy


def assign_labels(offsets) -> np.ndarray:
    """Integer labels increasing with the offset; 0 marks the nearest line at or before the center."""
    off = np.asarray(offsets, dtype=float)
    order = np.argsort(off, kind="stable")
    n_before = int(np.sum(off <= 0.0))
    labels = np.empty(off.size, dtype=int)
    labels[order] = np.arange(off.size) - (n_before - 1)
    return labels


def correct_family(rhos, thetas, est: OrientationEstimate, cam: CameraModel, axis: int,
                   mode: str = "rotation"):
    """Drift-correct one family; ``axis`` 0 for longitudinal, 1 for latitudinal lines."""
    rhos = np.asarray(rhos, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    if rhos.size == 0:
        return rhos, thetas
    if mode == "shift":
        sx = math.tan(est.alpha) * cam.f
        sy = math.tan(est.beta) * cam.f
        return rhos - (sx * np.cos(thetas) + sy * np.sin(thetas)), thetas
    t_x, t_y = camera_tilts(cam, est.alpha, est.beta)
    R_act = tilt_rotation(t_x, t_y)
    # each family keeps only its own axis' mounting tilt, matching its 1-D model
    R_tgt = tilt_rotation(cam.eps_c_alpha, 0.0) if axis == 0 else tilt_rotation(0.0, cam.eps_c_beta)
    return rotate_lines(rhos, thetas, R_tgt.T @ R_act, cam, axis)


def label_lines(rho_c, theta_c, cam: CameraModel, axis: int) -> tuple[LabeledLine, ...]:
    """Label corrected lines by their center offset; output sorted by descending rho."""
    if len(rho_c) == 0:
        return ()
    off = center_offsets(rho_c, theta_c, cam, axis)
    labels = assign_labels(off)
    items = [LabeledLine(float(r), float(t), int(l), float(o))
             for r, t, l, o in zip(rho_c, theta_c, labels, off)]
    items.sort(key=lambda ll: -ll.rho_c)
    return tuple(items)


def drift_correct(
    lat: ClusteredSet | Sequence,
    long: ClusteredSet | Sequence,
    est: OrientationEstimate,
    cam: CameraModel,
    mode: str = "rotation",
) -> LabeledSet:
    """Undo the roll/pitch drift of both families and label their lines.

    ``mode="rotation"`` re-renders the lines through the inverse camera
    rotation (exact); ``mode="shift"`` translates them by f*tan(angle).
    """
    out = {}
    for name, fam, axis in (("lat", lat, 1), ("long", long, 0)):
        pairs = fam.lines if isinstance(fam, ClusteredSet) else list(fam)
        rh = np.array([p[0] for p in pairs], dtype=float)
        th = np.array([p[1] for p in pairs], dtype=float)
        rc, tc = correct_family(rh, th, est, cam, axis, mode)
        out[name] = label_lines(rc, tc, cam, axis)
    return LabeledSet(lat=out["lat"], long=out["long"])

