"""Per-axis projection model of the grid lines.

Along one axis the camera sits ``o`` metres past grid line i = -1, so line i
lies at s_i = m*(i + 1) - o from the nadir.  With the optical axis tilted by
``eps_c`` toward the positive axis direction, it meets the floor at
s_p = h*tan(eps_c), which images to the image center.  A line at ground
offset s images at f*tan(atan(s/h) - eps_c) from the center.

All distances are signed along the image axis the model runs on (+X_I for
longitudinal lines, +Y_I for latitudinal lines).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .types import LabeledLine

HALF_PI = 0.5 * math.pi
# rays closer than this to the horizon are treated as singular
SINGULAR_MARGIN = 1e-6
# residuals continue tan() linearly past this angle from the optical axis
EXTENSION_ANGLE = math.radians(85.0)


class ProjectionSingularity(ValueError):
    pass


@dataclass(frozen=True)
class AxisModelParams:
    o: float
    h: float
    m: float
    f: float
    eps_c: float = 0.0
    # "exact" pinhole distance, or "paper": c*cos(phi)*f / (cos(delta)*h)
    projection: str = "exact"


def principal_offset(h, eps_c):
    """Ground offset (m) where the optical axis meets the floor."""
    if abs(eps_c) >= HALF_PI:
        raise ProjectionSingularity("mounting tilt must be below 90 degrees")
    return h * math.tan(eps_c) if np.ndim(h) == 0 else np.asarray(h) * math.tan(eps_c)


def project_ground_distance(c, h, f, eps_c, projection="exact"):
    """Image distance (px) between the nadir's image and the image of ground offset ``c``.

    Raises ProjectionSingularity when the ray to ``c`` is parallel to the
    image plane.
    """
    phi = np.arctan2(c, h)
    delta = phi - eps_c
    if np.any(np.abs(delta) >= HALF_PI - SINGULAR_MARGIN):
        raise ProjectionSingularity("ground point images at infinity")
    if projection == "paper":
        out = np.asarray(c) * np.cos(phi) * f / (np.cos(delta) * h)
    else:
        out = f * (np.tan(delta) + math.tan(eps_c))
    return float(out) if np.ndim(out) == 0 else out


def label_to_index(j, o, m, s_p):
    """Grid index of the image line labelled ``j``.

    Label 0 is the nearest line at or before the image center, whose ground
    point is s_p, so i = j + floor((s_p + o) / m) - 1.
    """
    shift = math.floor((s_p + o) / m) - 1
    if np.ndim(j):
        return np.asarray(j, dtype=int) + shift
    return int(j) + shift


def index_shift(p: AxisModelParams) -> int:
    """i - j for the current (o, h)."""
    return label_to_index(0, p.o, p.m, float(principal_offset(p.h, p.eps_c)))


def ground_offsets(labels, p: AxisModelParams, shift: int | None = None) -> np.ndarray:
    """Ground offsets of labelled lines.  ``shift`` pins i - j instead of deriving it from (o, h)."""
    if shift is None:
        shift = index_shift(p)
    return p.m * (np.atleast_1d(labels) + shift + 1) - p.o


def model_rho(j, p: AxisModelParams):
    """Predicted signed pixel distance of line ``j`` from the image center."""
    s_p = principal_offset(p.h, p.eps_c)
    s = ground_offsets(np.atleast_1d(j), p)
    g = project_ground_distance(s, p.h, p.f, p.eps_c, p.projection)
    out = g - project_ground_distance(s_p, p.h, p.f, p.eps_c, p.projection)
    return float(out[0]) if np.ndim(j) == 0 else out


def residuals_and_jacobian(lines: Sequence[LabeledLine], p: AxisModelParams,
                           shift: int | None = None):
    """Residuals offset_j - model_rho(j) and their analytic Jacobian d(r)/d(o, h).

    Beyond ``EXTENSION_ANGLE`` from the optical axis the tangent is continued
    linearly (value and slope match at the joint), so every line keeps a
    finite residual whose gradient points back toward the visible range.
    Without this, lines crossing the horizon would vanish from the cost and
    tiny heights would look cheap.  The third return value marks the lines
    inside the exact range.  With ``shift`` fixed the residuals are smooth in
    (o, h) and o may leave [0, m); otherwise the label-to-index branch
    follows (o, h), which is discontinuous where it changes.
    """
    labels = np.array([ll.label for ll in lines], dtype=int)
    obs = np.array([ll.offset for ll in lines], dtype=float)
    if labels.size == 0:
        return np.zeros(0), np.zeros((0, 2)), np.zeros(0, bool)
    s = ground_offsets(labels, p, shift)
    delta = np.arctan2(s, p.h) - p.eps_c
    exact = np.abs(delta) <= EXTENSION_ANGLE
    scale = p.f * (math.cos(p.eps_c) if p.projection == "paper" else 1.0)
    lim = np.sign(delta) * EXTENSION_ANGLE
    sec2_lim = 1.0 / math.cos(EXTENSION_ANGLE) ** 2
    tan_d = np.where(exact, np.tan(np.where(exact, delta, 0.0)),
                     np.tan(lim) + sec2_lim * (delta - lim))
    sec2 = np.where(exact, 1.0 / np.cos(np.where(exact, delta, 0.0)) ** 2, sec2_lim)
    pred = scale * tan_d
    r = obs - pred
    den = p.h * p.h + s * s
    # d(delta)/ds = h/den, ds/do = -1, d(delta)/dh = -s/den; J holds d(r) = -d(pred)
    d_o = scale * sec2 * p.h / den
    d_h = scale * sec2 * s / den
    J = np.column_stack([d_o, d_h])
    return r, J, exact
