"""Per-axis sub-cell localization, the energy gate, and fusion of the two axes."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .grid_model import AxisModelParams, index_shift, residuals_and_jacobian
from .solver import NlsProblem, solve
from .types import CameraModel, GridSpec, LabeledLine, PipelineConfig

AXES = ("x", "y")


@dataclass(frozen=True)
class AxisResult:
    """Solution of one 1-D problem.

    ``o`` is measured in the model frame, i.e. along +Y_I for the x axis and
    +X_I for the y axis; :func:`world_offset` converts it.
    """

    o: float
    h: float
    final_cost: float
    accepted: bool
    n_lines: int
    converged: bool = True
    degraded: bool = False
    iterations: int = 0
    reason: str = ""


def axis_setup(axis: str, cam: CameraModel, grid: GridSpec) -> tuple[float, float]:
    """Cell size and mounting tilt used by one axis' model."""
    if axis == "y":
        # longitudinal lines (constant Y_W) shift along X_I with the roll-type tilt
        return grid.m_y, cam.eps_c_alpha
    if axis == "x":
        return grid.m_x, cam.eps_c_beta
    raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")


def world_offset(o_model: float, m: float) -> float:
    """Model-frame offset -> world sub-cell offset (image axes point along -X_W / -Y_W)."""
    o = (-o_model) % m
    return 0.0 if o >= m else o


def energy_gate(cost: float, prev_cost: Optional[float], eps_E: float, floor: float = 0.0) -> bool:
    """True when ``cost`` shows no abnormal jump over the reference accepted cost.

    Costs below ``floor`` always pass.
    """
    if prev_cost is None or not math.isfinite(prev_cost):
        return True
    return cost < max(prev_cost * eps_E, floor)


def initial_guess(lines: Sequence[LabeledLine], cam: CameraModel, m: float, eps_c: float,
                  h_fallback: float) -> tuple[float, float]:
    """Closed-form (o, h) from the labelled offsets.

    tan(atan(offset/f) + eps_c) = (j*m + s_0) / h is linear in the label j,
    which gives h from the slope and the label-0 ground offset s_0 from the
    intercept.
    """
    j = np.array([ll.label for ll in lines], dtype=float)
    t = np.tan(np.arctan(np.array([ll.offset for ll in lines]) / cam.f) + eps_c)
    if j.size >= 2 and np.ptp(j) > 0:
        slope, icpt = np.polyfit(j, t, 1)
        h = m / slope if slope > 0 else h_fallback
    else:
        h = h_fallback
        icpt = float(t[0] - j[0] * m / h)
    s0 = icpt * h
    return (-s0) % m, h


def localize_axis(
    lines: Sequence[LabeledLine],
    axis: str,
    cam: CameraModel,
    grid: GridSpec,
    prev: Optional[AxisResult] = None,
    cfg: PipelineConfig = PipelineConfig(),
    prev_cost: Optional[float] = None,
    projection: str = "exact",
) -> Optional[AxisResult]:
    """Fit (o, h) for one axis and apply the energy gate.

    ``prev`` seeds the solver and supplies h when only one line is visible;
    ``prev_cost`` is the gate's reference cost (defaults to
    ``prev.final_cost`` when ``prev`` was accepted).  Costs whose RMS
    residual is under ``cfg.energy_floor_rms`` pass regardless.
    """
    lines = list(lines)
    if not lines:
        return None
    m, eps_c = axis_setup(axis, cam, grid)
    if prev_cost is None and prev is not None and prev.accepted:
        prev_cost = prev.final_cost
    h_prev = prev.h if prev is not None and prev.h > 0 else cfg.nominal_height
    degraded = len(lines) == 1

    def params(o, h):
        return AxisModelParams(o=o, h=h, m=m, f=cam.f, eps_c=eps_c, projection=projection)

    starts = [initial_guess(lines, cam, m, eps_c, h_prev)]
    if prev is not None and prev.accepted:
        starts.append((prev.o, prev.h))
    starts.append((0.5 * m, cfg.nominal_height))

    # Each start fixes the label-to-index branch, which keeps the cost smooth;
    # o may then wander one cell either way and is wrapped afterwards.
    lo_o, hi_o = -m, 2.0 * m
    best = None
    for o_s, h_s in starts:
        h_s = min(max(h_s, cfg.h_min), cfg.h_max)
        o_s = o_s % m
        shift = index_shift(params(o_s, h_prev if degraded else h_s))
        if degraded:
            def fun(x, shift=shift):
                r, J, _ = residuals_and_jacobian(lines, params(x[0], h_prev), shift)
                return r, J[:, :1]
            prob = NlsProblem(fun, [lo_o], [hi_o], [o_s])
        else:
            def fun(x, shift=shift):
                r, J, _ = residuals_and_jacobian(lines, params(x[0], x[1]), shift)
                return r, J
            prob = NlsProblem(fun, [lo_o, cfg.h_min], [hi_o, cfg.h_max], [o_s, h_s])
        try:
            sol = solve(prob, cfg.solver_max_iter, cfg.solver_tol)
        except ValueError:
            continue
        if best is None or sol.final_cost < best[0].final_cost:
            best = (sol, shift)
        if sol.converged and sol.final_cost < 1e-12:
            break
    if best is None:
        return AxisResult(math.nan, math.nan, math.inf, False, len(lines), False, degraded, 0,
                          "solver failed")

    sol, shift = best
    o = float(sol.params[0]) % m
    if o >= m:
        o = 0.0
    h = h_prev if degraded else float(sol.params[1])
    n_used = int(residuals_and_jacobian(lines, params(float(sol.params[0]), h), shift)[2].sum())
    reason = ""
    accepted = sol.converged and n_used > 0 and h > 0
    if not sol.converged:
        reason = "not converged"
    elif not energy_gate(sol.final_cost, prev_cost, cfg.energy_ratio_eps_E,
                         0.5 * max(n_used, 1) * cfg.energy_floor_rms ** 2):
        accepted, reason = False, "energy gate"
    return AxisResult(o, h, float(sol.final_cost), accepted, len(lines), sol.converged,
                      degraded, sol.iterations, reason)


@dataclass(frozen=True)
class FusedResult:
    o_x: float
    o_y: float
    h: float
    accepted_x: bool
    accepted_y: bool

    @property
    def accepted(self) -> bool:
        return self.accepted_x and self.accepted_y

    @property
    def status(self) -> str:
        if self.accepted:
            return "accepted"
        return "partial" if (self.accepted_x or self.accepted_y) else "dropped"


def fuse_axes(x: Optional[AxisResult], y: Optional[AxisResult], grid: GridSpec = GridSpec(),
              prev_o: tuple[float, float] = (math.nan, math.nan)) -> FusedResult:
    """Combine the two axes.  h is the line-count weighted mean over accepted axes.

    Offsets are returned in world terms; a rejected axis carries ``prev_o``.
    """
    ax = x is not None and x.accepted
    ay = y is not None and y.accepted
    if not (ax or ay):
        raise ValueError("both axes rejected")
    pairs = [(r.h, r.n_lines) for r, ok in ((x, ax), (y, ay)) if ok and not r.degraded]
    if not pairs:
        pairs = [(r.h, 1) for r, ok in ((x, ax), (y, ay)) if ok]
    w = sum(n for _, n in pairs)
    h = sum(hh * n for hh, n in pairs) / w
    o_x = world_offset(x.o, grid.m_x) if ax else prev_o[0]
    o_y = world_offset(y.o, grid.m_y) if ay else prev_o[1]
    return FusedResult(o_x, o_y, h, ax, ay)

