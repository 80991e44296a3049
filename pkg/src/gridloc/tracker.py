"""Winner-take-all integration of sub-cell offsets into a grid position."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional


@dataclass(frozen=True)
class TrackerState:
    p_x: float = math.nan
    p_y: float = math.nan
    prev_o_x: float = math.nan
    prev_o_y: float = math.nan
    frame_index: int = 0
    initialized: bool = False
    # last per-frame displacement of each axis, and the frame it was last updated on
    v_x: float = 0.0
    v_y: float = 0.0
    frame_x: Optional[int] = None
    frame_y: Optional[int] = None


def integrate_axis(p_prev: float, o_prev: float, o_new: float, m: float,
                   ref: Optional[float] = None) -> float:
    """Pick p_base + k*m closest to ``ref`` (default ``p_prev``).

    p_base = p_prev + o_new - o_prev; ties go to the candidate nearer p_base.
    With ``ref = p_prev`` this is the choice among p_base - m, p_base and
    p_base + m.
    """
    p_base = p_prev + (o_new - o_prev)
    ref = p_prev if ref is None else ref
    t = (ref - p_base) / m
    k = math.floor(abs(t))
    # round half toward zero, i.e. toward p_base
    if abs(t) - k > 0.5:
        k += 1
    return p_base + math.copysign(k, t) * m


def _axis(p, q, v, last, o, m, frame):
    if o is None:
        return p, q, v, last
    if math.isnan(p):
        return o, o, 0.0, frame
    elapsed = max(1, frame - last) if last is not None else 1
    # across a gap, extrapolate the missed frames so the WTA window stays one frame wide
    new = integrate_axis(p, q, o, m, p + v * (elapsed - 1))
    return new, o, (new - p) / elapsed, frame


def update(state: TrackerState, o_x: Optional[float], o_y: Optional[float],
           m_x: float = 1.0, m_y: float = 1.0, frame: Optional[int] = None) -> TrackerState:
    """Advance the tracker by one frame.

    ``None`` marks a rejected axis, which keeps its p and o.  The first frame
    initializes p to the offsets themselves (relative localization), so an
    axis first seen later starts from its own offset.  ``frame`` (default:
    the number of updates so far) measures gaps left by rejected axes or
    dropped frames.
    """
    frame = state.frame_index if frame is None else frame
    p_x, q_x, v_x, f_x = _axis(state.p_x, state.prev_o_x, state.v_x, state.frame_x, o_x, m_x, frame)
    p_y, q_y, v_y, f_y = _axis(state.p_y, state.prev_o_y, state.v_y, state.frame_y, o_y, m_y, frame)
    return replace(state, p_x=p_x, p_y=p_y, prev_o_x=q_x, prev_o_y=q_y, v_x=v_x, v_y=v_y,
                   frame_x=f_x, frame_y=f_y, frame_index=state.frame_index + 1,
                   initialized=state.initialized or o_x is not None or o_y is not None)


def cell_index(p: float, m: float) -> int:
    """u_k = floor(p / m)."""
    return math.floor(p / m)
