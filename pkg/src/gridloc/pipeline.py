"""Per-frame orchestration: filter, cluster, orientation, labels, sub-cell fit, tracking."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .cluster import ClusteredSet, cluster_rho
from .filtering import FilterResult, NoConsensus, filter_grid_lines
from .orientation import (LabeledSet, OrientationEstimate, correct_family, estimate_orientation,
                          family_inlier_mask, label_lines)
from .subcell import AxisResult, fuse_axes, localize_axis
from .tracker import TrackerState, update
from .types import CameraModel, DetectedLine, GridSpec, PipelineConfig, PoseEstimate

STATUSES = ("accepted", "partial", "dropped")


@dataclass(frozen=True)
class FrameInput:
    frame_index: int
    lines: tuple[DetectedLine, ...]
    timestamp: Optional[float] = None


@dataclass(frozen=True)
class FrameOutput:
    pose: PoseEstimate
    status: str
    diagnostics: dict = field(default_factory=dict, compare=False)
    reason: str = ""


@dataclass(frozen=True)
class PipelineState:
    tracker: TrackerState = TrackerState()
    last_pose: Optional[PoseEstimate] = None
    # last accepted per-axis results; they seed the solver and hold the gate reference
    prev_x: Optional[AxisResult] = None
    prev_y: Optional[AxisResult] = None
    # recent accepted final costs per axis, newest last
    costs_x: tuple[float, ...] = ()
    costs_y: tuple[float, ...] = ()
    consecutive_drops: int = 0
    lost: bool = False
    last_frame: int = -1

    def gate_reference(self, axis: str) -> Optional[float]:
        """Median of the recent accepted costs, or None before the first acceptance."""
        hist = self.costs_x if axis == "x" else self.costs_y
        return float(np.median(hist)) if hist else None


@dataclass(frozen=True)
class Observations:
    filtered: FilterResult
    lat: ClusteredSet
    long: ClusteredSet
    orientation: OrientationEstimate
    labeled: LabeledSet


def frame_rng(seed: int, frame_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(frame_index)]))


def observe(lines: Sequence[DetectedLine], cam: CameraModel, cfg: PipelineConfig,
            rng: np.random.Generator,
            held_attitude: Optional[tuple[float, float]] = None) -> Observations:
    """Lines -> labelled, drift-corrected families.  Raises NoConsensus on failure.

    When only one family survives filtering, the missing family's angle is
    taken from ``held_attitude`` (alpha, beta); without it the frame fails.
    """
    filt = filter_grid_lines(lines, cfg, seed=rng, scale=cam.diagonal,
                             allow_single_family=cfg.allow_single_family)
    if cfg.orientation_trim:
        filt = _trim(filt, cam)
    b = cfg.bandwidth_for(cam)
    if cfg.slope_source == "inliers" or cfg.cluster_after_correction:
        est = estimate_orientation(filt.lat_lines, filt.long_lines, cam)
    else:
        est = estimate_orientation(*(_clusters(f, b, cfg).lines for f in (filt.lat_lines, filt.long_lines)), cam)
    if not (filt.lat_lines and filt.long_lines):
        if held_attitude is None or not all(map(math.isfinite, held_attitude)):
            raise NoConsensus("one line family missing and no attitude to hold")
        if not filt.lat_lines:
            est = replace(est, alpha=held_attitude[0])
        else:
            est = replace(est, beta=held_attitude[1])
    sets = {}
    for name, fam, axis in (("lat", filt.lat_lines, 1), ("long", filt.long_lines, 0)):
        if cfg.cluster_after_correction:
            rc, tc = correct_family([ln.rho for ln in fam], [ln.theta for ln in fam], est, cam,
                                    axis, cfg.drift_mode)
            cs = _clusters([DetectedLine(float(r), float(t)) for r, t in zip(rc, tc)], b, cfg)
            labeled = label_lines(cs.rhos, cs.thetas, cam, axis)
        else:
            cs = _clusters(fam, b, cfg)
            rc, tc = correct_family(cs.rhos, cs.thetas, est, cam, axis, cfg.drift_mode)
            labeled = label_lines(rc, tc, cam, axis)
        sets[name] = (cs, labeled)
    lat, lng = sets["lat"][0], sets["long"][0]
    labeled = LabeledSet(lat=sets["lat"][1], long=sets["long"][1])
    return Observations(filt, lat, lng, est, labeled)


def _trim(filt: FilterResult, cam: CameraModel) -> FilterResult:
    """Move lines that disagree with their family's vanishing direction to the outliers."""
    parts = {}
    extra_lines, extra_idx = [], []
    for name in ("long", "lat"):
        fam = getattr(filt, f"{name}_lines")
        idx = getattr(filt, f"{name}_idx")
        mask = family_inlier_mask([ln.theta for ln in fam], [ln.rho for ln in fam], cam)
        parts[name] = (tuple(ln for ln, k in zip(fam, mask) if k),
                       tuple(i for i, k in zip(idx, mask) if k))
        extra_lines += [ln for ln, k in zip(fam, mask) if not k]
        extra_idx += [i for i, k in zip(idx, mask) if not k]
    if not extra_lines:
        return filt
    return replace(filt, long_lines=parts["long"][0], long_idx=parts["long"][1],
                   lat_lines=parts["lat"][0], lat_idx=parts["lat"][1],
                   outliers=filt.outliers + tuple(extra_lines),
                   outlier_idx=filt.outlier_idx + tuple(extra_idx))


def _clusters(lines, b, cfg) -> ClusteredSet:
    return cluster_rho(lines, b, cfg.cluster_threshold_fraction) if len(lines) else ClusteredSet(())


def _held_pose(state: PipelineState) -> PoseEstimate:
    if state.last_pose is not None:
        return replace(state.last_pose, accepted=False)
    nan = math.nan
    return PoseEstimate(nan, nan, nan, nan, nan, nan, nan)


def _drop(state: PipelineState, inp: FrameInput, cfg: PipelineConfig, reason: str,
          diag: dict) -> tuple[PipelineState, FrameOutput]:
    drops = state.consecutive_drops + 1
    lost = state.lost or drops >= cfg.max_consecutive_drops
    new = replace(state, consecutive_drops=drops, lost=lost, last_frame=inp.frame_index)
    diag = dict(diag, reason=reason, lost=lost)
    return new, FrameOutput(_held_pose(state), "dropped", diag, reason)


def localize(state: PipelineState, obs: Observations, inp: FrameInput, cam: CameraModel,
             grid: GridSpec, cfg: PipelineConfig,
             diag: Optional[dict] = None) -> tuple[PipelineState, FrameOutput]:
    """Sub-cell fits, fusion and tracking for already-labelled observations."""
    diag = {} if diag is None else diag
    rx = localize_axis(obs.labeled.lat, "x", cam, grid, state.prev_x, cfg,
                       state.gate_reference("x"))
    ry = localize_axis(obs.labeled.long, "y", cam, grid, state.prev_y, cfg,
                       state.gate_reference("y"))
    for name, r in (("x", rx), ("y", ry)):
        diag[f"cost_{name}"] = None if r is None else r.final_cost
        diag[f"accepted_{name}"] = bool(r is not None and r.accepted)
        if r is not None and r.reason:
            diag[f"reject_{name}"] = r.reason
    ax = rx is not None and rx.accepted
    ay = ry is not None and ry.accepted
    if not (ax or ay):
        return _drop(state, inp, cfg, "both axes rejected", diag)
    prev_o = (state.tracker.prev_o_x, state.tracker.prev_o_y)
    fused = fuse_axes(rx, ry, grid, prev_o)
    tr = update(state.tracker, fused.o_x if ax else None, fused.o_y if ay else None,
                grid.m_x, grid.m_y, inp.frame_index)
    last = state.last_pose
    pose = PoseEstimate(
        x=tr.p_x, y=tr.p_y, o_x=fused.o_x, o_y=fused.o_y, h=fused.h,
        alpha=obs.orientation.alpha, beta=obs.orientation.beta,
        final_cost_x=rx.final_cost if ax else (last.final_cost_x if last else math.nan),
        final_cost_y=ry.final_cost if ay else (last.final_cost_y if last else math.nan),
        accepted=fused.accepted,
    )
    k = cfg.energy_history
    new = PipelineState(
        tracker=tr, last_pose=pose,
        prev_x=rx if ax else state.prev_x,
        prev_y=ry if ay else state.prev_y,
        costs_x=(state.costs_x + (rx.final_cost,))[-k:] if ax else state.costs_x,
        costs_y=(state.costs_y + (ry.final_cost,))[-k:] if ay else state.costs_y,
        consecutive_drops=0, lost=False, last_frame=inp.frame_index,
    )
    return new, FrameOutput(pose, fused.status, diag, "")


def process_frame(state: PipelineState, inp: FrameInput, cam: CameraModel, grid: GridSpec,
                  cfg: PipelineConfig = PipelineConfig(), seed: int = 0,
                  timings: Optional[dict] = None) -> tuple[PipelineState, FrameOutput]:
    """Run the full chain on one frame.  Failures become dropped frames, never exceptions."""
    if inp.frame_index <= state.last_frame:
        raise ValueError(f"frame {inp.frame_index} is not after frame {state.last_frame}")
    t0 = time.perf_counter()
    diag: dict = {"n_lines": len(inp.lines)}
    try:
        held = None if state.last_pose is None else (state.last_pose.alpha, state.last_pose.beta)
        obs = observe(inp.lines, cam, cfg, frame_rng(seed, inp.frame_index), held)
    except NoConsensus as exc:
        return _drop(state, inp, cfg, f"no consensus: {exc}", diag)
    except ValueError as exc:
        return _drop(state, inp, cfg, f"observation failed: {exc}", diag)
    diag.update(n_long=len(obs.filtered.long_lines), n_lat=len(obs.filtered.lat_lines),
                n_outliers=len(obs.filtered.outliers), clusters_long=len(obs.long),
                clusters_lat=len(obs.lat))
    t1 = time.perf_counter()
    out = localize(state, obs, inp, cam, grid, cfg, diag)
    if timings is not None:
        timings["observe_s"] = t1 - t0
        timings["localize_s"] = time.perf_counter() - t1
    return out


def run_stream(frames: Sequence[FrameInput], cam: CameraModel, grid: GridSpec,
               cfg: PipelineConfig = PipelineConfig(), seed: int = 0,
               timings: Optional[list] = None) -> list[FrameOutput]:
    state = PipelineState()
    outs = []
    for inp in frames:
        t = {} if timings is not None else None
        t0 = time.perf_counter()
        state, out = process_frame(state, inp, cam, grid, cfg, seed, t)
        if timings is not None:
            t["total_s"] = time.perf_counter() - t0
            timings.append(t)
        outs.append(out)
    return outs
