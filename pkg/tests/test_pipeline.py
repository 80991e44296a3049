import math

import numpy as np
import pytest

from gridloc.pipeline import FrameInput, PipelineState, frame_rng, process_frame, run_stream
from gridloc.simulator import NoiseSpec, Scenario, TruePose, render_frame, relative_truth, simulate
from gridloc.types import CameraModel, DetectedLine, GridSpec, PipelineConfig


def _inputs(run):
    return [FrameInput(k, f.lines) for k, f in enumerate(run.frames)]


def test_noiseless_stream_tracks_exactly():
    sc = Scenario(path_length=12.0, noise=NoiseSpec(duplicates_per_line=(3, 5)), seed=3)
    run = simulate(sc)
    outs = run_stream(_inputs(run), sc.camera, sc.grid, sc.pipeline, seed=3)
    assert all(o.status == "accepted" for o in outs)
    truth = relative_truth(run.poses, sc.grid)
    est = np.array([[o.pose.x, o.pose.y, o.pose.h, o.pose.alpha, o.pose.beta] for o in outs])
    np.testing.assert_allclose(est, truth, atol=1e-6)


def test_single_frame_offsets_and_height():
    cam, grid = CameraModel(), GridSpec()
    pose = TruePose(3.27, 5.81, 1.6, math.radians(3), math.radians(-2))
    fr = render_frame(pose, cam, grid, NoiseSpec(duplicates_per_line=(3, 3)))
    state, out = process_frame(PipelineState(), FrameInput(0, fr.lines), cam, grid)
    assert out.status == "accepted"
    assert out.pose.o_x == pytest.approx(0.27, abs=1e-6)
    assert out.pose.o_y == pytest.approx(0.81, abs=1e-6)
    assert out.pose.h == pytest.approx(1.6, abs=1e-6)
    assert out.pose.alpha == pytest.approx(pose.alpha, abs=1e-6)


def test_outlier_only_frames_are_dropped_then_lost():
    cam, grid = CameraModel(), GridSpec()
    cfg = PipelineConfig(max_consecutive_drops=5)
    rng = np.random.default_rng(0)
    state = PipelineState()
    for k in range(6):
        lines = tuple(DetectedLine(float(r), float(t))
                      for r, t in zip(rng.uniform(0, 700, 8), rng.uniform(-1, 2, 8)))
        state, out = process_frame(state, FrameInput(k, lines), cam, grid, cfg)
        assert out.status == "dropped"
        assert math.isnan(out.pose.x)
    assert state.lost and state.consecutive_drops == 6


def test_dropped_frame_holds_last_pose_and_recovers():
    cam, grid = CameraModel(), GridSpec()
    noise = NoiseSpec(duplicates_per_line=(3, 3))
    f0 = render_frame(TruePose(0.3, 0.4, 2.0), cam, grid, noise)
    f2 = render_frame(TruePose(0.35, 0.42, 2.0), cam, grid, noise)
    state, a = process_frame(PipelineState(), FrameInput(0, f0.lines), cam, grid)
    state, b = process_frame(state, FrameInput(1, ()), cam, grid)
    assert b.status == "dropped" and b.pose.x == a.pose.x and not b.pose.accepted
    state, c = process_frame(state, FrameInput(2, f2.lines), cam, grid)
    assert c.status == "accepted" and c.pose.x == pytest.approx(0.35, abs=1e-6)
    assert state.consecutive_drops == 0


def test_frames_must_increase():
    cam, grid = CameraModel(), GridSpec()
    state, _ = process_frame(PipelineState(), FrameInput(4, ()), cam, grid)
    with pytest.raises(ValueError):
        process_frame(state, FrameInput(4, ()), cam, grid)


def test_frame_rng_is_per_frame():
    a = frame_rng(42, 7).integers(1 << 30)
    assert a == frame_rng(42, 7).integers(1 << 30)
    assert a != frame_rng(42, 8).integers(1 << 30)


def test_gate_history_is_bounded():
    sc = Scenario(path_length=3.0, noise=NoiseSpec(1.0, 0.005, (3, 5)), seed=1)
    run = simulate(sc)
    state = PipelineState()
    for inp in _inputs(run):
        state, _ = process_frame(state, inp, sc.camera, sc.grid, sc.pipeline, 1)
    assert len(state.costs_x) == sc.pipeline.energy_history
    assert state.gate_reference("x") == pytest.approx(float(np.median(state.costs_x)))
    assert PipelineState().gate_reference("y") is None
