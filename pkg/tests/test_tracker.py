import itertools
import math

import pytest

from gridloc.tracker import TrackerState, cell_index, integrate_axis, update


def test_wrap_backward_across_cell_boundary():
    # moving -0.1 m across the boundary: o jumps 0.05 -> 0.95
    assert integrate_axis(3.05, 0.05, 0.95, 1.0) == pytest.approx(2.95)


def test_wrap_forward_across_cell_boundary():
    assert integrate_axis(5.95, 0.95, 0.05, 1.0) == pytest.approx(6.05)


def test_no_wrap_inside_cell():
    assert integrate_axis(2.3, 0.3, 0.4, 1.0) == pytest.approx(2.4)


def test_tie_goes_to_base():
    # |o_new - o_prev| = m/2 exactly: base and base - m are equally close
    assert integrate_axis(0.25, 0.25, 0.75, 1.0) == pytest.approx(0.75)


def test_matches_exhaustive_nearest_displacement():
    # brute force: the true motion is the displacement in (-m/2, m/2) matching the offsets
    m = 0.8
    grid = [k * 0.05 for k in range(16)]
    for p_prev, o_prev, o_new in itertools.product([1.3, -2.1], grid, grid):
        if abs(abs(o_new - o_prev) - m / 2) < 1e-9:
            continue  # exact ties are covered above
        step = min((o_new - o_prev + k * m for k in range(-3, 4)), key=abs)
        assert integrate_axis(p_prev, o_prev, o_new, m) == pytest.approx(p_prev + step)


def test_update_initializes_and_holds_rejected_axis():
    s = update(TrackerState(), 0.2, 0.7)
    assert (s.p_x, s.p_y, s.initialized) == (0.2, 0.7, True)
    s = update(s, 0.3, None)
    assert s.p_x == pytest.approx(0.3) and s.p_y == 0.7 and s.prev_o_y == 0.7
    s = update(s, None, 0.1)
    assert s.p_y == pytest.approx(1.1)
    assert s.frame_index == 3


def test_update_axis_first_seen_later():
    s = update(TrackerState(), 0.4, None)
    assert math.isnan(s.p_y)
    s = update(s, 0.5, 0.9)
    assert s.p_y == 0.9


def test_cell_index():
    assert cell_index(2.95, 1.0) == 2
    assert cell_index(-0.05, 1.0) == -1
    assert cell_index(1.0, 0.5) == 2


def test_reference_moves_the_window():
    # base 0.09, reference 0.76: 1.09 is the nearer lattice point
    assert integrate_axis(0.43, 0.43, 0.09, 1.0, ref=0.76) == pytest.approx(1.09)
    assert integrate_axis(0.43, 0.43, 0.09, 1.0) == pytest.approx(0.09)
    # several cells away
    assert integrate_axis(0.0, 0.0, 0.2, 1.0, ref=3.1) == pytest.approx(3.2)


def test_gap_uses_constant_velocity_prediction():
    s = update(TrackerState(), 0.10, 0.5, frame=0)
    s = update(s, 0.43, 0.5, frame=1)
    # x missing on frame 2; by frame 3 it moved 0.66 m, more than half a cell
    s = update(s, None, 0.5, frame=2)
    s = update(s, 0.09, 0.5, frame=3)
    assert s.p_x == pytest.approx(1.09)
    assert s.v_x == pytest.approx(0.33)
    # without a gap the plain nearest-candidate rule applies
    t = update(update(TrackerState(), 0.10, 0.5, frame=0), 0.43, 0.5, frame=1)
    t = update(t, 0.09, 0.5, frame=2)
    assert t.p_x == pytest.approx(0.09)
