import math

import numpy as np
import pytest

from gridloc.detect import (DetectorConfig, GrayImage, detect_edges, detect_lines,
                            hough_accumulator, hough_lines, hough_peaks, rasterize_lines,
                            read_pgm, write_pgm)
from gridloc.types import DetectedLine


def test_gray_image_validation():
    with pytest.raises(ValueError):
        GrayImage(np.zeros(5))
    with pytest.raises(ValueError):
        GrayImage(np.full((2, 2), 300))
    img = GrayImage.from_flat(3, 2, range(6))
    assert (img.width, img.height) == (3, 2)
    assert img.pixels[1, 0] == 3
    with pytest.raises(ValueError):
        GrayImage.from_flat(3, 2, range(5))


def test_pgm_round_trip(tmp_path):
    px = np.random.default_rng(0).integers(0, 256, size=(7, 11))
    write_pgm(tmp_path / "a.pgm", GrayImage(px))
    back = read_pgm(tmp_path / "a.pgm")
    np.testing.assert_array_equal(back.pixels, px)


def test_pgm_comments_and_maxval(tmp_path):
    (tmp_path / "b.pgm").write_bytes(b"P5\n# made by hand\n2 1\n15\n\x00\x0f")
    assert read_pgm(tmp_path / "b.pgm").pixels.tolist() == [[0, 255]]
    (tmp_path / "c.pgm").write_bytes(b"P2\n2 1\n255\n0 1")
    with pytest.raises(ValueError, match="P5"):
        read_pgm(tmp_path / "c.pgm")
    (tmp_path / "d.pgm").write_bytes(b"P5\n4 4\n255\n\x00")
    with pytest.raises(ValueError, match="truncated"):
        read_pgm(tmp_path / "d.pgm")


def test_vertical_step_edges():
    px = np.zeros((10, 40), dtype=np.uint8)
    px[:, 20:] = 255
    edges = detect_edges(GrayImage(px), 40)
    cols = np.unique(np.nonzero(edges.pixels)[1])
    assert cols.tolist() == [19, 20]
    with pytest.raises(ValueError):
        detect_edges(GrayImage(px), 0)
    with pytest.raises(ValueError):
        detect_edges(GrayImage(px[:2, :2]), 40)


def test_accumulator_matches_brute_force():
    rng = np.random.default_rng(4)
    px = np.where(rng.random((12, 15)) < 0.1, 255, 0)
    acc, rhos, thetas = hough_accumulator(GrayImage(px), 1.0, math.pi / 36)
    ref = np.zeros_like(acc)
    for y, x in zip(*np.nonzero(px)):
        for k, t in enumerate(thetas):
            i = int(np.argmin(np.abs(rhos - (x * math.cos(t) + y * math.sin(t)))))
            ref[i, k] += 1
    np.testing.assert_array_equal(acc, ref)
    assert acc.sum() == np.count_nonzero(px) * thetas.size


def test_peaks_single_line():
    img = rasterize_lines([DetectedLine(100.0, math.radians(30))], 200, 160, half_width=0.5)
    lines = hough_lines(img, votes_min=60, window=(3, 2))
    assert len(lines) == 1
    assert lines[0].rho == pytest.approx(100.0, abs=1.0)
    assert lines[0].theta == pytest.approx(math.radians(30), abs=math.radians(1))
    with pytest.raises(ValueError):
        hough_lines(img, votes_min=1)


def test_peaks_wrap_across_theta_seam():
    # two copies of one bin pair across theta = pi count as neighbours
    acc = np.zeros((11, 6), dtype=int)
    acc[3, 0] = 10
    acc[7, 5] = 9  # rho index 7 mirrors index 3 across the seam
    assert hough_peaks(acc, 5) == [(3, 0)]


def test_detect_lines_on_rasterized_grid():
    truth = [DetectedLine(160.0, 0.0), DetectedLine(480.0, 0.0),
             DetectedLine(120.0, math.pi / 2), DetectedLine(360.0, math.pi / 2)]
    img = rasterize_lines(truth, 640, 480, half_width=1.5)
    found = detect_lines(img, DetectorConfig())
    for t in truth:
        assert any(abs(f.rho - t.rho) <= 3 and abs(f.theta - t.theta) <= 0.03 for f in found)
    # both edges of each band (and slightly rotated copies) are reported; all lie
    # close to a true line, and the clustering stage merges them
    for f in found:
        assert any(abs(f.rho - t.rho) <= 12 and abs(f.theta - t.theta) <= 0.02 for t in truth)


def test_every_line_has_its_votes():
    truth = [DetectedLine(150.0, 0.3), DetectedLine(90.0, 1.2), DetectedLine(200.0, 2.0)]
    img = rasterize_lines(truth, 320, 240, half_width=0.5)
    found = hough_lines(img, votes_min=80, window=(2, 1))
    assert found
    ys, xs = np.nonzero(img.pixels)
    for ln in found:
        d = np.abs(xs * math.cos(ln.theta) + ys * math.sin(ln.theta) - ln.rho)
        assert np.count_nonzero(d <= 1.0) >= 80
