"""Minimal line detector: central-difference edges and a dense Hough accumulator.

Also reads and writes binary PGM (P5) images so the pipeline can start from
pictures without an external vision library.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .types import DetectedLine


@dataclass(frozen=True)
class GrayImage:
    """Row-major 8-bit intensities, shape (height, width)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ValueError("pixels must be a 2-D array")
        if px.size and (px.min() < 0 or px.max() > 255):
            raise ValueError("pixel values must lie in 0..255")
        object.__setattr__(self, "pixels", px.astype(np.uint8))

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @classmethod
    def from_flat(cls, width: int, height: int, values) -> "GrayImage":
        values = np.asarray(values)
        if values.size != width * height:
            raise ValueError(f"expected {width * height} pixels, got {values.size}")
        return cls(values.reshape(height, width))


# --- PGM I/O ------------------------------------------------------------------

_HEADER = re.compile(rb"P5(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)"
                     rb"(?:\s+|#[^\n]*\n)+(\d+)\s")


def read_pgm(path) -> GrayImage:
    data = Path(path).read_bytes()
    m = _HEADER.match(data)
    if m is None:
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = (int(g) for g in m.groups())
    if not 0 < maxval < 256:
        raise ValueError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    body = data[m.end():m.end() + w * h]
    if len(body) != w * h:
        raise ValueError(f"{path}: truncated pixel data")
    px = np.frombuffer(body, dtype=np.uint8).reshape(h, w)
    if maxval != 255:
        px = np.round(px.astype(float) * 255.0 / maxval).astype(np.uint8)
    return GrayImage(px)


def write_pgm(path, img: GrayImage) -> None:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.pixels.tobytes())


# --- edges --------------------------------------------------------------------

def detect_edges(img: GrayImage, threshold: float) -> GrayImage:
    """Binary map (0/255) of pixels whose central-difference gradient exceeds ``threshold``."""
    if not 0 < threshold < 255:
        raise ValueError("threshold must lie strictly between 0 and 255")
    if img.width < 3 or img.height < 3:
        raise ValueError("image must be at least 3x3")
    a = img.pixels.astype(float)
    gx = np.zeros_like(a)
    gy = np.zeros_like(a)
    gx[:, 1:-1] = 0.5 * (a[:, 2:] - a[:, :-2])
    gy[1:-1, :] = 0.5 * (a[2:, :] - a[:-2, :])
    return GrayImage(np.where(np.hypot(gx, gy) > threshold, 255, 0))


# --- Hough --------------------------------------------------------------------

def hough_accumulator(binary: GrayImage, rho_step: float = 1.0,
                      theta_step: float = math.pi / 180.0):
    """Vote array over theta in [0, pi) and signed rho in [-R, R].

    Returns (acc, rhos, thetas); acc[i, k] counts edge pixels whose
    x*cos(thetas[k]) + y*sin(thetas[k]) rounds to rhos[i].
    """
    if not (rho_step > 0 and theta_step > 0):
        raise ValueError("rho_step and theta_step must be positive")
    n_t = max(1, int(round(math.pi / theta_step)))
    thetas = np.arange(n_t) * (math.pi / n_t)
    diag = math.hypot(binary.width, binary.height)
    n_r = int(math.ceil(diag / rho_step))
    rhos = np.arange(-n_r, n_r + 1) * rho_step
    acc = np.zeros((rhos.size, n_t), dtype=np.int64)
    ys, xs = np.nonzero(binary.pixels)
    if xs.size == 0:
        return acc, rhos, thetas
    cos, sin = np.cos(thetas), np.sin(thetas)
    cols = np.arange(n_t)
    # chunk over pixels so memory stays bounded on large edge maps
    for s in range(0, xs.size, 4096):
        r = xs[s:s + 4096, None] * cos + ys[s:s + 4096, None] * sin
        idx = np.rint(r / rho_step).astype(np.int64) + n_r
        np.add.at(acc, (idx, np.broadcast_to(cols, idx.shape)), 1)
    return acc, rhos, thetas


def _neighbours(i: int, k: int, n_r: int, n_t: int):
    """8-neighbourhood; stepping past theta = pi re-enters at theta = 0 with rho negated."""
    for dk in (-1, 0, 1):
        for di in (-1, 0, 1):
            if di == 0 and dk == 0:
                continue
            ii, kk = i + di, k + dk
            if kk < 0:
                kk, ii = n_t - 1, n_r - 1 - ii
            elif kk >= n_t:
                kk, ii = 0, n_r - 1 - ii
            if 0 <= ii < n_r:
                yield ii, kk


def _wrapped_distance(p, q, n_r: int, n_t: int) -> tuple[int, int]:
    """Bin distance (rho, theta) between peaks, allowing for the theta = pi seam."""
    di, dk = abs(p[0] - q[0]), abs(p[1] - q[1])
    if dk > n_t // 2:
        # across the seam rho changes sign
        dk = n_t - dk
        di = abs(p[0] - (n_r - 1 - q[0]))
    return di, dk


def hough_peaks(acc: np.ndarray, votes_min: int, window: tuple[int, int] = (1, 1)
                ) -> list[tuple[int, int]]:
    """Local maxima with at least ``votes_min`` votes.

    A bin is a candidate when no 8-neighbour beats it.  Candidates are then
    taken in order of decreasing votes (ties by index) and any candidate
    within ``window`` = (rho bins, theta bins) of a kept peak is skipped,
    which also collapses plateaus to a single bin.
    """
    n_r, n_t = acc.shape
    peaks = []
    for i, k in np.argwhere(acc >= votes_min):
        v = acc[i, k]
        if all(v >= acc[ii, kk] for ii, kk in _neighbours(i, k, n_r, n_t)):
            peaks.append((int(i), int(k)))
    peaks.sort(key=lambda p: (-acc[p], p))
    wr, wt = max(1, window[0]), max(1, window[1])
    kept: list[tuple[int, int]] = []
    for p in peaks:
        if all(not (di <= wr and dk <= wt)
               for di, dk in (_wrapped_distance(p, q, n_r, n_t) for q in kept)):
            kept.append(p)
    return kept


def hough_lines(binary: GrayImage, rho_step: float = 1.0, theta_step: float = math.pi / 180.0,
                votes_min: int = 60, window: tuple[int, int] = (1, 1)) -> list[DetectedLine]:
    """Lines at accumulator peaks, strongest first, in normalized (rho >= 0) form."""
    if votes_min < 2:
        raise ValueError("votes_min must be at least 2")
    acc, rhos, thetas = hough_accumulator(binary, rho_step, theta_step)
    return [DetectedLine.normalized(float(rhos[i]), float(thetas[k]))
            for i, k in hough_peaks(acc, votes_min, window)]


@dataclass(frozen=True)
class DetectorConfig:
    edge_threshold: float = 40.0
    rho_step: float = 1.0
    theta_step: float = math.pi / 180.0
    votes_min: int = 150
    # non-maximum suppression window in (rho bins, theta bins)
    peak_window: tuple[int, int] = (2, 1)


def detect_lines(img: GrayImage, cfg: DetectorConfig = DetectorConfig()) -> list[DetectedLine]:
    return hough_lines(detect_edges(img, cfg.edge_threshold), cfg.rho_step, cfg.theta_step,
                       cfg.votes_min, tuple(cfg.peak_window))


def rasterize_lines(lines, width: int, height: int, half_width: float = 1.0,
                    background: int = 0, ink: int = 255) -> GrayImage:
    """Draw each (rho, theta) line as the pixels within ``half_width`` of it."""
    ys, xs = np.mgrid[0:height, 0:width]
    px = np.full((height, width), background, dtype=np.uint8)
    for ln in lines:
        d = np.abs(xs * math.cos(ln.theta) + ys * math.sin(ln.theta) - ln.rho)
        px[d <= half_width] = ink
    return GrayImage(px)


__all__ = ["GrayImage", "read_pgm", "write_pgm", "detect_edges", "hough_accumulator",
           "hough_peaks", "hough_lines", "DetectorConfig", "detect_lines", "rasterize_lines"]
