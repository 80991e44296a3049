"""Merge repeated detections of one grid line with a 1-D Gaussian KDE over rho."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .types import DetectedLine

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class ClusteredSet:
    """Cluster means sorted by descending rho.  ``members[k]`` indexes the input lines."""

    lines: tuple[tuple[float, float], ...]
    members: tuple[tuple[int, ...], ...] = ()

    def __len__(self):
        return len(self.lines)

    @property
    def rhos(self) -> np.ndarray:
        return np.array([r for r, _ in self.lines])

    @property
    def thetas(self) -> np.ndarray:
        return np.array([t for _, t in self.lines])


def kde_density(rho_samples, b: float, query):
    """Gaussian kernel density estimate of rho with bandwidth ``b`` at ``query``.

    ``query`` may be a scalar or an array; the return matches its shape.
    """
    samples = np.asarray(rho_samples, dtype=float).ravel()
    if samples.size == 0:
        raise ValueError("kde_density needs at least one sample")
    if b <= 0:
        raise ValueError("bandwidth must be positive")
    q = np.asarray(query, dtype=float)
    z = (q[..., None] - samples) / b
    dens = np.exp(-0.5 * z * z).sum(axis=-1) * (_INV_SQRT_2PI / (samples.size * b))
    return float(dens) if dens.ndim == 0 else dens


def _cut_points(grid: np.ndarray, dens: np.ndarray, eps_c: float) -> list[float]:
    if dens.size < 3:
        return []
    mid = dens[1:-1]
    is_min = (mid <= dens[:-2]) & (mid <= dens[2:]) & (mid < eps_c)
    idx = np.nonzero(is_min)[0] + 1
    cuts = []
    # a run of adjacent minima (flat, underflowed tails) is one boundary
    start = None
    for k, i in enumerate(idx):
        if start is None:
            start = i
        if k + 1 == len(idx) or idx[k + 1] != i + 1:
            cuts.append(float(grid[(start + i) // 2]))
            start = None
    return cuts


def cluster_rho(
    lines: Sequence[DetectedLine],
    b: float = 20.0,
    threshold_fraction: float = 0.25,
    step: float = 1.0,
) -> ClusteredSet:
    """Group lines whose rho values share a density mode.

    The density is sampled every ``step`` px over [min - 3b, max + 3b] and the
    rho axis is cut at local minima lying below ``threshold_fraction`` times
    the peak density.  Theta is carried along and averaged, never clustered.
    """
    lines = list(lines)
    if not lines:
        raise ValueError("cluster_rho needs at least one line")
    rho = np.array([ln.rho for ln in lines], dtype=float)
    theta = np.array([ln.theta for ln in lines], dtype=float)

    grid = np.arange(rho.min() - 3 * b, rho.max() + 3 * b + step, step)
    dens = kde_density(rho, b, grid)
    cuts = _cut_points(grid, dens, threshold_fraction * dens.max())

    which = np.searchsorted(np.asarray(cuts), rho) if cuts else np.zeros(len(rho), int)
    out = []
    for k in np.unique(which):
        sel = np.nonzero(which == k)[0]
        out.append((float(rho[sel].mean()), float(theta[sel].mean()), tuple(int(i) for i in sel)))
    out.sort(key=lambda c: -c[0])
    return ClusteredSet(
        lines=tuple((r, t) for r, t, _ in out),
        members=tuple(m for _, _, m in out),
    )
