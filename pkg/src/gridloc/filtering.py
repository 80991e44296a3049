"""Theta gate and two-pass RANSAC in rho-theta space.

Every detected line is a point (theta, rho).  A family of parallel floor
lines falls on a smooth, nearly straight curve in that plane, so two
sequential RANSAC line fits pull out the two grid families and leave
everything else as outliers.

Points live in a normalized plane: theta in radians and rho divided by the
image diagonal.  Two residuals are available: the perpendicular distance in
that plane ("normalized"), or the theta distance to the model at the point's
rho ("theta", in radians).  The latter keeps a band from running across
both families at similar rho.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .types import DetectedLine, PipelineConfig

GATE_LO = -math.pi / 4
GATE_HI = 3 * math.pi / 4


class NoConsensus(Exception):
    """RANSAC could not find a model supported by enough lines."""


@dataclass(frozen=True)
class LinearModelRT:
    """Line n_theta*theta + n_rho*(rho/scale) = c in the normalized rho-theta plane.

    Stored in normal form because a level camera puts a whole family at a
    single theta, i.e. a vertical line whose rho-vs-theta slope is infinite.
    """

    n_theta: float
    n_rho: float
    c: float
    scale: float
    residual: str = "normalized"

    @property
    def slope(self) -> float:
        """d(rho)/d(theta) in pixels per radian (inf for a constant-theta family)."""
        if self.n_rho == 0.0:
            return math.inf
        return -self.n_theta / self.n_rho * self.scale

    @property
    def intercept(self) -> float:
        if self.n_rho == 0.0:
            return math.nan
        return self.c / self.n_rho * self.scale

    def distances(self, theta: np.ndarray, rho: np.ndarray) -> np.ndarray:
        r = np.abs(self.n_theta * np.asarray(theta) + self.n_rho * np.asarray(rho) / self.scale - self.c)
        if self.residual == "theta":
            return r / abs(self.n_theta) if self.n_theta != 0.0 else np.where(r == 0, 0.0, np.inf)
        return r


@dataclass(frozen=True)
class FilterResult:
    long_lines: tuple[DetectedLine, ...]
    lat_lines: tuple[DetectedLine, ...]
    outliers: tuple[DetectedLine, ...]
    model_long: Optional[LinearModelRT]
    model_lat: Optional[LinearModelRT]
    # indices into the list handed to filter_grid_lines
    long_idx: tuple[int, ...] = ()
    lat_idx: tuple[int, ...] = ()
    outlier_idx: tuple[int, ...] = ()
    gated_out_idx: tuple[int, ...] = ()


def theta_gate_mask(thetas: np.ndarray) -> np.ndarray:
    thetas = np.asarray(thetas, dtype=float)
    return (thetas >= GATE_LO) & (thetas < GATE_HI)


def theta_gate(lines: Sequence[DetectedLine]) -> list[DetectedLine]:
    """Keep lines with -pi/4 <= theta < 3pi/4, where each grid family is continuous."""
    return [ln for ln in lines if GATE_LO <= ln.theta < GATE_HI]


def _tls_fit(pts: np.ndarray) -> tuple[float, float, float]:
    centroid = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - centroid, full_matrices=False)
    n = vt[-1]
    return float(n[0]), float(n[1]), float(n @ centroid)


def _ols_theta_fit(pts: np.ndarray) -> tuple[float, float, float]:
    # theta = a + b*rho, written in unit-normal form
    x, y = pts[:, 1], pts[:, 0]
    dx = x - x.mean()
    var = float(dx @ dx)
    b = float(dx @ (y - y.mean()) / var) if var > 0 else 0.0
    a = float(y.mean() - b * x.mean())
    k = 1.0 / math.hypot(1.0, b)
    return k, -b * k, a * k


def _canonical(nt: float, nr: float, c: float) -> tuple[float, float, float]:
    # fix the sign of the normal so equal lines compare equal
    if nr < 0 or (nr == 0 and nt < 0):
        return -nt, -nr, -c
    return nt, nr, c


def ransac_line_rt(
    points: Sequence[DetectedLine] | np.ndarray,
    d: float,
    t: int,
    iterations: int = 200,
    seed: int | np.random.Generator = 0,
    scale: float = 800.0,
    early_exit_ratio: float = 0.8,
    residual: str = "normalized",
) -> tuple[LinearModelRT, np.ndarray]:
    """Fit one line to (theta, rho) points.  Returns the model and the inlier indices.

    ``points`` is either a sequence of DetectedLine or an (n, 2) array of
    (theta, rho).  Raises NoConsensus when fewer than ``t`` points agree.
    """
    if isinstance(points, np.ndarray):
        arr = np.asarray(points, dtype=float).reshape(-1, 2)
    else:
        arr = np.array([(ln.theta, ln.rho) for ln in points], dtype=float).reshape(-1, 2)
    n = len(arr)
    if n < 2:
        raise NoConsensus("need at least two lines")
    if n < t:
        raise NoConsensus(f"{n} lines, fewer than the {t} needed for a fit")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    pts = np.column_stack([arr[:, 0], arr[:, 1] / scale])
    a = rng.integers(n, size=iterations)
    b = (a + 1 + rng.integers(n - 1, size=iterations)) % n
    dvec = pts[b] - pts[a]
    norm = np.hypot(dvec[:, 0], dvec[:, 1])
    valid = norm > 1e-12
    if not valid.any():
        raise NoConsensus("degenerate sample: all points coincide")
    nt = np.where(valid, -dvec[:, 1] / np.where(valid, norm, 1.0), 0.0)
    nr = np.where(valid, dvec[:, 0] / np.where(valid, norm, 1.0), 0.0)
    c = nt * pts[a, 0] + nr * pts[a, 1]

    if residual not in ("normalized", "theta"):
        raise ValueError(f"unknown residual {residual!r}")
    dist = np.abs(nt[:, None] * pts[None, :, 0] + nr[:, None] * pts[None, :, 1] - c[:, None])
    if residual == "theta":
        # constant-rho samples cannot express theta as a function of rho
        valid &= np.abs(nt) > 1e-12
        dist = dist / np.where(valid, np.abs(nt), 1.0)[:, None]
    inl = (dist <= d) & valid[:, None]
    counts = inl.sum(axis=1)
    ssr = np.where(inl, dist * dist, 0.0).sum(axis=1)

    # sequential early exit, replayed on the vectorized batch
    hit = np.nonzero(counts > early_exit_ratio * n)[0]
    last = hit[0] + 1 if hit.size else iterations
    order = np.lexsort((np.arange(last), ssr[:last], -counts[:last]))
    best = int(order[0])
    if counts[best] < t:
        raise NoConsensus(f"best model has {counts[best]} inliers, need {t}")

    model = _canonical(float(nt[best]), float(nr[best]), float(c[best]))
    mask = inl[best]
    # local refinement: refit on the inliers (TLS, or OLS of theta on rho in
    # theta mode), kept if support does not drop
    for _ in range(3):
        fit = _ols_theta_fit if residual == "theta" else _tls_fit
        cand = _canonical(*fit(pts[mask]))
        cdist = np.abs(cand[0] * pts[:, 0] + cand[1] * pts[:, 1] - cand[2])
        if residual == "theta":
            cdist = cdist / abs(cand[0])
        cmask = cdist <= d
        if cmask.sum() < mask.sum():
            break
        model = cand
        if np.array_equal(cmask, mask):
            break
        mask = cmask
    return LinearModelRT(*model, scale=scale, residual=residual), np.nonzero(mask)[0]


def filter_grid_lines(
    lines: Sequence[DetectedLine],
    cfg: PipelineConfig = PipelineConfig(),
    seed: int | np.random.Generator = 0,
    scale: float = 800.0,
    allow_single_family: bool = False,
) -> FilterResult:
    """Split detections into longitudinal, latitudinal and outlier lines.

    With ``allow_single_family`` a failed second fit leaves that family empty
    instead of raising NoConsensus.
    """
    lines = list(lines)
    thetas = np.array([ln.theta for ln in lines], dtype=float)
    gate = theta_gate_mask(thetas) if lines else np.zeros(0, bool)
    kept = np.nonzero(gate)[0]
    gated_out = tuple(int(i) for i in np.nonzero(~gate)[0])
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    arr = np.array([(lines[i].theta, lines[i].rho) for i in kept], dtype=float).reshape(-1, 2)
    kw = dict(d=cfg.ransac_width_d, t=cfg.ransac_min_inliers_t, iterations=cfg.ransac_iterations,
              scale=scale, early_exit_ratio=cfg.ransac_early_exit_ratio,
              residual=cfg.ransac_residual)
    model1, in1 = ransac_line_rt(arr, seed=rng, **kw)
    set1 = kept[in1]
    rest = np.setdiff1d(np.arange(len(kept)), in1)
    try:
        model2, in2 = ransac_line_rt(arr[rest], seed=rng, **kw)
        set2 = kept[rest[in2]]
    except NoConsensus:
        if not allow_single_family:
            raise
        model2, set2 = None, np.zeros(0, dtype=int)

    mean1 = thetas[set1].mean()
    if set2.size == 0:
        # one family only: name it by which axis its mean normal is closer to
        if abs(mean1) <= abs(mean1 - math.pi / 2):
            long_idx, lat_idx, m_long, m_lat = set1, set2, model1, None
        else:
            long_idx, lat_idx, m_long, m_lat = set2, set1, None, model1
    else:
        mean2 = thetas[set2].mean()
        if abs(mean1) <= abs(mean2):
            long_idx, lat_idx, m_long, m_lat = set1, set2, model1, model2
        else:
            long_idx, lat_idx, m_long, m_lat = set2, set1, model2, model1
        if abs(thetas[lat_idx].mean() - math.pi / 2) > abs(thetas[lat_idx].mean()):
            raise NoConsensus("both consensus sets are near-vertical; no latitudinal family")
    used = set(long_idx.tolist()) | set(lat_idx.tolist())
    out_idx = [int(i) for i in kept if int(i) not in used]
    long_idx = sorted(int(i) for i in long_idx)
    lat_idx = sorted(int(i) for i in lat_idx)
    return FilterResult(
        long_lines=tuple(lines[i] for i in long_idx),
        lat_lines=tuple(lines[i] for i in lat_idx),
        outliers=tuple(lines[i] for i in out_idx),
        model_long=m_long,
        model_lat=m_lat,
        long_idx=tuple(long_idx),
        lat_idx=tuple(lat_idx),
        outlier_idx=tuple(out_idx),
        gated_out_idx=gated_out,
    )
