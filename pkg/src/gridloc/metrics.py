"""Error statistics for trajectory estimates: mean, RMSE, SD and error correlation."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

STATES = ("X", "Y", "Z", "Pitch", "Roll")
# columns 3 and 4 hold angles
ANGLE_COLUMNS = (3, 4)


@dataclass(frozen=True)
class StateStats:
    mean: float
    rmse: float
    sd: float


@dataclass(frozen=True)
class ErrorReport:
    """Per-state statistics in the order X, Y, Z, Pitch, Roll (angles in degrees)."""

    stats: dict[str, StateStats]
    correlation: np.ndarray
    n_frames: int
    n_excluded: int = 0
    # states whose error has zero variance; their correlations are reported as 0
    zero_variance: tuple[str, ...] = ()
    errors: np.ndarray = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "n_frames": self.n_frames,
            "n_excluded": self.n_excluded,
            "states": list(STATES),
            "mean": [self.stats[s].mean for s in STATES],
            "rmse": [self.stats[s].rmse for s in STATES],
            "sd": [self.stats[s].sd for s in STATES],
            "correlation": self.correlation.tolist(),
            "zero_variance": list(self.zero_variance),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def error_series(estimates, truth, angle_unit: str = "rad") -> np.ndarray:
    """estimate - truth, shape (n, 5), with angle columns converted to degrees."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.ndim != 2 or est.shape[1] != 5 or tru.ndim != 2 or tru.shape[1] != 5:
        raise ValueError("estimates and truth must have shape (n, 5): X, Y, Z, Pitch, Roll")
    if est.shape[0] != tru.shape[0]:
        raise ValueError(f"length mismatch: {est.shape[0]} estimate frames vs "
                         f"{tru.shape[0]} truth frames")
    if angle_unit not in ("rad", "deg"):
        raise ValueError("angle_unit must be 'rad' or 'deg'")
    err = est - tru
    if angle_unit == "rad":
        err[:, ANGLE_COLUMNS] = np.degrees(err[:, ANGLE_COLUMNS])
    return err


def pearson(err: np.ndarray) -> tuple[np.ndarray, tuple[int, ...]]:
    """Correlation matrix of the columns; zero-variance columns get 0 off-diagonal."""
    d = err - err.mean(axis=0)
    ss = np.sqrt(np.sum(d * d, axis=0))
    flat = tuple(int(k) for k in np.nonzero(ss == 0)[0])
    k = err.shape[1]
    corr = np.eye(k)
    for a in range(k):
        for b in range(a + 1, k):
            if ss[a] == 0 or ss[b] == 0:
                continue
            c = float(np.sum(d[:, a] * d[:, b]) / (ss[a] * ss[b]))
            corr[a, b] = corr[b, a] = min(1.0, max(-1.0, c))
    return corr, flat


def compute_report(estimates, truth, angle_unit: str = "rad") -> ErrorReport:
    """Statistics of estimate - truth, aligned by row.

    Rows with a non-finite value in either series (e.g. frames before the
    first fix) are left out and counted in ``n_excluded``.
    """
    err = error_series(estimates, truth, angle_unit)
    ok = np.all(np.isfinite(err), axis=1)
    used = err[ok]
    if used.shape[0] < 2:
        raise ValueError(f"need at least 2 finite frames, got {used.shape[0]}")
    mean = used.mean(axis=0)
    rmse = np.sqrt(np.mean(used * used, axis=0))
    sd = used.std(axis=0, ddof=1)
    corr, flat = pearson(used)
    stats = {s: StateStats(float(mean[k]), float(rmse[k]), float(sd[k]))
             for k, s in enumerate(STATES)}
    return ErrorReport(stats, corr, int(used.shape[0]), int((~ok).sum()),
                       tuple(STATES[k] for k in flat), used)


def aligned_csv(frames, estimates, truth, angle_unit: str = "rad") -> str:
    """Per-frame truth and estimate columns side by side, for path plots."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if not (len(frames) == est.shape[0] == tru.shape[0]):
        raise ValueError("frames, estimates and truth must have equal length")
    scale = 1.0 if angle_unit == "deg" else 180.0 / math.pi
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["frame"] + [f"{s.lower()}_{kind}" for s in STATES for kind in ("true", "est")])
    for k, fr in enumerate(frames):
        row = [int(fr)]
        for c in range(5):
            f = scale if c in ANGLE_COLUMNS else 1.0
            row += [f"{tru[k, c] * f:.6f}", f"{est[k, c] * f:.6f}"]
        w.writerow(row)
    return buf.getvalue()


__all__ = ["STATES", "StateStats", "ErrorReport", "error_series", "pearson", "compute_report",
           "aligned_csv"]
