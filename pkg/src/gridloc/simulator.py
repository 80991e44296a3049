"""Synthetic grid-floor observations by explicit 3-D raycasting.

Nothing here uses the per-axis grid model; lines are obtained by projecting
world points through a rotated pinhole camera, so the renderer can serve as
an independent oracle for it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .types import (CameraModel, DetectedLine, GridSpec, PipelineConfig, camera_tilts,
                    max_speed, tilt_rotation)

GRAVITY = 9.81


@dataclass(frozen=True)
class TruePose:
    x: float
    y: float
    h: float
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("height must be positive")


@dataclass(frozen=True)
class NoiseSpec:
    sigma_rho: float = 0.0
    sigma_theta: float = 0.0
    # extra copies of each visible line, drawn uniformly from the closed range
    duplicates_per_line: tuple[int, int] = (0, 0)
    outlier_count: tuple[int, int] = (0, 0)
    # when positive, overrides outlier_count: share of outliers among emitted lines
    outlier_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        vals = (self.sigma_rho, self.sigma_theta, *self.duplicates_per_line,
                *self.outlier_count, self.outlier_fraction)
        if any(v < 0 for v in vals):
            raise ValueError("noise parameters must be non-negative")
        if self.outlier_fraction >= 1:
            raise ValueError("outlier_fraction must be below 1")


@dataclass(frozen=True)
class RenderOptions:
    # rays further than this from the optical axis are not observed
    max_view_angle: float = math.radians(75.0)
    min_segment_px: float = 20.0
    # outliers this close in theta to a true line, or to a family's
    # rho-theta trend, are redrawn
    outlier_theta_margin: float = 0.25
    samples: int = 256


@dataclass(frozen=True)
class LineTruth:
    """``family`` is "long", "lat" or "outlier"; ``index`` is the grid index k."""

    family: str
    index: int
    rho: float
    theta: float


@dataclass(frozen=True)
class RenderedFrame:
    lines: tuple[DetectedLine, ...]
    truth: tuple[LineTruth, ...]


def world_to_camera(points: np.ndarray, pose: TruePose, cam: CameraModel) -> np.ndarray:
    """Camera-frame coordinates (x right, y down, z forward) of world points, shape (n, 3)."""
    R = tilt_rotation(*camera_tilts(cam, pose.alpha, pose.beta), yaw=pose.gamma)
    d = np.asarray(points, dtype=float) - np.array([pose.x, pose.y, pose.h])
    nadir = np.column_stack([-d[:, 1], -d[:, 0], -d[:, 2]])
    return nadir @ R  # row-vector form of R^T v


def camera_rays_to_world(rays: np.ndarray, pose: TruePose, cam: CameraModel) -> np.ndarray:
    """World directions of camera-frame rays, shape (n, 3)."""
    R = tilt_rotation(*camera_tilts(cam, pose.alpha, pose.beta), yaw=pose.gamma)
    nadir = rays @ R.T
    return np.column_stack([-nadir[:, 1], -nadir[:, 0], -nadir[:, 2]])


def project_points(points: np.ndarray, pose: TruePose, cam: CameraModel) -> np.ndarray:
    """Pixel coordinates of world points; NaN for points at or behind the camera."""
    pc = world_to_camera(points, pose, cam)
    out = np.full((pc.shape[0], 2), np.nan)
    front = pc[:, 2] > 1e-12
    out[front, 0] = cam.cx + cam.f * pc[front, 0] / pc[front, 2]
    out[front, 1] = cam.cy + cam.f * pc[front, 1] / pc[front, 2]
    return out


def image_lines(p0s, p1s, pose: TruePose, cam: CameraModel) -> np.ndarray:
    """Vectorized :func:`image_line_of`; rows are (rho, theta), NaN where undefined."""
    p0s = np.atleast_2d(np.asarray(p0s, dtype=float))
    p1s = np.atleast_2d(np.asarray(p1s, dtype=float))
    n_lines = p0s.shape[0]
    pc = world_to_camera(np.vstack([p0s, p1s]), pose, cam)
    u, v = pc[:n_lines], pc[n_lines:]
    # normal of the plane through the camera center and both points
    a = u[:, 1] * v[:, 2] - u[:, 2] * v[:, 1]
    b = u[:, 2] * v[:, 0] - u[:, 0] * v[:, 2]
    nz = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
    c = cam.f * nz - a * cam.cx - b * cam.cy
    norm = np.hypot(a, b)
    out = np.full((n_lines, 2), np.nan)
    ok = norm >= 1e-12 * np.maximum(1.0, np.abs(c))
    a, b, c = a[ok] / norm[ok], b[ok] / norm[ok], c[ok] / norm[ok]
    rho = -c
    flip = rho < 0
    a[flip], b[flip], rho[flip] = -a[flip], -b[flip], -rho[flip]
    theta = np.arctan2(b, a)
    theta[theta >= math.pi] -= 2 * math.pi
    out[ok, 0], out[ok, 1] = rho, theta
    return out


def image_line_of(p0, p1, pose: TruePose, cam: CameraModel) -> Optional[tuple[float, float]]:
    """(rho, theta) of the image of the world line through p0 and p1.

    Built from the plane spanned by the camera center and the line, so it is
    defined even when parts of the line are behind the camera.  rho >= 0 and
    theta in [-pi, pi).
    """
    rho, theta = image_lines([p0], [p1], pose, cam)[0]
    if math.isnan(rho):
        return None
    return float(rho), float(theta)


def clip_to_image(rho: float, theta: float, cam: CameraModel):
    """Endpoints of the line inside the image rectangle, or None."""
    c, s = math.cos(theta), math.sin(theta)
    p0 = np.array([rho * c, rho * s])
    d = np.array([-s, c])
    lo, hi = -np.inf, np.inf
    for k, (vmin, vmax) in enumerate(((0.0, float(cam.width)), (0.0, float(cam.height)))):
        if abs(d[k]) < 1e-15:
            if not vmin <= p0[k] <= vmax:
                return None
            continue
        t0, t1 = (vmin - p0[k]) / d[k], (vmax - p0[k]) / d[k]
        lo, hi = max(lo, min(t0, t1)), min(hi, max(t0, t1))
    if hi <= lo:
        return None
    return p0 + lo * d, p0 + hi * d


def visible_length(rho, theta, pose: TruePose, cam: CameraModel, opts: RenderOptions) -> float:
    """Image length of the part of a floor line that is really seen.

    Each sampled pixel's ray must point downward (so it meets the floor on
    the line) and stay within ``max_view_angle`` of the optical axis.
    """
    seg = clip_to_image(rho, theta, cam)
    if seg is None:
        return 0.0
    a, b = seg
    t = (np.arange(opts.samples) + 0.5) / opts.samples
    px = a[None, :] + t[:, None] * (b - a)[None, :]
    rays = np.column_stack([(px[:, 0] - cam.cx) / cam.f, (px[:, 1] - cam.cy) / cam.f,
                            np.ones(len(t))])
    world = camera_rays_to_world(rays, pose, cam)
    cos_view = 1.0 / np.linalg.norm(rays, axis=1)
    ok = (world[:, 2] < 0) & (cos_view >= math.cos(opts.max_view_angle))
    return float(ok.mean() * np.linalg.norm(b - a))


def visible_grid_lines(pose: TruePose, cam: CameraModel, grid: GridSpec,
                       opts: RenderOptions = RenderOptions()) -> list[LineTruth]:
    """Exact images of every grid line seen from ``pose``."""
    reach = pose.h * math.tan(min(opts.max_view_angle + 0.6, 1.52))
    out = []
    fams = (("long", grid.m_y, pose.y, lambda v: ((0.0, v, 0.0), (1.0, v, 0.0))),
            ("lat", grid.m_x, pose.x, lambda v: ((v, 0.0, 0.0), (v, 1.0, 0.0))))
    for fam, m, centre, pts in fams:
        ks = range(math.floor((centre - reach) / m), math.ceil((centre + reach) / m) + 1)
        ends = [pts(k * m) for k in ks]
        lines = image_lines([e[0] for e in ends], [e[1] for e in ends], pose, cam)
        for k, (rho, theta) in zip(ks, lines):
            if math.isnan(rho):
                continue
            if visible_length(float(rho), float(theta), pose, cam, opts) >= opts.min_segment_px:
                out.append(LineTruth(fam, k, float(rho), float(theta)))
    return out


def _family_fits(visible: Sequence[LineTruth]) -> list[tuple[float, float]]:
    """theta = a + b*rho fitted to each visible family (used to keep outliers distinguishable)."""
    fits = []
    for fam in ("long", "lat"):
        # lines whose normal flipped (rho near the origin) are off the family trend
        pts = np.array([(lt.rho, lt.theta) for lt in visible
                        if lt.family == fam and -math.pi / 4 <= lt.theta < 3 * math.pi / 4])
        if len(pts) >= 2 and np.ptp(pts[:, 0]) > 0:
            b, a = np.polyfit(pts[:, 0], pts[:, 1], 1)
            fits.append((float(a), float(b)))
    return fits


def _random_outlier(rng, cam, true_thetas, fits, opts):
    diag = cam.diagonal
    for _ in range(1000):
        theta = rng.uniform(-math.pi, math.pi)
        rho = rng.uniform(0.0, diag)
        if clip_to_image(rho, theta, cam) is None:
            continue
        if true_thetas.size:
            d = np.abs((true_thetas - theta + math.pi) % (2 * math.pi) - math.pi)
            if d.min() < opts.outlier_theta_margin:
                continue
        # an outlier on a family's rho-theta trend would be a plausible grid line
        if any(abs(theta - (a + b * rho)) < opts.outlier_theta_margin for a, b in fits):
            continue
        return rho, theta
    raise RuntimeError("could not place an outlier line")


def render_frame(pose: TruePose, cam: CameraModel, grid: GridSpec,
                 noise: NoiseSpec = NoiseSpec(), opts: RenderOptions = RenderOptions(),
                 rng: Optional[np.random.Generator] = None) -> RenderedFrame:
    """Noisy line observations with their ground truth, in shuffled order."""
    rng = rng if rng is not None else np.random.default_rng(noise.seed)
    visible = visible_grid_lines(pose, cam, grid, opts)
    lines, truth = [], []
    for lt in visible:
        lo, hi = noise.duplicates_per_line
        for _ in range(1 + int(rng.integers(lo, hi + 1))):
            rho = lt.rho + (rng.normal(0.0, noise.sigma_rho) if noise.sigma_rho else 0.0)
            th = lt.theta + (rng.normal(0.0, noise.sigma_theta) if noise.sigma_theta else 0.0)
            lines.append(DetectedLine.normalized(rho, th))
            truth.append(lt)
    if noise.outlier_fraction > 0:
        n_out = int(round(noise.outlier_fraction / (1 - noise.outlier_fraction) * len(lines)))
    else:
        n_out = int(rng.integers(noise.outlier_count[0], noise.outlier_count[1] + 1))
    thetas = np.array([lt.theta for lt in visible])
    fits = _family_fits(visible)
    for _ in range(n_out):
        rho, th = _random_outlier(rng, cam, thetas, fits, opts)
        lines.append(DetectedLine.normalized(rho, th))
        truth.append(LineTruth("outlier", -1, rho, th))
    order = rng.permutation(len(lines))
    return RenderedFrame(tuple(lines[i] for i in order), tuple(truth[i] for i in order))


@dataclass(frozen=True)
class TrajectoryConfig:
    arena: float = 10.0
    height: float = 2.0
    height_amplitude: float = 0.2
    height_period_s: float = 20.0
    max_tilt: float = math.radians(10.0)
    # roll/pitch spikes, one per ``spike_every_s`` seconds on average
    spike_every_s: float = 0.0
    spike_angle: float = math.radians(35.0)
    accel_smoothing_s: float = 0.5
    yaw: float = 0.0
    eps_s: float = 3.0
    margin: float = 0.5


def random_waypoints(n: int, arena: float, rng: np.random.Generator, margin: float = 0.5):
    return rng.uniform(margin, arena - margin, size=(n, 2))


def waypoints_for_length(length: float, arena: float, rng: np.random.Generator,
                         margin: float = 0.5) -> np.ndarray:
    """Random waypoints whose polyline is exactly ``length`` metres long."""
    pts = [rng.uniform(margin, arena - margin, size=2)]
    total = 0.0
    while True:
        nxt = rng.uniform(margin, arena - margin, size=2)
        seg = float(np.linalg.norm(nxt - pts[-1]))
        if seg < 1e-9:
            continue
        if total + seg >= length:
            pts.append(pts[-1] + (nxt - pts[-1]) * (length - total) / seg)
            return np.array(pts)
        pts.append(nxt)
        total += seg


def polyline_length(points) -> float:
    p = np.asarray(points, dtype=float)
    return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum())


def _sample_polyline(wp: np.ndarray, step: float) -> np.ndarray:
    seg = np.linalg.norm(np.diff(wp, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    n = int(math.floor(total / step + 1e-9))
    s = np.arange(n + 1) * step
    if total - s[-1] > 1e-9:
        s = np.append(s, total)
    return np.column_stack([np.interp(s, cum, wp[:, 0]), np.interp(s, cum, wp[:, 1])])


def _smooth(a: np.ndarray, sigma_samples: float) -> np.ndarray:
    if sigma_samples <= 0:
        return a
    r = int(math.ceil(3 * sigma_samples))
    k = np.exp(-0.5 * (np.arange(-r, r + 1) / sigma_samples) ** 2)
    k /= k.sum()
    padded = np.pad(a, ((r, r), (0, 0)), mode="edge")
    return np.column_stack([np.convolve(padded[:, j], k, mode="valid") for j in range(a.shape[1])])


def gen_trajectory(waypoints, v: float, fps: float, grid: GridSpec = GridSpec(),
                   cfg: TrajectoryConfig = TrajectoryConfig(), force: bool = False,
                   rng: Optional[np.random.Generator] = None) -> list[TruePose]:
    """Constant-speed poses along the waypoint polyline, sampled at ``fps``.

    Roll and pitch follow the smoothed horizontal acceleration (the tilt a
    multirotor needs to produce it), clipped to ``cfg.max_tilt``.
    """
    wp = np.asarray(waypoints, dtype=float)
    if wp.ndim != 2 or wp.shape[0] < 2 or wp.shape[1] != 2:
        raise ValueError("need at least two 2-D waypoints")
    if v <= 0 or fps <= 0:
        raise ValueError("speed and frame rate must be positive")
    vmax = max_speed(grid, fps, cfg.eps_s)
    if v > vmax * (1 + 1e-12) and not force:
        raise ValueError(f"speed {v:g} m/s exceeds the {vmax:g} m/s limit (use force)")
    xy = _sample_polyline(wp, v / fps)
    dt = 1.0 / fps
    vel = np.gradient(xy, dt, axis=0) if len(xy) > 1 else np.zeros_like(xy)
    acc = np.gradient(vel, dt, axis=0) if len(xy) > 1 else np.zeros_like(xy)
    acc = _smooth(acc, cfg.accel_smoothing_s * fps)
    # pitch tilts the thrust toward +X, roll toward +Y
    pitch = np.clip(np.arctan(acc[:, 0] / GRAVITY), -cfg.max_tilt, cfg.max_tilt)
    roll = np.clip(np.arctan(acc[:, 1] / GRAVITY), -cfg.max_tilt, cfg.max_tilt)
    if cfg.spike_every_s > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        p = 1.0 / (cfg.spike_every_s * fps)
        for arr in (roll, pitch):
            hits = np.nonzero(rng.random(len(arr)) < p)[0]
            for i in hits:
                width = max(1, int(0.2 * fps))
                bump = cfg.spike_angle * np.sign(rng.standard_normal()) * np.hanning(2 * width + 1)
                lo, hi = max(0, i - width), min(len(arr), i + width + 1)
                arr[lo:hi] += bump[lo - (i - width):hi - (i - width)]
    t = np.arange(len(xy)) * dt
    h = cfg.height + cfg.height_amplitude * np.sin(2 * math.pi * t / cfg.height_period_s)
    return [TruePose(float(x), float(y), float(hh), float(a), float(b), cfg.yaw)
            for (x, y), hh, a, b in zip(xy, h, roll, pitch)]


@dataclass(frozen=True)
class Calibration:
    eps_alpha: float
    eps_beta: float
    eps_c_alpha: float
    eps_c_beta: float
    residual_sd_alpha: float
    residual_sd_beta: float

    def apply(self, cam: CameraModel) -> CameraModel:
        from dataclasses import replace
        return replace(cam, eps_alpha=self.eps_alpha, eps_beta=self.eps_beta,
                       eps_c_alpha=self.eps_c_alpha, eps_c_beta=self.eps_c_beta)


def calibrate_constants(cam: CameraModel, grid: GridSpec, sweep: Sequence[tuple[float, float]],
                        position: tuple[float, float, float] = (0.37, 0.61, 2.0),
                        opts: RenderOptions = RenderOptions()) -> Calibration:
    """Fit angle = gain * atan(m) + offset per axis from noiseless renders.

    ``cam`` is the real camera (its mounting tilt shapes the renders); its
    gain/offset fields are ignored.
    """
    from .orientation import estimate_orientation

    sweep = [(float(a), float(b)) for a, b in sweep]
    for k, name in ((0, "alpha"), (1, "beta")):
        if len({round(p[k], 12) for p in sweep}) < 5:
            raise ValueError(f"sweep needs at least 5 distinct {name} values")
    probe = CameraModel(f=cam.f, width=cam.width, height=cam.height, cx=cam.cx, cy=cam.cy)
    at_lat, at_long, truth_a, truth_b = [], [], [], []
    for a, b in sweep:
        pose = TruePose(position[0], position[1], position[2], a, b)
        vis = visible_grid_lines(pose, cam, grid, opts)
        lat = [(lt.rho, lt.theta) for lt in vis if lt.family == "lat"]
        lng = [(lt.rho, lt.theta) for lt in vis if lt.family == "long"]
        est = estimate_orientation(lat, lng, probe)
        if est.low_confidence_lat or est.low_confidence_long:
            continue
        at_lat.append(math.atan(est.m_lat))
        at_long.append(math.atan(est.m_long))
        truth_a.append(a)
        truth_b.append(b)
    if len(truth_a) < 5:
        raise ValueError("too few usable sweep poses")
    fits = []
    for xs, ys in ((at_lat, truth_a), (at_long, truth_b)):
        A = np.column_stack([xs, np.ones(len(xs))])
        coef, *_ = np.linalg.lstsq(A, np.asarray(ys), rcond=None)
        res = np.asarray(ys) - A @ coef
        fits.append((float(coef[0]), float(coef[1]), float(np.std(res, ddof=2)) if len(ys) > 2 else 0.0))
    (ga, oa, sa), (gb, ob, sb) = fits
    return Calibration(ga, gb, oa, ob, sa, sb)


@dataclass(frozen=True)
class Scenario:
    """Everything needed to synthesize one run."""

    name: str = "default"
    path_length: float = 60.0
    fps: float = 30.0
    speed: Optional[float] = None  # None -> max_speed at traj.eps_s
    n_frames: Optional[int] = None  # truncates the trajectory
    camera: CameraModel = CameraModel()
    grid: GridSpec = GridSpec()
    noise: NoiseSpec = NoiseSpec(duplicates_per_line=(2, 4))
    traj: TrajectoryConfig = TrajectoryConfig()
    render: RenderOptions = RenderOptions()
    pipeline: PipelineConfig = PipelineConfig()
    force: bool = False
    seed: int = 42

    def speed_mps(self) -> float:
        return self.speed if self.speed is not None else max_speed(self.grid, self.fps, self.traj.eps_s)


@dataclass
class SimulatedRun:
    poses: list[TruePose]
    frames: list[RenderedFrame] = field(default_factory=list)


def simulate(sc: Scenario) -> SimulatedRun:
    """Trajectory plus rendered frames; all randomness derives from ``sc.seed``."""
    ss = np.random.SeedSequence(sc.seed)
    traj_seed, spike_seed, frame_seed = ss.spawn(3)
    wp = waypoints_for_length(sc.path_length, sc.traj.arena, np.random.default_rng(traj_seed),
                              sc.traj.margin)
    poses = gen_trajectory(wp, sc.speed_mps(), sc.fps, sc.grid, sc.traj, force=sc.force,
                           rng=np.random.default_rng(spike_seed))
    if sc.n_frames is not None:
        poses = poses[:sc.n_frames]
    frames = []
    for k, pose in enumerate(poses):
        rng = np.random.default_rng(np.random.SeedSequence([int(frame_seed.generate_state(1)[0]), k]))
        frames.append(render_frame(pose, sc.camera, sc.grid, sc.noise, sc.render, rng))
    return SimulatedRun(poses, frames)


def relative_truth(poses: Sequence[TruePose], grid: GridSpec) -> np.ndarray:
    """(x, y, h, roll, pitch) with x, y measured from the first pose's cell origin."""
    x0 = math.floor(poses[0].x / grid.m_x) * grid.m_x
    y0 = math.floor(poses[0].y / grid.m_y) * grid.m_y
    return np.array([[p.x - x0, p.y - y0, p.h, p.alpha, p.beta] for p in poses])
