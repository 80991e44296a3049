"""Command-line entry point: simulate, detect, localize, eval."""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import PRESETS, AppConfig, ConfigError, load_config
from .detect import detect_lines, read_pgm
from .metrics import aligned_csv, compute_report
from .pipeline import FrameInput, PipelineState, process_frame
from .simulator import relative_truth, simulate
from .types import DetectedLine

TRAJECTORY_HEADER = ["frame", "x", "y", "z", "roll_deg", "pitch_deg", "status"]
TRUTH_HEADER = ["frame", "x", "y", "z", "roll_deg", "pitch_deg"]


class CliError(Exception):
    pass


def _fmt(v: float) -> str:
    return "%.6f" % v


# --- line streams -------------------------------------------------------------

def write_line_stream(path: Path, frames: Sequence[tuple[int, Sequence[DetectedLine]]]) -> None:
    with open(path, "w") as fh:
        for k, lines in frames:
            rec = {"frame": int(k), "lines": [[ln.rho, ln.theta] for ln in lines]}
            fh.write(json.dumps(rec) + "\n")


def read_line_stream(path: Path) -> list[FrameInput]:
    """Parse a JSONL line stream; any malformed record aborts with its line number."""
    out: list[FrameInput] = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror}") from None
    for no, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        where = f"{path}:{no}"
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise CliError(f"{where}: invalid JSON ({exc.msg})") from None
        if not isinstance(rec, dict) or set(rec) != {"frame", "lines"}:
            raise CliError(f"{where}: expected an object with keys 'frame' and 'lines'")
        frame, pairs = rec["frame"], rec["lines"]
        if isinstance(frame, bool) or not isinstance(frame, int) or frame < 0:
            raise CliError(f"{where}: 'frame' must be a non-negative integer")
        if out and frame <= out[-1].frame_index:
            raise CliError(f"{where}: frame {frame} does not follow frame {out[-1].frame_index}")
        if not isinstance(pairs, list):
            raise CliError(f"{where}: 'lines' must be a list of [rho, theta] pairs")
        lines = []
        for pair in pairs:
            if (not isinstance(pair, list) or len(pair) != 2
                    or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                               for v in pair)):
                raise CliError(f"{where}: each line must be a [rho, theta] pair of numbers")
            rho, theta = float(pair[0]), float(pair[1])
            if not (math.isfinite(rho) and math.isfinite(theta)):
                raise CliError(f"{where}: non-finite line parameters")
            if rho < 0 or not (-math.pi <= theta < math.pi):
                raise CliError(f"{where}: line ({rho}, {theta}) needs rho >= 0 and "
                               f"-pi <= theta < pi")
            lines.append(DetectedLine(rho, theta))
        out.append(FrameInput(frame, tuple(lines)))
    return out


# --- CSV helpers --------------------------------------------------------------

def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_pose_csv(path: Path, header: list[str]) -> tuple[list[int], np.ndarray]:
    """Frames and (x, y, z, pitch_deg, roll_deg) rows of a truth or trajectory CSV."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror}") from None
    if not rows or rows[0] != header:
        raise CliError(f"{path}: header must be {','.join(header)}")
    frames, data = [], []
    for no, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise CliError(f"{path}:{no}: expected {len(header)} columns, got {len(row)}")
        try:
            frames.append(int(row[0]))
            x, y, z, roll, pitch = (float(v) for v in row[1:6])
        except ValueError:
            raise CliError(f"{path}:{no}: malformed number") from None
        data.append([x, y, z, pitch, roll])
    return frames, np.array(data, dtype=float).reshape(-1, 5)


# --- commands -----------------------------------------------------------------

def _config(args) -> AppConfig:
    cfg = load_config(args.config, args.preset)
    if args.seed is not None:
        from dataclasses import replace
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _outdir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _outdir(args.output)
    try:
        run = simulate(cfg.scenario(force=args.force))
    except ValueError as exc:
        raise CliError(str(exc)) from None
    write_line_stream(out / "lines.jsonl", [(k, f.lines) for k, f in enumerate(run.frames)])
    truth = relative_truth(run.poses, cfg.grid) if run.poses else np.zeros((0, 5))
    rows = [[k, _fmt(x), _fmt(y), _fmt(h), _fmt(math.degrees(a)), _fmt(math.degrees(b))]
            for k, (x, y, h, a, b) in enumerate(truth)]
    _write_csv(out / "truth.csv", TRUTH_HEADER, rows)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"simulated {len(run.frames)} frames -> {out}")
    return 0


def cmd_detect(args) -> int:
    cfg = _config(args)
    frames = []
    for k, name in enumerate(args.images):
        try:
            img = read_pgm(name)
        except OSError as exc:
            raise CliError(f"{name}: {exc.strerror}") from None
        except ValueError as exc:
            raise CliError(str(exc)) from None
        frames.append((k, detect_lines(img, cfg.detector)))
    out = Path(args.output)
    if out.parent and not out.parent.exists():
        _outdir(str(out.parent))
    write_line_stream(out, frames)
    print(f"detected lines in {len(frames)} images -> {out}")
    return 0


def cmd_localize(args) -> int:
    cfg = _config(args)
    frames = read_line_stream(Path(args.input))
    out = _outdir(args.output)
    state = PipelineState()
    rows, diags, timings = [], [], []
    for inp in frames:
        t: dict = {}
        t0 = time.perf_counter()
        state, res = process_frame(state, inp, cfg.camera, cfg.grid, cfg.pipeline, cfg.seed, t)
        t["total_s"] = time.perf_counter() - t0
        timings.append(dict(frame=inp.frame_index, **t))
        p = res.pose
        rows.append([inp.frame_index, _fmt(p.x), _fmt(p.y), _fmt(p.h),
                     _fmt(math.degrees(p.alpha)), _fmt(math.degrees(p.beta)), res.status])
        diags.append({**res.diagnostics, "frame": inp.frame_index, "status": res.status,
                      "lost": state.lost, "final_cost_x": p.final_cost_x,
                      "final_cost_y": p.final_cost_y})
    _write_csv(out / "trajectory.csv", TRAJECTORY_HEADER, rows)
    counts = {s: sum(1 for d in diags if d["status"] == s)
              for s in ("accepted", "partial", "dropped")}
    summary = {"n_frames": len(frames), "status_counts": counts, "frames": diags}
    (out / "diagnostics.json").write_text(
        json.dumps(_jsonable(summary), indent=1, sort_keys=True) + "\n")
    totals = np.array([t["total_s"] for t in timings]) if timings else np.zeros(0)
    tsum = {"per_frame": timings}
    if totals.size:
        tsum.update(p50_ms=float(np.percentile(totals, 50) * 1e3),
                    p99_ms=float(np.percentile(totals, 99) * 1e3),
                    max_ms=float(totals.max() * 1e3))
    (out / "timings.json").write_text(json.dumps(tsum, indent=1) + "\n")
    print(f"localized {len(frames)} frames ({counts['accepted']} accepted, "
          f"{counts['partial']} partial, {counts['dropped']} dropped) -> {out}")
    return 0


def _jsonable(obj):
    """Replace non-finite floats (not valid JSON) with null."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def cmd_eval(args) -> int:
    f_est, est = read_pose_csv(Path(args.trajectory), TRAJECTORY_HEADER)
    f_tru, tru = read_pose_csv(Path(args.truth), TRUTH_HEADER)
    if len(f_est) != len(f_tru):
        raise CliError(f"trajectory has {len(f_est)} frames but truth has {len(f_tru)} frames")
    if f_est != f_tru:
        bad = next(k for k, (a, b) in enumerate(zip(f_est, f_tru)) if a != b)
        raise CliError(f"frame mismatch at row {bad + 1}: trajectory frame {f_est[bad]}, "
                       f"truth frame {f_tru[bad]}")
    try:
        report = compute_report(est, tru, angle_unit="deg")
    except ValueError as exc:
        raise CliError(str(exc)) from None
    text = report.to_json()
    if args.output:
        out = Path(args.output)
        _outdir(str(out.parent))
        out.write_text(text)
        if args.aligned:
            Path(args.aligned).write_text(aligned_csv(f_est, est, tru, angle_unit="deg"))
    else:
        sys.stdout.write(text)
    return 0


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridloc", description="Grid-floor monocular localization.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, output_help):
        sp.add_argument("--config", help="JSON config file (overlaid on the preset)")
        sp.add_argument("--preset", choices=sorted(PRESETS), default=None,
                        help="named base configuration (default: default)")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sp.add_argument("--output", required=True, help=output_help)

    sp = sub.add_parser("simulate", help="synthesize a line stream and ground truth")
    common(sp, "output directory")
    sp.add_argument("--force", action="store_true", help="allow speeds above the limit")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("detect", help="detect lines in PGM images")
    common(sp, "output JSONL file")
    sp.add_argument("images", nargs="+", help="binary PGM (P5) images, one per frame")
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("localize", help="run the localization pipeline on a line stream")
    common(sp, "output directory")
    sp.add_argument("--input", required=True, help="line stream (JSONL)")
    sp.set_defaults(func=cmd_localize)

    sp = sub.add_parser("eval", help="error statistics of a trajectory against truth")
    sp.add_argument("--trajectory", required=True)
    sp.add_argument("--truth", required=True)
    sp.add_argument("--output", help="report JSON path (default: stdout)")
    sp.add_argument("--aligned", help="also write a per-frame truth/estimate CSV here")
    sp.set_defaults(func=cmd_eval)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError) as exc:
        print(f"gridloc: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
