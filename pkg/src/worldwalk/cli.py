"""Offline scripted runs: scene in, action script in, frames + poses +
cache log + metrics out.

Exit codes: 0 success, 2 parse error, 3 step failure, 4 IO failure.
"""
from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path

import numpy as np

from .geometry import Action, ActionParams, CameraIntrinsics
from .scenes import SceneDescription, analytic_render
from .fileio import load_depth, read_frame, write_frame
from .session import SessionConfig, init_session, make_generator
from . import session as session_mod
from .wire import GeneratorError

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_STEP = 3
EXIT_IO = 4

_SEPARATOR_RE = re.compile(r"[\s,]+")
_TOKEN_RE = re.compile(r"[A-Za-z]+(?:\([^()]*\))?")
_ACTION_RE = re.compile(r"^(IDLE|[WASD]{1,4})(?:\((.*)\))?$", re.IGNORECASE)


class ScriptError(ValueError):
    """Bad action script, with line/column diagnostics."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


def _tokenize(line: str, line_no: int):
    """Yield (token, column) pairs; commas/whitespace separate tokens except
    inside a parameter list. Anything else is rejected."""
    pos = 0
    while pos < len(line):
        sep = _SEPARATOR_RE.match(line, pos)
        if sep:
            pos = sep.end()
            continue
        m = _TOKEN_RE.match(line, pos)
        if not m:
            raise ScriptError(f"unexpected character {line[pos]!r}", line_no, pos + 1)
        yield m.group(0), pos + 1
        pos = m.end()


def parse_script(text: str, defaults: ActionParams | None = None) -> list[Action]:
    """Parse an action script: tokens split on commas/whitespace, each
    KEYS[(eta=...,theta=...,frames=...)] or IDLE."""
    defaults = defaults or ActionParams()
    actions = []
    for line_no, line in enumerate(text.splitlines() or [""], start=1):
        for token, col in _tokenize(line, line_no):
            am = _ACTION_RE.match(token)
            if not am:
                raise ScriptError(f"unknown action token {token!r}", line_no, col)
            keys = am.group(1).upper()
            if keys == "IDLE":
                keys = ""
            elif len(set(keys)) != len(keys):
                raise ScriptError(f"repeated key in token {token!r}", line_no, col)
            overrides = {}
            if am.group(2) is not None:
                for part in filter(None, (p.strip() for p in am.group(2).split(","))):
                    if "=" not in part:
                        raise ScriptError(f"bad parameter {part!r} in {token!r}", line_no, col)
                    name, _, value = part.partition("=")
                    name = name.strip().lower()
                    try:
                        if name == "eta":
                            overrides["eta"] = float(value)
                        elif name == "theta":
                            overrides["theta_deg"] = float(value)
                        elif name == "frames":
                            overrides["frames"] = int(value)
                        else:
                            raise ScriptError(f"unknown parameter {name!r} in {token!r}",
                                              line_no, col)
                    except ValueError as exc:
                        if isinstance(exc, ScriptError):
                            raise
                        raise ScriptError(f"bad value for {name!r} in {token!r}",
                                          line_no, col) from exc
            try:
                params = ActionParams(
                    eta=overrides.get("eta", defaults.eta),
                    theta_deg=overrides.get("theta_deg", defaults.theta_deg),
                    frames=overrides.get("frames", defaults.frames),
                )
                actions.append(Action(frozenset(keys), params))
            except ValueError as exc:
                raise ScriptError(str(exc), line_no, col) from exc
    return actions


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="worldwalk",
        description="Interactive world-geometry engine: scripted runs and a live service.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an action script offline")
    run.add_argument("--image", help="scene image (8-bit RGB PNG)")
    run.add_argument("--depth", help="depth file for the scene image")
    run.add_argument("--depth-format", choices=["pfm", "png16"], default="pfm")
    run.add_argument("--depth-scale", type=float, default=1.0,
                     help="world units per depth-file unit")
    run.add_argument("--depth-mode", choices=["z", "ray"], default="ray",
                     help="how file depth values are interpreted")
    run.add_argument("--scene", help="analytic scene config (JSON)")
    run.add_argument("--script", help="action script file")
    run.add_argument("--actions", help="inline action script, e.g. 'W,W,A'")
    run.add_argument("--eta", type=float, default=0.05)
    run.add_argument("--theta", type=float, default=30.0)
    run.add_argument("--frames", type=int, default=33)
    run.add_argument("--generator", default="passthrough",
                     help="passthrough | holefill | external:<command or ws url>")
    run.add_argument("--generator-timeout", type=float, default=300.0)
    run.add_argument("--splat-radius", type=int, default=1)
    run.add_argument("--stride", type=int, default=1)
    run.add_argument("--depth-feedback", choices=["auto", "analytic", "rendered", "file"],
                     default="auto")
    run.add_argument("--width", type=int, default=832, help="image width for scene-only runs")
    run.add_argument("--height", type=int, default=480)
    run.add_argument("--fx", type=float, default=None,
                     help="focal length in px (default: width/2, a 90 degree fov)")
    run.add_argument("--fy", type=float, default=None)
    run.add_argument("--seed", type=int, default=0,
                     help="reserved for stochastic generators; recorded in the manifest")
    run.add_argument("--from-manifest", help="rerun a previous run's manifest.json")
    run.add_argument("--out", required=True, help="output directory")

    serve = sub.add_parser("serve", help="run the live WebSocket service")
    serve.add_argument("--bind", default=None, help="host:port (env WORLDWALK_BIND)")
    serve.add_argument("--scene", default=None, help="scene config JSON (env WORLDWALK_SCENE)")
    serve.add_argument("--static", default=None, help="directory of UI assets to serve")
    serve.add_argument("--generator", default="passthrough")
    serve.add_argument("--generator-timeout", type=float, default=300.0)
    serve.add_argument("--eta", type=float, default=0.05)
    serve.add_argument("--theta", type=float, default=30.0)
    serve.add_argument("--frames", type=int, default=33)
    serve.add_argument("--splat-radius", type=int, default=1)
    serve.add_argument("--stride", type=int, default=1)
    serve.add_argument("--width", type=int, default=832)
    serve.add_argument("--height", type=int, default=480)
    return parser


def _resolve_manifest(args) -> dict:
    """Flatten CLI flags into the run manifest (full resolved configuration)."""
    if args.from_manifest:
        with open(args.from_manifest) as f:
            return json.load(f)

    scene = SceneDescription.from_file(args.scene).to_dict() if args.scene else None
    if args.image:
        frame = read_frame(args.image)
        width, height = frame.width, frame.height
    else:
        width, height = args.width, args.height
    fx = args.fx if args.fx is not None else width / 2.0
    fy = args.fy if args.fy is not None else fx
    intrinsics = {"fx": fx, "fy": fy, "cx": (width - 1) / 2.0, "cy": (height - 1) / 2.0,
                  "width": width, "height": height}

    if args.script and args.actions:
        raise ScriptError("give either --script or --actions, not both", 0, 0)
    if args.script:
        text = Path(args.script).read_text()
    elif args.actions:
        text = args.actions
    else:
        raise ScriptError("no actions: give --script or --actions", 0, 0)
    defaults = ActionParams(eta=args.eta, theta_deg=args.theta, frames=args.frames)
    actions = parse_script(text, defaults)

    return {
        "intrinsics": intrinsics,
        "scene": scene,
        "image": str(Path(args.image).resolve()) if args.image else None,
        "depth": str(Path(args.depth).resolve()) if args.depth else None,
        "depth_format": args.depth_format,
        "depth_scale": args.depth_scale,
        "depth_mode": args.depth_mode,
        "depth_feedback": args.depth_feedback,
        "generator": args.generator,
        "generator_timeout": args.generator_timeout,
        "splat_radius": args.splat_radius,
        "stride": args.stride,
        "seed": args.seed,
        "actions": [
            {"keys": a.keys_string(), "eta": a.params.eta,
             "theta_deg": a.params.theta_deg, "frames": a.params.frames}
            for a in actions
        ],
    }


def run_offline(manifest: dict, out_dir: Path) -> int:
    """Execute a resolved manifest, writing the full output tree."""
    intr = CameraIntrinsics.from_dict(manifest["intrinsics"])
    scene = SceneDescription.from_dict(manifest["scene"]) if manifest["scene"] else None
    generator = make_generator(manifest["generator"], manifest["generator_timeout"])

    image = read_frame(manifest["image"]) if manifest["image"] else None
    depth = None
    if manifest["depth"]:
        depth = load_depth(manifest["depth"], manifest["depth_format"], manifest["depth_scale"])

    config = SessionConfig(
        intrinsics=intr, generator=generator, scene=scene,
        depth_feedback=manifest["depth_feedback"], depth_mode=manifest["depth_mode"],
        splat_radius=manifest["splat_radius"], stride=manifest["stride"],
    )
    state = init_session(image, depth, config)

    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2)

    trajectories = []
    cache_log = []
    metrics = []
    try:
        for i, spec in enumerate(manifest["actions"], start=1):
            action = Action(frozenset(spec["keys"]),
                            ActionParams(spec["eta"], spec["theta_deg"], spec["frames"]))
            try:
                result = session_mod.step(state, action)
            except (GeneratorError, ValueError) as exc:
                with open(out_dir / "partial.json", "w") as f:
                    json.dump({"failed_step": i, "error": str(exc)}, f, indent=2)
                print(f"step {i} failed: {exc}", file=sys.stderr)
                return EXIT_STEP

            step_dir = out_dir / f"step_{i:03d}"
            step_dir.mkdir(exist_ok=True)
            for k, frame in enumerate(result.frames, start=1):
                write_frame(frame, step_dir / f"frame_{k:03d}.png")
            trajectories.append([p.to_dict() for p in result.trajectory.poses])
            cache_log.append(result.cache_record())
            if scene is not None:
                metrics.append(_step_metrics(result, scene, intr))
            state = result.state

        with open(out_dir / "poses.json", "w") as f:
            json.dump({"trajectories": trajectories}, f, indent=2)
        with open(out_dir / "cache_log.json", "w") as f:
            json.dump({"steps": cache_log}, f, indent=2)
        if scene is not None:
            overall = {
                "valid_fraction": float(np.mean([m["valid_fraction"] for m in metrics])),
                "mean_abs_error": float(np.mean([m["mean_abs_error"] for m in metrics])),
            }
            with open(out_dir / "metrics.json", "w") as f:
                json.dump({"steps": metrics, "overall": overall}, f, indent=2)
    finally:
        if hasattr(generator, "close"):
            generator.close()
    return EXIT_OK


def _step_metrics(result, scene: SceneDescription, intr: CameraIntrinsics) -> dict:
    """Reprojection error of the step's rendered views against the scene
    ground truth, pooled over the step's frames; error is normalized to [0, 1]."""
    valid_count = 0
    total = 0
    err_sum = 0.0
    err_count = 0
    for k, out in enumerate(result.pc_video, start=1):
        gt, _ = analytic_render(scene, intr, result.trajectory[k])
        v = out.valid
        valid_count += int(v.sum())
        total += v.size
        diff = np.abs(out.color.pixels.astype(np.int64) - gt.pixels.astype(np.int64))[v]
        err_sum += float(diff.sum())
        err_count += diff.size
    return {
        "step": result.state.step,
        "valid_fraction": valid_count / total,
        "mean_abs_error": (err_sum / err_count / 255.0) if err_count else 0.0,
    }


def run_command(args) -> int:
    try:
        manifest = _resolve_manifest(args)
    except ScriptError as exc:
        print(f"script error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        return run_offline(manifest, Path(args.out))
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return run_command(args)
    from .server import serve_command

    return serve_command(args)


if __name__ == "__main__":
    sys.exit(main())
