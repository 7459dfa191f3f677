"""Command-line entry point.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ConfigError, TrackerConfig
from .evaluation import compare_table, evaluate
from .matcher import SportsTracker, TrackRow, run_sequence
from .mot_io import (
    FormatError,
    read_config,
    read_detections,
    read_gt,
    read_mot_det,
    read_mot_tracks,
    write_detections,
    write_gt,
    write_mot_tracks,
)
from .synth import PRESETS, generate, preset
from .tracks import FrameContext

log = logging.getLogger("sportstrack")


class UsageError(Exception):
    pass


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def build_config(config_path: str | None, overrides: list[str]) -> TrackerConfig:
    data = {}
    if config_path:
        data = read_config(config_path).to_dict()
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        data[key.strip()] = _parse_value(raw.strip())
    return TrackerConfig.from_dict(data)


def _load_bundle(path: Path, width: float | None, height: float | None):
    if path.suffix == ".jsonl":
        return read_detections(path)
    if width is None or height is None:
        raise UsageError(f"{path}: --width and --height are required for MOT det.txt input")
    return read_mot_det(path, width, height)


def _track_one(path: Path, out: Path, cfg: TrackerConfig, streaming: bool,
               width: float | None, height: float | None) -> tuple[str, int, dict]:
    bundle = _load_bundle(path, width, height)
    if bundle.n_frames == 0:
        raise FormatError(f"{path}: no frames to track")
    tracker = SportsTracker(bundle.width, bundle.height, cfg)
    rows = run_sequence(bundle.frames, FrameContext(1, bundle.width, bundle.height), cfg,
                        streaming=streaming, tracker=tracker)
    write_mot_tracks(out, rows)
    return bundle.name, len({r.id for r in rows}), tracker.stats


def cmd_track(args) -> int:
    cfg = build_config(args.config, args.set or [])
    dets = Path(args.dets)
    if dets.is_dir():
        inputs = sorted(p for p in dets.iterdir() if p.suffix in (".jsonl", ".txt"))
        out_dir = Path(args.out) if args.out else dets / "tracks"
        out_dir.mkdir(parents=True, exist_ok=True)
        jobs = [(p, out_dir / f"{p.stem}.txt") for p in inputs]
    else:
        if not dets.exists():
            raise FileNotFoundError(f"{dets}: no such file")
        jobs = [(dets, Path(args.out) if args.out else dets.with_suffix(".tracks.txt"))]

    if len(jobs) > 1 and args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = [pool.submit(_track_one, p, o, cfg, args.streaming, args.width, args.height)
                       for p, o in jobs]
            results = [f.result() for f in futures]
    else:
        results = [_track_one(p, o, cfg, args.streaming, args.width, args.height) for p, o in jobs]

    for (name, n_ids, stats), (_, out) in zip(results, jobs):
        print(f"{name}: {n_ids} ids, spawned {stats['spawned']}, removed {stats['removed']}, "
              f"restored {stats['restored']} -> {out}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    gt = read_gt(args.gt)
    pred = read_mot_tracks(args.pred)
    rep = evaluate(pred, gt)
    print(compare_table({Path(args.pred).stem: rep}), end="")
    pct = rep.as_percent()
    print(f"MOTA {pct['MOTA']:.3f}  IDF1 {pct['IDF1']:.3f}  IDSW {rep.id_switches}")
    if args.json:
        Path(args.json).write_text(json.dumps(pct, indent=2) + "\n")
    return 0


def cmd_synth(args) -> int:
    spec = preset(args.preset)
    if args.seed is not None:
        spec.seed = args.seed
    gt, bundle = generate(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_detections(out / "dets.jsonl", bundle)
    write_gt(out / "gt.txt", gt)
    (out / "spec.json").write_text(json.dumps(spec.to_dict(), indent=2) + "\n")
    print(f"wrote {bundle.n_frames} frames, {len(bundle.detections())} detections to {out}",
          file=sys.stderr)
    return 0


def _color(track_id: int) -> str:
    digest = hashlib.md5(str(track_id).encode()).digest()
    return "#" + digest[:3].hex()


def render_svg(rows: list[TrackRow], width: float, height: float) -> str:
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" height="{height:g}" '
             f'viewBox="0 0 {width:g} {height:g}" style="background:#ffffff">']
    for r in rows:
        b = r.box
        c = _color(r.id)
        parts.append(f'<g><rect x="{b.x:.2f}" y="{b.y:.2f}" width="{b.w:.2f}" height="{b.h:.2f}" '
                     f'fill="none" stroke="{c}" stroke-width="2"/>'
                     f'<text x="{b.x:.2f}" y="{b.y - 3:.2f}" fill="{c}" font-size="14">{r.id}</text></g>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _frame_range(spec: str | None) -> tuple[int, int] | None:
    if spec is None:
        return None
    lo, sep, hi = spec.partition("..")
    try:
        if not sep:
            raise ValueError
        return int(lo), int(hi)
    except ValueError:
        raise UsageError(f"--frames expects a..b, got {spec!r}") from None


def cmd_overlay(args) -> int:
    rows = read_mot_tracks(args.tracks)
    rng = _frame_range(args.frames)
    if rng:
        rows = [r for r in rows if rng[0] <= r.frame <= rng[1]]
    if not rows:
        print("warning: no track rows in the selected frames, nothing written", file=sys.stderr)
        return 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    by_frame: dict[int, list[TrackRow]] = {}
    for r in rows:
        by_frame.setdefault(r.frame, []).append(r)
    for frame, frs in sorted(by_frame.items()):
        (out / f"frame_{frame:06d}.svg").write_text(render_svg(frs, args.width, args.height))
    print(f"wrote {len(by_frame)} SVG files to {out}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sportstrack", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="track a detection file (or a directory of them)")
    p.add_argument("--dets", required=True, help=".jsonl with embeddings or MOT det.txt")
    p.add_argument("--config", help="JSON file of tracker settings")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one setting; wins over --config")
    p.add_argument("--out", help="output track file (directory when --dets is a directory)")
    p.add_argument("--streaming", action="store_true",
                   help="emit per frame without rewriting history")
    p.add_argument("--width", type=float, help="image width for det.txt input")
    p.add_argument("--height", type=float, help="image height for det.txt input")
    p.add_argument("--workers", type=int, default=1, help="parallel sequences in directory mode")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score a track file against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic scenario")
    p.add_argument("--preset", required=True, choices=sorted(PRESETS))
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("overlay", help="draw track boxes as one SVG per frame")
    p.add_argument("--tracks", required=True)
    p.add_argument("--width", type=float, required=True)
    p.add_argument("--height", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frames", help="inclusive frame range a..b")
    p.set_defaults(func=cmd_overlay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
