"""Readers and writers for detection, track, ground-truth and config files.

Detections with embeddings use JSON Lines: a header record followed by one
record per detection::

    {"type": "header", "name": "seq", "width": 1280, "height": 720,
     "fps": 25, "emb_dim": 128, "n_frames": 500}
    {"frame": 1, "bbox": [x, y, w, h], "conf": 0.91, "emb": [...]}

``n_frames`` is optional. Without it the frames seen must run 1..max with no
gaps; with it, frames without detections are allowed.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import ConfigError, TrackerConfig
from .geometry import BBox
from .matcher import TrackRow
from .tracks import Detection

log = logging.getLogger(__name__)

EMB_NORM_TOL = 1e-3


class FormatError(ValueError):
    """Malformed input file; the message names the offending line."""


@dataclass
class SequenceBundle:
    name: str
    width: float
    height: float
    fps: float = 25.0
    emb_dim: int = 0
    frames: list[list[Detection]] = field(default_factory=list)

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def detections(self) -> list[Detection]:
        return [d for fr in self.frames for d in fr]


def _clamp_conf(conf: float, where: str) -> float:
    if conf > 1.0 or conf < 0.0:
        log.warning("%s: confidence %s clamped to [0, 1]", where, conf)
        return min(1.0, max(0.0, conf))
    return conf


def _frames_from(dets: dict[int, list[Detection]], n_frames: int | None, path) -> list[list[Detection]]:
    if n_frames is None:
        n_frames = max(dets) if dets else 0
        missing = [f for f in range(1, n_frames + 1) if f not in dets]
        if missing:
            raise FormatError(f"{path}: frames are not contiguous, missing frame {missing[0]}")
    else:
        beyond = [f for f in dets if f > n_frames]
        if beyond:
            raise FormatError(f"{path}: frame {min(beyond)} beyond n_frames={n_frames}")
    return [dets.get(f, []) for f in range(1, n_frames + 1)]


def read_detections(path) -> SequenceBundle:
    path = Path(path)
    with path.open() as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file, expected a header line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:1: malformed header: {exc}") from exc
    if not isinstance(header, dict) or header.get("type") != "header":
        raise FormatError(f'{path}:1: first line must be a {{"type": "header"}} record')
    try:
        width = float(header["width"])
        height = float(header["height"])
        emb_dim = int(header.get("emb_dim", 0))
        fps = float(header.get("fps", 25.0))
        n_frames = header.get("n_frames")
        n_frames = None if n_frames is None else int(n_frames)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}:1: bad header field: {exc}") from exc

    by_frame: dict[int, list[Detection]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            frame = int(rec["frame"])
            x, y, w, h = (float(v) for v in rec["bbox"])
            conf = _clamp_conf(float(rec["conf"]), f"{path}:{lineno}")
            emb = rec.get("emb")
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}:{lineno}: malformed detection: {exc}") from exc
        if frame < 1:
            raise FormatError(f"{path}:{lineno}: frame numbers start at 1, got {frame}")
        if emb_dim == 0:
            if emb is not None:
                raise FormatError(f"{path}:{lineno}: emb given but header emb_dim is 0")
        else:
            if emb is None or len(emb) != emb_dim:
                got = "none" if emb is None else len(emb)
                raise FormatError(f"{path}:{lineno}: emb length {got} != emb_dim {emb_dim}")
            emb = np.asarray(emb, dtype=float)
            norm = float(np.linalg.norm(emb))
            if abs(norm - 1.0) > EMB_NORM_TOL:
                raise FormatError(f"{path}:{lineno}: emb norm {norm:.4f} is not unit length")
            emb = emb / norm
        try:
            det = Detection(frame, BBox(x, y, w, h), conf, emb)
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
        by_frame.setdefault(frame, []).append(det)

    return SequenceBundle(
        name=str(header.get("name", path.stem)),
        width=width,
        height=height,
        fps=fps,
        emb_dim=emb_dim,
        frames=_frames_from(by_frame, n_frames, path),
    )


def write_detections(path, bundle: SequenceBundle) -> None:
    header = {"type": "header", "name": bundle.name, "width": bundle.width,
              "height": bundle.height, "fps": bundle.fps, "emb_dim": bundle.emb_dim,
              "n_frames": bundle.n_frames}
    with Path(path).open("w") as fh:
        fh.write(json.dumps(header) + "\n")
        for d in bundle.detections():
            rec = {"frame": d.frame, "bbox": [d.box.x, d.box.y, d.box.w, d.box.h], "conf": d.conf}
            if d.emb is not None:
                rec["emb"] = [float(v) for v in d.emb]
            fh.write(json.dumps(rec) + "\n")


def _csv_rows(path):
    with Path(path).open(newline="") as fh:
        for rowno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            yield rowno, [c.strip() for c in row]


def read_mot_det(path, width: float, height: float) -> SequenceBundle:
    """MOTChallenge ``det.txt`` rows ``frame,id,x,y,w,h,conf,...``; no embeddings."""
    by_frame: dict[int, list[Detection]] = {}
    for rowno, row in _csv_rows(path):
        try:
            frame = int(float(row[0]))
            x, y, w, h = (float(v) for v in row[2:6])
            conf = _clamp_conf(float(row[6]), f"{path}: row {rowno}")
            det = Detection(frame, BBox(x, y, w, h), conf)
        except (IndexError, ValueError) as exc:
            raise FormatError(f"{path}: row {rowno}: cannot parse {row!r}: {exc}") from exc
        by_frame.setdefault(frame, []).append(det)
    # det.txt simply omits frames without detections
    n_frames = max(by_frame) if by_frame else 0
    return SequenceBundle(name=Path(path).stem, width=width, height=height,
                          frames=_frames_from(by_frame, n_frames, path))


def format_track_row(r: TrackRow) -> str:
    b = r.box
    return f"{r.frame},{r.id},{b.x:.2f},{b.y:.2f},{b.w:.2f},{b.h:.2f},{r.conf!r},-1,-1,-1"


def write_mot_tracks(path, rows: Sequence[TrackRow]) -> None:
    keys = [(r.frame, r.id) for r in rows]
    if keys != sorted(keys):
        raise ValueError("track rows must be sorted by (frame, id)")
    if len(set(keys)) != len(keys):
        dup = next(k for i, k in enumerate(keys) if k in keys[:i])
        raise ValueError(f"duplicate (frame, id) {dup}")
    with Path(path).open("w") as fh:
        for r in rows:
            fh.write(format_track_row(r) + "\n")


def _read_table(path, kind: str, keep=lambda row: True) -> list[TrackRow]:
    rows = []
    seen = set()
    for rowno, row in _csv_rows(path):
        try:
            frame = int(float(row[0]))
            tid = int(float(row[1]))
            x, y, w, h = (float(v) for v in row[2:6])
            conf = float(row[6]) if len(row) > 6 else 1.0
            if not keep(row):
                continue
            r = TrackRow(frame, tid, BBox(x, y, w, h), conf)
        except (IndexError, ValueError) as exc:
            raise FormatError(f"{path}: row {rowno}: cannot parse {kind} row {row!r}: {exc}") from exc
        if (frame, tid) in seen:
            raise FormatError(f"{path}: row {rowno}: duplicate (frame, id) ({frame}, {tid})")
        seen.add((frame, tid))
        rows.append(r)
    rows.sort(key=lambda r: (r.frame, r.id))
    return rows


def read_mot_tracks(path) -> list[TrackRow]:
    return _read_table(path, "track")


def read_gt(path) -> list[TrackRow]:
    """MOTChallenge ``gt.txt``; rows whose flag column is 0 are ignored."""
    def active(row):
        return len(row) < 7 or int(float(row[6])) != 0

    rows = _read_table(path, "gt", keep=active)
    return [TrackRow(r.frame, r.id, r.box, 1.0) for r in rows]


def write_gt(path, rows: Iterable[TrackRow], visibility: dict[tuple[int, int], float] | None = None) -> None:
    visibility = visibility or {}
    with Path(path).open("w") as fh:
        for r in sorted(rows, key=lambda r: (r.frame, r.id)):
            b = r.box
            vis = visibility.get((r.frame, r.id), 1.0)
            fh.write(f"{r.frame},{r.id},{b.x:.2f},{b.y:.2f},{b.w:.2f},{b.h:.2f},1,1,{vis:g}\n")


def read_config(path) -> TrackerConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return TrackerConfig.from_dict(data)
