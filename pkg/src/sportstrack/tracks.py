"""Track identity, lifecycle and appearance bookkeeping."""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .config import TrackerConfig
from .geometry import UNIT_NORM_TOL, BBox
from .kalman import KalmanState, kf_box, kf_initiate, kf_predict, kf_update


@dataclass(frozen=True)
class Detection:
    frame: int
    box: BBox
    conf: float
    emb: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.conf <= 1.0:
            raise ValueError(f"confidence {self.conf} outside [0, 1]")
        if self.emb is not None:
            emb = np.asarray(self.emb, dtype=float)
            if emb.ndim != 1 or abs(np.linalg.norm(emb) - 1.0) > UNIT_NORM_TOL:
                raise ValueError("detection embedding must be a unit-norm vector")
            emb.setflags(write=False)
            object.__setattr__(self, "emb", emb)


@dataclass(frozen=True)
class FrameContext:
    frame: int
    width: float
    height: float

    @property
    def center(self) -> tuple[float, float]:
        return (self.width / 2.0, self.height / 2.0)

    def angle_of(self, x: float, y: float) -> float:
        """Polar angle of a point about the image center, in (-pi, pi]."""
        return math.atan2(y - self.height / 2.0, x - self.width / 2.0)

    def in_center_area(self, x: float, y: float, band: float) -> bool:
        return band < x < self.width - band and band < y < self.height - band


class TrackState(enum.Enum):
    NEW = "new"
    TRACKED = "tracked"
    LOST = "lost"
    REMOVED = "removed"


LEGAL_TRANSITIONS = {
    TrackState.NEW: {TrackState.TRACKED, TrackState.REMOVED},
    TrackState.TRACKED: {TrackState.TRACKED, TrackState.LOST, TrackState.REMOVED},
    TrackState.LOST: {TrackState.TRACKED, TrackState.REMOVED},
    TrackState.REMOVED: set(),
}


class IllegalTransition(RuntimeError):
    pass


def _normalize(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


@dataclass
class Track:
    id: int
    state: TrackState
    kf: KalmanState
    start_frame: int
    last_update_frame: int
    length: int = 1
    smooth_feat: Optional[np.ndarray] = None
    feat_history: deque = field(default_factory=lambda: deque(maxlen=60))
    lost_since: Optional[int] = None
    lost_at_edge: bool = False
    lost_angle: Optional[float] = None
    last_confidence: float = 0.0
    first_center: tuple[float, float] = (0.0, 0.0)

    @property
    def box(self) -> BBox:
        return kf_box(self.kf)

    @property
    def is_edge_lost(self) -> bool:
        return self.state is TrackState.LOST and self.lost_at_edge

    def set_state(self, new: TrackState) -> None:
        if new not in LEGAL_TRANSITIONS[self.state]:
            raise IllegalTransition(f"track {self.id}: {self.state.name} -> {new.name}")
        if new is TrackState.LOST and self.lost_since is None:
            raise IllegalTransition(f"track {self.id}: use mark_lost to record where it was lost")
        self.state = new

    def predict(self, cfg: TrackerConfig) -> None:
        mean = self.kf.mean
        if self.state is not TrackState.TRACKED:
            # coasting tracks keep their size
            mean = mean.copy()
            mean[6:8] = 0.0
            self.kf = KalmanState(mean, self.kf.covariance.copy())
        kf = kf_predict(self.kf, cfg.kf_std_position, cfg.kf_std_velocity)
        if kf.mean[2] < 1.0 or kf.mean[3] < 1.0:
            mean = kf.mean.copy()
            mean[2:4] = np.maximum(mean[2:4], 1.0)
            mean[6:8] = 0.0
            kf = KalmanState(mean, kf.covariance.copy())
        self.kf = kf

    def add_feature(self, emb: np.ndarray, momentum: float) -> None:
        emb = np.asarray(emb, dtype=float)
        if self.smooth_feat is None:
            self.smooth_feat = _normalize(emb.copy())
        else:
            self.smooth_feat = _normalize(momentum * self.smooth_feat + (1.0 - momentum) * emb)
        self.feat_history.append(emb)


def track_new(det: Detection, frame: int, track_id: int, cfg: TrackerConfig | None = None,
              taken_ids: Iterable[int] = (), confirmed: bool = False) -> Track:
    """Start a track from an unmatched detection.

    ``confirmed`` spawns straight into TRACKED (used on the first frame of a
    sequence); otherwise the track is NEW until it is matched again.
    """
    cfg = cfg or TrackerConfig()
    if track_id < 1:
        raise ValueError(f"track ids are positive, got {track_id}")
    if track_id in set(taken_ids):
        raise ValueError(f"duplicate track id {track_id}")
    t = Track(
        id=track_id,
        state=TrackState.TRACKED if confirmed else TrackState.NEW,
        kf=kf_initiate(det.box, cfg.kf_std_position, cfg.kf_std_velocity),
        start_frame=frame,
        last_update_frame=frame,
        length=1,
        feat_history=deque(maxlen=cfg.feat_history),
        last_confidence=det.conf,
        first_center=det.box.center,
    )
    if det.emb is not None:
        t.add_feature(det.emb, cfg.ema_momentum)
    return t


def track_update(t: Track, det: Detection, frame: int, cfg: TrackerConfig | None = None,
                 use_embedding: bool = True) -> Track:
    """Fold a matched detection into the track.

    ``use_embedding=False`` is for shared crowded detections: the box drives
    the filter but the appearance model is left alone.
    """
    cfg = cfg or TrackerConfig()
    if t.state is TrackState.REMOVED:
        raise IllegalTransition(f"track {t.id} is removed")
    if frame <= t.last_update_frame:
        raise ValueError(f"track {t.id}: update at frame {frame} not after {t.last_update_frame}")
    t.kf = kf_update(t.kf, det.box, cfg.kf_std_position)
    t.length += 1
    t.last_update_frame = frame
    t.last_confidence = det.conf
    t.set_state(TrackState.TRACKED)
    t.lost_since = None
    t.lost_at_edge = False
    t.lost_angle = None
    if use_embedding and det.emb is not None:
        t.add_feature(det.emb, cfg.ema_momentum)
    return t


def mark_lost(t: Track, frame: int, ctx: FrameContext, cfg: TrackerConfig | None = None) -> Track:
    cfg = cfg or TrackerConfig()
    if t.state is not TrackState.TRACKED:
        raise IllegalTransition(f"track {t.id}: only tracked tracks can be lost, is {t.state.name}")
    if TrackState.LOST not in LEGAL_TRANSITIONS[t.state]:
        raise IllegalTransition(f"track {t.id}: {t.state.name} -> LOST")
    t.lost_since = frame
    t.set_state(TrackState.LOST)
    x, y = float(t.kf.mean[0]), float(t.kf.mean[1])
    t.lost_at_edge = not ctx.in_center_area(x, y, cfg.edge_band_px)
    t.lost_angle = ctx.angle_of(x, y) if t.lost_at_edge else None
    return t


def prune(tracks: list[Track], frame: int, cfg: TrackerConfig | None = None) -> list[Track]:
    """Remove tracks lost for more than ``max_lost_frames``; returns the removed ones."""
    cfg = cfg or TrackerConfig()
    removed = []
    for t in tracks:
        if t.state is TrackState.LOST and frame - t.lost_since > cfg.max_lost_frames:
            t.set_state(TrackState.REMOVED)
            removed.append(t)
    return removed
