"""Per-frame association pipeline.

Each frame runs four gated Hungarian rounds over hybrid IOU/appearance
costs, then fills unmatched crowded tracks from shared detections, marks the
rest lost (classifying edge vs center losses), prunes, spawns new tracks and
finally tries to re-attach young tracks to tracks lost at the image border.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .assignment import gated_match
from .config import TrackerConfig
from .geometry import BBox, hybrid_distance, iou_distance_matrix, iou_matrix, nms_indices
from .tracks import (
    Detection,
    FrameContext,
    Track,
    TrackState,
    mark_lost,
    prune,
    track_new,
    track_update,
)

log = logging.getLogger(__name__)

CROWDED = "crowded"

# detection fates
MATCHED = "matched"
CROWD_USED = "crowded-candidate-used"
SPAWNED = "spawned"
DISCARDED = "discarded"

# track fates
T_MATCHED = "matched"
T_CROWDED = "crowded-updated"
T_LOST = "lost"
T_REMOVED = "removed"
T_STILL_LOST = "unchanged-lost"

Stage = Union[int, str]


@dataclass
class FrameResult:
    """What happened to tracks and detections in one frame.

    ``assignments`` covers both Hungarian matches and crowded fill-ins, so a
    crowded candidate detection can appear more than once. ``match_stage``
    tags every assigned track with its round (1-4) or ``"crowded"``.
    """

    frame: int
    assignments: list[tuple[int, Detection]] = field(default_factory=list)
    spawned: list[int] = field(default_factory=list)
    removed: list[int] = field(default_factory=list)
    restored_merges: list[tuple[int, int]] = field(default_factory=list)
    spawn_assignments: list[tuple[int, Detection]] = field(default_factory=list)
    match_stage: dict[int, Stage] = field(default_factory=dict)
    match_cost: dict[int, float] = field(default_factory=dict)
    det_fates: list[str] = field(default_factory=list)
    det_stage: list[Stage | None] = field(default_factory=list)
    track_fates: dict[int, str] = field(default_factory=dict)
    # detection indices presented to each matching round
    stage_inputs: dict[int, list[int]] = field(default_factory=dict)

    @property
    def crowded_ids(self) -> list[int]:
        return [tid for tid, s in self.match_stage.items() if s == CROWDED]


def _reid_matrix(tracks: Sequence[Track], dets: Sequence[Detection]) -> np.ndarray:
    """Cosine distance; pairs lacking an embedding on either side get 1.0."""
    e = np.ones((len(tracks), len(dets)))
    ti = [i for i, t in enumerate(tracks) if t.smooth_feat is not None]
    di = [j for j, d in enumerate(dets) if d.emb is not None]
    if ti and di:
        tf = np.stack([tracks[i].smooth_feat for i in ti])
        df = np.stack([dets[j].emb for j in di])
        e[np.ix_(ti, di)] = np.clip(1.0 - tf @ df.T, 0.0, 2.0)
    return e


def crowded_candidate_indices(tracks: Sequence[Track], dets: Sequence[Detection],
                              cfg: TrackerConfig) -> dict[int, int]:
    """Track id -> index of the detection it may share while crowded."""
    if len(tracks) < 2 or not dets:
        return {}
    boxes = [t.box for t in tracks]
    pair = iou_matrix(boxes, boxes)
    np.fill_diagonal(pair, 0.0)
    crowded = np.flatnonzero((pair > cfg.crowd_iou).any(axis=1))
    if crowded.size == 0:
        return {}
    to_det = iou_matrix([boxes[i] for i in crowded], [d.box for d in dets])
    out = {}
    for row, i in enumerate(crowded):
        j = int(np.argmax(to_det[row]))  # first index wins ties
        if to_det[row, j] > cfg.crowd_candidate_iou:
            out[tracks[i].id] = j
    return out


def crowded_candidates(tracks: Sequence[Track], dets: Sequence[Detection],
                       cfg: TrackerConfig | None = None) -> dict[int, Detection]:
    cfg = cfg or TrackerConfig()
    return {tid: dets[j] for tid, j in crowded_candidate_indices(tracks, dets, cfg).items()}


def apply_crowded(unmatched: Iterable[Track], candidates: dict[int, Detection], frame: int,
                  cfg: TrackerConfig | None = None) -> list[tuple[int, Detection]]:
    """Update unmatched crowded tracks from their (possibly shared) candidate.

    The shared box shows several bodies, so it moves the filter but does not
    touch the appearance model.
    """
    cfg = cfg or TrackerConfig()
    out = []
    for t in unmatched:
        det = candidates.get(t.id)
        if det is None:
            continue
        track_update(t, det, frame, cfg, use_embedding=False)
        out.append((t.id, det))
    return out


def _angle_gap(a: float, b: float) -> float:
    d = (a - b) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


def restore_edge_tracks(lost_edge: Sequence[Track], young: Sequence[Track], ctx: FrameContext,
                        cfg: TrackerConfig | None = None) -> list[tuple[int, int]]:
    """Merge young tracks into tracks that were lost at the image border.

    A pair qualifies when the young track is short, started after the loss,
    entered the image within the angular limit of where the lost track left,
    and enough pairwise embedding distances fall below the vote threshold.
    Each lost track takes at most one young track (lowest mean distance
    first). Returns ``(surviving id, absorbed id)`` pairs; the absorbed track
    is left REMOVED.
    """
    cfg = cfg or TrackerConfig()
    max_gap = math.radians(cfg.restore_max_angle_deg)
    scored = []
    for lt in lost_edge:
        if not lt.is_edge_lost or lt.lost_angle is None:
            continue
        lost_feats = list(lt.feat_history)[-cfg.restore_lost_hist:] if cfg.restore_lost_hist else []
        if not lost_feats:
            continue
        lf = np.stack(lost_feats)
        for yt in young:
            if yt.state not in (TrackState.NEW, TrackState.TRACKED):
                continue
            if yt.length >= cfg.restore_max_new_len or yt.start_frame <= lt.lost_since:
                continue
            entry = ctx.angle_of(*yt.first_center)
            if _angle_gap(entry, lt.lost_angle) >= max_gap:
                continue
            young_feats = list(yt.feat_history)[-cfg.restore_new_hist:] if cfg.restore_new_hist else []
            if not young_feats:
                continue
            dist = 1.0 - lf @ np.stack(young_feats).T
            votes = int(np.count_nonzero(dist < cfg.restore_reid_thr))
            if votes >= cfg.restore_min_votes:
                scored.append((float(dist.mean()), lt.id, yt.id, lt, yt))

    merges = []
    taken_lost: set[int] = set()
    taken_young: set[int] = set()
    for _, lid, yid, lt, yt in sorted(scored, key=lambda s: s[:3]):
        if lid in taken_lost or yid in taken_young:
            continue
        _absorb(lt, yt, cfg)
        taken_lost.add(lid)
        taken_young.add(yid)
        merges.append((lid, yid))
    return merges


def _absorb(lost: Track, young: Track, cfg: TrackerConfig) -> None:
    lost.kf = young.kf
    for emb in young.feat_history:
        lost.add_feature(emb, cfg.ema_momentum)
    lost.length += young.length
    lost.last_update_frame = young.last_update_frame
    lost.last_confidence = young.last_confidence
    lost.set_state(TrackState.TRACKED)
    lost.lost_since = None
    lost.lost_at_edge = False
    lost.lost_angle = None
    young.set_state(TrackState.REMOVED)


class SportsTracker:
    """One tracking session over one video sequence."""

    def __init__(self, width: float, height: float, cfg: TrackerConfig | None = None):
        self.cfg = cfg or TrackerConfig()
        if min(width, height) <= 2 * self.cfg.edge_band_px:
            raise ValueError(
                f"image {width}x{height} too small for edge band {self.cfg.edge_band_px}px")
        self.width = width
        self.height = height
        self.tracks: list[Track] = []
        self.archive: list[Track] = []
        self.first_frame: int | None = None
        self.last_frame: int | None = None
        self.emb_dim: int | None = None
        self.stats = {"spawned": 0, "removed": 0, "restored": 0}
        self._next_id = 1

    def get(self, track_id: int) -> Track | None:
        for t in self.tracks:
            if t.id == track_id:
                return t
        for t in self.archive:
            if t.id == track_id:
                return t
        return None

    def _check_inputs(self, dets: Sequence[Detection], ctx: FrameContext) -> None:
        if self.last_frame is not None and ctx.frame <= self.last_frame:
            raise ValueError(f"frame {ctx.frame} does not advance past {self.last_frame}")
        if (ctx.width, ctx.height) != (self.width, self.height):
            raise ValueError("image size changed within a sequence")
        for d in dets:
            if d.frame != ctx.frame:
                raise ValueError(f"detection from frame {d.frame} passed to frame {ctx.frame}")
            if d.emb is not None:
                if self.emb_dim is None:
                    self.emb_dim = len(d.emb)
                elif len(d.emb) != self.emb_dim:
                    raise ValueError(
                        f"mixed embedding dimensions: {len(d.emb)} vs {self.emb_dim}")

    def _round(self, tracks: Sequence[Track], t_idx: list[int], dets: Sequence[Detection],
               d_idx: list[int], iou_dominant: bool, gate: float):
        if not t_idx or not d_idx:
            return [], t_idx, d_idx
        tr = [tracks[i] for i in t_idx]
        de = [dets[j] for j in d_idx]
        cost = hybrid_distance(
            iou_distance_matrix([t.box for t in tr], [d.box for d in de]),
            _reid_matrix(tr, de),
            self.cfg.alpha,
            iou_dominant,
        )
        matches, ur, uc = gated_match(cost, gate)
        return (
            [(t_idx[r], d_idx[c], float(cost[r, c])) for r, c in matches],
            [t_idx[r] for r in ur],
            [d_idx[c] for c in uc],
        )

    def step(self, dets: Sequence[Detection], ctx: FrameContext) -> FrameResult:
        cfg = self.cfg
        dets = list(dets)
        self._check_inputs(dets, ctx)
        frame = ctx.frame
        if self.first_frame is None:
            self.first_frame = frame
        self.last_frame = frame
        res = FrameResult(frame=frame, det_fates=[DISCARDED] * len(dets),
                          det_stage=[None] * len(dets))

        # (a) predict; tracks lost at the border stay frozen where they left
        for t in self.tracks:
            if not t.is_edge_lost:
                t.predict(cfg)
        pool = [t for t in self.tracks if not t.is_edge_lost]
        unlost = [t for t in self.tracks if t.state in (TrackState.NEW, TrackState.TRACKED)]
        crowd = crowded_candidate_indices(unlost, dets, cfg)

        matched_dets: set[int] = set()

        def commit(matches, stage):
            for ti, di, c in matches:
                t = pool[ti]
                track_update(t, dets[di], frame, cfg)
                res.assignments.append((t.id, dets[di]))
                res.match_stage[t.id] = stage
                res.match_cost[t.id] = c
                res.track_fates[t.id] = T_MATCHED
                res.det_fates[di] = MATCHED
                res.det_stage[di] = stage
                matched_dets.add(di)

        all_t = list(range(len(pool)))
        # (b) round 1: everything, strict gate
        res.stage_inputs[1] = list(range(len(dets)))
        m, un_t, un_d = self._round(pool, all_t, dets, res.stage_inputs[1], True, cfg.stage1_gate)
        commit(m, 1)
        # (c) confidence split
        high = [j for j in un_d if dets[j].conf >= cfg.conf_split]
        low = [j for j in un_d if dets[j].conf < cfg.conf_split]
        # (d) round 2: high confidence, appearance-weighted
        res.stage_inputs[2] = high
        m, un_t, high = self._round(pool, un_t, dets, high, not cfg.stage2_invert_weights,
                                    cfg.stage2_gate)
        commit(m, 2)
        # (e) round 3: leftover high confidence
        res.stage_inputs[3] = high
        m, un_t, high = self._round(pool, un_t, dets, high, True, cfg.stage3_gate)
        commit(m, 3)
        # (f) round 4: low confidence
        res.stage_inputs[4] = low
        m, un_t, low = self._round(pool, un_t, dets, low, True, cfg.stage4_gate)
        commit(m, 4)

        # (g) one-frame tracks that failed to re-match were false starts
        still = []
        for ti in un_t:
            t = pool[ti]
            if t.start_frame != self.first_frame and t.length == 1:
                t.set_state(TrackState.REMOVED)
                res.removed.append(t.id)
                res.track_fates[t.id] = T_REMOVED
            else:
                still.append(t)

        # (h) crowded fill-in, one detection may serve several tracks
        cands = {tid: dets[j] for tid, j in crowd.items()}
        filled = apply_crowded(still, cands, frame, cfg)
        for tid, det in filled:
            res.assignments.append((tid, det))
            res.match_stage[tid] = CROWDED
            res.track_fates[tid] = T_CROWDED
        crowd_used = {crowd[tid] for tid, _ in filled}
        for j in crowd_used:
            if res.det_fates[j] == DISCARDED:
                res.det_fates[j] = CROWD_USED
        filled_ids = {tid for tid, _ in filled}

        # (i) lose what is left
        for t in still:
            if t.id in filled_ids:
                continue
            if t.state is TrackState.TRACKED:
                mark_lost(t, frame, ctx, cfg)
                res.track_fates[t.id] = T_LOST
            else:
                res.track_fates[t.id] = T_STILL_LOST
        for t in self.tracks:
            if t.is_edge_lost and t.id not in res.track_fates:
                res.track_fates[t.id] = T_STILL_LOST

        # (j) prune long-lost tracks
        for t in prune(self.tracks, frame, cfg):
            res.removed.append(t.id)
            res.track_fates[t.id] = T_REMOVED
        self._archive_removed()

        # (k) spawn from unmatched high-confidence detections
        self._spawn(dets, high, matched_dets | crowd_used, frame, res)

        # (l) border re-entries
        lost_edge = [t for t in self.tracks if t.is_edge_lost]
        if lost_edge:
            young = [t for t in self.tracks if t.state in (TrackState.NEW, TrackState.TRACKED)]
            res.restored_merges = restore_edge_tracks(lost_edge, young, ctx, cfg)
            if res.restored_merges:
                log.debug("frame %d: restored %s", frame, res.restored_merges)
            self._archive_removed()
        self.stats["spawned"] += len(res.spawned)
        self.stats["removed"] += len(res.removed)
        self.stats["restored"] += len(res.restored_merges)
        return res

    def _spawn(self, dets, candidates: list[int], matched: set[int], frame: int,
               res: FrameResult) -> None:
        cfg = self.cfg
        candidates = [j for j in candidates if j not in matched]
        if not candidates:
            return
        keep = nms_indices([dets[j].box for j in candidates], [dets[j].conf for j in candidates],
                           cfg.nms_thr)
        survivors = [candidates[k] for k in keep]
        if matched and survivors:
            m_sorted = sorted(matched)
            ov = iou_matrix([dets[j].box for j in survivors], [dets[j].box for j in m_sorted])
            survivors = [j for j, row in zip(survivors, ov) if not (row > cfg.spawn_iou_suppress).any()]
        live_ids = {t.id for t in self.tracks}
        for j in survivors:
            t = track_new(dets[j], frame, self._next_id, cfg, taken_ids=live_ids,
                          confirmed=(frame == self.first_frame))
            self._next_id += 1
            self.tracks.append(t)
            live_ids.add(t.id)
            res.spawned.append(t.id)
            res.spawn_assignments.append((t.id, dets[j]))
            res.det_fates[j] = SPAWNED

    def _archive_removed(self) -> None:
        gone = [t for t in self.tracks if t.state is TrackState.REMOVED]
        if gone:
            self.archive.extend(gone)
            self.tracks = [t for t in self.tracks if t.state is not TrackState.REMOVED]


@dataclass(frozen=True)
class TrackRow:
    frame: int
    id: int
    box: BBox
    conf: float


def run_sequence(dets_by_frame: Sequence[Sequence[Detection]], ctx0: FrameContext,
                 cfg: TrackerConfig | None = None, streaming: bool = False,
                 tracker: SportsTracker | None = None) -> list[TrackRow]:
    """Track a whole sequence whose first frame is ``ctx0.frame``.

    Batch mode (default) emits every track that was ever confirmed,
    including the detection it spawned from, and relabels the history of
    tracks absorbed by border restoration. Streaming mode only emits what is
    known at each frame.
    """
    if not dets_by_frame:
        raise ValueError("sequence has no frames")
    tracker = tracker or SportsTracker(ctx0.width, ctx0.height, cfg)
    rows: list[TrackRow] = []
    history: dict[int, list[tuple[int, BBox, float]]] = {}
    confirmed: set[int] = set()

    for k, dets in enumerate(dets_by_frame):
        ctx = FrameContext(ctx0.frame + k, ctx0.width, ctx0.height)
        res = tracker.step(dets, ctx)
        observed = res.assignments + res.spawn_assignments
        if streaming:
            alias = {absorbed: surv for surv, absorbed in res.restored_merges}
            emitted = set()
            for tid, det in observed:
                tid = alias.get(tid, tid)
                t = tracker.get(tid)
                if t is not None and t.state is TrackState.TRACKED and tid not in emitted:
                    emitted.add(tid)
                    rows.append(TrackRow(ctx.frame, tid, det.box, det.conf))
            continue
        for tid, det in observed:
            history.setdefault(tid, []).append((ctx.frame, det.box, det.conf))
        for surv, absorbed in res.restored_merges:
            history.setdefault(surv, []).extend(history.pop(absorbed, []))
        confirmed.update(t.id for t in tracker.tracks if t.state is TrackState.TRACKED)

    if not streaming:
        for tid in confirmed:
            for frame, box, conf in history.get(tid, ()):
                rows.append(TrackRow(frame, tid, box, conf))
    rows.sort(key=lambda r: (r.frame, r.id))
    return rows
