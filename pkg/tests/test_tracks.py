import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sportstrack.config import ConfigError, TrackerConfig
from sportstrack.geometry import BBox
from sportstrack.tracks import (
    LEGAL_TRANSITIONS,
    Detection,
    FrameContext,
    IllegalTransition,
    TrackState,
    mark_lost,
    prune,
    track_new,
    track_update,
)

CTX = FrameContext(1, 1280, 720)


def det_at(cx, cy, frame=1, emb=None, conf=0.9):
    return Detection(frame, BBox.from_center(cx, cy, 40, 100), conf, emb)


def unit(*v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


class TestDetection:
    def test_conf_range(self):
        with pytest.raises(ValueError):
            det_at(0, 0, conf=1.2)

    def test_emb_must_be_unit(self):
        with pytest.raises(ValueError):
            det_at(0, 0, emb=np.array([1.0, 1.0]))


class TestConfig:
    def test_defaults(self):
        cfg = TrackerConfig()
        assert (cfg.alpha, cfg.stage1_gate, cfg.stage2_gate, cfg.stage3_gate, cfg.stage4_gate) == (
            0.9, 0.05, 0.3, 0.7, 0.7)
        assert (cfg.conf_split, cfg.crowd_iou, cfg.crowd_candidate_iou, cfg.nms_thr) == (0.6, 0.45, 0.6, 0.45)
        assert (cfg.edge_band_px, cfg.max_lost_frames, cfg.restore_max_new_len) == (60, 120, 30)
        assert (cfg.restore_max_angle_deg, cfg.restore_reid_thr, cfg.restore_min_votes) == (90, 0.2, 4)
        assert (cfg.restore_lost_hist, cfg.restore_new_hist, cfg.ema_momentum) == (60, 10, 0.9)

    def test_range_error_names_key_and_bound(self):
        with pytest.raises(ConfigError, match=r"alpha=1\.5 out of range \[0\.0, 1\.0\]"):
            TrackerConfig.from_dict({"alpha": 1.5})

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="stage5_gate"):
            TrackerConfig.from_dict({"stage5_gate": 0.1})

    def test_single_override(self):
        cfg = TrackerConfig.from_dict({"stage2_gate": 0.25})
        assert cfg == TrackerConfig().replace(stage2_gate=0.25)

    @pytest.mark.parametrize("key,value", [
        ("conf_split", 1.0), ("conf_split", 0.0), ("stage1_gate", -0.01), ("nms_thr", 0.0),
        ("max_lost_frames", 1.5), ("stage2_invert_weights", 1), ("alpha", "0.9"), ("alpha", math.nan),
    ])
    def test_rejects(self, key, value):
        with pytest.raises(ConfigError, match=key):
            TrackerConfig.from_dict({key: value})


class TestTrackNew:
    def test_first_frame(self):
        t = track_new(det_at(100, 100, emb=unit(1, 0)), 1, 1)
        assert (t.start_frame, t.length, t.state) == (1, 1, TrackState.NEW)
        assert len(t.feat_history) == 1

    def test_without_embedding(self):
        t = track_new(det_at(100, 100), 1, 1)
        assert t.smooth_feat is None and len(t.feat_history) == 0

    def test_duplicate_id(self):
        with pytest.raises(ValueError, match="duplicate"):
            track_new(det_at(100, 100), 1, 3, taken_ids={1, 3})

    def test_confirmed(self):
        assert track_new(det_at(100, 100), 1, 1, confirmed=True).state is TrackState.TRACKED


class TestTrackUpdate:
    def test_clears_lost(self):
        t = track_new(det_at(640, 360), 1, 1, confirmed=True)
        mark_lost(t, 2, CTX)
        track_update(t, det_at(640, 360, 3), 3)
        assert t.state is TrackState.TRACKED and t.lost_since is None
        assert t.length == 2 and t.last_update_frame == 3

    def test_time_must_advance(self):
        t = track_new(det_at(640, 360), 5, 1)
        with pytest.raises(ValueError, match="not after"):
            track_update(t, det_at(640, 360, 5), 5)

    def test_history_cap(self):
        rng = np.random.default_rng(0)
        embs = [unit(*rng.normal(size=8)) for _ in range(62)]
        t = track_new(det_at(640, 360, emb=embs[0]), 1, 1)
        for k in range(1, 62):
            track_update(t, det_at(640, 360, k + 1, emb=embs[k]), k + 1)
        assert len(t.feat_history) == 60
        np.testing.assert_array_equal(t.feat_history[0], embs[2])
        np.testing.assert_array_equal(t.feat_history[-1], embs[61])

    def test_ema(self):
        t = track_new(det_at(640, 360, emb=unit(1, 0)), 1, 1)
        track_update(t, det_at(640, 360, 2, emb=unit(0, 1)), 2)
        np.testing.assert_allclose(t.smooth_feat, unit(0.9, 0.1), atol=1e-12)

    def test_crowded_update_keeps_appearance(self):
        t = track_new(det_at(640, 360, emb=unit(1, 0)), 1, 1)
        track_update(t, det_at(640, 360, 2, emb=unit(0, 1)), 2, use_embedding=False)
        np.testing.assert_array_equal(t.smooth_feat, unit(1, 0))
        assert len(t.feat_history) == 1 and t.length == 2

    def test_removed_cannot_update(self):
        t = track_new(det_at(640, 360), 1, 1)
        t.set_state(TrackState.REMOVED)
        with pytest.raises(IllegalTransition):
            track_update(t, det_at(640, 360, 2), 2)


class TestMarkLost:
    @pytest.mark.parametrize("center,edge,angle", [
        ((640, 360), False, None),
        ((30, 360), True, math.pi),
        ((640, 700), True, math.pi / 2),
        ((60, 360), True, math.pi),  # on the band boundary counts as edge
    ])
    def test_examples(self, center, edge, angle):
        t = track_new(det_at(*center), 1, 1, confirmed=True)
        mark_lost(t, 7, CTX)
        assert t.state is TrackState.LOST and t.lost_since == 7
        assert t.lost_at_edge is edge
        if angle is None:
            assert t.lost_angle is None
        else:
            assert t.lost_angle == pytest.approx(angle, abs=1e-12)

    def test_only_tracked(self):
        t = track_new(det_at(640, 360), 1, 1)
        with pytest.raises(IllegalTransition):
            mark_lost(t, 2, CTX)


class TestPrune:
    def lost_track(self, since):
        t = track_new(det_at(640, 360), since - 1, 1, confirmed=True)
        return mark_lost(t, since, CTX)

    def test_boundary(self):
        assert prune([self.lost_track(10)], 130) == []
        t = self.lost_track(10)
        assert prune([t], 131) == [t] and t.state is TrackState.REMOVED

    def test_tracked_kept(self):
        t = track_new(det_at(640, 360), 1, 1, confirmed=True)
        assert prune([t], 10_000) == []


class TestStateMachine:
    def test_graph(self):
        S = TrackState
        assert LEGAL_TRANSITIONS == {
            S.NEW: {S.TRACKED, S.REMOVED},
            S.TRACKED: {S.TRACKED, S.LOST, S.REMOVED},
            S.LOST: {S.TRACKED, S.REMOVED},
            S.REMOVED: set(),
        }

    @settings(max_examples=500)
    @given(st.lists(st.sampled_from(["update", "lose", "remove", "prune", "new_state", "lost_state"]),
                    max_size=40), st.integers(0, 2**32 - 1))
    def test_random_actions(self, actions, seed):
        rng = np.random.default_rng(seed)
        t = track_new(det_at(640, 360, emb=unit(1, 0, 0)), 1, 1)
        frame = 1
        for action in actions:
            frame += 1
            before = t.state
            try:
                if action == "update":
                    track_update(t, det_at(640, 360, frame, emb=unit(*rng.normal(size=3))), frame)
                elif action == "lose":
                    mark_lost(t, frame, CTX)
                elif action == "remove":
                    t.set_state(TrackState.REMOVED)
                elif action == "prune":
                    prune([t], frame + int(rng.integers(0, 250)))
                else:
                    t.set_state(TrackState.NEW if action == "new_state" else TrackState.LOST)
            except IllegalTransition:
                assert t.state is before
                continue
            if t.state is not before:
                assert t.state in LEGAL_TRANSITIONS[before]
            assert len(t.feat_history) <= 60
            assert abs(np.linalg.norm(t.smooth_feat) - 1.0) < 1e-6
            if t.state is TrackState.LOST:
                assert t.lost_since is not None
            if t.lost_at_edge:
                assert t.lost_angle is not None
