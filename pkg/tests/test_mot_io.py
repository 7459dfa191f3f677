import json
import logging

import numpy as np
import pytest

from sportstrack.config import ConfigError, TrackerConfig
from sportstrack.geometry import BBox
from sportstrack.matcher import TrackRow
from sportstrack.mot_io import (
    FormatError,
    SequenceBundle,
    format_track_row,
    read_config,
    read_detections,
    read_gt,
    read_mot_det,
    read_mot_tracks,
    write_detections,
    write_gt,
    write_mot_tracks,
)
from sportstrack.tracks import Detection

HEADER = {"type": "header", "name": "seq", "width": 1280, "height": 720, "fps": 25, "emb_dim": 4}


def jsonl(path, header, *records):
    path.write_text("\n".join(json.dumps(r) for r in (header, *records)) + "\n")
    return path


def rec(frame, emb=(1, 0, 0, 0), conf=0.9):
    r = {"frame": frame, "bbox": [10, 20, 30, 40], "conf": conf}
    if emb is not None:
        r["emb"] = list(emb)
    return r


class TestReadDetections:
    def test_single(self, tmp_path):
        b = read_detections(jsonl(tmp_path / "d.jsonl", HEADER, rec(1)))
        assert b.n_frames == 1 and len(b.frames[0]) == 1
        d = b.frames[0][0]
        assert d.box == BBox(10, 20, 30, 40) and d.conf == 0.9
        assert (b.name, b.width, b.height, b.emb_dim) == ("seq", 1280, 720, 4)

    def test_emb_length(self, tmp_path):
        with pytest.raises(FormatError, match=r"d\.jsonl:2: emb length 3 != emb_dim 4"):
            read_detections(jsonl(tmp_path / "d.jsonl", HEADER, rec(1, (1, 0, 0))))

    def test_gap(self, tmp_path):
        with pytest.raises(FormatError, match="missing frame 3"):
            read_detections(jsonl(tmp_path / "d.jsonl", HEADER, rec(1), rec(2), rec(4)))

    def test_declared_frame_count_allows_empty_frames(self, tmp_path):
        b = read_detections(jsonl(tmp_path / "d.jsonl", {**HEADER, "n_frames": 5}, rec(1), rec(4)))
        assert [len(f) for f in b.frames] == [1, 0, 0, 1, 0]

    def test_normalizes_near_unit(self, tmp_path):
        b = read_detections(jsonl(tmp_path / "d.jsonl", HEADER, rec(1, (1.0005, 0, 0, 0))))
        assert np.linalg.norm(b.frames[0][0].emb) == pytest.approx(1.0, abs=1e-12)

    def test_rejects_far_from_unit(self, tmp_path):
        with pytest.raises(FormatError, match="norm"):
            read_detections(jsonl(tmp_path / "d.jsonl", HEADER, rec(1, (2, 0, 0, 0))))

    def test_no_embeddings(self, tmp_path):
        b = read_detections(jsonl(tmp_path / "d.jsonl", {**HEADER, "emb_dim": 0}, rec(1, None)))
        assert b.frames[0][0].emb is None

    def test_malformed_line(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text(json.dumps(HEADER) + "\n" + json.dumps(rec(1)) + "\n{oops\n")
        with pytest.raises(FormatError, match=":3:"):
            read_detections(p)

    def test_missing_header(self, tmp_path):
        with pytest.raises(FormatError, match=":1:"):
            read_detections(jsonl(tmp_path / "d.jsonl", rec(1)))

    def test_conf_clamped(self, tmp_path, caplog):
        with caplog.at_level(logging.WARNING):
            b = read_detections(jsonl(tmp_path / "d.jsonl", HEADER, rec(1, conf=1.5)))
        assert b.frames[0][0].conf == 1.0
        assert "clamped" in caplog.text

    def test_round_trip(self, tmp_path):
        e = np.array([0.6, 0.8, 0.0, 0.0])
        dets = [[Detection(1, BBox(1.5, 2.25, 30, 40), 0.7, e)], [], [Detection(3, BBox(5, 5, 5, 5), 0.1, e)]]
        bundle = SequenceBundle("x", 640, 480, 30.0, 4, dets)
        write_detections(tmp_path / "x.jsonl", bundle)
        back = read_detections(tmp_path / "x.jsonl")
        assert back.n_frames == 3 and (back.width, back.height, back.fps) == (640, 480, 30.0)
        assert [[(d.box, d.conf) for d in f] for f in back.frames] == [[(d.box, d.conf) for d in f] for f in dets]


class TestMotDet:
    def test_row(self, tmp_path):
        p = tmp_path / "det.txt"
        p.write_text("1,-1,10,20,30,40,0.9\n")
        b = read_mot_det(p, 1280, 720)
        d = b.frames[0][0]
        assert (d.frame, d.box, d.conf, d.emb) == (1, BBox(10, 20, 30, 40), 0.9, None)

    def test_empty(self, tmp_path):
        p = tmp_path / "det.txt"
        p.write_text("")
        assert read_mot_det(p, 1280, 720).n_frames == 0

    def test_clamp(self, tmp_path):
        p = tmp_path / "det.txt"
        p.write_text("1,-1,10,20,30,40,1.5\n")
        assert read_mot_det(p, 1280, 720).frames[0][0].conf == 1.0

    def test_bad_row(self, tmp_path):
        p = tmp_path / "det.txt"
        p.write_text("1,-1,10,20,30,40,0.9\n2,-1,x,20,30,40,0.9\n")
        with pytest.raises(FormatError, match="row 2"):
            read_mot_det(p, 1280, 720)


class TestTracks:
    def test_format(self):
        assert format_track_row(TrackRow(1, 3, BBox(0, 0, 10, 10), 0.9)) == "1,3,0.00,0.00,10.00,10.00,0.9,-1,-1,-1"

    def test_empty(self, tmp_path):
        write_mot_tracks(tmp_path / "t.txt", [])
        assert (tmp_path / "t.txt").read_text() == ""

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = [TrackRow(f, i, BBox(*np.round(rng.uniform(1, 500, 4), 2)), 0.5)
                for f in range(1, 6) for i in (1, 4, 9)]
        write_mot_tracks(tmp_path / "t.txt", rows)
        text = (tmp_path / "t.txt").read_text()
        assert text.endswith("\n") and text.count("\n") == len(rows)
        assert read_mot_tracks(tmp_path / "t.txt") == rows

    def test_unsorted(self, tmp_path):
        rows = [TrackRow(2, 1, BBox(0, 0, 1, 1), 1.0), TrackRow(1, 1, BBox(0, 0, 1, 1), 1.0)]
        with pytest.raises(ValueError, match="sorted"):
            write_mot_tracks(tmp_path / "t.txt", rows)

    def test_duplicate(self, tmp_path):
        rows = [TrackRow(1, 1, BBox(0, 0, 1, 1), 1.0)] * 2
        with pytest.raises(ValueError, match="duplicate"):
            write_mot_tracks(tmp_path / "t.txt", rows)


class TestGt:
    def test_one_row(self, tmp_path):
        p = tmp_path / "gt.txt"
        p.write_text("1,1,10,20,30,40,1,1,1.0\n")
        assert read_gt(p) == [TrackRow(1, 1, BBox(10, 20, 30, 40), 1.0)]

    def test_flag_zero_skipped(self, tmp_path):
        p = tmp_path / "gt.txt"
        p.write_text("1,1,10,20,30,40,1,1,1.0\n1,2,10,20,30,40,0,1,1.0\n")
        assert [r.id for r in read_gt(p)] == [1]

    def test_duplicate(self, tmp_path):
        p = tmp_path / "gt.txt"
        p.write_text("1,1,10,20,30,40,1,1,1\n1,1,11,20,30,40,1,1,1\n")
        with pytest.raises(FormatError, match="row 2.*duplicate"):
            read_gt(p)

    def test_parse_error(self, tmp_path):
        p = tmp_path / "gt.txt"
        p.write_text("1,1,10,20\n")
        with pytest.raises(FormatError, match="row 1"):
            read_gt(p)

    def test_write_read(self, tmp_path):
        rows = [TrackRow(2, 5, BBox(1.25, 2.5, 30, 40), 1.0), TrackRow(1, 5, BBox(0, 0, 30, 40), 1.0)]
        write_gt(tmp_path / "gt.txt", rows)
        assert read_gt(tmp_path / "gt.txt") == sorted(rows, key=lambda r: r.frame)


class TestConfig:
    def test_empty_object(self, tmp_path):
        (tmp_path / "c.json").write_text("{}")
        assert read_config(tmp_path / "c.json") == TrackerConfig()

    def test_range(self, tmp_path):
        (tmp_path / "c.json").write_text('{"alpha": 1.5}')
        with pytest.raises(ConfigError, match="alpha"):
            read_config(tmp_path / "c.json")

    def test_single_key(self, tmp_path):
        (tmp_path / "c.json").write_text('{"stage2_gate": 0.25}')
        cfg = read_config(tmp_path / "c.json")
        assert cfg.stage2_gate == 0.25 and cfg.replace(stage2_gate=0.3) == TrackerConfig()

    def test_unknown_key(self, tmp_path):
        (tmp_path / "c.json").write_text('{"stage_gate": 0.25}')
        with pytest.raises(ConfigError, match="stage_gate"):
            read_config(tmp_path / "c.json")

    @pytest.mark.parametrize("text", ["[1]", "{oops"])
    def test_not_an_object(self, tmp_path, text):
        (tmp_path / "c.json").write_text(text)
        with pytest.raises(ConfigError):
            read_config(tmp_path / "c.json")
