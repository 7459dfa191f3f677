"""Multi-object tracking association engine for team sports footage.

Works on precomputed detections with appearance embeddings: four gated
matching rounds, one-to-many updates for crowded tracks, and re-attachment
of tracks that leave through the image border.
"""

from .assignment import gated_match, hungarian
from .config import ConfigError, TrackerConfig
from .evaluation import MetricsReport, compare_table, evaluate
from .geometry import BBox, hybrid_distance, iou, iou_distance_matrix, nms, reid_distance_matrix
from .kalman import KalmanState, kf_box, kf_initiate, kf_predict, kf_update
from .matcher import (
    FrameResult,
    SportsTracker,
    TrackRow,
    apply_crowded,
    crowded_candidates,
    restore_edge_tracks,
    run_sequence,
)
from .mot_io import (
    FormatError,
    SequenceBundle,
    read_config,
    read_detections,
    read_gt,
    read_mot_det,
    read_mot_tracks,
    write_detections,
    write_mot_tracks,
)
from .synth import PRESETS, ScenarioSpec, generate, preset
from .tracks import Detection, FrameContext, Track, TrackState, mark_lost, prune, track_new, track_update

__version__ = "0.1.0"

__all__ = [
    "BBox", "ConfigError", "Detection", "FormatError", "FrameContext", "FrameResult",
    "KalmanState", "MetricsReport", "PRESETS", "ScenarioSpec", "SequenceBundle", "SportsTracker",
    "Track", "TrackRow", "TrackState", "TrackerConfig", "apply_crowded", "compare_table",
    "crowded_candidates", "evaluate", "gated_match", "generate", "hungarian", "hybrid_distance",
    "iou", "iou_distance_matrix", "kf_box", "kf_initiate", "kf_predict", "kf_update", "mark_lost",
    "nms", "preset", "prune", "read_config", "read_detections", "read_gt", "read_mot_det",
    "read_mot_tracks", "reid_distance_matrix", "restore_edge_tracks", "run_sequence", "track_new",
    "track_update", "write_detections", "write_mot_tracks",
]
