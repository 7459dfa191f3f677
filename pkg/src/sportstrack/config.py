"""Tracker configuration: every threshold and weight of the pipeline."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Any, Mapping


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrackerConfig:
    alpha: float = 0.9
    stage1_gate: float = 0.05
    stage2_gate: float = 0.3
    stage3_gate: float = 0.7
    stage4_gate: float = 0.7
    # round 2 weights appearance by alpha instead of IOU; False swaps it back
    stage2_invert_weights: bool = True
    conf_split: float = 0.6
    crowd_iou: float = 0.45
    crowd_candidate_iou: float = 0.6
    nms_thr: float = 0.45
    spawn_iou_suppress: float = 0.45
    edge_band_px: float = 60
    max_lost_frames: int = 120
    restore_max_new_len: int = 30
    restore_max_angle_deg: float = 90.0
    restore_reid_thr: float = 0.2
    restore_min_votes: int = 4
    restore_lost_hist: int = 60
    restore_new_hist: int = 10
    ema_momentum: float = 0.9
    feat_history: int = 60
    kf_std_position: float = 1.0 / 20
    kf_std_velocity: float = 1.0 / 160

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.type == "bool":
                if not isinstance(v, bool):
                    raise ConfigError(f"{f.name}: expected a boolean, got {v!r}")
                continue
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{f.name}: expected a number, got {v!r}")
            if f.type == "int" and int(v) != v:
                raise ConfigError(f"{f.name}: expected an integer, got {v!r}")
            if not math.isfinite(v):
                raise ConfigError(f"{f.name}: must be finite")
        _in_range(self, "alpha", 0.0, 1.0)
        for name in ("stage1_gate", "stage2_gate", "stage3_gate", "stage4_gate",
                     "crowd_iou", "crowd_candidate_iou", "restore_reid_thr", "edge_band_px"):
            _in_range(self, name, 0.0, None)
        _in_range(self, "conf_split", 0.0, 1.0, open_=True)
        _in_range(self, "nms_thr", 0.0, 1.0, low_open=True)
        _in_range(self, "spawn_iou_suppress", 0.0, 1.0)
        _in_range(self, "restore_max_angle_deg", 0.0, 180.0)
        _in_range(self, "ema_momentum", 0.0, 1.0)
        for name in ("max_lost_frames", "restore_max_new_len", "restore_min_votes",
                     "restore_lost_hist", "restore_new_hist", "feat_history"):
            _in_range(self, name, 0, None)
        for name in ("kf_std_position", "kf_std_velocity"):
            _in_range(self, name, 0.0, None, low_open=True)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TrackerConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**dict(data))

    def replace(self, **changes: Any) -> "TrackerConfig":
        return self.from_dict({**dataclasses.asdict(self), **changes})

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _in_range(cfg: TrackerConfig, name: str, low, high, open_: bool = False,
              low_open: bool = False) -> None:
    v = getattr(cfg, name)
    lo_bad = v <= low if (open_ or low_open) else v < low
    hi_bad = high is not None and (v >= high if open_ else v > high)
    if lo_bad or hi_bad:
        lo = "(" if (open_ or low_open) else "["
        hi = ")" if open_ else "]"
        bound = f"{lo}{low}, {'inf' if high is None else high}{hi if high is not None else ')'}"
        raise ConfigError(f"{name}={v!r} out of range {bound}")
