"""Box geometry, distance matrices and NMS.

Boxes are top-left ``(x, y, w, h)`` in pixels, the MOTChallenge convention.
Every cost matrix is shaped ``(num_tracks, num_detections)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

UNIT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class BBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box {vals}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box needs w > 0 and h > 0, got w={self.w}, h={self.h}")

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "BBox":
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def area(self) -> float:
        return self.w * self.h

    def tlwh(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h], dtype=float)

    def union(self, other: "BBox") -> "BBox":
        """Smallest box enclosing both."""
        x1 = min(self.x, other.x)
        y1 = min(self.y, other.y)
        x2 = max(self.x + self.w, other.x + other.w)
        y2 = max(self.y + self.h, other.y + other.h)
        return BBox(x1, y1, x2 - x1, y2 - y1)


def _as_tlwh(boxes: Iterable[BBox] | np.ndarray) -> np.ndarray:
    if isinstance(boxes, np.ndarray):
        arr = boxes.astype(float, copy=False)
        return arr.reshape(-1, 4)
    rows = [b.tlwh() for b in boxes]
    if not rows:
        return np.zeros((0, 4))
    return np.stack(rows)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0 when they only touch."""
    if a == b:
        return 1.0
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # roundoff can push near-identical boxes a hair above 1
    return min(1.0, inter / (a.area + b.area - inter))


def iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise IOU, shape ``(len(boxes_a), len(boxes_b))``."""
    a = _as_tlwh(boxes_a)
    b = _as_tlwh(boxes_b)
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    ax2 = a[:, 0] + a[:, 2]
    ay2 = a[:, 1] + a[:, 3]
    bx2 = b[:, 0] + b[:, 2]
    by2 = b[:, 1] + b[:, 3]
    iw = np.minimum(ax2[:, None], bx2[None, :]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(ay2[:, None], by2[None, :]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    area_a = a[:, 2] * a[:, 3]
    area_b = b[:, 2] * b[:, 3]
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.clip(inter / union, 0.0, 1.0)
    # (x + w) - x need not equal w, so pin identical boxes to exactly 1
    out[(a[:, None, :] == b[None, :, :]).all(axis=2)] = 1.0
    return out


def iou_distance_matrix(track_boxes, det_boxes) -> np.ndarray:
    """``D[i, j] = 1 - iou(track_i, det_j)``."""
    return 1.0 - iou_matrix(track_boxes, det_boxes)


def _check_unit_rows(feats: np.ndarray, name: str) -> None:
    if feats.size == 0:
        return
    norms = np.linalg.norm(feats, axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)
    if bad.size:
        raise ValueError(f"{name}[{bad[0]}] is not L2-normalized (norm={norms[bad[0]]:.6f})")


def reid_distance_matrix(track_feats, det_feats) -> np.ndarray:
    """Cosine distance ``1 - e_i . f_j`` between unit embeddings, in [0, 2]."""
    e = np.asarray(track_feats, dtype=float)
    f = np.asarray(det_feats, dtype=float)
    if e.ndim == 1:
        e = e.reshape(0, 0) if e.size == 0 else e.reshape(1, -1)
    if f.ndim == 1:
        f = f.reshape(0, 0) if f.size == 0 else f.reshape(1, -1)
    if len(e) == 0 or len(f) == 0:
        return np.zeros((len(e), len(f)))
    if e.shape[1] != f.shape[1]:
        raise ValueError(f"embedding dimension mismatch: {e.shape[1]} vs {f.shape[1]}")
    _check_unit_rows(e, "track_feats")
    _check_unit_rows(f, "det_feats")
    return np.clip(1.0 - e @ f.T, 0.0, 2.0)


def hybrid_distance(iou_dist: np.ndarray, reid_dist: np.ndarray, alpha: float = 0.9,
                    iou_dominant: bool = True) -> np.ndarray:
    """Convex mix of IOU and ReID distance.

    With ``iou_dominant`` the IOU term gets weight ``alpha``; otherwise the
    weights swap and appearance dominates (the second matching round).
    """
    d = np.asarray(iou_dist, dtype=float)
    e = np.asarray(reid_dist, dtype=float)
    if d.shape != e.shape:
        raise ValueError(f"shape mismatch: {d.shape} vs {e.shape}")
    if iou_dominant:
        return alpha * d + (1.0 - alpha) * e
    return (1.0 - alpha) * d + alpha * e


def nms(dets: Sequence[tuple[BBox, float]], threshold: float) -> list[tuple[BBox, float]]:
    """Greedy NMS. Keeps boxes in confidence-descending order (index breaks ties)."""
    return [dets[i] for i in nms_indices([b for b, _ in dets], [c for _, c in dets], threshold)]


def nms_indices(boxes: Sequence[BBox], confs: Sequence[float], threshold: float) -> list[int]:
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"nms threshold must be in (0, 1], got {threshold}")
    order = sorted(range(len(boxes)), key=lambda i: (-confs[i], i))
    if not order:
        return []
    ious = iou_matrix(boxes, boxes)
    keep: list[int] = []
    for i in order:
        if all(ious[i, k] <= threshold for k in keep):
            keep.append(i)
    return keep
