"""HOTA, CLEAR-MOT and identity metrics.

HOTA follows the reference TrackEval procedure: a global alignment score
between every (gt id, predicted id) pair is accumulated first, then each
frame is matched once by Hungarian on ``alignment * IOU`` and the match is
thresholded at each localization level alpha in 0.05..0.95.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .assignment import hungarian
from .geometry import iou_matrix
from .matcher import TrackRow

ALPHAS = np.arange(1, 20) * 0.05
_EPS = np.finfo(float).eps
TABLE_COLUMNS = ("HOTA", "DetA", "AssA", "DetRe", "DetPr", "AssRe", "AssPr")


@dataclass
class MetricsReport:
    HOTA: float
    DetA: float
    AssA: float
    DetRe: float
    DetPr: float
    AssRe: float
    AssPr: float
    MOTA: float
    IDF1: float
    id_switches: int

    def as_percent(self) -> dict[str, float]:
        return {k: (v * 100.0 if k != "id_switches" else v) for k, v in asdict(self).items()}


def _by_frame(rows: Sequence[TrackRow]):
    frames = defaultdict(list)
    for r in rows:
        frames[r.frame].append(r)
    return frames


def _max_assignment(score: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pairs = hungarian(-score)
    if not pairs:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    r, c = zip(*pairs)
    return np.array(r), np.array(c)


def evaluate(pred: Sequence[TrackRow], gt: Sequence[TrackRow]) -> MetricsReport:
    if not gt:
        raise ValueError("ground truth is empty")
    gt_ids = sorted({r.id for r in gt})
    pr_ids = sorted({r.id for r in pred})
    gi = {v: k for k, v in enumerate(gt_ids)}
    pi = {v: k for k, v in enumerate(pr_ids)}
    g_frames = _by_frame(gt)
    p_frames = _by_frame(pred)
    frames = sorted(set(g_frames) | set(p_frames))

    # per-frame id index arrays and IOU similarity
    data = []
    for f in frames:
        gr = g_frames.get(f, [])
        pr = p_frames.get(f, [])
        g = np.array([gi[r.id] for r in gr], dtype=int)
        p = np.array([pi[r.id] for r in pr], dtype=int)
        sim = iou_matrix([r.box for r in gr], [r.box for r in pr])
        data.append((g, p, sim))

    n_g, n_p = len(gt_ids), len(pr_ids)
    hota = _hota(data, n_g, n_p)
    mota, idsw = _clear(data, n_g, n_p)
    idf1 = _identity(data, n_g, n_p)
    return MetricsReport(MOTA=mota, IDF1=idf1, id_switches=idsw, **hota)


def _hota(data, n_g: int, n_p: int) -> dict[str, float]:
    potential = np.zeros((n_g, n_p))
    gt_count = np.zeros((n_g, 1))
    pr_count = np.zeros((1, n_p))
    for g, p, sim in data:
        if len(g) and len(p):
            denom = sim.sum(0)[None, :] + sim.sum(1)[:, None] - sim
            sim_iou = np.zeros_like(sim)
            mask = denom > _EPS
            sim_iou[mask] = sim[mask] / denom[mask]
            potential[np.ix_(g, p)] += sim_iou
        gt_count[g, 0] += 1
        pr_count[0, p] += 1
    align = potential / np.maximum(_EPS, gt_count + pr_count - potential)

    n_a = len(ALPHAS)
    tp = np.zeros(n_a)
    fn = np.zeros(n_a)
    fp = np.zeros(n_a)
    matches = np.zeros((n_a, n_g, n_p))
    for g, p, sim in data:
        if not len(g) or not len(p):
            fn += len(g)
            fp += len(p)
            continue
        score = align[np.ix_(g, p)] * sim
        rows, cols = _max_assignment(score)
        for a, alpha in enumerate(ALPHAS):
            ok = sim[rows, cols] >= alpha - _EPS
            mr, mc = rows[ok], cols[ok]
            n = len(mr)
            tp[a] += n
            fn[a] += len(g) - n
            fp[a] += len(p) - n
            if n:
                matches[a, g[mr], p[mc]] += 1

    ass_a = np.zeros(n_a)
    ass_re = np.zeros(n_a)
    ass_pr = np.zeros(n_a)
    for a in range(n_a):
        mc = matches[a]
        tp_den = max(1.0, tp[a])
        ass_a[a] = np.sum(mc * mc / np.maximum(1, gt_count + pr_count - mc)) / tp_den
        ass_re[a] = np.sum(mc * mc / np.maximum(1, gt_count)) / tp_den
        ass_pr[a] = np.sum(mc * mc / np.maximum(1, pr_count)) / tp_den
    det_re = tp / np.maximum(1, tp + fn)
    det_pr = tp / np.maximum(1, tp + fp)
    det_a = tp / np.maximum(1, tp + fn + fp)
    hota = np.sqrt(det_a * ass_a)
    out = dict(HOTA=hota, DetA=det_a, AssA=ass_a, DetRe=det_re, DetPr=det_pr,
               AssRe=ass_re, AssPr=ass_pr)
    return {k: float(np.mean(v)) for k, v in out.items()}


def _clear(data, n_g: int, n_p: int, threshold: float = 0.5) -> tuple[float, int]:
    """MOTA with continuity-preferring matching; returns ``(MOTA, id switches)``."""
    tp = fn = fp = idsw = 0
    prev_id = np.full(n_g, -1)
    prev_step = np.full(n_g, -1)
    for g, p, sim in data:
        if not len(g):
            fp += len(p)
            continue
        if not len(p):
            fn += len(g)
            continue
        score = 1000.0 * (p[None, :] == prev_step[g][:, None]) + sim
        score[sim < threshold - _EPS] = 0.0
        rows, cols = _max_assignment(score)
        ok = score[rows, cols] > _EPS
        mg, mp = g[rows[ok]], p[cols[ok]]
        prev = prev_id[mg]
        idsw += int(np.sum((prev >= 0) & (prev != mp)))
        tp += len(mg)
        fn += len(g) - len(mg)
        fp += len(p) - len(mg)
        prev_id[mg] = mp
        prev_step[:] = -1
        prev_step[mg] = mp
    mota = (tp - fp - idsw) / max(1, tp + fn)
    return float(mota), idsw


def _identity(data, n_g: int, n_p: int, threshold: float = 0.5) -> float:
    overlap = np.zeros((n_g, n_p))
    total_g = total_p = 0
    for g, p, sim in data:
        total_g += len(g)
        total_p += len(p)
        if len(g) and len(p):
            gg, pp = np.nonzero(sim >= threshold - _EPS)
            np.add.at(overlap, (g[gg], p[pp]), 1)
    idtp = 0.0
    if n_g and n_p:
        rows, cols = _max_assignment(overlap)
        idtp = float(overlap[rows, cols].sum())
    denom = total_g + total_p
    return 2 * idtp / denom if denom else 0.0


def compare_table(reports: dict[str, MetricsReport] | Sequence[tuple[str, MetricsReport]],
                  fmt: str = "text") -> str:
    """Render reports with the method-comparison column layout, best HOTA first."""
    items = list(reports.items()) if isinstance(reports, dict) else list(reports)
    items.sort(key=lambda kv: -kv[1].HOTA)
    header = ("Method",) + TABLE_COLUMNS
    body = [(name,) + tuple(f"{getattr(rep, c) * 100:.3f}" for c in TABLE_COLUMNS)
            for name, rep in items]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(body)
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown table format {fmt!r}")
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = [" | ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
             for row in [header] + body]
    lines.insert(1, "-+-".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
