"""Evaluation: keypoint matching, precision/recall/F1, IoU, APEK and
symbol-level scores.

Keypoint matching is greedy one-to-one in ascending distance, same
class only, and strict: a pair at exactly tau_p does not match. APEK
(average position error of keypoints) averages, over every detection,
the distance to its nearest same-class ground-truth point; a class
with no ground truth falls back to the nearest point of any class.
APEK over zero detections is undefined and raises.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .primitives import Keypoint, RectangleSymbol, RegionBox

DEFAULT_TAU_P = 2.0
DEFAULT_TAU_O = 0.5


@dataclass
class MatchResult:
    pairs: list[tuple[int, int, float]]  # (pred index, gt index, distance)
    unmatched_pred: list[int]
    unmatched_gt: list[int]

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fp(self) -> int:
        return len(self.unmatched_pred)

    @property
    def fn(self) -> int:
        return len(self.unmatched_gt)


def match_keypoints(
    pred: Sequence[Keypoint], gt: Sequence[Keypoint], tau_p: float = DEFAULT_TAU_P
) -> MatchResult:
    """Greedy one-to-one matching by ascending distance among same-class
    pairs with distance strictly below tau_p."""
    candidates: list[tuple[float, int, int]] = []
    for i, p in enumerate(pred):
        for j, g in enumerate(gt):
            if p.type_id != g.type_id:
                continue
            d = math.hypot(p.x - g.x, p.y - g.y)
            if d < tau_p:
                candidates.append((d, i, j))
    candidates.sort()
    used_p: set[int] = set()
    used_g: set[int] = set()
    pairs: list[tuple[int, int, float]] = []
    for d, i, j in candidates:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        pairs.append((i, j, d))
    return MatchResult(
        pairs=pairs,
        unmatched_pred=[i for i in range(len(pred)) if i not in used_p],
        unmatched_gt=[j for j in range(len(gt)) if j not in used_g],
    )


def precision_recall_f1(
    match: MatchResult | int, fp: int | None = None, fn: int | None = None
) -> tuple[float, float, float]:
    """P = tp/(tp+fp), R = tp/(tp+fn), F1 harmonic mean; any undefined
    ratio is 0 by convention. Accepts a MatchResult or raw counts."""
    if isinstance(match, MatchResult):
        tp, fp, fn = match.tp, match.fp, match.fn
    else:
        tp = match
        if fp is None or fn is None:
            raise TypeError("counts form requires tp, fp and fn")
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def box_iou(
    a: tuple[float, float, float, float], b: tuple[float, float, float, float]
) -> float:
    """Intersection over union of two axis-aligned boxes (x0, y0, x1, y1)
    with continuous areas."""
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    if ax1 < ax0 or ay1 < ay0 or bx1 < bx0 or by1 < by0:
        raise ValueError("boxes must satisfy x0 <= x1 and y0 <= y1")
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    area_a = (ax1 - ax0) * (ay1 - ay0)
    area_b = (bx1 - bx0) * (by1 - by0)
    union = area_a + area_b - inter
    if union <= 0:
        return 0.0
    return inter / union


def match_boxes(
    pred: Sequence[RegionBox], gt: Sequence[RegionBox], tau_o: float = DEFAULT_TAU_O
) -> MatchResult:
    """One-to-one greedy matching by descending IoU among same-class
    pairs with IoU > tau_o. The third pair element holds the IoU."""
    cands: list[tuple[float, int, int]] = []
    for i, a in enumerate(pred):
        for j, b in enumerate(gt):
            if a.region_class != b.region_class:
                continue
            v = box_iou((a.x0, a.y0, a.x1, a.y1), (b.x0, b.y0, b.x1, b.y1))
            if v > tau_o:
                cands.append((-v, i, j))
    cands.sort()
    used_p: set[int] = set()
    used_g: set[int] = set()
    pairs: list[tuple[int, int, float]] = []
    for nv, i, j in cands:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        pairs.append((i, j, -nv))
    return MatchResult(
        pairs=pairs,
        unmatched_pred=[i for i in range(len(pred)) if i not in used_p],
        unmatched_gt=[j for j in range(len(gt)) if j not in used_g],
    )


def box_f1(
    pred: Sequence[RegionBox], gt: Sequence[RegionBox], tau_o: float = DEFAULT_TAU_O
) -> tuple[float, float, float]:
    return precision_recall_f1(match_boxes(pred, gt, tau_o))


def apek(pred: Sequence[Keypoint], gt: Sequence[Keypoint]) -> float:
    """Mean distance from each detection to its nearest same-class
    ground-truth point (any class when the detection's class has no
    ground truth). Undefined for zero detections."""
    if not pred:
        raise ValueError("APEK is undefined for zero detections")
    if not gt:
        raise ValueError("APEK needs at least one ground-truth point")
    by_class: dict[int, list[Keypoint]] = {}
    for g in gt:
        by_class.setdefault(g.type_id, []).append(g)
    total = 0.0
    for p in pred:
        pool = by_class.get(p.type_id, gt)
        total += min(math.hypot(p.x - g.x, p.y - g.y) for g in pool)
    return total / len(pred)


# ------------------------------------------------------------- per-class


@dataclass
class MetricsRow:
    label: str
    precision: float
    recall: float
    f1: float
    apek: float  # nan when the class has no detections
    support: int  # number of ground-truth points


def evaluate_keypoints(
    pred: Sequence[Keypoint],
    gt: Sequence[Keypoint],
    tau_p: float = DEFAULT_TAU_P,
) -> list[MetricsRow]:
    """Per-class rows for every class present in pred or gt, plus an
    'all' aggregate row (micro-averaged counts, APEK over everything)."""
    rows: list[MetricsRow] = []
    classes = sorted({p.type_id for p in pred} | {g.type_id for g in gt})
    for c in classes:
        pc = [p for p in pred if p.type_id == c]
        gc = [g for g in gt if g.type_id == c]
        m = match_keypoints(pc, gc, tau_p)
        p_, r_, f_ = precision_recall_f1(m.tp, m.fp, m.fn)
        a = apek(pc, gt) if pc else float("nan")
        rows.append(MetricsRow(str(c), p_, r_, f_, a, len(gc)))
    m = match_keypoints(pred, gt, tau_p)
    p_, r_, f_ = precision_recall_f1(m.tp, m.fp, m.fn)
    a = apek(pred, gt) if pred else float("nan")
    rows.append(MetricsRow("all", p_, r_, f_, a, len(gt)))
    return rows


def evaluate_keypoint_sets(
    image_pairs: Sequence[tuple[Sequence[Keypoint], Sequence[Keypoint]]],
    tau_p: float = DEFAULT_TAU_P,
) -> list[MetricsRow]:
    """Aggregate over (pred, gt) pairs from independent images.

    Matching runs per image (coordinates from different images never
    pair); counts are micro-averaged. APEK averages each detection's
    nearest-GT distance within its own image; detections in an image
    that has no ground truth count as FP but carry no distance.
    """
    tp: dict[int, int] = {}
    fp: dict[int, int] = {}
    fn: dict[int, int] = {}
    support: dict[int, int] = {}
    dist_sum: dict[int, float] = {}
    dist_n: dict[int, int] = {}

    def bump(d: dict[int, int], c: int, by: int = 1) -> None:
        d[c] = d.get(c, 0) + by

    for pred, gt in image_pairs:
        m = match_keypoints(pred, gt, tau_p)
        for i, j, _ in m.pairs:
            bump(tp, pred[i].type_id)
        for i in m.unmatched_pred:
            bump(fp, pred[i].type_id)
        for j in m.unmatched_gt:
            bump(fn, gt[j].type_id)
        for g in gt:
            bump(support, g.type_id)
        if gt:
            by_class: dict[int, list[Keypoint]] = {}
            for g in gt:
                by_class.setdefault(g.type_id, []).append(g)
            for p in pred:
                pool = by_class.get(p.type_id, gt)
                d = min(math.hypot(p.x - g.x, p.y - g.y) for g in pool)
                dist_sum[p.type_id] = dist_sum.get(p.type_id, 0.0) + d
                bump(dist_n, p.type_id)

    classes = sorted(set(tp) | set(fp) | set(fn) | set(support))
    rows: list[MetricsRow] = []
    for c in classes:
        p_, r_, f_ = precision_recall_f1(tp.get(c, 0), fp.get(c, 0), fn.get(c, 0))
        a = dist_sum.get(c, 0.0) / dist_n[c] if dist_n.get(c) else float("nan")
        rows.append(MetricsRow(str(c), p_, r_, f_, a, support.get(c, 0)))
    p_, r_, f_ = precision_recall_f1(
        sum(tp.values()), sum(fp.values()), sum(fn.values())
    )
    total_n = sum(dist_n.values())
    a = sum(dist_sum.values()) / total_n if total_n else float("nan")
    rows.append(MetricsRow("all", p_, r_, f_, a, sum(support.values())))
    return rows


# ------------------------------------------------------------- symbols


def _symbol_match_distance(
    a: RectangleSymbol, b: RectangleSymbol, tau_p: float
) -> float | None:
    """Mean vertex distance when every vertex of `a` pairs one-to-one
    with a vertex of `b` within tau_p; None when they do not match."""
    if a.symbol_class != b.symbol_class or len(a.keypoints) != len(b.keypoints):
        return None
    cands: list[tuple[float, int, int]] = []
    for i, p in enumerate(a.keypoints):
        for j, q in enumerate(b.keypoints):
            d = math.hypot(p.x - q.x, p.y - q.y)
            if d < tau_p:
                cands.append((d, i, j))
    cands.sort()
    used_a: set[int] = set()
    used_b: set[int] = set()
    total = 0.0
    for d, i, j in cands:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        total += d
    if len(used_a) != len(a.keypoints):
        return None
    return total / len(a.keypoints)


def match_symbols(
    pred: Sequence[RectangleSymbol],
    gt: Sequence[RectangleSymbol],
    tau_p: float = DEFAULT_TAU_P,
) -> MatchResult:
    cands: list[tuple[float, int, int]] = []
    for i, a in enumerate(pred):
        for j, b in enumerate(gt):
            d = _symbol_match_distance(a, b, tau_p)
            if d is not None:
                cands.append((d, i, j))
    cands.sort()
    used_p: set[int] = set()
    used_g: set[int] = set()
    pairs: list[tuple[int, int, float]] = []
    for d, i, j in cands:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        pairs.append((i, j, d))
    return MatchResult(
        pairs=pairs,
        unmatched_pred=[i for i in range(len(pred)) if i not in used_p],
        unmatched_gt=[j for j in range(len(gt)) if j not in used_g],
    )


def symbol_f1(
    pred: Sequence[RectangleSymbol],
    gt: Sequence[RectangleSymbol],
    tau_p: float = DEFAULT_TAU_P,
) -> tuple[float, float, float]:
    m = match_symbols(pred, gt, tau_p)
    return precision_recall_f1(m.tp, m.fp, m.fn)


# ------------------------------------------------------------- CSV


def write_metrics_csv(rows: Sequence[MetricsRow], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["class", "precision", "recall", "f1", "apek", "support"])
        for r in rows:
            w.writerow(
                [
                    r.label,
                    f"{r.precision:.6f}",
                    f"{r.recall:.6f}",
                    f"{r.f1:.6f}",
                    "nan" if math.isnan(r.apek) else f"{r.apek:.6f}",
                    r.support,
                ]
            )


def read_metrics_csv(path: str | Path) -> list[MetricsRow]:
    rows: list[MetricsRow] = []
    with open(path, newline="") as f:
        for rec in csv.DictReader(f):
            rows.append(
                MetricsRow(
                    rec["class"],
                    float(rec["precision"]),
                    float(rec["recall"]),
                    float(rec["f1"]),
                    float(rec["apek"]),
                    int(rec["support"]),
                )
            )
    return rows
