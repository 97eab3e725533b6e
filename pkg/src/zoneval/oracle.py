"""Brute-force AP reference, used only by the test suite.

Everything here is deliberately re-derived from the metric definition with no
code shared with the production path: its own overlap computation, a plain
scan for the greedy match, and interpolated precision evaluated directly as
"the best precision at any recall >= r".  It only accepts small instances.
"""

from __future__ import annotations

from .coco import Dataset, DetectionSet
from .matching import EvalConfig

MAX_IMAGES = 6
MAX_DETS_PER_IMAGE = 10


def _overlap(a, b) -> float:
    ax0, ay0, ax1, ay1 = a.x, a.y, a.x + a.w, a.y + a.h
    bx0, by0, bx1, by1 = b.x, b.y, b.x + b.w, b.y + b.h
    w = min(ax1, bx1) - max(ax0, bx0)
    h = min(ay1, by1) - max(ay0, by0)
    if w <= 0 or h <= 0:
        return 0.0
    inter = w * h
    return inter / ((ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter)


def ap_oracle(ds: Dataset, dets: DetectionSet, cfg: EvalConfig) -> float | None:
    """Whole-image AP computed naively. Raises on instances too large.

    Returns None when no category has a countable ground truth.
    """
    if len(ds.images) > MAX_IMAGES:
        raise ValueError(f"oracle instance too large: {len(ds.images)} images")
    for img in ds.images:
        if len(dets.for_image(img.id)) > MAX_DETS_PER_IMAGE:
            raise ValueError(f"oracle instance too large: image {img.id} detections")

    lo, hi = cfg.scale_range if cfg.scale_range is not None else (0.0, float("inf"))

    ap_values = []
    for cat in ds.categories:
        # gather per-image records for this category
        n_countable = 0
        per_image = []
        for img in ds.images:
            gts = [g for g in ds.gts_by_image[img.id] if g.category_id == cat.id]
            capped = dets.for_image(img.id)[: cfg.max_dets_per_image]
            dts = [d for d in capped if d.category_id == cat.id]
            gt_ignored = [g.ignore or not (lo <= g.area < hi) for g in gts]
            n_countable += gt_ignored.count(False)
            per_image.append((gts, gt_ignored, dts))
        if n_countable == 0:
            continue

        thr_aps = []
        for t in cfg.iou_thresholds:
            outcomes = []  # (score, seq, kind) with kind in {"tp", "fp"}; ignored dropped
            seq = 0
            for gts, gt_ignored, dts in per_image:
                used = [False] * len(gts)
                for d in dts:
                    # best unmatched real gt, then best unmatched ignored gt
                    best, best_iou = -1, -1.0
                    for gi, g in enumerate(gts):
                        if used[gi] or gt_ignored[gi]:
                            continue
                        ov = _overlap(d.bbox, g.bbox)
                        if ov >= t and ov >= best_iou:
                            best, best_iou = gi, ov
                    if best >= 0:
                        used[best] = True
                        outcomes.append((d.score, seq, "tp"))
                        seq += 1
                        continue
                    best, best_iou = -1, -1.0
                    for gi, g in enumerate(gts):
                        if used[gi] or not gt_ignored[gi]:
                            continue
                        ov = _overlap(d.bbox, g.bbox)
                        if ov >= t and ov >= best_iou:
                            best, best_iou = gi, ov
                    if best >= 0:
                        used[best] = True  # absorbed by an ignored gt
                        seq += 1
                        continue
                    if lo <= d.bbox.w * d.bbox.h < hi:
                        outcomes.append((d.score, seq, "fp"))
                    seq += 1

            outcomes.sort(key=lambda o: (-o[0], o[1]))
            pr_points = []
            tp = fp = 0
            for _, _, kind in outcomes:
                tp += kind == "tp"
                fp += kind == "fp"
                pr_points.append((tp / n_countable, tp / (tp + fp)))

            total = 0.0
            for k in range(cfg.recall_points):
                r = k / (cfg.recall_points - 1)
                best_p = 0.0
                for rec, prec in pr_points:
                    if rec >= r and prec > best_p:
                        best_p = prec
                total += best_p
            thr_aps.append(total / cfg.recall_points)
        ap_values.append(sum(thr_aps) / len(thr_aps))

    if not ap_values:
        return None
    return sum(ap_values) / len(ap_values)
