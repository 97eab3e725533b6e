"""Zone-restricted evaluation: ZP series, variance, scale studies, heatmaps.

Each zone is evaluated as a standalone sub-problem containing exactly the
ground truths and detections whose box centers fall in it, so the union of
all zones reproduces the full-image evaluation and the whole-image zone
reproduces AP bit-for-bit.

Per-image work units are pure, so they can run on any number of workers; the
reduction merges fragments keyed by image id and is therefore independent of
arrival order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from multiprocessing import get_context

from .coco import Dataset, Detection, DetectionSet, GroundTruth, ImageInfo, bbox_center
from .matching import EvalConfig, MatchFragment, MatchTable, ap_from_matches, ap_per_threshold, match_image
from .zones import Grid, Partition, build_partition, spec_label

FULL_ZONE = "__full__"


@dataclass
class ZoneResult:
    zone_id: str
    zp: float | None  # percent
    zp_by_threshold: list[float | None]
    gt_count: int
    det_count: int
    area_fraction: float


@dataclass
class ZoneReport:
    partition: str
    iou_thresholds: tuple[float, ...]
    zones: list[ZoneResult]
    zp_variance: float | None  # percent^2, over zones with defined ZP
    full_ap: float | None  # percent
    undefined_zones: list[str]

    def zp_series(self) -> list[float | None]:
        return [z.zp for z in self.zones]

    def to_json_dict(self) -> dict:
        return {
            "meta": {
                "partition": self.partition,
                "iou_thresholds": list(self.iou_thresholds),
            },
            "zones": [
                {
                    "id": z.zone_id,
                    "zp": z.zp,
                    "zp_by_threshold": z.zp_by_threshold,
                    "gt_count": z.gt_count,
                    "det_count": z.det_count,
                    "area_fraction": z.area_fraction,
                }
                for z in self.zones
            ],
            "variance": self.zp_variance,
            "full_ap": self.full_ap,
            "undefined_zones": self.undefined_zones,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"

    def write_csv(self, f) -> None:
        writer = csv.writer(f)
        header = ["zone", "zp", "gt_count", "det_count", "area_fraction"]
        header += [f"zp@{t:g}" for t in self.iou_thresholds]
        writer.writerow(header)
        for z in self.zones:
            row = [z.zone_id, _cell(z.zp), z.gt_count, z.det_count, repr(z.area_fraction)]
            row += [_cell(v) for v in z.zp_by_threshold]
            writer.writerow(row)


def _cell(v: float | None) -> str:
    return "" if v is None else repr(v)


def zp_variance(zps: list[float]) -> float:
    """Population variance of a zone-metric series (percent^2).

    A constant series returns exactly 0.0 (the rounded mean of n equal floats
    can otherwise leave residue on the order of 1e-32).
    """
    if not zps:
        raise ValueError("variance of an empty ZP series is undefined")
    if all(z == zps[0] for z in zps):
        return 0.0
    mean = sum(zps) / len(zps)
    return sum((z - mean) ** 2 for z in zps) / len(zps)


def _image_fragments(
    img: ImageInfo,
    gts: list[GroundTruth],
    dets: list[Detection],
    partition: Partition,
    cfg: EvalConfig,
) -> tuple[int, dict[str, dict[int, MatchFragment]], dict[str, int], dict[str, int]]:
    """Per-image evaluation unit: fragments per (zone | FULL_ZONE, category).

    Pure function of its arguments; safe to run on any worker.
    """
    if cfg.cap_after_zone:
        capped = dets
    else:
        capped = dets[: cfg.max_dets_per_image]

    gt_zone = [partition.zone_of_clamped(bbox_center(g.bbox), img) for g in gts]
    det_zone = [partition.zone_of_clamped(bbox_center(d.bbox), img) for d in capped]

    buckets: dict[str, tuple[list[GroundTruth], list[Detection]]] = {
        zid: ([], []) for zid in partition.zone_ids
    }
    for g, zid in zip(gts, gt_zone):
        buckets[zid][0].append(g)
    for d, zid in zip(capped, det_zone):
        buckets[zid][1].append(d)
    if cfg.cap_after_zone:
        buckets = {
            zid: (zg, zd[: cfg.max_dets_per_image]) for zid, (zg, zd) in buckets.items()
        }
        full_dets = dets[: cfg.max_dets_per_image]
    else:
        full_dets = capped
    buckets[FULL_ZONE] = (gts, full_dets)

    fragments: dict[str, dict[int, MatchFragment]] = {}
    gt_counts: dict[str, int] = {}
    det_counts: dict[str, int] = {}
    for zid, (zgts, zdets) in buckets.items():
        if zid != FULL_ZONE:
            gt_counts[zid] = len(zgts)
            det_counts[zid] = len(zdets)
        if not zgts and not zdets:
            continue
        per_cat: dict[int, MatchFragment] = {}
        cats = sorted({g.category_id for g in zgts} | {d.category_id for d in zdets})
        for cat in cats:
            cgts = [g for g in zgts if g.category_id == cat]
            cdets = [d for d in zdets if d.category_id == cat]
            per_cat[cat] = match_image(cgts, cdets, cfg)
        fragments[zid] = per_cat
    return img.id, fragments, gt_counts, det_counts


def _worker_chunk(args) -> list:
    payloads, partition, cfg = args
    return [_image_fragments(img, gts, dets, partition, cfg) for img, gts, dets in payloads]


def evaluate_zones(
    ds: Dataset,
    dets: DetectionSet,
    partition: Partition,
    cfg: EvalConfig | None = None,
    workers: int = 1,
) -> ZoneReport:
    """Evaluate every zone of a partition plus the whole image.

    Zones with no ground truth in any category get an undefined ZP; they are
    reported in ``undefined_zones`` and excluded from the variance.  The
    output is identical for any worker count.
    """
    cfg = cfg or EvalConfig()
    zone_ids = partition.zone_ids
    n_thr = len(cfg.iou_thresholds)
    cats = ds.category_ids

    tables = {zid: MatchTable(cats, n_thr) for zid in zone_ids}
    tables[FULL_ZONE] = MatchTable(cats, n_thr)
    gt_counts = {zid: 0 for zid in zone_ids}
    det_counts = {zid: 0 for zid in zone_ids}

    payloads = [(img, ds.gts_by_image[img.id], dets.for_image(img.id)) for img in ds.images]

    if workers <= 1 or len(payloads) < 2:
        results = (_image_fragments(img, g, d, partition, cfg) for img, g, d in payloads)
    else:
        chunk = max(1, math.ceil(len(payloads) / (workers * 4)))
        jobs = [
            (payloads[i : i + chunk], partition, cfg) for i in range(0, len(payloads), chunk)
        ]
        with get_context().Pool(workers) as pool:
            chunks = pool.map(_worker_chunk, jobs)
        results = (r for ch in chunks for r in ch)

    for image_id, fragments, g_counts, d_counts in results:
        for zid, n in g_counts.items():
            gt_counts[zid] += n
        for zid, n in d_counts.items():
            det_counts[zid] += n
        for zid, per_cat in fragments.items():
            for cat, frag in per_cat.items():
                tables[zid].add(cat, image_id, frag)

    zone_results = []
    undefined = []
    defined_zps = []
    for zid in zone_ids:
        ap = ap_from_matches(tables[zid], cfg)
        per_thr = ap_per_threshold(tables[zid], cfg)
        zp = None if ap is None else 100.0 * ap
        if zp is None:
            undefined.append(zid)
        else:
            defined_zps.append(zp)
        zone_results.append(
            ZoneResult(
                zone_id=zid,
                zp=zp,
                zp_by_threshold=[None if v is None else 100.0 * v for v in per_thr],
                gt_count=gt_counts[zid],
                det_count=det_counts[zid],
                area_fraction=partition.area_fraction(zid),
            )
        )

    full = ap_from_matches(tables[FULL_ZONE], cfg)
    return ZoneReport(
        partition=spec_label(partition.spec),
        iou_thresholds=cfg.iou_thresholds,
        zones=zone_results,
        zp_variance=zp_variance(defined_zps) if defined_zps else None,
        full_ap=None if full is None else 100.0 * full,
        undefined_zones=undefined,
    )


SCALE_STEPS = (4, 8, 16, 32, 64, 128)
SCALE_CAP = 256


def scale_bins(r: int | None, cap: int = SCALE_CAP) -> list[tuple[float, float]]:
    """Area bins [(kr)^2, ((k+1)r)^2) up to cap^2, then a catch-all to infinity.

    r=None stands for the all-scales setting: a single [0, inf) bin.  The
    catch-all starts where the last finite bin ends, so the bins always cover
    [0, inf) even when r does not divide the cap.
    """
    if r is None:
        return [(0.0, math.inf)]
    bins = []
    k = 0
    while (k + 1) * r <= cap:
        bins.append((float((k * r) ** 2), float(((k + 1) * r) ** 2)))
        k += 1
    bins.append((bins[-1][1] if bins else 0.0, math.inf))
    return bins


@dataclass
class ScaleStudyReport:
    steps: tuple[int | None, ...]
    zone_ids: list[str]
    # per step: per-zone mean ZP over the bins where the zone has ground truth
    mean_zp: dict[int | None, list[float | None]]
    grand_mean: list[float | None]

    def to_json_dict(self) -> dict:
        return {
            "zone_ids": self.zone_ids,
            "per_scale_step": {
                "inf" if r is None else str(r): self.mean_zp[r] for r in self.steps
            },
            "grand_mean": self.grand_mean,
        }


def scale_study(
    ds: Dataset,
    dets: DetectionSet,
    partition: Partition,
    cfg: EvalConfig | None = None,
    steps: tuple[int | None, ...] = SCALE_STEPS + (None,),
    workers: int = 1,
) -> ScaleStudyReport:
    """Mean ZP per zone over object-scale bins, for each bin-width step.

    Each step r slices ground truth by box area into scale_bins(r); every bin
    is evaluated separately and a zone's mean is taken over the bins where it
    has a defined ZP.  The grand mean averages the per-step means.
    """
    cfg = cfg or EvalConfig()
    zone_ids = partition.zone_ids
    mean_zp: dict[int | None, list[float | None]] = {}
    for r in steps:
        sums = [0.0] * len(zone_ids)
        counts = [0] * len(zone_ids)
        for lo, hi in scale_bins(r):
            bin_cfg = replace(cfg, scale_range=(lo, hi))
            report = evaluate_zones(ds, dets, partition, bin_cfg, workers=workers)
            for zi, z in enumerate(report.zones):
                if z.zp is not None:
                    sums[zi] += z.zp
                    counts[zi] += 1
        mean_zp[r] = [s / c if c else None for s, c in zip(sums, counts)]

    grand: list[float | None] = []
    for zi in range(len(zone_ids)):
        vals = [mean_zp[r][zi] for r in steps if mean_zp[r][zi] is not None]
        grand.append(sum(vals) / len(vals) if vals else None)
    return ScaleStudyReport(tuple(steps), zone_ids, mean_zp, grand)


def grid_heatmap(
    ds: Dataset,
    dets: DetectionSet,
    rows: int,
    cols: int,
    thresholds: tuple[float, ...] | None = None,
    cfg: EvalConfig | None = None,
    workers: int = 1,
) -> list[list[float | None]]:
    """ZP matrix over a rows x cols grid; None marks cells without ground truth."""
    base = cfg or EvalConfig()
    eff = base if thresholds is None else replace(base, iou_thresholds=tuple(thresholds))
    partition = build_partition(Grid(rows, cols))
    report = evaluate_zones(ds, dets, partition, eff, workers=workers)
    by_id = {z.zone_id: z.zp for z in report.zones}
    return [[by_id[f"g{r}_{c}"] for c in range(cols)] for r in range(rows)]


def write_heatmap_csv(matrix: list[list[float | None]], f) -> None:
    """Row-major CSV; undefined cells are left empty."""
    writer = csv.writer(f)
    for row in matrix:
        writer.writerow([_cell(v) for v in row])


def read_heatmap_csv(f) -> list[list[float | None]]:
    out = []
    for row in csv.reader(f):
        out.append([None if cell == "" else float(cell) for cell in row])
    return out
