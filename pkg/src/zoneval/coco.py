"""COCO-format ground truth and detection results: parsing, validation, geometry.

The accepted files are bit-compatible with the public COCO format, so
third-party detector outputs evaluate unmodified.  Annotation files carry
top-level ``images``, ``annotations`` and ``categories`` keys; result files
are a flat list of ``{image_id, category_id, bbox, score}`` records.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import IngestError


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel coordinates, (x, y) = top-left corner."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for v in (self.x, self.y, self.w, self.h):
            if not math.isfinite(v):
                raise IngestError(f"non-finite bbox coordinate in {self!r}")
        if self.w <= 0 or self.h <= 0:
            raise IngestError(f"bbox dimensions must be positive, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h


def bbox_center(b: BBox) -> tuple[float, float]:
    """Center point of a box in pixels."""
    return (b.x + b.w / 2.0, b.y + b.h / 2.0)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0.0 when disjoint.

    Areas come from the same corner differences as the intersection, so
    identical boxes score exactly 1.0.
    """
    ax1, ay1 = a.x + a.w, a.y + a.h
    bx1, by1 = b.x + b.w, b.y + b.h
    iw = min(ax1, bx1) - max(a.x, b.x)
    ih = min(ay1, by1) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    area_a = (ax1 - a.x) * (ay1 - a.y)
    area_b = (bx1 - b.x) * (by1 - b.y)
    union = max(area_a + area_b - inter, inter)
    return inter / union


@dataclass(frozen=True)
class ImageInfo:
    id: int
    width: float
    height: float
    file_name: str = ""

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise IngestError(
                f"image {self.id}: dimensions must be positive, got {self.width}x{self.height}"
            )


@dataclass(frozen=True)
class Category:
    id: int
    name: str


@dataclass(frozen=True)
class GroundTruth:
    id: int
    image_id: int
    category_id: int
    bbox: BBox
    area: float
    ignore: bool = False


@dataclass(frozen=True)
class Detection:
    image_id: int
    category_id: int
    bbox: BBox
    score: float


class Dataset:
    """Validated, indexed ground truth. Immutable after construction.

    Lists are kept in stable order (sorted by id), so iteration and every
    downstream report are deterministic.
    """

    def __init__(
        self,
        images: list[ImageInfo],
        categories: list[Category],
        ground_truths: list[GroundTruth],
    ) -> None:
        self.images = sorted(images, key=lambda im: im.id)
        self.categories = sorted(categories, key=lambda c: c.id)
        self.ground_truths = sorted(ground_truths, key=lambda g: g.id)

        self.images_by_id = {im.id: im for im in self.images}
        if len(self.images_by_id) != len(self.images):
            raise IngestError("duplicate image id")
        self.categories_by_id = {c.id: c for c in self.categories}
        if len(self.categories_by_id) != len(self.categories):
            raise IngestError("duplicate category id")

        seen_ann = set()
        self.gts_by_image: dict[int, list[GroundTruth]] = {im.id: [] for im in self.images}
        for gt in self.ground_truths:
            if gt.id in seen_ann:
                raise IngestError(f"duplicate annotation id {gt.id}")
            seen_ann.add(gt.id)
            if gt.image_id not in self.images_by_id:
                raise IngestError(f"annotation {gt.id} references missing image {gt.image_id}")
            if gt.category_id not in self.categories_by_id:
                raise IngestError(
                    f"annotation {gt.id} references missing category {gt.category_id}"
                )
            if gt.area <= 0:
                raise IngestError(f"annotation {gt.id}: area must be positive")
            self.gts_by_image[gt.image_id].append(gt)

    @property
    def category_ids(self) -> list[int]:
        return [c.id for c in self.categories]

    @classmethod
    def from_coco_dict(cls, data: dict) -> "Dataset":
        for key in ("images", "annotations", "categories"):
            if key not in data:
                raise IngestError(f"annotation file missing top-level key '{key}'")
        images = []
        for rec in data["images"]:
            try:
                images.append(
                    ImageInfo(
                        id=int(rec["id"]),
                        width=float(rec["width"]),
                        height=float(rec["height"]),
                        file_name=str(rec.get("file_name", "")),
                    )
                )
            except KeyError as e:
                raise IngestError(f"image record {rec.get('id', '?')} missing field {e}") from e
        categories = []
        for rec in data["categories"]:
            try:
                categories.append(Category(id=int(rec["id"]), name=str(rec["name"])))
            except KeyError as e:
                raise IngestError(f"category record {rec.get('id', '?')} missing field {e}") from e
        gts = []
        for rec in data["annotations"]:
            ann_id = rec.get("id", "?")
            try:
                x, y, w, h = rec["bbox"]
                bbox = BBox(float(x), float(y), float(w), float(h))
            except IngestError as e:
                raise IngestError(f"annotation {ann_id}: {e}") from e
            except (KeyError, TypeError, ValueError) as e:
                raise IngestError(f"annotation {ann_id}: malformed bbox") from e
            area = float(rec["area"]) if "area" in rec and rec["area"] is not None else bbox.area
            gts.append(
                GroundTruth(
                    id=int(rec["id"]),
                    image_id=int(rec["image_id"]),
                    category_id=int(rec["category_id"]),
                    bbox=bbox,
                    area=area,
                    ignore=bool(rec.get("iscrowd", 0)),
                )
            )
        return cls(images, categories, gts)

    def to_coco_dict(self) -> dict:
        """Serialize back to the COCO annotation schema."""
        return {
            "images": [
                {"id": im.id, "width": im.width, "height": im.height, "file_name": im.file_name}
                for im in self.images
            ],
            "annotations": [
                {
                    "id": g.id,
                    "image_id": g.image_id,
                    "category_id": g.category_id,
                    "bbox": [g.bbox.x, g.bbox.y, g.bbox.w, g.bbox.h],
                    "area": g.area,
                    "iscrowd": 1 if g.ignore else 0,
                }
                for g in self.ground_truths
            ],
            "categories": [{"id": c.id, "name": c.name} for c in self.categories],
        }


class DetectionSet:
    """Scored detections grouped by image, each group sorted by descending score.

    Score ties keep input order, so evaluation does not depend on the sort
    implementation.  Immutable after construction.
    """

    def __init__(self, detections: list[Detection], dataset: Dataset) -> None:
        by_image: dict[int, list[Detection]] = {}
        for i, det in enumerate(detections):
            if det.image_id not in dataset.images_by_id:
                raise IngestError(f"detection #{i} references unknown image {det.image_id}")
            if det.category_id not in dataset.categories_by_id:
                raise IngestError(f"detection #{i} references unknown category {det.category_id}")
            if not math.isfinite(det.score):
                raise IngestError(f"detection #{i} has non-finite score")
            by_image.setdefault(det.image_id, []).append(det)
        # sorted() is stable: equal scores preserve input order
        self.by_image = {
            img_id: sorted(dets, key=lambda d: -d.score) for img_id, dets in by_image.items()
        }
        self.total = len(detections)

    def for_image(self, image_id: int) -> list[Detection]:
        return self.by_image.get(image_id, [])

    @classmethod
    def from_coco_list(cls, data: list, dataset: Dataset) -> "DetectionSet":
        if not isinstance(data, list):
            raise IngestError("results file must be a JSON list")
        dets = []
        for i, rec in enumerate(data):
            try:
                x, y, w, h = rec["bbox"]
                bbox = BBox(float(x), float(y), float(w), float(h))
                dets.append(
                    Detection(
                        image_id=int(rec["image_id"]),
                        category_id=int(rec["category_id"]),
                        bbox=bbox,
                        score=float(rec["score"]),
                    )
                )
            except IngestError as e:
                raise IngestError(f"detection #{i}: {e}") from e
            except (KeyError, TypeError, ValueError) as e:
                raise IngestError(f"detection #{i}: malformed record ({e})") from e
        return cls(dets, dataset)

    def to_coco_list(self) -> list[dict]:
        out = []
        for img_id in sorted(self.by_image):
            for d in self.by_image[img_id]:
                out.append(
                    {
                        "image_id": d.image_id,
                        "category_id": d.category_id,
                        "bbox": [d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h],
                        "score": d.score,
                    }
                )
        return out


def load_ground_truth(path: str | Path) -> Dataset:
    """Load and validate a COCO annotation file."""
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as e:
        raise IngestError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise IngestError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise IngestError(f"{path}: annotation file must be a JSON object")
    return Dataset.from_coco_dict(data)


def load_detections(path: str | Path, dataset: Dataset) -> DetectionSet:
    """Load a COCO results file and resolve it against a dataset."""
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as e:
        raise IngestError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise IngestError(f"{path} is not valid JSON: {e}") from e
    return DetectionSet.from_coco_list(data, dataset)
