import json

import pytest

from zoneval.coco import BBox, Category, Dataset, Detection, DetectionSet, GroundTruth, ImageInfo


@pytest.fixture
def square_image() -> ImageInfo:
    return ImageInfo(id=1, width=600.0, height=600.0)


@pytest.fixture
def mini_dataset() -> Dataset:
    """3 images, 7 boxes, 4 categories."""
    images = [ImageInfo(id=i, width=400.0, height=300.0) for i in (1, 2, 3)]
    categories = [Category(id=c, name=f"class-{c}") for c in (1, 2, 3, 4)]
    boxes = [
        (1, 1, BBox(10, 10, 40, 30)),
        (2, 1, BBox(100, 50, 60, 60)),
        (3, 2, BBox(200, 100, 50, 40)),
        (1, 2, BBox(20, 200, 80, 50)),
        (2, 3, BBox(300, 30, 30, 30)),
        (3, 3, BBox(150, 150, 90, 70)),
        (1, 4, BBox(50, 60, 45, 45)),
    ]
    gts = [
        GroundTruth(id=i + 1, image_id=img_id, category_id=cat_id, bbox=bbox, area=bbox.area)
        for i, (img_id, cat_id, bbox) in enumerate(boxes)
    ]
    return Dataset(images, categories, gts)


@pytest.fixture
def mini_detections(mini_dataset) -> DetectionSet:
    """One detection per ground truth at IoU 1, plus one far false positive."""
    dets = [
        Detection(g.image_id, g.category_id, g.bbox, 0.9) for g in mini_dataset.ground_truths
    ]
    dets.append(Detection(1, 1, BBox(350, 250, 20, 20), 0.3))
    return DetectionSet(dets, mini_dataset)


def write_coco_gt(path, dataset: Dataset) -> None:
    path.write_text(json.dumps(dataset.to_coco_dict()))


def write_coco_dt(path, detections: DetectionSet) -> None:
    path.write_text(json.dumps(detections.to_coco_list()))
