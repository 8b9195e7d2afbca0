"""COCO-style ground truth and detector outputs, with lighting-condition flags.

Ground-truth files follow the COCO annotation schema restricted to the three
street classes (person, bicycle, car).  Instance-level lighting flags, when a
subset carries them, live under each annotation's ``"attributes"`` object as
booleans ``extreme`` / ``truncated`` / ``occluded``; a key-mapping argument
adapts files that encode them under different names.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

from .imgcore import ValidationError

CLASSES = ("person", "bicycle", "car")
DEFAULT_CATEGORY_IDS = {"person": 1, "bicycle": 2, "car": 3}
_FLAG_NAMES = ("extreme", "truncated", "occluded")

BBox = tuple[float, float, float, float]


def _check_bbox(bbox: Sequence[float], what: str) -> BBox:
    if len(bbox) != 4:
        raise ValidationError(f"{what}: bbox must have 4 entries, got {len(bbox)}")
    x, y, w, h = (float(v) for v in bbox)
    if w <= 0 or h <= 0:
        raise ValidationError(f"{what}: bbox extent must be positive, got w={w}, h={h}")
    return (x, y, w, h)


@dataclass(frozen=True)
class ImageInfo:
    id: int
    file_name: str
    width: int
    height: int


@dataclass(frozen=True)
class Instance:
    """One ground-truth object; lighting flags are None on unflagged subsets."""

    id: int
    image_id: int
    category: str
    bbox: BBox
    extreme: Optional[bool] = None
    truncated: Optional[bool] = None
    occluded: Optional[bool] = None

    def __post_init__(self):
        if self.category not in CLASSES:
            raise ValidationError(f"unknown category {self.category!r}")
        object.__setattr__(self, "bbox", _check_bbox(self.bbox, f"instance {self.id}"))


@dataclass(frozen=True)
class Detection:
    """A scored, class-labeled box from an external detector."""

    image_id: int
    category: str
    bbox: BBox
    score: float

    def __post_init__(self):
        if self.category not in CLASSES:
            raise ValidationError(f"unknown category {self.category!r}")
        object.__setattr__(self, "bbox", _check_bbox(self.bbox, "detection"))
        if not (0.0 <= self.score <= 1.0):
            raise ValidationError(f"detection score must be in [0, 1], got {self.score}")


@dataclass
class AnnotationSet:
    """Validated ground truth: images, instances, and the category table."""

    images: list[ImageInfo]
    instances: list[Instance]
    categories: dict[int, str] = field(
        default_factory=lambda: {v: k for k, v in DEFAULT_CATEGORY_IDS.items()}
    )
    clipped: int = 0  # boxes adjusted to image bounds on load

    def __post_init__(self):
        ids = {im.id for im in self.images}
        if len(ids) != len(self.images):
            raise ValidationError("duplicate image ids")
        for inst in self.instances:
            if inst.image_id not in ids:
                raise ValidationError(
                    f"instance {inst.id} references unknown image id {inst.image_id}"
                )
        for name in self.categories.values():
            if name not in CLASSES:
                raise ValidationError(f"unknown category {name!r}")

    def image_by_id(self, image_id: int) -> ImageInfo:
        for im in self.images:
            if im.id == image_id:
                return im
        raise ValidationError(f"unknown image id {image_id}")

    def category_id(self, name: str) -> int:
        for cid, cname in self.categories.items():
            if cname == name:
                return cid
        raise ValidationError(f"category {name!r} not in category table")


@dataclass(frozen=True)
class DatasetStats:
    """Aggregate counts; flag counts are None when no instance carries the flag."""

    images: int
    instances: int
    per_class: dict[str, int]
    extreme: Optional[int]
    truncated: Optional[int]
    occluded: Optional[int]


def _clip_bbox(bbox: BBox, info: ImageInfo) -> tuple[BBox, bool]:
    x, y, w, h = bbox
    x0 = min(max(x, 0.0), float(info.width))
    y0 = min(max(y, 0.0), float(info.height))
    x1 = min(max(x + w, 0.0), float(info.width))
    y1 = min(max(y + h, 0.0), float(info.height))
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        raise ValidationError(
            f"bbox {bbox} lies entirely outside image {info.id} "
            f"({info.width}x{info.height})"
        )
    clipped = (x0, y0, x1 - x0, y1 - y0)
    return clipped, clipped != bbox


def _flag_value(attributes: Mapping, key: str, ann_id) -> Optional[bool]:
    if key not in attributes:
        return None
    value = attributes[key]
    if not isinstance(value, bool):
        raise ValidationError(
            f"annotation {ann_id}: attribute {key!r} must be a boolean, got {value!r}"
        )
    return value


def load_annotations(
    path: str | os.PathLike,
    attribute_keys: Optional[Mapping[str, str]] = None,
) -> AnnotationSet:
    """Load and validate a COCO-format annotation file.

    ``attribute_keys`` maps the canonical flag names (extreme, truncated,
    occluded) to the keys used inside each annotation's attributes object,
    for files that encode the flags under different names.
    """
    keys = dict(attribute_keys) if attribute_keys else {n: n for n in _FLAG_NAMES}
    for name in keys:
        if name not in _FLAG_NAMES:
            raise ValidationError(f"unknown attribute mapping {name!r}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: top level must be a JSON object")

    try:
        categories = {int(c["id"]): str(c["name"]) for c in raw.get("categories", [])}
        images = [
            ImageInfo(
                id=int(im["id"]),
                file_name=str(im["file_name"]),
                width=int(im["width"]),
                height=int(im["height"]),
            )
            for im in raw.get("images", [])
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: schema violation: {exc}") from exc

    by_id = {im.id: im for im in images}
    instances = []
    clipped_count = 0
    for ann in raw.get("annotations", []):
        try:
            ann_id = int(ann["id"])
            image_id = int(ann["image_id"])
            category_id = int(ann["category_id"])
            bbox = _check_bbox(ann["bbox"], f"annotation {ann_id}")
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}: malformed annotation: {exc}") from exc
        if category_id not in categories:
            raise ValidationError(f"{path}: unknown category id {category_id}")
        if image_id not in by_id:
            raise ValidationError(
                f"{path}: annotation {ann_id} references unknown image id {image_id}"
            )
        if ann.get("iscrowd"):
            raise ValidationError(f"{path}: crowd annotations are unsupported (id {ann_id})")
        bbox, was_clipped = _clip_bbox(bbox, by_id[image_id])
        clipped_count += was_clipped
        attributes = ann.get("attributes", {})
        if not isinstance(attributes, dict):
            raise ValidationError(f"{path}: annotation {ann_id}: attributes must be an object")
        instances.append(
            Instance(
                id=ann_id,
                image_id=image_id,
                category=categories[category_id],
                bbox=bbox,
                extreme=_flag_value(attributes, keys.get("extreme", "extreme"), ann_id),
                truncated=_flag_value(attributes, keys.get("truncated", "truncated"), ann_id),
                occluded=_flag_value(attributes, keys.get("occluded", "occluded"), ann_id),
            )
        )
    return AnnotationSet(
        images=images, instances=instances, categories=categories, clipped=clipped_count
    )


def save_annotations(annset: AnnotationSet, path: str | os.PathLike) -> None:
    """Write back in COCO format; load(save(x)) is a fixpoint."""
    name_to_id = {name: cid for cid, name in annset.categories.items()}
    annotations = []
    for inst in annset.instances:
        ann: dict = {
            "id": inst.id,
            "image_id": inst.image_id,
            "category_id": name_to_id[inst.category],
            "bbox": list(inst.bbox),
            "area": inst.bbox[2] * inst.bbox[3],
            "iscrowd": 0,
        }
        attributes = {
            name: getattr(inst, name)
            for name in _FLAG_NAMES
            if getattr(inst, name) is not None
        }
        if attributes:
            ann["attributes"] = attributes
        annotations.append(ann)
    doc = {
        "images": [
            {"id": im.id, "file_name": im.file_name, "width": im.width, "height": im.height}
            for im in annset.images
        ],
        "annotations": annotations,
        "categories": [
            {"id": cid, "name": name} for cid, name in sorted(annset.categories.items())
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_detections(
    path: str | os.PathLike,
    categories: Optional[Mapping[int, str]] = None,
) -> list[Detection]:
    """Load a COCO results array; malformed entries are reported with their index."""
    id_to_name = dict(categories) if categories else {
        v: k for k, v in DEFAULT_CATEGORY_IDS.items()
    }
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(raw, list):
        raise ValidationError(f"{path}: detections must be a JSON array")
    dets = []
    for i, entry in enumerate(raw):
        try:
            category_id = int(entry["category_id"])
            if category_id not in id_to_name:
                raise ValidationError(f"unknown category id {category_id}")
            dets.append(
                Detection(
                    image_id=int(entry["image_id"]),
                    category=id_to_name[category_id],
                    bbox=tuple(float(v) for v in entry["bbox"]),
                    score=float(entry["score"]),
                )
            )
        except (KeyError, TypeError, ValueError, ValidationError) as exc:
            raise ValidationError(f"{path}: detection entry {i}: {exc}") from exc
    return dets


def save_detections(
    dets: Sequence[Detection],
    path: str | os.PathLike,
    categories: Optional[Mapping[int, str]] = None,
) -> None:
    id_map = dict(categories) if categories else {v: k for k, v in DEFAULT_CATEGORY_IDS.items()}
    name_to_id = {name: cid for cid, name in id_map.items()}
    doc = [
        {
            "image_id": d.image_id,
            "category_id": name_to_id[d.category],
            "bbox": list(d.bbox),
            "score": d.score,
        }
        for d in dets
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def dataset_stats(annset: AnnotationSet) -> DatasetStats:
    """Counts of images, instances overall and per class, and flagged instances."""
    per_class = {name: 0 for name in CLASSES}
    for inst in annset.instances:
        per_class[inst.category] += 1
    flag_counts: dict[str, Optional[int]] = {}
    for name in _FLAG_NAMES:
        values = [getattr(inst, name) for inst in annset.instances]
        present = [v for v in values if v is not None]
        flag_counts[name] = sum(present) if present else None
    return DatasetStats(
        images=len(annset.images),
        instances=len(annset.instances),
        per_class=per_class,
        extreme=flag_counts["extreme"],
        truncated=flag_counts["truncated"],
        occluded=flag_counts["occluded"],
    )


def filter_instances(
    annset: AnnotationSet,
    include_extreme: Optional[bool] = None,
    exclude_truncated: bool = False,
    exclude_occluded: bool = False,
) -> AnnotationSet:
    """Drop instances failing the lighting-condition predicates; images stay.

    ``include_extreme`` is tri-state: None keeps everything, True keeps only
    extreme-flagged instances, False keeps only non-extreme ones.  Requesting
    a flag-based filter on instances that lack the flag is an error.
    """
    def require(inst: Instance, name: str) -> bool:
        value = getattr(inst, name)
        if value is None:
            raise ValidationError(
                f"instance {inst.id} has no {name!r} flag; cannot filter on it"
            )
        return value

    kept = []
    for inst in annset.instances:
        if include_extreme is not None and require(inst, "extreme") != include_extreme:
            continue
        if exclude_truncated and require(inst, "truncated"):
            continue
        if exclude_occluded and require(inst, "occluded"):
            continue
        kept.append(inst)
    return replace(annset, instances=kept)
