"""Annotation and detection file formats.

Handles the two on-disk layouts the toolkit speaks:

* YOLO text labels: one box per line, ``class cx cy w h`` for ground truth or
  ``class cx cy w h confidence`` for detections, coordinates normalized.
* COCO-layout JSON: ``images``/``annotations``/``categories`` arrays for
  ground truth, a flat array of ``{image_id, category_id, bbox, score}``
  objects for detections.

The single category is "hand" (id 1); class index 0 is the only valid class
in label lines.  Image ids are opaque strings, conventionally
``datasettag/relativepath`` so ids from different source datasets can never
collide.  Image sizes come from a sidecar size index ("image-id width height"
lines) rather than from decoding images.

Parsing and conversion of distinct files are independent and may run
concurrently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import FieldRangeError, LabelParseError, MissingSizeError
from .geometry import BBox, ImageSize, NormalizedBox, to_absolute, to_normalized
from .manifest import (  # noqa: F401  (manifest maintenance is part of this module's surface)
    DatasetManifest,
    build_manifest,
    load_manifest,
    merge_manifests,
    save_manifest,
)

__all__ = [
    "DatasetManifest",
    "build_manifest",
    "merge_manifests",
    "save_manifest",
    "load_manifest",
    "LabelEntry",
    "LabelFile",
    "GroundTruthBox",
    "Detection",
    "HAND_CATEGORY",
    "parse_yolo_labels",
    "serialize_yolo_labels",
    "parse_size_index",
    "serialize_size_index",
    "read_size_index",
    "yolo_to_coco_ground_truth",
    "coco_to_yolo_ground_truth",
    "yolo_to_coco_detections",
    "coco_to_yolo_detections",
    "load_coco_ground_truth",
    "load_coco_detections",
    "load_yolo_detection_dir",
    "assign_detection_ids",
    "strip_confidences",
]

HAND_CATEGORY = {"id": 1, "name": "hand", "supercategory": "person"}

# On-disk float rendering: up to 9 significant digits, enough to round-trip
# normalized coordinates well below the 1e-6 conversion tolerance.
_FLOAT_FMT = "{:.9g}"


@dataclass(frozen=True)
class LabelEntry:
    """One box line of a label file."""

    class_index: int
    box: NormalizedBox
    confidence: float | None = None


@dataclass(frozen=True)
class LabelFile:
    """Parsed content of one YOLO label file.

    ``size``, when known, records the pixel dimensions the normalized
    coordinates refer to, so the file can be converted without a separate
    lookup.  A file either has confidences on every entry (detections) or on
    none (ground truth).
    """

    image_id: str
    entries: tuple[LabelEntry, ...]
    size: ImageSize | None = None

    @property
    def is_detection(self) -> bool:
        return bool(self.entries) and self.entries[0].confidence is not None


@dataclass(frozen=True)
class GroundTruthBox:
    """One annotated hand in absolute pixel coordinates."""

    image_id: str
    box: BBox
    source: str = ""


@dataclass(frozen=True)
class Detection:
    """One detector output: box, confidence, and a run-unique id."""

    image_id: str
    box: BBox
    confidence: float
    detection_id: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise FieldRangeError("confidence", self.confidence, "[0, 1]")


def parse_yolo_labels(
    text: str, *, image_id: str = "", size: ImageSize | None = None
) -> LabelFile:
    """Parse YOLO label text into a :class:`LabelFile`.

    Every nonempty line must have 5 fields (ground truth) or 6 fields
    (detection, with a trailing confidence); a file mixing the two arities is
    rejected.  Errors carry the 1-based line number, and out-of-range values
    name the offending field.
    """
    entries: list[LabelEntry] = []
    arity: int | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) not in (5, 6):
            raise LabelParseError(
                f"expected 5 or 6 whitespace-separated fields, got {len(fields)}", line=lineno
            )
        if arity is None:
            arity = len(fields)
        elif len(fields) != arity:
            raise LabelParseError(
                f"mixed {arity}- and {len(fields)}-field lines in one file", line=lineno
            )

        try:
            class_index = int(fields[0])
        except ValueError:
            raise LabelParseError(f"class index is not an integer: {fields[0]!r}", line=lineno)
        if class_index != 0:
            raise LabelParseError(
                f"class index must be 0 (single-class hand labels), got {class_index}",
                line=lineno,
            )

        values: dict[str, float] = {}
        names = ("cx", "cy", "w", "h") + (("confidence",) if len(fields) == 6 else ())
        for name, field in zip(names, fields[1:]):
            try:
                value = float(field)
            except ValueError:
                raise LabelParseError(f"{name} is not a number: {field!r}", line=lineno)
            if not 0.0 <= value <= 1.0:
                raise FieldRangeError(name, value, "[0, 1]", line=lineno)
            values[name] = value

        entries.append(
            LabelEntry(
                class_index=0,
                box=NormalizedBox(values["cx"], values["cy"], values["w"], values["h"]),
                confidence=values.get("confidence"),
            )
        )
    return LabelFile(image_id=image_id, entries=tuple(entries), size=size)


def serialize_yolo_labels(labels: LabelFile) -> str:
    """Render a label file back to normalized YOLO text, one entry per line."""
    lines = []
    for entry in labels.entries:
        fields = [
            str(entry.class_index),
            _FLOAT_FMT.format(entry.box.cx),
            _FLOAT_FMT.format(entry.box.cy),
            _FLOAT_FMT.format(entry.box.w),
            _FLOAT_FMT.format(entry.box.h),
        ]
        if entry.confidence is not None:
            fields.append(_FLOAT_FMT.format(entry.confidence))
        lines.append(" ".join(fields))
    return "".join(line + "\n" for line in lines)


def parse_size_index(text: str) -> dict[str, ImageSize]:
    """Parse a size index: one "image-id width height" line per image."""
    sizes: dict[str, ImageSize] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            raise LabelParseError(
                f"expected 'image-id width height', got {len(fields)} fields", line=lineno
            )
        image_id, w_field, h_field = fields
        try:
            width, height = int(w_field), int(h_field)
        except ValueError:
            raise LabelParseError(f"width/height are not integers: {w_field} {h_field}", line=lineno)
        if width < 1 or height < 1:
            raise LabelParseError(f"width/height must be positive: {width} {height}", line=lineno)
        if image_id in sizes:
            raise LabelParseError(f"duplicate image id {image_id!r}", line=lineno)
        sizes[image_id] = ImageSize(width, height)
    return sizes


def serialize_size_index(sizes: Mapping[str, ImageSize]) -> str:
    lines = []
    for image_id in sorted(sizes):
        if any(c.isspace() for c in image_id):
            raise ValueError(f"image id contains whitespace, cannot index: {image_id!r}")
        size = sizes[image_id]
        lines.append(f"{image_id} {size.width} {size.height}\n")
    return "".join(lines)


def read_size_index(path: str | Path) -> dict[str, ImageSize]:
    return parse_size_index(Path(path).read_text(encoding="utf-8"))


def _size_for(image_id: str, sizes: Mapping[str, ImageSize]) -> ImageSize:
    try:
        return sizes[image_id]
    except KeyError:
        raise MissingSizeError(image_id) from None


def yolo_to_coco_ground_truth(
    labels: Mapping[str, LabelFile], sizes: Mapping[str, ImageSize]
) -> dict:
    """Build a COCO-layout ground-truth document from YOLO label files.

    Image ids are assigned 1..N over the sorted string ids; the string id is
    kept as ``file_name`` so the conversion inverts exactly.
    """
    images = []
    annotations = []
    ann_id = 1
    for index, image_id in enumerate(sorted(labels), start=1):
        size = labels[image_id].size or _size_for(image_id, sizes)
        images.append(
            {"id": index, "file_name": image_id, "width": size.width, "height": size.height}
        )
        for entry in labels[image_id].entries:
            box = to_absolute(entry.box, size)
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": index,
                    "category_id": HAND_CATEGORY["id"],
                    "bbox": [box.x, box.y, box.w, box.h],
                    "area": box.w * box.h,
                    "iscrowd": 0,
                }
            )
            ann_id += 1
    return {"images": images, "annotations": annotations, "categories": [HAND_CATEGORY]}


def coco_to_yolo_ground_truth(doc: Mapping) -> tuple[dict[str, LabelFile], dict[str, ImageSize]]:
    """Invert :func:`yolo_to_coco_ground_truth`; returns labels and sizes."""
    id_to_name: dict[int, str] = {}
    sizes: dict[str, ImageSize] = {}
    for image in doc.get("images", []):
        name = str(image["file_name"])
        id_to_name[image["id"]] = name
        sizes[name] = ImageSize(int(image["width"]), int(image["height"]))

    boxes: dict[str, list[NormalizedBox]] = {name: [] for name in sizes}
    for ann in doc.get("annotations", []):
        name = id_to_name.get(ann["image_id"])
        if name is None:
            raise LabelParseError(f"annotation references unknown image id {ann['image_id']!r}")
        x, y, w, h = (float(v) for v in ann["bbox"])
        boxes[name].append(to_normalized(BBox(x, y, w, h), sizes[name]))

    labels = {
        name: LabelFile(
            image_id=name,
            entries=tuple(LabelEntry(0, box) for box in boxes[name]),
            size=sizes[name],
        )
        for name in sizes
    }
    return labels, sizes


def yolo_to_coco_detections(
    labels: Mapping[str, LabelFile],
    sizes: Mapping[str, ImageSize],
    image_ids: Mapping[str, int] | None = None,
) -> list[dict]:
    """Flatten YOLO detection files to the COCO results array.

    ``image_ids`` maps string ids to the integer ids of a companion
    ground-truth document; without it the string ids are written directly.
    """
    results = []
    for image_id in sorted(labels):
        label_file = labels[image_id]
        size = label_file.size or _size_for(image_id, sizes)
        for entry in label_file.entries:
            if entry.confidence is None:
                raise LabelParseError(
                    f"entry without confidence in detection file for {image_id!r}"
                )
            box = to_absolute(entry.box, size)
            results.append(
                {
                    "image_id": image_ids[image_id] if image_ids else image_id,
                    "category_id": HAND_CATEGORY["id"],
                    "bbox": [box.x, box.y, box.w, box.h],
                    "score": entry.confidence,
                }
            )
    return results


def coco_to_yolo_detections(
    results: Sequence[Mapping],
    sizes: Mapping[str, ImageSize],
    id_lookup: Mapping[int, str] | None = None,
) -> dict[str, LabelFile]:
    """Group a COCO results array back into per-image YOLO detection files."""
    by_image: dict[str, list[LabelEntry]] = {}
    for item in results:
        raw_id = item["image_id"]
        if isinstance(raw_id, str):
            image_id = raw_id
        elif id_lookup is not None and raw_id in id_lookup:
            image_id = id_lookup[raw_id]
        else:
            raise LabelParseError(
                f"integer image id {raw_id!r} cannot be resolved without a ground-truth document"
            )
        size = _size_for(image_id, sizes)
        x, y, w, h = (float(v) for v in item["bbox"])
        entry = LabelEntry(
            0, to_normalized(BBox(x, y, w, h), size), confidence=float(item["score"])
        )
        by_image.setdefault(image_id, []).append(entry)
    return {
        image_id: LabelFile(image_id=image_id, entries=tuple(entries), size=sizes.get(image_id))
        for image_id, entries in sorted(by_image.items())
    }


def load_coco_ground_truth(path: str | Path) -> tuple[list[GroundTruthBox], dict[str, ImageSize]]:
    """Read a COCO ground-truth JSON file into absolute-pixel boxes."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    id_to_name = {img["id"]: str(img["file_name"]) for img in doc.get("images", [])}
    sizes = {
        str(img["file_name"]): ImageSize(int(img["width"]), int(img["height"]))
        for img in doc.get("images", [])
    }
    gts = []
    for ann in doc.get("annotations", []):
        name = id_to_name.get(ann["image_id"])
        if name is None:
            raise LabelParseError(f"annotation references unknown image id {ann['image_id']!r}")
        x, y, w, h = (float(v) for v in ann["bbox"])
        gts.append(GroundTruthBox(image_id=name, box=BBox(x, y, w, h)))
    return gts, sizes


def _detection_sort_key(item: tuple[str, float, BBox]):
    image_id, score, box = item
    return (image_id, -score, box.x, box.y, box.w, box.h)


def assign_detection_ids(raw: Iterable[tuple[str, float, BBox]]) -> list[Detection]:
    """Turn (image id, score, box) triples into :class:`Detection` objects.

    Ids are assigned over a canonical ordering (image id, score descending,
    box coordinates) so the result does not depend on file record order.
    """
    ordered = sorted(raw, key=_detection_sort_key)
    return [
        Detection(image_id=image_id, box=box, confidence=score, detection_id=index)
        for index, (image_id, score, box) in enumerate(ordered, start=1)
    ]


def load_coco_detections(
    path: str | Path, id_lookup: Mapping[int, str] | None = None
) -> list[Detection]:
    """Read a COCO detections array (JSON file) into :class:`Detection` objects.

    String image ids are taken as-is; integer ids are resolved through
    ``id_lookup`` (built from the paired ground-truth document).
    """
    items = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(items, list):
        raise LabelParseError("detections file must be a JSON array")
    raw = []
    for item in items:
        raw_id = item["image_id"]
        if isinstance(raw_id, str):
            image_id = raw_id
        elif id_lookup is not None and raw_id in id_lookup:
            image_id = id_lookup[raw_id]
        else:
            raise LabelParseError(
                f"integer image id {raw_id!r} cannot be resolved without a ground-truth document"
            )
        x, y, w, h = (float(v) for v in item["bbox"])
        score = float(item["score"])
        if not 0.0 <= score <= 1.0:
            raise FieldRangeError("score", score, "[0, 1]")
        raw.append((image_id, score, BBox(x, y, w, h)))
    return assign_detection_ids(raw)


def load_yolo_detection_dir(
    directory: str | Path, sizes: Mapping[str, ImageSize]
) -> list[Detection]:
    """Read a directory of 6-field YOLO files into :class:`Detection` objects.

    The image id is the file path relative to ``directory`` without the
    ``.txt`` suffix, matching the "file name = image stem" convention.
    """
    directory = Path(directory)
    raw = []
    for path in sorted(directory.rglob("*.txt")):
        image_id = path.relative_to(directory).as_posix()[: -len(".txt")]
        size = _size_for(image_id, sizes)
        labels = parse_yolo_labels(path.read_text(encoding="utf-8"), image_id=image_id, size=size)
        for entry in labels.entries:
            if entry.confidence is None:
                raise LabelParseError(f"{path} holds ground-truth lines, expected detections")
            raw.append((image_id, entry.confidence, to_absolute(entry.box, size)))
    return assign_detection_ids(raw)


def strip_confidences(labels: LabelFile) -> LabelFile:
    """Drop the confidence column, turning a detection file into ground truth."""
    return replace(
        labels,
        entries=tuple(LabelEntry(e.class_index, e.box) for e in labels.entries),
    )
