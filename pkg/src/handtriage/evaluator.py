"""COCO-style 12-metric AP/AR evaluation for single-class detection.

The report covers AP averaged over an IoU-threshold sweep, AP at single
thresholds (.50/.75), AP per scale bucket (small/medium/large by box area),
AR under per-image detection caps (1/10/100), and AR per scale bucket.  A
metric whose ground-truth subset is empty is the sentinel -1.0, rendered
"-1.000" in fixed-point tables.

Only the rank order of confidences matters anywhere in this module; the
values themselves never enter the arithmetic, so any strictly increasing
rescaling of confidences leaves every metric unchanged.

Matching per (image, threshold) is independent and safe to parallelize;
aggregation is a deterministic reduction over sorted keys, and reports are
immutable once produced.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, fields
from typing import Iterable, Mapping, Sequence

from .errors import UndefinedCurveError
from .formats import Detection, GroundTruthBox
from .geometry import area, iou

__all__ = [
    "EvalConfig",
    "DetectionMatch",
    "MatchResult",
    "MetricReport",
    "match_detections",
    "pr_curve",
    "interpolate_ap",
    "evaluate",
    "evaluate_detailed",
    "report_to_dict",
    "render_fixed_table",
]

DEFAULT_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))

_BUCKET_NAMES = ("small", "medium", "large")


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation protocol parameters.

    Exactly three detection caps are required; they feed the three AR slots
    of the report.
    """

    iou_thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    max_detections: tuple[int, int, int] = (1, 10, 100)
    area_edges: tuple[float, float] = (32.0 * 32, 96.0 * 96)
    recall_grid: int = 101

    def __post_init__(self) -> None:
        t = self.iou_thresholds
        if not t or any(not 0 < v <= 1 for v in t) or any(a >= b for a, b in zip(t, t[1:])):
            raise ValueError(f"iou thresholds must be strictly increasing in (0, 1]: {t}")
        caps = self.max_detections
        if len(caps) != 3:
            raise ValueError(f"exactly three detection caps are required, got {caps}")
        if any(c < 1 for c in caps) or any(a >= b for a, b in zip(caps, caps[1:])):
            raise ValueError(f"detection caps must be strictly increasing positives: {caps}")
        edges = self.area_edges
        if len(edges) != 2 or edges[0] <= 0 or edges[0] >= edges[1]:
            raise ValueError(f"area edges must be two strictly increasing positives: {edges}")
        if self.recall_grid < 2:
            raise ValueError(f"recall grid needs at least 2 points, got {self.recall_grid}")

    @classmethod
    def from_range(
        cls,
        iou_min: float = 0.50,
        iou_max: float = 0.95,
        iou_step: float = 0.05,
        **kwargs,
    ) -> "EvalConfig":
        if iou_step <= 0 or iou_max < iou_min:
            raise ValueError("need iou_min <= iou_max and a positive step")
        count = int(round((iou_max - iou_min) / iou_step)) + 1
        thresholds = tuple(round(iou_min + i * iou_step, 10) for i in range(count))
        return cls(iou_thresholds=thresholds, **kwargs)

    def bucket_of(self, box_area: float) -> int:
        """0 = small, 1 = medium, 2 = large; buckets closed on the left."""
        if box_area < self.area_edges[0]:
            return 0
        if box_area < self.area_edges[1]:
            return 1
        return 2


@dataclass(frozen=True)
class DetectionMatch:
    """One capped detection's outcome at a single IoU threshold.

    ``gt_index`` is the matched ground-truth box's index in the evaluation's
    canonical GT ordering, or None when the detection stayed unmatched (its
    ``iou`` is then 0.0 by convention).
    """

    detection_id: int
    image_id: str
    confidence: float
    gt_index: int | None
    iou: float


@dataclass(frozen=True)
class MatchResult:
    """Greedy matching outcome at one (threshold, cap) pair."""

    threshold: float
    cap: int
    per_image: Mapping[str, tuple[DetectionMatch, ...]]
    matched_gt: frozenset[int]
    total_gt: int

    @property
    def unmatched_gt(self) -> int:
        return self.total_gt - len(self.matched_gt)


@dataclass(frozen=True)
class MetricReport:
    """The 12 Table-style metrics; -1.0 marks an empty GT subset.

    ``ap50``/``ap75`` are None when the configured threshold sweep does not
    contain .50/.75 (only possible with a custom sweep).
    """

    ap: float
    ap50: float | None
    ap75: float | None
    ap_small: float
    ap_medium: float
    ap_large: float
    ar1: float
    ar10: float
    ar100: float
    ar_small: float
    ar_medium: float
    ar_large: float

    def as_dict(self) -> dict[str, float | None]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class _Scene:
    """Canonically ordered inputs plus per-image IoU tables.

    Ground truth is globally indexed in (image id, x, y, w, h) order and
    detections per image in (confidence descending, detection id) order, so
    every later step is deterministic whatever order the inputs arrived in.
    """

    def __init__(self, gt: Sequence[GroundTruthBox], dt: Sequence[Detection]):
        ordered_gt = sorted(
            gt, key=lambda g: (g.image_id, g.box.x, g.box.y, g.box.w, g.box.h)
        )
        self.gt = ordered_gt
        self.total_gt = len(ordered_gt)
        self.gt_areas = [area(g.box) for g in ordered_gt]

        self.gt_by_image: dict[str, list[int]] = {}
        for index, g in enumerate(ordered_gt):
            self.gt_by_image.setdefault(g.image_id, []).append(index)

        self.dt_by_image: dict[str, list[Detection]] = {}
        self.det_area: dict[int, float] = {}
        for d in sorted(dt, key=lambda d: (d.image_id, -d.confidence, d.detection_id)):
            self.dt_by_image.setdefault(d.image_id, []).append(d)
            self.det_area[d.detection_id] = area(d.box)
        if len(self.det_area) != len(dt):
            raise ValueError("detection ids must be unique within a run")

        self.image_ids = sorted(set(self.gt_by_image) | set(self.dt_by_image))

        # IoU rows per image: one row per detection, one column per GT index.
        self.iou_rows: dict[str, list[list[float]]] = {}
        for image_id in self.image_ids:
            gts = self.gt_by_image.get(image_id, [])
            rows = []
            for d in self.dt_by_image.get(image_id, []):
                rows.append([iou(d.box, ordered_gt[j].box) for j in gts])
            self.iou_rows[image_id] = rows

    def greedy_image(
        self, image_id: str, threshold: float, cap: int
    ) -> tuple[list[DetectionMatch], list[int]]:
        """Greedy confidence-ordered matching for one image.

        Detections past the cap are dropped entirely.  Each retained
        detection takes the unmatched GT of highest IoU (ties go to the
        lowest canonical index) when that IoU reaches the threshold.
        """
        gts = self.gt_by_image.get(image_id, [])
        rows = self.iou_rows.get(image_id, [])
        matches: list[DetectionMatch] = []
        matched_cols: list[int] = []
        used: set[int] = set()
        for row_index, d in enumerate(self.dt_by_image.get(image_id, [])[:cap]):
            row = rows[row_index]
            best_col = -1
            best_iou = 0.0
            for col in range(len(gts)):
                if col in used:
                    continue
                if row[col] > best_iou:
                    best_iou = row[col]
                    best_col = col
            if best_col >= 0 and best_iou >= threshold:
                used.add(best_col)
                matched_cols.append(gts[best_col])
                matches.append(
                    DetectionMatch(d.detection_id, image_id, d.confidence, gts[best_col], best_iou)
                )
            else:
                matches.append(DetectionMatch(d.detection_id, image_id, d.confidence, None, 0.0))
        return matches, matched_cols


def match_detections(
    gt: Sequence[GroundTruthBox],
    dt: Sequence[Detection],
    threshold: float,
    cap: int = 100,
) -> MatchResult:
    """Match detections to ground truth at one IoU threshold and cap."""
    scene = _Scene(gt, dt)
    per_image: dict[str, tuple[DetectionMatch, ...]] = {}
    matched: set[int] = set()
    for image_id in scene.image_ids:
        matches, cols = scene.greedy_image(image_id, threshold, cap)
        per_image[image_id] = tuple(matches)
        matched.update(cols)
    return MatchResult(
        threshold=threshold,
        cap=cap,
        per_image=per_image,
        matched_gt=frozenset(matched),
        total_gt=scene.total_gt,
    )


def _pooled_rows(matches: Iterable[DetectionMatch]) -> list[DetectionMatch]:
    return sorted(matches, key=lambda m: (-m.confidence, m.detection_id))


def pr_curve(matches: MatchResult, total_gt: int) -> list[tuple[float, float]]:
    """Pool a match result into cumulative (recall, precision) points.

    Precision is made monotonically non-increasing by a right-to-left
    running maximum, ready for grid interpolation.
    """
    if total_gt == 0:
        raise UndefinedCurveError("precision-recall is undefined without ground truth")
    pooled = _pooled_rows(m for row in matches.per_image.values() for m in row)
    points: list[tuple[float, float]] = []
    tp = 0
    for k, m in enumerate(pooled, start=1):
        if m.gt_index is not None:
            tp += 1
        points.append((tp / total_gt, tp / k))

    best = 0.0
    for k in range(len(points) - 1, -1, -1):
        best = max(best, points[k][1])
        points[k] = (points[k][0], best)
    return points


def interpolate_ap(curve: Sequence[tuple[float, float]], grid: int = 101) -> float:
    """Mean over the recall grid of max precision at recall >= grid point.

    Expects the curve from :func:`pr_curve` (recall non-decreasing, precision
    suffix-maxed); levels no point reaches contribute 0.
    """
    recalls = [r for r, _ in curve]
    total = 0.0
    for i in range(grid):
        level = i / (grid - 1)
        index = bisect_left(recalls, level)
        if index < len(curve):
            total += curve[index][1]
    return total / grid


def _ap_from_rows(
    rows: Sequence[tuple[float, int, bool]], total_gt: int, grid: int
) -> float:
    """Interpolated AP from pooled (confidence, detection id, is TP) rows."""
    ordered = sorted(rows, key=lambda r: (-r[0], r[1]))
    recalls: list[float] = []
    precisions: list[float] = []
    tp = 0
    for k, row in enumerate(ordered, start=1):
        if row[2]:
            tp += 1
        recalls.append(tp / total_gt)
        precisions.append(tp / k)
    best = 0.0
    for k in range(len(precisions) - 1, -1, -1):
        best = max(best, precisions[k])
        precisions[k] = best

    total = 0.0
    for i in range(grid):
        level = i / (grid - 1)
        index = bisect_left(recalls, level)
        if index < len(recalls):
            total += precisions[index]
    return total / grid


def evaluate_detailed(
    gt: Sequence[GroundTruthBox],
    dt: Sequence[Detection],
    cfg: EvalConfig | None = None,
) -> tuple[MetricReport, dict]:
    """Full evaluation: the 12-metric report plus a per-threshold breakdown."""
    cfg = cfg or EvalConfig()
    scene = _Scene(gt, dt)
    total_gt = scene.total_gt
    big_cap = cfg.max_detections[-1]
    gt_buckets = [cfg.bucket_of(a) for a in scene.gt_areas]
    bucket_totals = [gt_buckets.count(b) for b in range(3)]

    ap_per_threshold: list[float] = []
    recall_per_cap: dict[int, list[float]] = {c: [] for c in cfg.max_detections}
    bucket_ap: dict[int, list[float]] = {0: [], 1: [], 2: []}
    bucket_recall: dict[int, list[float]] = {0: [], 1: [], 2: []}
    breakdown: list[dict] = []

    for threshold in cfg.iou_thresholds:
        # One full greedy pass per image; a lower cap keeps a prefix of the
        # per-image confidence order, so its outcome is read off the same
        # pass without re-matching.
        all_matches: list[tuple[int, DetectionMatch]] = []  # (per-image position, match)
        for image_id in scene.image_ids:
            matches, _ = scene.greedy_image(image_id, threshold, big_cap)
            all_matches.extend(enumerate(matches))

        entry: dict = {"iou_threshold": threshold}
        for cap in cfg.max_detections:
            matched = {m.gt_index for pos, m in all_matches if pos < cap and m.gt_index is not None}
            if total_gt:
                value = len(matched) / total_gt
                recall_per_cap[cap].append(value)
                entry[f"recall_at_{cap}"] = value

        retained = [m for pos, m in all_matches if pos < big_cap]
        if total_gt:
            rows = [(m.confidence, m.detection_id, m.gt_index is not None) for m in retained]
            value = _ap_from_rows(rows, total_gt, cfg.recall_grid)
            ap_per_threshold.append(value)
            entry["ap"] = value

        for b in range(3):
            if bucket_totals[b] == 0:
                continue
            rows = []
            for m in retained:
                if m.gt_index is not None:
                    if gt_buckets[m.gt_index] == b:
                        rows.append((m.confidence, m.detection_id, True))
                elif cfg.bucket_of(scene.det_area[m.detection_id]) == b:
                    rows.append((m.confidence, m.detection_id, False))
            bucket_ap[b].append(_ap_from_rows(rows, bucket_totals[b], cfg.recall_grid))
            matched_in_bucket = sum(
                1
                for m in retained
                if m.gt_index is not None and gt_buckets[m.gt_index] == b
            )
            bucket_recall[b].append(matched_in_bucket / bucket_totals[b])

        breakdown.append(entry)

    def mean(values: list[float]) -> float:
        return sum(values) / len(values)

    def single_ap(target: float) -> float | None:
        if target not in cfg.iou_thresholds:
            return None
        if total_gt == 0:
            return -1.0
        return ap_per_threshold[cfg.iou_thresholds.index(target)]

    def bucket_value(values: dict[int, list[float]], b: int) -> float:
        return mean(values[b]) if bucket_totals[b] else -1.0

    report = MetricReport(
        ap=mean(ap_per_threshold) if total_gt else -1.0,
        ap50=single_ap(0.50),
        ap75=single_ap(0.75),
        ap_small=bucket_value(bucket_ap, 0),
        ap_medium=bucket_value(bucket_ap, 1),
        ap_large=bucket_value(bucket_ap, 2),
        ar1=mean(recall_per_cap[cfg.max_detections[0]]) if total_gt else -1.0,
        ar10=mean(recall_per_cap[cfg.max_detections[1]]) if total_gt else -1.0,
        ar100=mean(recall_per_cap[cfg.max_detections[2]]) if total_gt else -1.0,
        ar_small=bucket_value(bucket_recall, 0),
        ar_medium=bucket_value(bucket_recall, 1),
        ar_large=bucket_value(bucket_recall, 2),
    )
    detail = {
        "counts": {
            "images": len(scene.image_ids),
            "ground_truth": total_gt,
            "detections": sum(len(v) for v in scene.dt_by_image.values()),
        },
        "per_threshold": breakdown,
    }
    return report, detail


def evaluate(
    gt: Sequence[GroundTruthBox],
    dt: Sequence[Detection],
    cfg: EvalConfig | None = None,
) -> MetricReport:
    report, _ = evaluate_detailed(gt, dt, cfg)
    return report


_TABLE_LABELS = (
    ("ap", "AP"),
    ("ap50", "AP@.50"),
    ("ap75", "AP@.75"),
    ("ap_small", "AP-S"),
    ("ap_medium", "AP-M"),
    ("ap_large", "AP-L"),
    ("ar1", "AR1"),
    ("ar10", "AR10"),
    ("ar100", "AR100"),
    ("ar_small", "AR-S"),
    ("ar_medium", "AR-M"),
    ("ar_large", "AR-L"),
)


def render_fixed_table(report: MetricReport) -> str:
    """Fixed-point 3-decimal table; empty-subset sentinels print as -1.000."""
    lines = []
    for field_name, label in _TABLE_LABELS:
        value = getattr(report, field_name)
        rendered = "n/a" if value is None else f"{value:.3f}"
        lines.append(f"{label:<8} {rendered}")
    return "".join(line + "\n" for line in lines)


def report_to_dict(
    report: MetricReport, cfg: EvalConfig, detail: dict | None = None
) -> dict:
    """JSON-ready report document: metrics, config echo, optional breakdown."""
    doc = {
        "metrics": report.as_dict(),
        "config": {
            "iou_thresholds": list(cfg.iou_thresholds),
            "max_detections": list(cfg.max_detections),
            "area_edges": list(cfg.area_edges),
            "recall_grid": cfg.recall_grid,
        },
    }
    if detail:
        doc.update(detail)
    return doc
