"""Frame triage: score frames by largest detected hand, flag by area threshold.

A frame's score is the area of its largest detected hand box in square
pixels (0 with no detections), and a frame is flagged when that score is
strictly greater than the threshold; a frame sitting exactly at the
threshold stays unflagged.  Confidence never enters the score; an optional
minimum-confidence pre-filter drops weak detections before scoring, and an
opt-in normalized mode scores area as a fraction of the frame area for
mixed-resolution corpora.

Records are kept sorted by area descending (ties by frame id), so trying a
new threshold is a prefix lookup over the stored scores, fast enough for
interactive sweeps over very large runs.

Scoring is independent per frame and safe to parallelize; the summary is a
deterministic reduction over the sorted records.
"""

from __future__ import annotations

import csv
import io
from bisect import bisect_left
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

from .errors import MissingSizeError, ThresholdError, UnknownFrameError
from .formats import Detection
from .fsutil import natural_sort_key
from .geometry import ImageSize, area

__all__ = [
    "VERDICTS",
    "FrameRecord",
    "TriageRun",
    "FrameVerdict",
    "RethresholdResult",
    "score_frame",
    "run_triage",
    "rethreshold",
    "export_report",
    "export_csv",
    "run_to_dict",
    "run_from_dict",
    "list_frame_files",
    "IMAGE_SUFFIXES",
]

VERDICTS = ("unreviewed", "relevant", "irrelevant")

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".gif", ".bmp", ".webp")


@dataclass(frozen=True)
class FrameRecord:
    """One frame's triage outcome."""

    frame_id: str
    detections: tuple[Detection, ...]
    area: float
    flagged: bool


@dataclass(frozen=True)
class TriageRun:
    """A finished triage pass over a frame set.

    ``records`` is sorted by area descending, then frame id; ``threshold``
    is the value the run was created with (what-if thresholds never mutate
    the run).
    """

    run_id: str
    frames_dir: str
    detections_path: str
    threshold: float
    records: tuple[FrameRecord, ...]
    created_at: str
    min_confidence: float = 0.0
    normalized: bool = False

    @property
    def total(self) -> int:
        return len(self.records)

    @property
    def flagged_count(self) -> int:
        return sum(1 for r in self.records if r.flagged)

    def record(self, frame_id: str) -> FrameRecord | None:
        for r in self.records:
            if r.frame_id == frame_id:
                return r
        return None


@dataclass(frozen=True)
class FrameVerdict:
    """An examiner's relevance decision on one frame."""

    frame_id: str
    verdict: str = "unreviewed"
    note: str = ""
    revision: int = 0

    def __post_init__(self) -> None:
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}, got {self.verdict!r}")
        if self.revision < 0:
            raise ValueError(f"revision must be non-negative, got {self.revision}")


@dataclass(frozen=True)
class RethresholdResult:
    threshold: float
    flagged: int
    total: int
    flagged_ids: tuple[str, ...]


def score_frame(detections: Sequence[Detection]) -> float:
    """Largest hand area on the frame in square pixels; 0 with no detections."""
    return max((area(d.box) for d in detections), default=0.0)


def _group(
    frames: Sequence[str],
    detections: Mapping[str, Sequence[Detection]] | Sequence[Detection],
) -> dict[str, list[Detection]]:
    grouped: dict[str, list[Detection]] = {frame_id: [] for frame_id in frames}
    if len(grouped) != len(frames):
        raise ValueError("frame ids must be unique")
    unknown = set()
    if isinstance(detections, Mapping):
        items = [(frame_id, d) for frame_id, ds in detections.items() for d in ds]
    else:
        items = [(d.image_id, d) for d in detections]
    for frame_id, d in items:
        if frame_id in grouped:
            grouped[frame_id].append(d)
        else:
            unknown.add(frame_id)
    if unknown:
        raise UnknownFrameError(sorted(unknown))
    return grouped


def run_triage(
    frames: Sequence[str],
    detections: Mapping[str, Sequence[Detection]] | Sequence[Detection],
    threshold: float,
    *,
    run_id: str = "",
    frames_dir: str = "",
    detections_path: str = "",
    min_confidence: float = 0.0,
    normalized: bool = False,
    frame_sizes: Mapping[str, ImageSize] | None = None,
    created_at: str | None = None,
) -> TriageRun:
    """Score and flag every frame; detections for unlisted frames are an error.

    ``normalized`` scores area as a fraction of the frame area and needs a
    size for every frame.  ``min_confidence`` drops detections below it
    before scoring (default 0 keeps everything).
    """
    if threshold < 0:
        raise ThresholdError(f"threshold must be >= 0, got {threshold}")
    grouped = _group(frames, detections)

    records = []
    for frame_id in frames:
        kept = tuple(d for d in grouped[frame_id] if d.confidence >= min_confidence)
        score = score_frame(kept)
        if normalized:
            if frame_sizes is None or frame_id not in frame_sizes:
                raise MissingSizeError(frame_id)
            size = frame_sizes[frame_id]
            score = score / (size.width * size.height)
        records.append(
            FrameRecord(frame_id=frame_id, detections=kept, area=score, flagged=score > threshold)
        )
    records.sort(key=lambda r: (-r.area, r.frame_id))

    return TriageRun(
        run_id=run_id,
        frames_dir=frames_dir,
        detections_path=detections_path,
        threshold=threshold,
        records=tuple(records),
        created_at=created_at or datetime.now(timezone.utc).isoformat(timespec="seconds"),
        min_confidence=min_confidence,
        normalized=normalized,
    )


def rethreshold(run: TriageRun, threshold: float) -> RethresholdResult:
    """Re-partition a stored run at a new threshold without rescoring.

    Records are already sorted by area descending, so the flagged set is the
    prefix of records with area strictly above the threshold.
    """
    if threshold < 0:
        raise ThresholdError(f"threshold must be >= 0, got {threshold}")
    keys = [-r.area for r in run.records]
    count = bisect_left(keys, -threshold)
    return RethresholdResult(
        threshold=threshold,
        flagged=count,
        total=run.total,
        flagged_ids=tuple(r.frame_id for r in run.records[:count]),
    )


def _verdict_for(
    frame_id: str, verdicts: Mapping[str, FrameVerdict] | None
) -> FrameVerdict:
    if verdicts and frame_id in verdicts:
        return verdicts[frame_id]
    return FrameVerdict(frame_id=frame_id)


def export_report(
    run: TriageRun, verdicts: Mapping[str, FrameVerdict] | None = None
) -> dict:
    """JSON-ready report: run config, summary, and per-frame rows.

    Rows keep the run's (area descending, frame id) order; frames without a
    recorded verdict default to "unreviewed".
    """
    rows = []
    for r in run.records:
        verdict = _verdict_for(r.frame_id, verdicts)
        rows.append(
            {
                "frame_id": r.frame_id,
                "area_px2": r.area,
                "flagged": r.flagged,
                "verdict": verdict.verdict,
                "note": verdict.note,
            }
        )
    return {
        "run": {
            "run_id": run.run_id,
            "frames_dir": run.frames_dir,
            "detections_path": run.detections_path,
            "threshold": run.threshold,
            "min_confidence": run.min_confidence,
            "normalized": run.normalized,
            "created_at": run.created_at,
        },
        "summary": {"flagged": run.flagged_count, "total": run.total},
        "frames": rows,
    }


def export_csv(run: TriageRun, verdicts: Mapping[str, FrameVerdict] | None = None) -> str:
    """CSV report with one row per frame: frame_id, area_px2, flagged, verdict, note."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["frame_id", "area_px2", "flagged", "verdict", "note"])
    for row in export_report(run, verdicts)["frames"]:
        writer.writerow(
            [row["frame_id"], row["area_px2"], str(row["flagged"]).lower(), row["verdict"], row["note"]]
        )
    return buffer.getvalue()


def run_to_dict(run: TriageRun) -> dict:
    return {
        "run_id": run.run_id,
        "frames_dir": run.frames_dir,
        "detections_path": run.detections_path,
        "threshold": run.threshold,
        "min_confidence": run.min_confidence,
        "normalized": run.normalized,
        "created_at": run.created_at,
        "summary": {"flagged": run.flagged_count, "total": run.total},
        "records": [
            {
                "frame_id": r.frame_id,
                "area": r.area,
                "flagged": r.flagged,
                "detections": [
                    {
                        "detection_id": d.detection_id,
                        "x": d.box.x,
                        "y": d.box.y,
                        "w": d.box.w,
                        "h": d.box.h,
                        "confidence": d.confidence,
                    }
                    for d in r.detections
                ],
            }
            for r in run.records
        ],
    }


def run_from_dict(doc: Mapping) -> TriageRun:
    from .geometry import BBox

    records = tuple(
        FrameRecord(
            frame_id=rec["frame_id"],
            detections=tuple(
                Detection(
                    image_id=rec["frame_id"],
                    box=BBox(d["x"], d["y"], d["w"], d["h"]),
                    confidence=d["confidence"],
                    detection_id=d["detection_id"],
                )
                for d in rec["detections"]
            ),
            area=rec["area"],
            flagged=rec["flagged"],
        )
        for rec in doc["records"]
    )
    return TriageRun(
        run_id=doc["run_id"],
        frames_dir=doc["frames_dir"],
        detections_path=doc["detections_path"],
        threshold=doc["threshold"],
        records=records,
        created_at=doc["created_at"],
        min_confidence=doc.get("min_confidence", 0.0),
        normalized=doc.get("normalized", False),
    )


def list_frame_files(frames_dir: str | Path) -> dict[str, Path]:
    """Map frame ids to image files under a directory, in natural-sort order.

    The frame id is the file's relative path without its extension; two
    files differing only in extension would collide and are rejected.
    """
    frames_dir = Path(frames_dir)
    files = [
        p
        for p in frames_dir.rglob("*")
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    ]
    files.sort(key=lambda p: natural_sort_key(p.relative_to(frames_dir).as_posix()))
    mapping: dict[str, Path] = {}
    for path in files:
        rel = path.relative_to(frames_dir).as_posix()
        frame_id = rel[: -len(path.suffix)]
        if frame_id in mapping:
            raise ValueError(
                f"ambiguous frame id {frame_id!r}: {mapping[frame_id].name} and {path.name}"
            )
        mapping[frame_id] = path
    return mapping
