"""Semi-automatic labeling loop around an external train/predict pair.

The loop starts from a small human-labeled seed, then repeats: train a
detector on the current pool, predict the unlabeled remainder, promote the
top-confidence images to pseudo labels, and fold them into the pool.  A
final train/predict pass labels everything left over, so the pool ends at
the full corpus size with provenance recorded per image.

Training and prediction are external shell commands behind a
:class:`TrainerContract`; any detector that reads YOLO label directories and
emits 6-field YOLO prediction files plugs in.  The toolkit never trains
models itself.

Rounds are strictly sequential (each depends on the previous pool).  All
state lives under one directory, every file is written atomically, and the
loop resumes from the last completed round after an interrupt or a failed
command.  With a deterministic predictor the state tree is byte-reproducible,
resumed or not: no absolute paths or timestamps enter the recorded state.

State directory layout::

    seed-pool.json            pool before round 0 (the human seed)
    audit.jsonl               one record per event (seed, selections, final)
    round-<r>/train-labels/   5-field YOLO export the trainer consumes
    round-<r>/predict-list.txt
    round-<r>/predictions/    6-field YOLO files the predictor wrote
    round-<r>/selected.txt    image ids added to the pool this round
    round-<r>/pool.json       pool after the round's merge (completion marker)
"""

from __future__ import annotations

import json
import random
import shutil
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    LabelParseError,
    PlanOverflowError,
    PoolCollisionError,
    SelectionError,
    TrainerCommandError,
)
from .formats import Detection, LabelFile, parse_yolo_labels, serialize_yolo_labels, strip_confidences
from .fsutil import atomic_write_json, atomic_write_text

__all__ = [
    "BootstrapPlan",
    "RoundStep",
    "Provenance",
    "LabeledPool",
    "Selection",
    "TrainerContract",
    "plan_rounds",
    "sample_seed",
    "make_human_pool",
    "select_top_k",
    "merge_pool",
    "export_pool_labels",
    "run_loop",
    "pool_to_dict",
    "pool_from_dict",
]

AGGREGATES = ("max", "mean")


@dataclass(frozen=True)
class BootstrapPlan:
    """Loop shape: seed size, images added per round, round count, corpus size."""

    seed_size: int = 500
    per_round: int = 1000
    rounds: int = 2
    corpus_size: int = 11_076

    def __post_init__(self) -> None:
        if self.seed_size < 1 or self.per_round < 1 or self.rounds < 0 or self.corpus_size < 1:
            raise ValueError(
                "need seed_size >= 1, per_round >= 1, rounds >= 0, corpus_size >= 1"
            )
        final = self.seed_size + self.rounds * self.per_round
        if final > self.corpus_size:
            raise PlanOverflowError(
                f"plan needs {final} labeled images but the corpus holds {self.corpus_size}"
            )

    @property
    def final_train_size(self) -> int:
        return self.seed_size + self.rounds * self.per_round


@dataclass(frozen=True)
class RoundStep:
    """One train/predict cycle: what to train on and how much is left."""

    index: int
    train_size: int
    predict_size: int


def plan_rounds(plan: BootstrapPlan) -> list[RoundStep]:
    """Expand a plan into its train/predict schedule.

    Entry r trains on seed + r selections' worth of images and predicts the
    remainder; the last entry is the final pass whose predictions all become
    pseudo labels.
    """
    steps = []
    for index in range(plan.rounds + 1):
        train_size = plan.seed_size + index * plan.per_round
        steps.append(RoundStep(index, train_size, plan.corpus_size - train_size))
    return steps


@dataclass(frozen=True)
class Provenance:
    """How an image's labels entered the pool.

    Human entries have no round or confidence.  Pseudo entries record the
    round that added them and the image-level confidence behind the
    selection (None when the final pass found no hands).
    """

    kind: str
    round_index: int | None = None
    confidence: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("human", "pseudo"):
            raise ValueError(f"provenance kind must be human or pseudo, got {self.kind!r}")
        if self.kind == "human" and self.round_index is not None:
            raise ValueError("human provenance carries no round index")

    def as_dict(self) -> dict:
        if self.kind == "human":
            return {"kind": "human"}
        return {"kind": "pseudo", "round": self.round_index, "confidence": self.confidence}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Provenance":
        if doc["kind"] == "human":
            return cls("human")
        return cls("pseudo", round_index=doc.get("round"), confidence=doc.get("confidence"))


@dataclass(frozen=True)
class LabeledPool:
    """Labeled images keyed by id, each with labels and provenance."""

    entries: Mapping[str, tuple[LabelFile, Provenance]]

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def human_count(self) -> int:
        return sum(1 for _, p in self.entries.values() if p.kind == "human")

    @property
    def pseudo_count(self) -> int:
        return self.size - self.human_count

    def ids(self) -> list[str]:
        return sorted(self.entries)


def make_human_pool(labels: Mapping[str, LabelFile]) -> LabeledPool:
    """Wrap human label files into a pool with human provenance."""
    return LabeledPool(
        entries={image_id: (labels[image_id], Provenance("human")) for image_id in labels}
    )


def merge_pool(
    pool: LabeledPool,
    additions: Sequence[tuple[str, LabelFile]],
    round_index: int,
    scores: Mapping[str, float | None] | None = None,
) -> LabeledPool:
    """Fold pseudo-labeled additions into a pool.

    Every added id must be new; a collision with any existing entry (human
    ones in particular are never overwritten) names the id.  ``scores``
    supplies the per-image confidence recorded in provenance.
    """
    merged = dict(pool.entries)
    for image_id, labels in additions:
        if image_id in merged:
            raise PoolCollisionError(image_id)
        confidence = scores.get(image_id) if scores else None
        merged[image_id] = (labels, Provenance("pseudo", round_index, confidence))
    return LabeledPool(entries=merged)


@dataclass(frozen=True)
class Selection:
    """Top-k selection outcome: chosen ids, all candidate scores, and the
    zero-detection images that were excluded from ranking."""

    selected: tuple[str, ...]
    scores: Mapping[str, float]
    skipped: tuple[str, ...]


def aggregate_confidences(values: Sequence[float], how: str) -> float:
    if how == "max":
        return max(values)
    if how == "mean":
        return sum(values) / len(values)
    raise ValueError(f"unknown aggregate {how!r}, expected one of {AGGREGATES}")


def _select_from_scores(
    scores: Mapping[str, float], skipped: Iterable[str], k: int
) -> Selection:
    if k > len(scores):
        raise SelectionError(k, len(scores))
    ranked = sorted(scores, key=lambda image_id: (-scores[image_id], image_id))
    return Selection(
        selected=tuple(ranked[:k]),
        scores=dict(scores),
        skipped=tuple(sorted(skipped)),
    )


def select_top_k(
    predictions: Mapping[str, Sequence[Detection]] | Sequence[Detection],
    k: int,
    *,
    candidates: Iterable[str] | None = None,
    aggregate: str = "max",
) -> Selection:
    """Pick the k images with the highest image-level confidence.

    The image score aggregates its detections' confidences (max by default).
    Candidates without any detection are excluded from ranking and reported
    in ``skipped``; asking for more images than are eligible is an error that
    states both numbers.  Ties are broken by ascending image id.
    """
    grouped: dict[str, list[float]] = {}
    if isinstance(predictions, Mapping):
        for image_id, dets in predictions.items():
            grouped[image_id] = [d.confidence for d in dets]
    else:
        for det in predictions:
            grouped.setdefault(det.image_id, []).append(det.confidence)

    skipped = set() if candidates is None else set(candidates) - set(grouped)
    skipped.update(image_id for image_id, confs in grouped.items() if not confs)
    scores = {
        image_id: aggregate_confidences(confs, aggregate)
        for image_id, confs in grouped.items()
        if confs
    }
    return _select_from_scores(scores, skipped, k)


def sample_seed(corpus: Sequence[str], size: int, rng_seed: int) -> list[str]:
    """Draw the random human-labeling seed, reproducibly from an explicit seed."""
    unique = sorted(set(corpus))
    if len(unique) != len(corpus):
        raise ValueError("corpus ids must be unique")
    if size > len(unique):
        raise SelectionError(size, len(unique))
    return sorted(random.Random(rng_seed).sample(unique, size))


@dataclass(frozen=True)
class TrainerContract:
    """External command pair the loop drives.

    ``train_cmd`` must mention {train-dir}; ``predict_cmd`` must mention
    {predict-list} and {out-dir}.  Commands run through the shell in
    ``workdir`` and must exit 0.  The predictor writes one 6-field YOLO file
    per image id (subdirectories allowed) under {out-dir}; images it finds
    nothing on may be omitted.
    """

    train_cmd: str
    predict_cmd: str
    workdir: str = "."

    def __post_init__(self) -> None:
        missing = []
        if "{train-dir}" not in self.train_cmd:
            missing.append("train_cmd lacks {train-dir}")
        if "{predict-list}" not in self.predict_cmd:
            missing.append("predict_cmd lacks {predict-list}")
        if "{out-dir}" not in self.predict_cmd:
            missing.append("predict_cmd lacks {out-dir}")
        if missing:
            raise ValueError("; ".join(missing))


def _run_command(command: str, workdir: str) -> None:
    proc = subprocess.run(
        command, shell=True, cwd=workdir, capture_output=True, text=True
    )
    if proc.returncode != 0:
        raise TrainerCommandError(command, proc.returncode, proc.stderr)


def export_pool_labels(pool: LabeledPool, directory: str | Path) -> None:
    """Write the pool as 5-field ground-truth files (confidences stripped)."""
    directory = Path(directory)
    for image_id in pool.ids():
        labels, _ = pool.entries[image_id]
        path = directory / f"{image_id}.txt"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(serialize_yolo_labels(strip_confidences(labels)), encoding="utf-8")


def pool_to_dict(pool: LabeledPool) -> dict:
    return {
        "size": pool.size,
        "entries": {
            image_id: {
                "labels": serialize_yolo_labels(labels),
                "provenance": provenance.as_dict(),
            }
            for image_id, (labels, provenance) in sorted(pool.entries.items())
        },
    }


def pool_from_dict(doc: Mapping) -> LabeledPool:
    entries = {}
    for image_id, entry in doc["entries"].items():
        labels = parse_yolo_labels(entry["labels"], image_id=image_id)
        entries[image_id] = (labels, Provenance.from_dict(entry["provenance"]))
    return LabeledPool(entries=entries)


def _audit_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n"


def _read_audit(path: Path) -> list[dict]:
    if not path.exists():
        return []
    records = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError:
            break  # a crash mid-append leaves a partial trailing line
    return records


def _parse_prediction_file(path: Path, image_id: str) -> LabelFile:
    try:
        labels = parse_yolo_labels(path.read_text(encoding="utf-8"), image_id=image_id)
    except (LabelParseError, ValueError) as exc:
        raise LabelParseError(f"{path}: {exc}") from exc
    if labels.entries and not labels.is_detection:
        raise LabelParseError(f"{path}: prediction lines lack the confidence field")
    return labels


class _LoopState:
    """Filesystem layout and resume logic for one loop run."""

    def __init__(self, state_dir: str | Path):
        self.root = Path(state_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.audit_path = self.root / "audit.jsonl"
        self.seed_path = self.root / "seed-pool.json"

    def round_dir(self, index: int) -> Path:
        return self.root / f"round-{index}"

    def pool_path(self, index: int) -> Path:
        return self.round_dir(index) / "pool.json"

    def last_completed_round(self) -> int:
        index = 0
        while self.pool_path(index).exists():
            index += 1
        return index - 1

    def trim_audit(self, last_completed: int) -> list[dict]:
        """Drop audit records from rounds that never completed."""
        records = [
            r
            for r in _read_audit(self.audit_path)
            if r.get("round") is None or r["round"] <= last_completed
        ]
        atomic_write_text(self.audit_path, "".join(_audit_line(r) for r in records))
        return records

    def append_audit(self, record: dict) -> None:
        with open(self.audit_path, "a", encoding="utf-8") as handle:
            handle.write(_audit_line(record))


def run_loop(
    plan: BootstrapPlan,
    contract: TrainerContract,
    corpus: Sequence[str],
    seed_pool: LabeledPool,
    state_dir: str | Path,
    *,
    aggregate: str = "max",
    rng_seed: int | None = None,
) -> tuple[LabeledPool, list[dict]]:
    """Run (or resume) the full labeling loop; returns the final pool and audit.

    Each round exports the pool for the trainer, runs train and predict,
    parses the predictions, and merges either the top-confidence selection
    (intermediate rounds) or everything left (final round).  A failed
    external command aborts the round with state preserved; calling again
    resumes after the last completed round and reproduces the same bytes a
    never-interrupted run would have written.
    """
    corpus_ids = sorted(set(corpus))
    if len(corpus_ids) != len(corpus):
        raise ValueError("corpus ids must be unique")
    if len(corpus_ids) != plan.corpus_size:
        raise ValueError(
            f"plan says corpus_size={plan.corpus_size} but the corpus lists {len(corpus_ids)} ids"
        )
    if seed_pool.size != plan.seed_size:
        raise ValueError(
            f"plan says seed_size={plan.seed_size} but the seed pool holds {seed_pool.size}"
        )
    corpus_set = set(corpus_ids)
    missing = [i for i in seed_pool.ids() if i not in corpus_set]
    if missing:
        raise ValueError(f"seed ids not in corpus: {missing[:5]}")

    state = _LoopState(state_dir)

    if state.seed_path.exists():
        persisted = pool_from_dict(json.loads(state.seed_path.read_text(encoding="utf-8")))
        if persisted.ids() != seed_pool.ids():
            raise ValueError("state directory belongs to a different seed pool")
    else:
        atomic_write_json(state.seed_path, pool_to_dict(seed_pool))

    last_completed = state.last_completed_round()
    records = state.trim_audit(last_completed)
    if not any(r.get("event") == "seed" for r in records):
        state.append_audit(
            {
                "event": "seed",
                "round": None,
                "count": seed_pool.size,
                "ids": seed_pool.ids(),
                "rng_seed": rng_seed,
            }
        )

    if last_completed >= 0:
        pool = pool_from_dict(
            json.loads(state.pool_path(last_completed).read_text(encoding="utf-8"))
        )
    else:
        pool = seed_pool

    for step in plan_rounds(plan):
        if step.index <= last_completed:
            continue
        round_dir = state.round_dir(step.index)
        round_dir.mkdir(parents=True, exist_ok=True)

        # A failed attempt may have left partial exports or predictions
        # behind; start the round from a clean slate so resumed runs write
        # exactly what an uninterrupted run would.
        train_dir = round_dir / "train-labels"
        if train_dir.exists():
            shutil.rmtree(train_dir)
        export_pool_labels(pool, train_dir)
        _run_command(contract.train_cmd.replace("{train-dir}", str(train_dir)), contract.workdir)

        remainder = [i for i in corpus_ids if i not in pool.entries]
        predict_list = round_dir / "predict-list.txt"
        atomic_write_text(predict_list, "".join(i + "\n" for i in remainder))
        out_dir = round_dir / "predictions"
        if out_dir.exists():
            shutil.rmtree(out_dir)
        out_dir.mkdir()
        _run_command(
            contract.predict_cmd.replace("{predict-list}", str(predict_list)).replace(
                "{out-dir}", str(out_dir)
            ),
            contract.workdir,
        )

        predicted: dict[str, LabelFile] = {}
        for image_id in remainder:
            path = out_dir / f"{image_id}.txt"
            if path.exists():
                predicted[image_id] = _parse_prediction_file(path, image_id)

        scores = {
            image_id: aggregate_confidences(
                [e.confidence for e in labels.entries], aggregate
            )
            for image_id, labels in predicted.items()
            if labels.entries
        }

        final_round = step.index == plan.rounds
        if final_round:
            additions = [
                (image_id, predicted.get(image_id, LabelFile(image_id=image_id, entries=())))
                for image_id in remainder
            ]
            selected_ids = remainder
            state.append_audit(
                {
                    "event": "final-predict",
                    "round": step.index,
                    "train_size": step.train_size,
                    "added": [[i, scores.get(i)] for i in remainder],
                }
            )
        else:
            skipped = sorted(set(remainder) - set(scores))
            selection = _select_from_scores(scores, skipped, plan.per_round)
            selected_ids = list(selection.selected)
            additions = [(image_id, predicted[image_id]) for image_id in selected_ids]
            state.append_audit(
                {
                    "event": "select",
                    "round": step.index,
                    "train_size": step.train_size,
                    "predicted": len(predicted),
                    "selected": [[i, scores[i]] for i in selected_ids],
                    "skipped": list(selection.skipped),
                }
            )

        atomic_write_text(round_dir / "selected.txt", "".join(i + "\n" for i in selected_ids))
        pool = merge_pool(pool, additions, step.index, scores)
        atomic_write_json(state.pool_path(step.index), pool_to_dict(pool))

    return pool, _read_audit(state.audit_path)
