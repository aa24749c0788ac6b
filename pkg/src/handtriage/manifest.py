"""Dataset manifests: named train/val/test splits with leakage guards.

A manifest records which image ids belong to which split.  Counts are always
derived from the id lists, so the two can never disagree.  Combining datasets
is a merge of manifests whose id sets must be disjoint; because ids are
"datasettag/relativepath" strings, well-formed sources cannot collide.

Manifest construction is a deterministic single-threaded fold over sorted
ids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ManifestMergeError, SplitLeakageError

__all__ = [
    "SPLITS",
    "DatasetManifest",
    "build_manifest",
    "merge_manifests",
    "manifest_to_dict",
    "manifest_from_dict",
    "save_manifest",
    "load_manifest",
]

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class DatasetManifest:
    """One dataset's split membership.

    Id tuples are kept sorted; counts are properties of the tuples.
    """

    name: str
    train_ids: tuple[str, ...] = ()
    val_ids: tuple[str, ...] = ()
    test_ids: tuple[str, ...] = ()
    features: str = ""

    @property
    def train(self) -> int:
        return len(self.train_ids)

    @property
    def val(self) -> int:
        return len(self.val_ids)

    @property
    def test(self) -> int:
        return len(self.test_ids)

    @property
    def total(self) -> int:
        return self.train + self.val + self.test

    def split_ids(self, split: str) -> tuple[str, ...]:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}, expected one of {SPLITS}")
        return getattr(self, f"{split}_ids")


def _checked_split(ids: Iterable[str], split: str) -> tuple[str, ...]:
    ordered = sorted(ids)
    for a, b in zip(ordered, ordered[1:]):
        if a == b:
            raise SplitLeakageError(a, (split, split))
    return tuple(ordered)


def build_manifest(
    splits: Mapping[str, Iterable[str]], name: str, features: str = ""
) -> DatasetManifest:
    """Build a manifest from per-split id lists.

    Ids must be unique within each split and no id may appear in two splits;
    a violation names the id and the splits involved.  Unknown split keys are
    rejected.
    """
    for key in splits:
        if key not in SPLITS:
            raise ValueError(f"unknown split {key!r}, expected one of {SPLITS}")

    checked = {split: _checked_split(splits.get(split, ()), split) for split in SPLITS}

    seen: dict[str, str] = {}
    for split in SPLITS:
        for image_id in checked[split]:
            if image_id in seen:
                raise SplitLeakageError(image_id, (seen[image_id], split))
            seen[image_id] = split

    return DatasetManifest(
        name=name,
        train_ids=checked["train"],
        val_ids=checked["val"],
        test_ids=checked["test"],
        features=features,
    )


def merge_manifests(
    parts: Sequence[DatasetManifest], name: str, features: str | None = None
) -> DatasetManifest:
    """Merge disjoint manifests; split counts add up by construction.

    An id present in two parts is a collision and names both sources.  With
    ``features`` unset, the parts' nonempty feature notes are joined with
    "; " so a single-part merge is the identity.
    """
    owner: dict[str, str] = {}
    merged: dict[str, list[str]] = {split: [] for split in SPLITS}
    for part in parts:
        for split in SPLITS:
            for image_id in part.split_ids(split):
                if image_id in owner:
                    raise ManifestMergeError(image_id, (owner[image_id], part.name))
                owner[image_id] = part.name
                merged[split].append(image_id)

    if features is None:
        features = "; ".join(p.features for p in parts if p.features)

    return build_manifest(merged, name=name, features=features)


def manifest_to_dict(manifest: DatasetManifest) -> dict:
    return {
        "name": manifest.name,
        "features": manifest.features,
        "counts": {split: len(manifest.split_ids(split)) for split in SPLITS},
        "splits": {split: list(manifest.split_ids(split)) for split in SPLITS},
    }


def manifest_from_dict(doc: Mapping) -> DatasetManifest:
    splits = doc.get("splits", {})
    manifest = build_manifest(
        {split: splits.get(split, []) for split in SPLITS},
        name=str(doc.get("name", "")),
        features=str(doc.get("features", "")),
    )
    counts = doc.get("counts")
    if counts:
        for split in SPLITS:
            stated = int(counts.get(split, 0))
            actual = len(manifest.split_ids(split))
            if stated != actual:
                raise ValueError(
                    f"{manifest.name!r} {split} count {stated} does not match "
                    f"{actual} listed ids"
                )
    return manifest


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(manifest_to_dict(manifest), indent=2) + "\n", encoding="utf-8"
    )


def load_manifest(path: str | Path) -> DatasetManifest:
    return manifest_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
