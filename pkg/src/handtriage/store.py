"""Durable storage for triage runs and examiner verdicts.

Layout: one sub-directory per run id under the data directory, holding
``run.json`` (the immutable run) and ``verdicts.jsonl`` (an append-only
audit trail of verdict updates; the current verdict of a frame is its
highest-revision record).

Verdict updates use optimistic concurrency: the caller sends the revision
it believes is current, the store accepts only when that matches, and the
accepted update gets revision current+1.  Updates are serialized per run
through an in-process lock; readers never block and see the latest
committed revision.
"""

from __future__ import annotations

import json
import re
import threading
import uuid
from pathlib import Path

from .errors import StaleRevisionError
from .fsutil import atomic_write_json
from .triage import FrameVerdict, TriageRun, run_from_dict, run_to_dict

__all__ = ["RunStore", "new_run_id"]

_RUN_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


def new_run_id() -> str:
    return uuid.uuid4().hex[:12]


class RunStore:
    """Filesystem-backed run and verdict storage."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock(self, run_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(run_id, threading.Lock())

    def _run_dir(self, run_id: str) -> Path:
        if not _RUN_ID_RE.match(run_id):
            raise KeyError(f"invalid run id {run_id!r}")
        return self.data_dir / run_id

    def list_runs(self) -> list[TriageRun]:
        runs = []
        for path in sorted(self.data_dir.iterdir()) if self.data_dir.exists() else []:
            if (path / "run.json").exists():
                runs.append(self.load_run(path.name))
        runs.sort(key=lambda r: (r.created_at, r.run_id))
        return runs

    def has_run(self, run_id: str) -> bool:
        try:
            return (self._run_dir(run_id) / "run.json").exists()
        except KeyError:
            return False

    def save_run(self, run: TriageRun) -> None:
        if not run.run_id:
            raise ValueError("run id must be set before saving")
        run_dir = self._run_dir(run.run_id)
        run_dir.mkdir(parents=True, exist_ok=True)
        atomic_write_json(run_dir / "run.json", run_to_dict(run))

    def load_run(self, run_id: str) -> TriageRun:
        path = self._run_dir(run_id) / "run.json"
        if not path.exists():
            raise KeyError(f"no run {run_id!r}")
        return run_from_dict(json.loads(path.read_text(encoding="utf-8")))

    def verdicts(self, run_id: str) -> dict[str, FrameVerdict]:
        """Current verdict per frame: the highest-revision record of each."""
        path = self._run_dir(run_id) / "verdicts.jsonl"
        current: dict[str, FrameVerdict] = {}
        if not path.exists():
            return current
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            doc = json.loads(line)
            verdict = FrameVerdict(
                frame_id=doc["frame_id"],
                verdict=doc["verdict"],
                note=doc.get("note", ""),
                revision=doc["revision"],
            )
            existing = current.get(verdict.frame_id)
            if existing is None or verdict.revision > existing.revision:
                current[verdict.frame_id] = verdict
        return current

    def set_verdict(
        self,
        run_id: str,
        frame_id: str,
        verdict: str,
        note: str = "",
        expected_revision: int = 0,
    ) -> FrameVerdict:
        """Record a verdict update; the expected revision must be current.

        A fresh frame is at revision 0.  On acceptance the update is
        appended with revision current+1; a stale expectation raises and
        changes nothing.
        """
        with self._lock(run_id):
            run = self.load_run(run_id)
            if run.record(frame_id) is None:
                raise KeyError(f"run {run_id!r} has no frame {frame_id!r}")
            existing = self.verdicts(run_id).get(frame_id)
            current = existing.revision if existing else 0
            if expected_revision != current:
                raise StaleRevisionError(expected_revision, current)
            updated = FrameVerdict(
                frame_id=frame_id, verdict=verdict, note=note, revision=current + 1
            )
            line = json.dumps(
                {
                    "frame_id": updated.frame_id,
                    "verdict": updated.verdict,
                    "note": updated.note,
                    "revision": updated.revision,
                },
                sort_keys=True,
                separators=(",", ":"),
            )
            path = self._run_dir(run_id) / "verdicts.jsonl"
            with open(path, "a", encoding="utf-8") as handle:
                handle.write(line + "\n")
            return updated
