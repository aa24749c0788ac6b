"""Small filesystem and ordering helpers shared across modules."""

from __future__ import annotations

import json
import os
import re
import tempfile
from pathlib import Path

__all__ = ["atomic_write_text", "atomic_write_json", "natural_sort_key"]

_NUM_RE = re.compile(r"(\d+)")


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write a file so readers never observe a partial state.

    The text goes to a temp file in the target directory, is flushed and
    fsynced, then renamed over the destination; rename is atomic on POSIX.
    """
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def atomic_write_json(path: str | Path, payload: object) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def natural_sort_key(text: str) -> tuple:
    """Sort key treating digit runs as numbers, so frame-2 < frame-10."""
    parts = _NUM_RE.split(text)
    return tuple(int(p) if p.isdigit() else p for p in parts)
