"""Exception types shared across the toolkit."""

from __future__ import annotations


class HandTriageError(Exception):
    """Base class for all toolkit errors."""


class FieldRangeError(HandTriageError, ValueError):
    """A numeric field is outside its allowed range."""

    def __init__(self, field: str, value: object, bounds: str, line: int | None = None):
        self.field = field
        self.value = value
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{field} out of range {bounds}: {value!r}{where}")


class LabelParseError(HandTriageError, ValueError):
    """A label file line cannot be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")


class BoxBoundsError(HandTriageError, ValueError):
    """A pixel box sticks out of its image; clip before normalizing."""


class MissingSizeError(HandTriageError, ValueError):
    """No image size is known for a referenced image id."""

    def __init__(self, image_id: str):
        self.image_id = image_id
        super().__init__(f"no image size known for {image_id!r}")


class SplitLeakageError(HandTriageError, ValueError):
    """The same image id appears in more than one split of a manifest."""

    def __init__(self, image_id: str, splits: tuple[str, str]):
        self.image_id = image_id
        self.splits = splits
        super().__init__(f"image id {image_id!r} appears in both {splits[0]} and {splits[1]}")


class ManifestMergeError(HandTriageError, ValueError):
    """Two manifests being merged share an image id."""

    def __init__(self, image_id: str, sources: tuple[str, str]):
        self.image_id = image_id
        self.sources = sources
        super().__init__(
            f"image id {image_id!r} present in both {sources[0]!r} and {sources[1]!r}"
        )


class UndefinedCurveError(HandTriageError, ValueError):
    """Precision-recall is undefined because there is no ground truth."""


class PlanOverflowError(HandTriageError, ValueError):
    """A bootstrap plan asks for more labeled images than the corpus holds."""


class SelectionError(HandTriageError, ValueError):
    """Top-k selection was asked for more images than are eligible."""

    def __init__(self, k: int, candidates: int):
        self.k = k
        self.candidates = candidates
        super().__init__(f"cannot select top {k}: only {candidates} candidate images")


class PoolCollisionError(HandTriageError, ValueError):
    """An image id being added to a labeled pool is already present."""

    def __init__(self, image_id: str):
        self.image_id = image_id
        super().__init__(f"image id {image_id!r} is already in the pool")


class TrainerCommandError(HandTriageError, RuntimeError):
    """An external train/predict command exited nonzero."""

    def __init__(self, command: str, returncode: int, stderr: str = ""):
        self.command = command
        self.returncode = returncode
        self.stderr = stderr
        tail = f": {stderr.strip()[-500:]}" if stderr.strip() else ""
        super().__init__(f"command failed with exit code {returncode}: {command}{tail}")


class UnknownFrameError(HandTriageError, ValueError):
    """Detections reference frame ids that are not part of the run."""

    def __init__(self, frame_ids: list[str]):
        self.frame_ids = frame_ids
        listed = ", ".join(repr(f) for f in frame_ids)
        super().__init__(f"detections reference unknown frames: {listed}")


class ThresholdError(HandTriageError, ValueError):
    """An area threshold is invalid (negative)."""


class StaleRevisionError(HandTriageError, ValueError):
    """A verdict update carries a revision that is no longer current."""

    def __init__(self, expected: int, current: int):
        self.expected = expected
        self.current = current
        super().__init__(f"stale revision {expected}; current revision is {current}")
