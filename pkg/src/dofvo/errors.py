"""Exception types shared across the pipeline.

The CLI maps these onto exit codes: usage errors exit 1, data errors
exit 2, numerical failures exit 3.
"""

from __future__ import annotations


class DofvoError(Exception):
    """Base class for all errors raised by this package."""


class DataError(DofvoError):
    """Malformed or missing input data (exit code 2)."""


class NumericalError(DofvoError):
    """A computation failed or degenerated (exit code 3)."""


class DegenerateQuaternionError(NumericalError):
    """Quaternion norm too small to define a rotation."""


class DegenerateMatrixError(NumericalError):
    """Matrix cannot be projected onto a proper rotation."""


class DatasetError(DataError):
    """Dataset layout or file-contents problem; message names the file."""


class EmptyOverlapError(DatasetError):
    """No frame pair falls inside the ground-truth time coverage."""


class GroundTruthRangeError(DataError):
    """Query time outside ground-truth coverage.

    Carries the valid window as ``(start_ns, end_ns)``.
    """

    def __init__(self, message: str, window: tuple[int, int]):
        super().__init__(message)
        self.window = window


class AlignmentError(DataError):
    """Estimate and ground-truth rows do not line up by timestamp."""


class InsufficientCorrespondencesError(NumericalError):
    """Fewer valid correspondences than the solver's minimal sample."""


class DegenerateGeometryError(NumericalError):
    """Point configuration does not constrain the epipolar geometry."""


class CheiralityError(NumericalError):
    """No pose candidate puts a clear majority of points in front of both cameras."""


class TooFewSamplesError(DataError):
    """Not enough usable training samples for the configured batch size."""


class DivergenceError(NumericalError):
    """Training loss became non-finite.  Carries the offending epoch."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class ModelFormatError(DataError):
    """Model file is corrupt (bad magic, truncation, checksum)."""


class ModelVersionError(ModelFormatError):
    """Model file declares a format version this build does not read."""
