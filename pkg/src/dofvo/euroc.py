"""EuRoC ASL sequence ingestion and relative ground-truth association.

Expected layout under a sequence root::

    <root>/mav0/cam0/data.csv              # timestamp [ns], filename
    <root>/mav0/cam0/data/<timestamp>.png
    <root>/mav0/state_groundtruth_estimate0/data.csv

Header lines beginning with ``#`` are skipped.  Camera and ground-truth
clocks are not sampled at identical instants, so ground truth is
interpolated (linear position, slerp orientation) to camera timestamps.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    DatasetError,
    DegenerateQuaternionError,
    EmptyOverlapError,
    GroundTruthRangeError,
)
from .se3 import DoFVector, Quaternion, Transform, quat_to_rotation, relative_pose, slerp, transform_to_dof

DEFAULT_CAMERA_DIR = "mav0/cam0"
DEFAULT_GROUNDTRUTH_DIR = "mav0/state_groundtruth_estimate0"

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class FrameRecord:
    timestamp: int  # nanoseconds
    image_filename: str


@dataclass(frozen=True)
class GroundTruthRecord:
    timestamp: int  # nanoseconds
    position: np.ndarray  # (3,), meters
    orientation: Quaternion

    def pose(self) -> Transform:
        return Transform(quat_to_rotation(self.orientation), self.position)


@dataclass(frozen=True)
class GroundTruthTable:
    """Ground-truth records plus the count of rows whose quaternion needed
    a norm adjustment larger than 1e-3 at load time."""

    records: tuple[GroundTruthRecord, ...]
    norm_warning_count: int

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def __iter__(self):
        return iter(self.records)


@dataclass(frozen=True)
class GrayImage:
    """Grayscale image with row-major intensities scaled to [0, 1]."""

    width: int
    height: int
    pixels: np.ndarray  # (height, width) float64

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.shape != (self.height, self.width):
            raise DatasetError(
                f"pixel buffer shape {px.shape} does not match {self.height}x{self.width}"
            )
        px = px.copy()
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)


@dataclass(frozen=True)
class AssociatedPair:
    frame_a: FrameRecord
    frame_b: FrameRecord
    gt_relative: Transform
    gt_dof: DoFVector


@dataclass(frozen=True)
class AssociationResult:
    pairs: tuple[AssociatedPair, ...]
    dropped: int


def _data_rows(path: Path):
    """Yield (line_number, fields) for non-comment rows of a CSV file."""
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise DatasetError(f"missing file: {path}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        yield lineno, [f.strip() for f in stripped.split(",")]


def load_camera_index(path) -> list[FrameRecord]:
    """Parse a camera data.csv into timestamp-ordered FrameRecords."""
    path = Path(path)
    records: list[FrameRecord] = []
    for lineno, fields in _data_rows(path):
        if len(fields) < 2:
            raise DatasetError(f"{path}:{lineno}: expected 'timestamp,filename', got {len(fields)} fields")
        try:
            ts = int(fields[0])
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: bad timestamp {fields[0]!r}") from None
        if records and ts <= records[-1].timestamp:
            raise DatasetError(
                f"{path}:{lineno}: timestamp {ts} not strictly increasing (previous {records[-1].timestamp})"
            )
        records.append(FrameRecord(ts, fields[1]))
    if len(records) < 2:
        raise DatasetError(f"{path}: camera index needs at least 2 frames, found {len(records)}")
    return records


def load_groundtruth(path) -> GroundTruthTable:
    """Parse a state-estimate data.csv: timestamp, p_xyz, q_wxyz; extra columns ignored."""
    path = Path(path)
    records: list[GroundTruthRecord] = []
    warnings = 0
    for lineno, fields in _data_rows(path):
        if len(fields) < 8:
            raise DatasetError(
                f"{path}:{lineno}: expected at least 8 columns (timestamp,p_xyz,q_wxyz), got {len(fields)}"
            )
        try:
            ts = int(fields[0])
            values = [float(v) for v in fields[1:8]]
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: non-numeric field") from None
        if not all(math.isfinite(v) for v in values):
            raise DatasetError(f"{path}:{lineno}: non-finite value")
        if records and ts <= records[-1].timestamp:
            raise DatasetError(
                f"{path}:{lineno}: timestamp {ts} not strictly increasing (previous {records[-1].timestamp})"
            )
        q = Quaternion(values[3], values[4], values[5], values[6])
        norm = q.norm()
        if norm < 1e-12:
            raise DegenerateQuaternionError(f"{path}:{lineno}: quaternion norm {norm:g}")
        if abs(norm - 1.0) > 1e-3:
            warnings += 1
        records.append(GroundTruthRecord(ts, np.array(values[0:3]), q.normalized()))
    if not records:
        raise DatasetError(f"{path}: no ground-truth rows")
    return GroundTruthTable(tuple(records), warnings)


def interpolate_gt(gt, t: int) -> Transform:
    """Pose at time t: lerp position, slerp orientation between bracketing records."""
    records = list(gt)
    first, last = records[0].timestamp, records[-1].timestamp
    if t < first or t > last:
        raise GroundTruthRangeError(
            f"time {t} outside ground-truth coverage [{first}, {last}]", (first, last)
        )
    timestamps = [r.timestamp for r in records]
    i = bisect_left(timestamps, t)
    if timestamps[i] == t:
        return records[i].pose()
    lo, hi = records[i - 1], records[i]
    alpha = (t - lo.timestamp) / (hi.timestamp - lo.timestamp)
    position = (1.0 - alpha) * lo.position + alpha * hi.position
    orientation = slerp(lo.orientation, hi.orientation, alpha)
    return Transform(quat_to_rotation(orientation), position)


def build_pairs(frames, gt, max_extrapolation: int = 0) -> AssociationResult:
    """Associate each consecutive frame pair with interpolated relative ground truth.

    Timestamps within max_extrapolation ns outside coverage are clamped to
    the boundary pose; pairs further out are dropped and counted.
    """
    frames = list(frames)
    records = list(gt)
    if not records:
        raise EmptyOverlapError("ground truth is empty")
    first, last = records[0].timestamp, records[-1].timestamp

    def covered(t: int) -> bool:
        return first - max_extrapolation <= t <= last + max_extrapolation

    def clamp(t: int) -> int:
        return min(max(t, first), last)

    pairs: list[AssociatedPair] = []
    dropped = 0
    for fa, fb in zip(frames[:-1], frames[1:]):
        if not (covered(fa.timestamp) and covered(fb.timestamp)):
            dropped += 1
            continue
        pose_a = interpolate_gt(gt, clamp(fa.timestamp))
        pose_b = interpolate_gt(gt, clamp(fb.timestamp))
        rel = relative_pose(pose_a, pose_b)
        pairs.append(AssociatedPair(fa, fb, rel, transform_to_dof(rel)))
    if not pairs:
        raise EmptyOverlapError(
            f"no frame pair overlaps ground truth coverage [{first}, {last}] "
            f"({len(frames)} frames, {dropped} pairs dropped)"
        )
    return AssociationResult(tuple(pairs), dropped)


def load_image(path, min_size: int = 32) -> GrayImage:
    """Load an 8-bit grayscale PNG/PGM; RGB inputs are reduced by luminance."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            mode = img.mode
            if mode == "P":
                img = img.convert("RGB")
                mode = "RGB"
            if mode in ("LA", "RGBA"):
                mode = mode.rstrip("A")
                img = img.convert(mode)
            if mode == "L":
                data = np.asarray(img, dtype=np.float64) / 255.0
            elif mode == "RGB":
                rgb = np.asarray(img, dtype=np.float64) / 255.0
                data = rgb @ np.array(LUMA_WEIGHTS)
            else:
                raise DatasetError(f"{path}: unsupported image mode {img.mode!r}")
    except FileNotFoundError:
        raise DatasetError(f"missing image: {path}") from None
    except UnidentifiedImageError:
        raise DatasetError(f"{path}: unsupported image format") from None
    height, width = data.shape
    if width < min_size or height < min_size:
        raise DatasetError(f"{path}: image {width}x{height} below minimum size {min_size}")
    return GrayImage(width, height, data)


def sequence_paths(root, camera_dir: str = DEFAULT_CAMERA_DIR, gt_dir: str = DEFAULT_GROUNDTRUTH_DIR):
    """Resolve (camera index csv, image directory, ground-truth csv) under root."""
    root = Path(root)
    cam = root / camera_dir
    return cam / "data.csv", cam / "data", root / gt_dir / "data.csv"


def write_relative_csv(path, rows) -> None:
    """Write associated relative motions: rows of (ts_a, ts_b, DoFVector)."""
    path = Path(path)
    lines = ["timestamp_a_ns,timestamp_b_ns,tx,ty,tz,rx,ry,rz"]
    for ts_a, ts_b, dof in rows:
        vals = ",".join(f"{v:.9g}" for v in dof.as_array())
        lines.append(f"{ts_a},{ts_b},{vals}")
    path.write_text("\n".join(lines) + "\n")


def read_relative_csv(path) -> list[tuple[int, int, DoFVector]]:
    path = Path(path)
    rows: list[tuple[int, int, DoFVector]] = []
    for lineno, fields in _data_rows(path):
        if fields[0] == "timestamp_a_ns":
            continue
        if len(fields) != 8:
            raise DatasetError(f"{path}:{lineno}: expected 8 columns, got {len(fields)}")
        try:
            ts_a, ts_b = int(fields[0]), int(fields[1])
            dof = DoFVector(*(float(v) for v in fields[2:8]))
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: non-numeric field") from None
        rows.append((ts_a, ts_b, dof))
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return rows
