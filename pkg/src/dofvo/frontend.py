"""Frame-pair visual odometry: detection, tracking, epipolar estimation and
pose recovery glued into one call, plus scale handling and the raw-pose CSV.

process_pair never raises on a bad pair. Geometry failures (too few tracks,
degenerate consensus, ambiguous cheirality, low parallax) come back as an
identity motion with the failure flag set, so a long run can absorb bad
frames and keep its index alignment.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .epipolar import (
    CameraIntrinsics,
    RansacConfig,
    essential_from_fundamental,
    estimate_essential,
    estimate_fundamental,
    recover_pose,
)
from .errors import (
    CheiralityError,
    DataError,
    DegenerateGeometryError,
    InsufficientCorrespondencesError,
)
from .euroc import GrayImage
from .features import DetectorConfig, harris_corners, shi_tomasi_rescore
from .flow import TrackerConfig, track_features
from .se3 import DoFVector, Transform, transform_to_dof

GEOMETRY_MODES = ("essential", "fundamental")


@dataclass(frozen=True)
class FrontendConfig:
    detector: DetectorConfig = DetectorConfig()
    tracker: TrackerConfig = TrackerConfig()
    ransac: RansacConfig = RansacConfig()
    geometry_mode: str = "essential"
    min_valid_tracks: int = 8
    min_median_flow_px: float = 0.25

    def __post_init__(self):
        if self.geometry_mode not in GEOMETRY_MODES:
            raise ValueError(f"geometry_mode must be one of {GEOMETRY_MODES}")


@dataclass(frozen=True)
class PairDiagnostics:
    n_features: int = 0
    n_kept: int = 0
    n_tracked: int = 0
    n_inliers: int = 0
    median_flow_px: float = 0.0
    cheirality_votes: tuple[int, int, int, int] = (0, 0, 0, 0)
    low_parallax: bool = False
    failed: bool = False
    failure_reason: str | None = None
    stage_seconds: dict = field(default_factory=dict)


def process_pair(
    img_a: GrayImage,
    img_b: GrayImage,
    intrinsics: CameraIntrinsics,
    cfg: FrontendConfig = FrontendConfig(),
    rng: np.random.Generator | None = None,
) -> tuple[DoFVector, PairDiagnostics]:
    if rng is None:
        rng = np.random.default_rng(0)
    times: dict[str, float] = {}

    def fail(reason: str, low_parallax: bool = False, **counts) -> tuple[DoFVector, PairDiagnostics]:
        diag = PairDiagnostics(
            failed=True,
            failure_reason=reason,
            low_parallax=low_parallax,
            stage_seconds=times,
            **counts,
        )
        return DoFVector.zero(), diag

    t0 = time.perf_counter()
    feats = harris_corners(img_a, cfg.detector)
    kept = shi_tomasi_rescore(img_a, feats, cfg.detector)
    times["detect"] = time.perf_counter() - t0
    if len(kept) < cfg.min_valid_tracks:
        return fail("too few features", n_features=len(feats), n_kept=len(kept))

    t0 = time.perf_counter()
    corr = track_features(img_a, img_b, kept, cfg.tracker)
    times["track"] = time.perf_counter() - t0
    if corr.valid_count < cfg.min_valid_tracks:
        return fail(
            "tracking collapse",
            n_features=len(feats),
            n_kept=len(kept),
            n_tracked=corr.valid_count,
        )

    pa, pb = corr.valid_pairs()
    median_flow = float(np.median(np.linalg.norm(pb - pa, axis=1)))
    counts = dict(
        n_features=len(feats),
        n_kept=len(kept),
        n_tracked=corr.valid_count,
        median_flow_px=median_flow,
    )
    if median_flow < cfg.min_median_flow_px:
        return fail("low parallax", low_parallax=True, **counts)

    t0 = time.perf_counter()
    try:
        if cfg.geometry_mode == "fundamental":
            fund = estimate_fundamental(corr, cfg.ransac, rng)
            e = essential_from_fundamental(fund, intrinsics)
        else:
            e = estimate_essential(corr, intrinsics, cfg.ransac, rng)
        times["estimate"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        pose = recover_pose(e, corr, intrinsics)
        times["recover"] = time.perf_counter() - t0
    except (InsufficientCorrespondencesError, DegenerateGeometryError) as exc:
        times.setdefault("estimate", time.perf_counter() - t0)
        return fail(f"geometry: {exc}", **counts)
    except CheiralityError as exc:
        times.setdefault("recover", time.perf_counter() - t0)
        return fail(f"cheirality: {exc}", **counts)

    # recover_pose convention is X_b = R X_a + t; the motion of camera b
    # expressed in camera a (matching ground-truth relative poses) is the
    # inverse: rotation R^T, camera-b position -R^T t.
    motion = Transform(pose.rotation.T, -pose.rotation.T @ pose.translation)
    dof = transform_to_dof(motion)
    diag = PairDiagnostics(
        n_inliers=pose.inlier_count,
        cheirality_votes=pose.cheirality_votes,
        stage_seconds=times,
        **counts,
    )
    return dof, diag


def apply_gt_scale(raw: DoFVector, gt: DoFVector) -> DoFVector:
    """Rescale a unit-direction translation by the ground-truth step length."""
    scale = gt.step_norm()
    return DoFVector(
        tx=raw.tx * scale,
        ty=raw.ty * scale,
        tz=raw.tz * scale,
        rx=raw.rx,
        ry=raw.ry,
        rz=raw.rz,
        gimbal_lock=raw.gimbal_lock,
    )


@dataclass(frozen=True)
class RawPoseRow:
    timestamp_a: int
    timestamp_b: int
    dof: DoFVector
    inliers: int
    failed: bool


RAW_POSE_HEADER = [
    "timestamp_a_ns",
    "timestamp_b_ns",
    "tx",
    "ty",
    "tz",
    "rx",
    "ry",
    "rz",
    "inliers",
    "failed",
]


def write_raw_csv(path, rows: list[RawPoseRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RAW_POSE_HEADER)
        for row in rows:
            d = row.dof
            writer.writerow(
                [
                    row.timestamp_a,
                    row.timestamp_b,
                    *(f"{v:.9g}" for v in (d.tx, d.ty, d.tz, d.rx, d.ry, d.rz)),
                    row.inliers,
                    int(row.failed),
                ]
            )


def read_raw_csv(path) -> list[RawPoseRow]:
    rows: list[RawPoseRow] = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open raw-pose file: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RAW_POSE_HEADER:
            raise DataError(f"unexpected raw-pose header in {path}: {header}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(RAW_POSE_HEADER):
                raise DataError(f"{path}:{lineno}: expected {len(RAW_POSE_HEADER)} fields")
            try:
                dof = DoFVector(
                    tx=float(rec[2]),
                    ty=float(rec[3]),
                    tz=float(rec[4]),
                    rx=float(rec[5]),
                    ry=float(rec[6]),
                    rz=float(rec[7]),
                )
                rows.append(
                    RawPoseRow(
                        timestamp_a=int(rec[0]),
                        timestamp_b=int(rec[1]),
                        dof=dof,
                        inliers=int(rec[8]),
                        failed=bool(int(rec[9])),
                    )
                )
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return rows
