"""Trajectory error metrics and report tables.

RPE scores each frame-to-frame motion against its ground-truth
counterpart through the error transform gt_rel^-1 * est_rel, reported
per axis as RMSE over pairs (translations in meters, rotations as the
intrinsic Z*Y*X Euler angles of the error rotation, in radians). The
pooled "RPE Trans." value is the RMSE over all 3N per-axis translation
error components.

ATE scores the chained absolute trajectory: per-pose position residual
after an optional rigid alignment of the estimate onto the ground
truth, per-axis RMSE over poses, and their arithmetic mean. Alignment
is closed-form orthogonal Procrustes on positions (rotation plus
translation, no scale) and can be disabled.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, DataError, DegenerateQuaternionError
from .se3 import (
    Quaternion,
    Transform,
    compose,
    dof_to_transform,
    quat_to_rotation,
    relative_pose,
    rotation_to_euler,
    rotation_to_quat,
)

RPE_COLUMNS = (
    "RPE Trans. X",
    "RPE Trans. Y",
    "RPE Trans. Z",
    "RPE Trans.",
    "RPE Rot. RX",
    "RPE Rot. RY",
    "RPE Rot. RZ",
)
ATE_COLUMNS = ("ATE Trans. X", "ATE Trans. Y", "ATE Trans. Z", "Mean ATE")


@dataclass(frozen=True)
class Trajectory:
    """Ordered (timestamp ns, pose) entries; strictly increasing, >= 2."""

    entries: tuple[tuple[int, Transform], ...]

    def __post_init__(self):
        entries = tuple((int(ts), pose) for ts, pose in self.entries)
        if len(entries) < 2:
            raise ValueError(f"trajectory needs at least 2 poses, got {len(entries)}")
        for (ta, _), (tb, _) in zip(entries, entries[1:]):
            if tb <= ta:
                raise ValueError(f"timestamps must strictly increase ({ta} -> {tb})")
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    def timestamps(self) -> tuple[int, ...]:
        return tuple(ts for ts, _ in self.entries)

    def poses(self) -> tuple[Transform, ...]:
        return tuple(pose for _, pose in self.entries)

    def positions(self) -> np.ndarray:
        """(N, 3) array of pose translations."""
        return np.array([pose.translation for _, pose in self.entries])


@dataclass(frozen=True)
class RpeReport:
    """Per-axis RMSE over frame pairs; translations meters, rotations radians."""

    rpe_trans_x: float
    rpe_trans_y: float
    rpe_trans_z: float
    rpe_trans_mean: float
    rpe_rot_rx: float
    rpe_rot_ry: float
    rpe_rot_rz: float
    n_pairs: int
    n_excluded: int = 0

    def row(self) -> tuple[float, ...]:
        """Values in the report-table column order."""
        return (
            self.rpe_trans_x,
            self.rpe_trans_y,
            self.rpe_trans_z,
            self.rpe_trans_mean,
            self.rpe_rot_rx,
            self.rpe_rot_ry,
            self.rpe_rot_rz,
        )


@dataclass(frozen=True)
class AteReport:
    """Per-axis position RMSE over poses and their arithmetic mean, meters."""

    ate_x: float
    ate_y: float
    ate_z: float
    ate_mean: float
    n_poses: int
    aligned: bool = True

    def row(self) -> tuple[float, ...]:
        return (self.ate_x, self.ate_y, self.ate_z, self.ate_mean)


def rmse(values) -> float:
    """Root mean square of a nonempty sequence."""
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError("rmse of an empty sequence")
    return math.sqrt(float(arr @ arr) / arr.size)


def chain_relative(start: Transform, rels, timestamps) -> Trajectory:
    """Absolute trajectory from per-pair relative motions.

    pose_{i+1} = pose_i * rel_i; `timestamps` covers the poses, so it is
    one longer than `rels`. Rotations are re-projected onto SO(3) at every
    composition, which keeps long chains orthonormal.
    """
    rels = list(rels)
    timestamps = [int(t) for t in timestamps]
    if len(timestamps) != len(rels) + 1:
        raise ValueError(
            f"need {len(rels) + 1} timestamps for {len(rels)} steps, "
            f"got {len(timestamps)}"
        )
    pose = start
    entries = [(timestamps[0], pose)]
    for ts, rel in zip(timestamps[1:], rels):
        pose = compose(pose, dof_to_transform(rel))
        entries.append((ts, pose))
    return Trajectory(tuple(entries))


def compute_rpe(est_rels, gt_rels, failed=None) -> RpeReport:
    """Relative pose error over aligned per-pair motion lists.

    `failed` optionally flags pairs to exclude (frontend failures); they
    are counted in the report instead of polluting the RMSEs.
    """
    est_rels = list(est_rels)
    gt_rels = list(gt_rels)
    if len(est_rels) != len(gt_rels):
        raise AlignmentError(
            f"{len(est_rels)} estimated pairs vs {len(gt_rels)} ground-truth pairs"
        )
    if failed is None:
        failed = [False] * len(est_rels)
    failed = list(failed)
    if len(failed) != len(est_rels):
        raise AlignmentError(
            f"{len(failed)} failure flags for {len(est_rels)} pairs"
        )
    trans_err = []
    rot_err = []
    for est, gt, bad in zip(est_rels, gt_rels, failed):
        if bad:
            continue
        delta = relative_pose(dof_to_transform(gt), dof_to_transform(est))
        trans_err.append(delta.translation)
        eul = rotation_to_euler(delta.rotation)
        rot_err.append([eul.rx, eul.ry, eul.rz])
    if not trans_err:
        raise DataError("no usable pairs left after excluding failures")
    terr = np.array(trans_err)
    rerr = np.array(rot_err)
    return RpeReport(
        rpe_trans_x=rmse(terr[:, 0]),
        rpe_trans_y=rmse(terr[:, 1]),
        rpe_trans_z=rmse(terr[:, 2]),
        rpe_trans_mean=rmse(terr),
        rpe_rot_rx=rmse(rerr[:, 0]),
        rpe_rot_ry=rmse(rerr[:, 1]),
        rpe_rot_rz=rmse(rerr[:, 2]),
        n_pairs=len(terr),
        n_excluded=sum(bool(b) for b in failed),
    )


def align_rigid(est_xyz: np.ndarray, gt_xyz: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rotation and translation minimizing sum ||gt - (R est + t)||^2.

    Closed-form orthogonal Procrustes on the centered point sets, with the
    determinant corrected to +1 so the result is a proper rotation.
    """
    est_c = est_xyz.mean(axis=0)
    gt_c = gt_xyz.mean(axis=0)
    h = (est_xyz - est_c).T @ (gt_xyz - gt_c)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return rot, gt_c - rot @ est_c


def compute_ate(est: Trajectory, gt: Trajectory, align: bool = True) -> AteReport:
    """Absolute trajectory error between timestamp-aligned trajectories."""
    if len(est) != len(gt):
        raise AlignmentError(f"{len(est)} estimated poses vs {len(gt)} ground-truth poses")
    for i, (te, tg) in enumerate(zip(est.timestamps(), gt.timestamps())):
        if te != tg:
            raise AlignmentError(f"timestamp mismatch at pose {i}: {te} vs {tg}")
    est_xyz = est.positions()
    gt_xyz = gt.positions()
    if align:
        rot, t = align_rigid(est_xyz, gt_xyz)
        est_xyz = est_xyz @ rot.T + t
    resid = gt_xyz - est_xyz
    ate = [rmse(resid[:, k]) for k in range(3)]
    return AteReport(
        ate_x=ate[0],
        ate_y=ate[1],
        ate_z=ate[2],
        ate_mean=(ate[0] + ate[1] + ate[2]) / 3.0,
        n_poses=len(est),
        aligned=align,
    )


def rpe_in_degrees(report: RpeReport) -> RpeReport:
    """Same report with the three rotation RMSEs converted to degrees."""
    return RpeReport(
        report.rpe_trans_x,
        report.rpe_trans_y,
        report.rpe_trans_z,
        report.rpe_trans_mean,
        math.degrees(report.rpe_rot_rx),
        math.degrees(report.rpe_rot_ry),
        math.degrees(report.rpe_rot_rz),
        report.n_pairs,
        report.n_excluded,
    )


def _table_columns(reports) -> tuple[str, ...]:
    kinds = {type(r) for r in reports.values() if r is not None}
    if not kinds:
        raise ValueError("cannot infer the table schema from empty reports")
    if len(kinds) > 1:
        raise ValueError("mixed report types in one table")
    return RPE_COLUMNS if kinds == {RpeReport} else ATE_COLUMNS


def emit_ablation_table(reports) -> tuple[str, str]:
    """CSV and aligned-text tables, one row per activation entry.

    `reports` maps row label to RpeReport or AteReport (one kind per
    table); a None value renders as nan cells, marking a diverged run.
    Values carry 4 decimal places. Returns (csv_text, aligned_text).
    """
    if not reports:
        raise ValueError("need at least one report row")
    columns = _table_columns(reports)
    header = ["Activation", *columns]
    rows = []
    for label, report in reports.items():
        if report is None:
            cells = ["nan"] * len(columns)
        else:
            cells = [f"{v:.4f}" for v in report.row()]
        rows.append([str(label), *cells])

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)

    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    def fmt(row):
        first = row[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        return "  ".join([first, *rest]).rstrip()

    text = "\n".join(fmt(r) for r in [header, *rows]) + "\n"
    return buf.getvalue(), text


def _format_timestamp(ns: int) -> str:
    """Integer nanoseconds as seconds with exactly 9 decimals, no rounding."""
    sec, frac = divmod(int(ns), 1_000_000_000)
    return f"{sec}.{frac:09d}"


def write_trajectory(path, traj: Trajectory) -> None:
    """Plain-text pose-per-line export: timestamp_s tx ty tz qx qy qz qw."""
    with open(path, "w") as fh:
        for ts, pose in traj.entries:
            q = rotation_to_quat(pose.rotation)
            tx, ty, tz = pose.translation
            fh.write(
                f"{_format_timestamp(ts)} {tx:.9f} {ty:.9f} {tz:.9f} "
                f"{q.x:.9f} {q.y:.9f} {q.z:.9f} {q.w:.9f}\n"
            )


def _parse_timestamp(text: str) -> int:
    if "." in text:
        sec, frac = text.split(".", 1)
    else:
        sec, frac = text, ""
    frac = (frac + "000000000")[:9]
    sign = -1 if sec.lstrip().startswith("-") else 1
    return int(sec) * 1_000_000_000 + sign * int(frac)


def read_trajectory(path) -> Trajectory:
    """Inverse of write_trajectory; '#' lines and blank lines are skipped."""
    entries = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 8:
                raise DataError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
            try:
                ts = _parse_timestamp(parts[0])
                tx, ty, tz, qx, qy, qz, qw = (float(p) for p in parts[1:])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            try:
                rot = quat_to_rotation(Quaternion(qw, qx, qy, qz).normalized())
            except DegenerateQuaternionError:
                raise DataError(f"{path}:{lineno}: degenerate quaternion") from None
            entries.append((ts, Transform(rot, np.array([tx, ty, tz]))))
    try:
        return Trajectory(tuple(entries))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
