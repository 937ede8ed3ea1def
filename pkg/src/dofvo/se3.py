"""Rigid-body transform algebra and rotation-representation conversions.

Conventions, fixed once and used everywhere:

* rotations are stored as 3x3 matrices; quaternions and Euler angles appear
  only at I/O and metric boundaries,
* quaternions are Hamilton, scalar-first, canonicalized to w >= 0,
* Euler angles (rx, ry, rz) mean R = Rz(rz) @ Ry(ry) @ Rx(rx), i.e.
  intrinsic rotations applied in Z-Y-X order, with ry in [-pi/2, pi/2]
  on the canonical extraction branch.

All types are immutable values and all operations are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMatrixError, DegenerateQuaternionError

ORTHONORMAL_TOL = 1e-9
GIMBAL_LOCK_MARGIN = 1e-6


def _frozen_array(values, shape) -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(shape)
    arr.flags.writeable = False
    return arr


def is_rotation(m: np.ndarray, tol: float = ORTHONORMAL_TOL) -> bool:
    """True when m is orthonormal with determinant +1 within tol per entry."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        return False
    if not np.all(np.abs(m.T @ m - np.eye(3)) <= tol):
        return False
    return abs(float(np.linalg.det(m)) - 1.0) <= tol


@dataclass(frozen=True)
class Transform:
    """SE(3) pose: ``rotation`` (3x3, SO(3)) and ``translation`` (meters)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = _frozen_array(self.rotation, (3, 3))
        trans = _frozen_array(self.translation, (3,))
        if not is_rotation(rot):
            raise DegenerateMatrixError("rotation is not orthonormal with det +1")
        if not np.all(np.isfinite(trans)):
            raise DegenerateMatrixError("translation has non-finite entries")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @staticmethod
    def identity() -> "Transform":
        return Transform(np.eye(3), np.zeros(3))

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 embedding with bottom row (0, 0, 0, 1)."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Transform":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4) or np.any(np.abs(m[3] - np.array([0, 0, 0, 1.0])) > 1e-9):
            raise DegenerateMatrixError("expected homogeneous 4x4 matrix")
        return Transform(m[:3, :3], m[:3, 3])

    def apply(self, p: np.ndarray) -> np.ndarray:
        """Map a point from this pose's child frame into its parent frame."""
        return self.rotation @ np.asarray(p, dtype=np.float64) + self.translation


@dataclass(frozen=True)
class Quaternion:
    """Unit quaternion, Hamilton convention, scalar first."""

    w: float
    x: float
    y: float
    z: float

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)

    def normalized(self) -> "Quaternion":
        """Unit-norm, canonical-sign copy (w >= 0; ties broken toward +x, +y, +z)."""
        n = self.norm()
        if n < 1e-12:
            raise DegenerateQuaternionError(f"quaternion norm {n:g} below 1e-12")
        w, x, y, z = self.w / n, self.x / n, self.y / n, self.z / n
        for lead in (w, x, y, z):
            if lead != 0.0:
                if lead < 0.0:
                    w, x, y, z = -w, -x, -y, -z
                break
        return Quaternion(w, x, y, z)

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])


@dataclass(frozen=True)
class EulerAngles:
    """Angles in radians for R = Rz(rz) @ Ry(ry) @ Rx(rx).

    ``gimbal_lock`` marks results from the degenerate |ry| ~ pi/2 branch,
    where rx is set to 0 and the free angle folds into rz.
    """

    rx: float
    ry: float
    rz: float
    gimbal_lock: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([self.rx, self.ry, self.rz])


@dataclass(frozen=True)
class DoFVector:
    """Six motion components: translations in meters, rotations in radians."""

    tx: float
    ty: float
    tz: float
    rx: float
    ry: float
    rz: float
    gimbal_lock: bool = field(default=False, compare=False)

    def as_array(self) -> np.ndarray:
        return np.array([self.tx, self.ty, self.tz, self.rx, self.ry, self.rz])

    @staticmethod
    def from_array(a, gimbal_lock: bool = False) -> "DoFVector":
        a = np.asarray(a, dtype=np.float64).reshape(6)
        return DoFVector(*(float(v) for v in a), gimbal_lock=gimbal_lock)

    @staticmethod
    def zero() -> "DoFVector":
        return DoFVector(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty, self.tz])

    def step_norm(self) -> float:
        return float(np.linalg.norm(self.translation()))


def orthonormalize(m: np.ndarray) -> np.ndarray:
    """Nearest rotation to m in Frobenius norm (SVD with det correction).

    Idempotent on exact rotations. Raises for rank-deficient inputs whose
    nearest rotation is not well defined.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        raise DegenerateMatrixError("expected finite 3x3 matrix")
    u, s, vt = np.linalg.svd(m)
    if s[2] < 1e-12:
        raise DegenerateMatrixError("matrix is rank deficient; nearest rotation undefined")
    r = u @ vt
    if np.linalg.det(r) < 0.0:
        r = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    if np.linalg.det(r) <= 0.0:
        raise DegenerateMatrixError("determinant correction failed")
    return r


def compose(a: Transform, b: Transform) -> Transform:
    """a then b: rotation product re-orthonormalized, translation chained."""
    rot = orthonormalize(a.rotation @ b.rotation)
    return Transform(rot, a.rotation @ b.translation + a.translation)


def invert(t: Transform) -> Transform:
    """Group inverse: (R, p) -> (R^T, -R^T p)."""
    rt = t.rotation.T
    return Transform(rt, -(rt @ t.translation))


def relative_pose(world_a: Transform, world_b: Transform) -> Transform:
    """Pose of frame b expressed in frame a, from two poses in one world frame."""
    return compose(invert(world_a), world_b)


def quat_to_rotation(q: Quaternion) -> np.ndarray:
    q = q.normalized()
    w, x, y, z = q.w, q.x, q.y, q.z
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotation_to_quat(r: np.ndarray) -> Quaternion:
    """Stable four-branch extraction (branch chosen by the largest diagonal term)."""
    r = np.asarray(r, dtype=np.float64)
    if not is_rotation(r):
        raise DegenerateMatrixError("rotation_to_quat expects a rotation matrix")
    tr = r[0, 0] + r[1, 1] + r[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = ((0.25 * s), (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s)
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q = ((r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s)
    elif r[1, 1] > r[2, 2]:
        s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        q = ((r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s)
    else:
        s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        q = ((r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s)
    return Quaternion(*q).normalized()


def slerp(qa: Quaternion, qb: Quaternion, alpha: float) -> Quaternion:
    """Spherical interpolation from qa (alpha=0) to qb (alpha=1), shortest arc."""
    qa = qa.normalized()
    qb = qb.normalized()
    a = qa.as_array()
    b = qb.as_array()
    dot = float(np.dot(a, b))
    if dot < 0.0:
        b = -b
        dot = -dot
    dot = min(dot, 1.0)
    if dot > 1.0 - 1e-12:
        out = a + alpha * (b - a)
        return Quaternion(*out).normalized()
    theta = math.acos(dot)
    sin_theta = math.sin(theta)
    wa = math.sin((1.0 - alpha) * theta) / sin_theta
    wb = math.sin(alpha * theta) / sin_theta
    return Quaternion(*(wa * a + wb * b)).normalized()


def euler_to_rotation(e: EulerAngles) -> np.ndarray:
    cx, sx = math.cos(e.rx), math.sin(e.rx)
    cy, sy = math.cos(e.ry), math.sin(e.ry)
    cz, sz = math.cos(e.rz), math.sin(e.rz)
    return np.array(
        [
            [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
            [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
            [-sy, cy * sx, cy * cx],
        ]
    )


def rotation_to_euler(r: np.ndarray) -> EulerAngles:
    """Factor r as Rz @ Ry @ Rx; handles |ry| = pi/2 by a flagged canonical branch."""
    r = np.asarray(r, dtype=np.float64)
    if not is_rotation(r):
        raise DegenerateMatrixError("rotation_to_euler expects a rotation matrix")
    sy = -r[2, 0]
    if abs(sy) > 1.0:
        if abs(sy) > 1.0 + ORTHONORMAL_TOL:
            raise DegenerateMatrixError(f"|r31| = {abs(sy):g} exceeds 1")
        sy = math.copysign(1.0, sy)
    if 1.0 - abs(sy) < GIMBAL_LOCK_MARGIN:
        # cos(ry) ~ 0: rx and rz are coupled; pin rx = 0, fold the rest into rz.
        ry = math.copysign(math.pi / 2.0, sy)
        if sy > 0.0:
            rz = math.atan2(-r[0, 1], r[0, 2])
        else:
            rz = math.atan2(-r[0, 1], -r[0, 2])
        return EulerAngles(0.0, ry, rz, gimbal_lock=True)
    ry = math.asin(sy)
    rx = math.atan2(r[2, 1], r[2, 2])
    rz = math.atan2(r[1, 0], r[0, 0])
    return EulerAngles(rx, ry, rz)


def transform_to_dof(t: Transform) -> DoFVector:
    """Translation copied verbatim; rotation factored per the Euler convention."""
    e = rotation_to_euler(t.rotation)
    return DoFVector(
        float(t.translation[0]),
        float(t.translation[1]),
        float(t.translation[2]),
        e.rx,
        e.ry,
        e.rz,
        gimbal_lock=e.gimbal_lock,
    )


def dof_to_transform(d: DoFVector) -> Transform:
    rot = euler_to_rotation(EulerAngles(d.rx, d.ry, d.rz))
    return Transform(rot, np.array([d.tx, d.ty, d.tz]))
