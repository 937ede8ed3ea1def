import math

import numpy as np
import pytest
from scipy.linalg import polar

from dofvo.errors import DegenerateMatrixError, DegenerateQuaternionError
from dofvo.se3 import (
    DoFVector,
    EulerAngles,
    Quaternion,
    Transform,
    compose,
    dof_to_transform,
    euler_to_rotation,
    invert,
    orthonormalize,
    quat_to_rotation,
    relative_pose,
    rotation_to_euler,
    rotation_to_quat,
    slerp,
    transform_to_dof,
)


def rot_z(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def random_rotation(rng):
    # Uniform via normalized random quaternion.
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    return quat_to_rotation(Quaternion(*q))


def random_transform(rng):
    return Transform(random_rotation(rng), rng.standard_normal(3))


class TestCompose:
    def test_identity_neutral(self):
        rng = np.random.default_rng(1)
        t = random_transform(rng)
        ident = Transform.identity()
        for result in (compose(ident, t), compose(t, ident)):
            assert np.allclose(result.rotation, t.rotation, atol=1e-12)
            assert np.allclose(result.translation, t.translation, atol=1e-12)

    def test_two_quarter_turns_make_half_turn(self):
        quarter = Transform(rot_z(math.pi / 2), np.zeros(3))
        out = compose(quarter, quarter)
        assert np.allclose(out.rotation, rot_z(math.pi), atol=1e-12)
        assert np.allclose(out.translation, 0.0)

    def test_compose_with_inverse_is_identity(self):
        rng = np.random.default_rng(2)
        t = random_transform(rng)
        out = compose(t, invert(t))
        assert np.allclose(out.rotation, np.eye(3), atol=1e-9)
        assert np.allclose(out.translation, 0.0, atol=1e-9)

    def test_associativity(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            a, b, c = (random_transform(rng) for _ in range(3))
            left = compose(compose(a, b), c)
            right = compose(a, compose(b, c))
            assert np.allclose(left.rotation, right.rotation, atol=1e-9)
            assert np.allclose(left.translation, right.translation, atol=1e-9)


class TestInvert:
    def test_identity(self):
        out = invert(Transform.identity())
        assert np.allclose(out.matrix(), np.eye(4))

    def test_pure_translation(self):
        t = Transform(np.eye(3), np.array([1.0, 2.0, 3.0]))
        out = invert(t)
        assert np.allclose(out.rotation, np.eye(3))
        assert np.allclose(out.translation, [-1.0, -2.0, -3.0])

    def test_rotation_and_translation(self):
        # -R^T p for R = Rz(90 deg), p = (1,0,0) evaluates to (0, 1, 0).
        t = Transform(rot_z(math.pi / 2), np.array([1.0, 0.0, 0.0]))
        out = invert(t)
        assert np.allclose(out.rotation, rot_z(-math.pi / 2), atol=1e-12)
        assert np.allclose(out.translation, [0.0, 1.0, 0.0], atol=1e-12)

    def test_double_inverse_roundtrip(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            t = random_transform(rng)
            back = invert(invert(t))
            assert np.allclose(back.rotation, t.rotation, atol=1e-9)
            assert np.allclose(back.translation, t.translation, atol=1e-9)

    def test_homogeneous_product_is_identity(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            t = random_transform(rng)
            prod = t.matrix() @ invert(t).matrix()
            assert np.max(np.abs(prod - np.eye(4))) < 1e-9


class TestRelativePose:
    def test_same_pose_gives_identity(self):
        rng = np.random.default_rng(6)
        t = random_transform(rng)
        rel = relative_pose(t, t)
        assert np.allclose(rel.matrix(), np.eye(4), atol=1e-9)

    def test_from_identity(self):
        rng = np.random.default_rng(7)
        t = random_transform(rng)
        rel = relative_pose(Transform.identity(), t)
        assert np.allclose(rel.matrix(), t.matrix(), atol=1e-12)

    def test_sideways_step_expressed_in_first_frame(self):
        a = Transform(np.eye(3), np.array([1.0, 0.0, 0.0]))
        b = Transform(np.eye(3), np.array([1.0, 1.0, 0.0]))
        rel = relative_pose(a, b)
        assert np.allclose(rel.rotation, np.eye(3))
        assert np.allclose(rel.translation, [0.0, 1.0, 0.0])

    def test_chain_reconstructs_final_pose(self):
        rng = np.random.default_rng(8)
        poses = [random_transform(rng) for _ in range(50)]
        current = poses[0]
        for a, b in zip(poses[:-1], poses[1:]):
            current = compose(current, relative_pose(a, b))
        assert np.allclose(current.rotation, poses[-1].rotation, atol=1e-6)
        assert np.allclose(current.translation, poses[-1].translation, atol=1e-6)


class TestQuaternion:
    def test_unit_quaternion_is_identity(self):
        assert np.allclose(quat_to_rotation(Quaternion(1, 0, 0, 0)), np.eye(3))

    def test_quarter_turn_about_z(self):
        h = math.sqrt(0.5)
        assert np.allclose(quat_to_rotation(Quaternion(h, 0, 0, h)), rot_z(math.pi / 2), atol=1e-12)

    def test_half_turn_about_x(self):
        assert np.allclose(quat_to_rotation(Quaternion(0, 1, 0, 0)), np.diag([1.0, -1.0, -1.0]))

    def test_degenerate_norm_raises(self):
        with pytest.raises(DegenerateQuaternionError):
            quat_to_rotation(Quaternion(0, 0, 0, 0))

    def test_identity_to_quat(self):
        q = rotation_to_quat(np.eye(3))
        assert np.allclose(q.as_array(), [1, 0, 0, 0])

    def test_half_turn_about_z_to_quat(self):
        q = rotation_to_quat(rot_z(math.pi))
        assert np.allclose(q.as_array(), [0, 0, 0, 1], atol=1e-12)

    def test_canonical_sign(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            r = random_rotation(rng)
            q = rotation_to_quat(r)
            assert q.w >= 0.0

    def test_roundtrip_1000_random_rotations(self):
        rng = np.random.default_rng(10)
        for _ in range(1000):
            r = random_rotation(rng)
            back = quat_to_rotation(rotation_to_quat(r))
            assert np.max(np.abs(back - r)) < 1e-9


class TestSlerp:
    def test_endpoints(self):
        qa = Quaternion(1, 0, 0, 0)
        qb = rotation_to_quat(rot_z(math.pi / 2))
        assert np.allclose(slerp(qa, qb, 0.0).as_array(), qa.as_array(), atol=1e-12)
        assert np.allclose(slerp(qa, qb, 1.0).as_array(), qb.as_array(), atol=1e-12)

    def test_midpoint_quarter_turn_is_eighth_turn(self):
        qa = Quaternion(1, 0, 0, 0)
        qb = rotation_to_quat(rot_z(math.pi / 2))
        mid = slerp(qa, qb, 0.5)
        assert np.max(np.abs(quat_to_rotation(mid) - rot_z(math.pi / 4))) < 1e-9


class TestEuler:
    def test_zero_angles_identity(self):
        assert np.allclose(euler_to_rotation(EulerAngles(0, 0, 0)), np.eye(3))

    def test_single_axis_z(self):
        assert np.allclose(euler_to_rotation(EulerAngles(0, 0, math.pi / 2)), rot_z(math.pi / 2), atol=1e-12)

    def test_roundtrip_away_from_gimbal_lock(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            rx, rz = rng.uniform(-math.pi, math.pi, 2)
            ry = rng.uniform(-1.4, 1.4)
            r = euler_to_rotation(EulerAngles(rx, ry, rz))
            e = rotation_to_euler(r)
            assert not e.gimbal_lock
            back = euler_to_rotation(e)
            assert np.max(np.abs(back - r)) < 1e-9

    def test_gimbal_lock_flagged_and_consistent(self):
        for sign in (1.0, -1.0):
            r = euler_to_rotation(EulerAngles(0.3, sign * math.pi / 2, 0.4))
            e = rotation_to_euler(r)
            assert e.gimbal_lock
            assert e.rx == 0.0
            assert abs(e.ry - sign * math.pi / 2) < 1e-9
            # The canonical branch still reproduces the rotation.
            assert np.max(np.abs(euler_to_rotation(e) - r)) < 1e-9


class TestDoF:
    def test_identity(self):
        d = transform_to_dof(Transform.identity())
        assert np.allclose(d.as_array(), 0.0)

    def test_pure_translation(self):
        d = transform_to_dof(Transform(np.eye(3), np.array([1.0, 2.0, 3.0])))
        assert np.allclose(d.as_array(), [1, 2, 3, 0, 0, 0])

    def test_pure_yaw(self):
        t = dof_to_transform(DoFVector(0, 0, 0, 0, 0, math.pi / 2))
        assert np.allclose(t.rotation, rot_z(math.pi / 2), atol=1e-12)
        assert np.allclose(t.translation, 0.0)

    def test_roundtrip(self):
        rng = np.random.default_rng(12)
        for _ in range(500):
            d = DoFVector(*rng.standard_normal(3), rng.uniform(-3, 3), rng.uniform(-1.4, 1.4), rng.uniform(-3, 3))
            back = transform_to_dof(dof_to_transform(d))
            assert np.max(np.abs(back.as_array() - d.as_array())) < 1e-9


class TestOrthonormalize:
    def test_exact_rotation_unchanged(self):
        rng = np.random.default_rng(13)
        r = random_rotation(rng)
        assert np.max(np.abs(orthonormalize(r) - r)) < 1e-12

    def test_skew_perturbation_matches_polar_oracle(self):
        rng = np.random.default_rng(14)
        skew = 1e-4 * np.array([[0.0, 1.0, -0.5], [-1.0, 0.0, 0.3], [0.5, -0.3, 0.0]])
        m = np.eye(3) + skew
        out = orthonormalize(m)
        oracle, _ = polar(m)  # orthogonal polar factor = nearest orthogonal matrix
        assert np.max(np.abs(out - oracle)) < 1e-12
        assert np.max(np.abs(out - np.eye(3))) < 1e-3
        # Random near-rotations agree with the oracle too.
        for _ in range(100):
            m = random_rotation(rng) + 0.05 * rng.standard_normal((3, 3))
            out = orthonormalize(m)
            oracle, _ = polar(m)
            if np.linalg.det(oracle) > 0:
                assert np.max(np.abs(out - oracle)) < 1e-9

    def test_pure_scale_removed(self):
        assert np.allclose(orthonormalize(1.0001 * np.eye(3)), np.eye(3), atol=1e-12)

    def test_idempotent(self):
        rng = np.random.default_rng(15)
        m = random_rotation(rng) + 0.1 * rng.standard_normal((3, 3))
        once = orthonormalize(m)
        assert np.max(np.abs(orthonormalize(once) - once)) < 1e-12

    def test_rank_deficient_raises(self):
        with pytest.raises(DegenerateMatrixError):
            orthonormalize(np.zeros((3, 3)))


class TestChaining:
    def test_relative_chain_reconstruction_10000_steps(self):
        rng = np.random.default_rng(16)
        step_dofs = [
            DoFVector(*(0.01 * rng.standard_normal(3)), *(0.01 * rng.standard_normal(3)))
            for _ in range(10_000)
        ]
        absolute = [Transform.identity()]
        for d in step_dofs:
            absolute.append(compose(absolute[-1], dof_to_transform(d)))
        # Fold relative poses computed from the absolute sequence.
        current = absolute[0]
        for a, b in zip(absolute[:-1], absolute[1:]):
            current = compose(current, relative_pose(a, b))
        assert np.max(np.abs(current.translation - absolute[-1].translation)) < 1e-6
        assert np.max(np.abs(current.rotation - absolute[-1].rotation)) < 1e-6
