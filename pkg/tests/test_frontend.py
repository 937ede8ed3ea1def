"""End-to-end frame-pair tests on rendered sprite scenes."""

from __future__ import annotations

import math

import numpy as np
import pytest

from dofvo.errors import DataError
from dofvo.euroc import GrayImage
from dofvo.frontend import (
    FrontendConfig,
    RawPoseRow,
    apply_gt_scale,
    process_pair,
    read_raw_csv,
    write_raw_csv,
)
from dofvo.se3 import DoFVector, EulerAngles, Transform, euler_to_rotation, is_rotation
from dofvo.synth import DEFAULT_INTRINSICS, camera_walk, make_blob_world, render_frame, render_pair

TEST_MOTION = Transform(
    euler_to_rotation(EulerAngles(rx=0.02, ry=-0.03, rz=0.015)),
    np.array([0.25, 0.05, 0.10]),
)


def rotation_error_deg(dof: DoFVector, truth: Transform) -> float:
    got = euler_to_rotation(EulerAngles(dof.rx, dof.ry, dof.rz))
    cos = (np.trace(got.T @ truth.rotation) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, cos))))


def translation_error_deg(dof: DoFVector, truth: Transform) -> float:
    got = np.array([dof.tx, dof.ty, dof.tz])
    want = truth.translation / np.linalg.norm(truth.translation)
    return math.degrees(math.acos(min(1.0, max(-1.0, float(got @ want)))))


def test_render_frame_deterministic_and_textured():
    rng = np.random.default_rng(0)
    world = make_blob_world(rng)
    img = render_frame(world, Transform.identity())
    img2 = render_frame(world, Transform.identity())
    assert np.array_equal(img.pixels, img2.pixels)
    assert img.pixels.std() > 0.05


def test_known_motion_recovered():
    img_a, img_b = render_pair(3, TEST_MOTION)
    dof, diag = process_pair(img_a, img_b, DEFAULT_INTRINSICS, rng=np.random.default_rng(0))
    assert not diag.failed
    assert diag.n_inliers >= 20
    assert rotation_error_deg(dof, TEST_MOTION) < 0.5
    assert translation_error_deg(dof, TEST_MOTION) < 2.0
    assert abs(np.linalg.norm([dof.tx, dof.ty, dof.tz]) - 1.0) < 1e-9


def test_fundamental_mode_close_to_essential():
    img_a, img_b = render_pair(7, TEST_MOTION)
    cfg_f = FrontendConfig(geometry_mode="fundamental")
    dof_e, diag_e = process_pair(img_a, img_b, DEFAULT_INTRINSICS, rng=np.random.default_rng(1))
    dof_f, diag_f = process_pair(img_a, img_b, DEFAULT_INTRINSICS, cfg_f, rng=np.random.default_rng(1))
    assert not diag_e.failed and not diag_f.failed
    assert rotation_error_deg(dof_f, TEST_MOTION) < 1.0
    assert translation_error_deg(dof_f, TEST_MOTION) < 4.0


def test_identical_frames_flag_low_parallax():
    img_a, _ = render_pair(5, TEST_MOTION)
    dof, diag = process_pair(img_a, img_a, DEFAULT_INTRINSICS)
    assert diag.failed
    assert diag.low_parallax
    assert abs(dof.rx) < 1e-3 and abs(dof.ry) < 1e-3 and abs(dof.rz) < 1e-3
    assert dof == DoFVector.zero()


def test_flat_frames_fail_cleanly():
    flat = GrayImage(128, 128, np.full((128, 128), 0.8))
    dof, diag = process_pair(flat, flat, DEFAULT_INTRINSICS)
    assert diag.failed
    assert dof == DoFVector.zero()
    assert diag.failure_reason == "too few features"


def test_process_pair_deterministic():
    img_a, img_b = render_pair(11, TEST_MOTION)
    d1, _ = process_pair(img_a, img_b, DEFAULT_INTRINSICS, rng=np.random.default_rng(42))
    d2, _ = process_pair(img_a, img_b, DEFAULT_INTRINSICS, rng=np.random.default_rng(42))
    assert d1 == d2


def test_stage_times_recorded():
    img_a, img_b = render_pair(2, TEST_MOTION)
    _, diag = process_pair(img_a, img_b, DEFAULT_INTRINSICS)
    for stage in ("detect", "track", "estimate", "recover"):
        assert stage in diag.stage_seconds
        assert diag.stage_seconds[stage] >= 0.0


def test_invalid_geometry_mode():
    with pytest.raises(ValueError):
        FrontendConfig(geometry_mode="homography")


def test_apply_gt_scale_axis():
    raw = DoFVector(1.0, 0.0, 0.0, 0.1, 0.2, 0.3)
    gt = DoFVector(0.0, 0.2, 0.0, 0.0, 0.0, 0.0)
    out = apply_gt_scale(raw, gt)
    assert np.isclose(out.tx, 0.2) and out.ty == 0.0 and out.tz == 0.0
    assert (out.rx, out.ry, out.rz) == (0.1, 0.2, 0.3)


def test_apply_gt_scale_zero_translation():
    raw = DoFVector(0.0, 0.0, 0.0, 0.1, 0.0, 0.0)
    gt = DoFVector(0.5, 0.5, 0.0, 0.0, 0.0, 0.0)
    out = apply_gt_scale(raw, gt)
    assert (out.tx, out.ty, out.tz) == (0.0, 0.0, 0.0)


def test_apply_gt_scale_diagonal():
    s = 1.0 / math.sqrt(3.0)
    raw = DoFVector(s, s, s, 0.0, 0.0, 0.0)
    gt = DoFVector(0.1, 0.0, 0.0, 0.0, 0.0, 0.0)
    out = apply_gt_scale(raw, gt)
    for v in (out.tx, out.ty, out.tz):
        assert abs(v - 0.1 / math.sqrt(3.0)) < 1e-12


def test_raw_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    rows = []
    for i in range(20):
        dof = DoFVector(*rng.normal(size=6))
        rows.append(RawPoseRow(1000 + i, 1001 + i, dof, int(rng.integers(0, 300)), bool(i % 3 == 0)))
    path = tmp_path / "raw.csv"
    write_raw_csv(path, rows)
    back = read_raw_csv(path)
    assert len(back) == 20
    for a, b in zip(rows, back):
        assert a.timestamp_a == b.timestamp_a and a.timestamp_b == b.timestamp_b
        assert a.inliers == b.inliers and a.failed == b.failed
        assert np.allclose(a.dof.as_array(), b.dof.as_array(), rtol=1e-8)


def test_raw_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("nope,nope\n1,2\n")
    with pytest.raises(DataError):
        read_raw_csv(path)


def test_raw_csv_rejects_short_row(tmp_path):
    from dofvo.frontend import RAW_POSE_HEADER

    path = tmp_path / "short.csv"
    path.write_text(",".join(RAW_POSE_HEADER) + "\n1,2,3\n")
    with pytest.raises(DataError):
        read_raw_csv(path)


def test_camera_walk_produces_valid_poses():
    rng = np.random.default_rng(9)
    poses = camera_walk(rng, 25)
    assert len(poses) == 25
    for p in poses:
        assert is_rotation(p.rotation, 1e-9)
    steps = [np.linalg.norm(b.translation - a.translation) for a, b in zip(poses, poses[1:])]
    assert max(steps) < 0.3
    assert min(steps) > 0.01
