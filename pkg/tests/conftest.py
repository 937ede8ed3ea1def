"""Shared fixtures: a rendered dataset in EuRoC layout and CSV builders."""

import numpy as np
import pytest
from PIL import Image

from dofvo.euroc import write_relative_csv
from dofvo.frontend import RawPoseRow, write_raw_csv
from dofvo.se3 import DoFVector, rotation_to_quat
from dofvo.synth import DEFAULT_INTRINSICS, camera_walk, make_blob_world, render_frame

BASE_TS = 1403636579763555584
STEP_NS = 50_000_000


def render_dataset(root, n_frames=12, seed=8):
    """Write PNG frames plus camera and ground-truth CSVs under root."""
    cam = root / "mav0" / "cam0"
    (cam / "data").mkdir(parents=True)
    gt_dir = root / "mav0" / "state_groundtruth_estimate0"
    gt_dir.mkdir(parents=True)

    rng = np.random.default_rng(seed)
    world = make_blob_world(rng)
    poses = camera_walk(rng, n_frames)

    index_lines = ["#timestamp [ns],filename"]
    gt_lines = ["#timestamp,p_x,p_y,p_z,q_w,q_x,q_y,q_z"]
    for i, pose in enumerate(poses):
        ts = BASE_TS + i * STEP_NS
        name = f"{ts}.png"
        img = render_frame(world, pose, DEFAULT_INTRINSICS)
        pixels = np.round(img.pixels * 255).astype(np.uint8)
        Image.fromarray(pixels, mode="L").save(cam / "data" / name)
        index_lines.append(f"{ts},{name}")
        q = rotation_to_quat(pose.rotation)
        t = pose.translation
        gt_lines.append(
            f"{ts},{t[0]:.12g},{t[1]:.12g},{t[2]:.12g},"
            f"{q.w:.12g},{q.x:.12g},{q.y:.12g},{q.z:.12g}"
        )
    (cam / "data.csv").write_text("\n".join(index_lines) + "\n")
    (gt_dir / "data.csv").write_text("\n".join(gt_lines) + "\n")
    return poses


@pytest.fixture(scope="session")
def euroc_fixture(tmp_path_factory):
    """12 rendered frames whose pairs the frontend recovers cleanly."""
    root = tmp_path_factory.mktemp("euroc_ds")
    poses = render_dataset(root)
    return root, poses


def write_bias_csvs(raw_path, gt_path, n, seed, gain=0.8, bias=0.05,
                    noise=0.01, fail_every=0):
    """Paired CSVs where the scaled raw pose is gain*gt + bias + noise per DoF.

    The raw translation column stores the biased vector divided by the
    ground-truth step length, so rescaling by that length during training
    reproduces the biased values; rotations carry the bias directly.
    """
    rng = np.random.default_rng(seed)
    raw_rows, gt_rows = [], []
    for i in range(n):
        ts_a = BASE_TS + i * STEP_NS
        ts_b = ts_a + STEP_NS
        gt = rng.normal(0.0, 0.5, 6)
        distorted = gain * gt + bias + rng.normal(0.0, noise, 6)
        step = np.linalg.norm(gt[:3])
        raw = np.concatenate([distorted[:3] / step, distorted[3:]])
        failed = fail_every > 0 and i % fail_every == 0
        raw_rows.append(RawPoseRow(ts_a, ts_b, DoFVector(*raw), 60, failed))
        gt_rows.append((ts_a, ts_b, DoFVector(*gt)))
    write_raw_csv(raw_path, raw_rows)
    write_relative_csv(gt_path, gt_rows)
    return raw_rows, gt_rows
