"""Rendered synthetic scenes: Gaussian point sprites projected through a
pinhole camera. Used by frontend tests, the benchmark command, and the
dataset fixtures that stand in for real sequences.

A world is a random cloud of blobs with per-blob size and brightness; a frame
renders the cloud from a camera pose with perspective-scaled sprite radii, so
image motion of the texture matches true camera motion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .epipolar import CameraIntrinsics
from .euroc import GrayImage
from .se3 import Transform, compose, invert

DEFAULT_INTRINSICS = CameraIntrinsics(fx=240.0, fy=240.0, cx=128.0, cy=128.0)
DEFAULT_SIZE = 256


@dataclass(frozen=True)
class BlobWorld:
    points: np.ndarray  # (N, 3) world coordinates
    amplitudes: np.ndarray  # (N,)
    radii: np.ndarray  # (N,) metric sprite radius

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=np.float64))
        object.__setattr__(self, "amplitudes", np.asarray(self.amplitudes, dtype=np.float64))
        object.__setattr__(self, "radii", np.asarray(self.radii, dtype=np.float64))


def make_blob_world(
    rng: np.random.Generator,
    n_blobs: int = 140,
    spread_xy: float = 3.5,
    depth_range: tuple[float, float] = (4.0, 8.0),
    min_sep_px: float = 24.0,
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
) -> BlobWorld:
    """Scatter sprites so their projections from the identity pose stay at
    least `min_sep_px` apart. Overlapping sprites at different depths would
    form corners that move with neither depth, which breaks the rigid-scene
    assumption the rest of the pipeline relies on.
    """
    pts: list[np.ndarray] = []
    proj: list[np.ndarray] = []
    tries = 0
    while len(pts) < n_blobs and tries < n_blobs * 60:
        tries += 1
        p = np.array(
            [
                rng.uniform(-spread_xy, spread_xy),
                rng.uniform(-spread_xy, spread_xy),
                rng.uniform(*depth_range),
            ]
        )
        u = np.array(
            [
                intrinsics.fx * p[0] / p[2] + intrinsics.cx,
                intrinsics.fy * p[1] / p[2] + intrinsics.cy,
            ]
        )
        if proj and np.linalg.norm(np.array(proj) - u, axis=1).min() < min_sep_px:
            continue
        pts.append(p)
        proj.append(u)
    n = len(pts)
    amps = rng.uniform(0.35, 1.0, n)
    radii = rng.uniform(0.02, 0.05, n)
    return BlobWorld(np.array(pts), amps, radii)


def render_frame(
    world: BlobWorld,
    camera_pose: Transform,
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
    width: int = DEFAULT_SIZE,
    height: int = DEFAULT_SIZE,
) -> GrayImage:
    """Render the world from a camera-to-world pose."""
    world_to_cam = invert(camera_pose)
    cam_pts = world.points @ world_to_cam.rotation.T + world_to_cam.translation
    z = cam_pts[:, 2]
    visible = z > 0.5
    img = np.zeros((height, width))
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    for i in np.nonzero(visible)[0]:
        px = intrinsics.fx * cam_pts[i, 0] / z[i] + intrinsics.cx
        py = intrinsics.fy * cam_pts[i, 1] / z[i] + intrinsics.cy
        sigma = world.radii[i] * intrinsics.fx / z[i]
        reach = 3.0 * sigma
        if px < -reach or px > width - 1 + reach or py < -reach or py > height - 1 + reach:
            continue
        x0 = max(int(px - reach), 0)
        x1 = min(int(px + reach) + 2, width)
        y0 = max(int(py - reach), 0)
        y1 = min(int(py + reach) + 2, height)
        patch_x = xx[y0:y1, x0:x1]
        patch_y = yy[y0:y1, x0:x1]
        img[y0:y1, x0:x1] += world.amplitudes[i] * np.exp(
            -((patch_x - px) ** 2 + (patch_y - py) ** 2) / (2.0 * sigma**2)
        )
    peak = img.max()
    if peak > 1.0:
        img /= peak
    return GrayImage(width, height, img)


def render_pair(
    seed: int,
    motion: Transform,
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
    width: int = DEFAULT_SIZE,
    height: int = DEFAULT_SIZE,
    n_blobs: int = 140,
) -> tuple[GrayImage, GrayImage]:
    """Two views of one world; `motion` is the frame-b pose expressed in
    frame a (identity pose for frame a)."""
    rng = np.random.default_rng(seed)
    world = make_blob_world(rng, n_blobs, intrinsics=intrinsics)
    img_a = render_frame(world, Transform.identity(), intrinsics, width, height)
    img_b = render_frame(world, motion, intrinsics, width, height)
    return img_a, img_b


def camera_walk(
    rng: np.random.Generator,
    n_frames: int,
    step: float = 0.12,
    turn: float = 0.02,
) -> list[Transform]:
    """Smooth bounded trajectory: small forward-ish steps with gentle yaw
    and pitch wander, starting at the identity."""
    from .se3 import EulerAngles, euler_to_rotation

    poses = [Transform.identity()]
    for _ in range(n_frames - 1):
        angles = EulerAngles(
            rx=rng.uniform(-turn, turn),
            ry=rng.uniform(-turn, turn),
            rz=rng.uniform(-turn, turn),
        )
        # Mostly lateral steps; a dominant forward component would park the
        # epipole inside the image, the weakest geometry for two-view fits.
        delta_t = np.array(
            [
                rng.uniform(0.5, 1.0) * step * rng.choice([-1.0, 1.0]),
                rng.uniform(-0.3, 0.3) * step,
                rng.uniform(0.1, 0.5) * step,
            ]
        )
        delta = Transform(euler_to_rotation(angles), delta_t)
        poses.append(compose(poses[-1], delta))
    return poses
