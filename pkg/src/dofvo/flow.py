"""Sparse optical flow: pyramidal Lucas-Kanade, vectorized over features.

Tracking solves, per feature and pyramid level, the 2x2 normal equations
G v = b built from template gradients and the intensity residual, iterating
until the update falls below a convergence threshold. Coarse-level flow is
doubled and used to seed the next finer level. Features are invalidated when
they leave the image, when the gradient matrix of either patch is
near-singular on the finest level, or when the final intensity residual
stays large.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .euroc import GrayImage
from .features import FeatureSet

PYRAMID_KERNEL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


@dataclass(frozen=True)
class TrackerConfig:
    window_size: int = 21
    pyramid_levels: int = 3
    max_iterations: int = 30
    epsilon: float = 0.01
    max_residual: float = 0.08
    min_eigenvalue: float = 1e-7


@dataclass(frozen=True)
class Correspondences:
    """Matched point pairs; ``status[i]`` is False for lost tracks."""

    points_a: np.ndarray  # (N, 2)
    points_b: np.ndarray  # (N, 2)
    status: np.ndarray  # (N,) bool

    def __post_init__(self):
        pa = np.asarray(self.points_a, dtype=np.float64).reshape(-1, 2)
        pb = np.asarray(self.points_b, dtype=np.float64).reshape(-1, 2)
        st = np.asarray(self.status, dtype=bool).reshape(-1)
        if not (len(pa) == len(pb) == len(st)):
            raise ValueError("correspondence arrays length mismatch")
        for arr in (pa, pb, st):
            arr.flags.writeable = False
        object.__setattr__(self, "points_a", pa)
        object.__setattr__(self, "points_b", pb)
        object.__setattr__(self, "status", st)

    def __len__(self) -> int:
        return len(self.status)

    @property
    def valid_count(self) -> int:
        return int(self.status.sum())

    def valid_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points_a[self.status], self.points_b[self.status]


def _smooth_rows(img: np.ndarray) -> np.ndarray:
    padded = np.pad(img, ((0, 0), (2, 2)), mode="reflect")
    out = np.zeros_like(img)
    for i, w in enumerate(PYRAMID_KERNEL):
        out += w * padded[:, i : i + img.shape[1]]
    return out


def _downsample(img: np.ndarray) -> np.ndarray:
    blurred = _smooth_rows(_smooth_rows(img).T).T
    return blurred[::2, ::2]


def build_pyramid(img: np.ndarray, levels: int) -> list[np.ndarray]:
    """Gaussian pyramid, level 0 the original. Stops early on tiny images."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    pyramid = [np.asarray(img, dtype=np.float64)]
    for _ in range(levels - 1):
        prev = pyramid[-1]
        if min(prev.shape) // 2 < 8:
            break
        pyramid.append(_downsample(prev))
    return pyramid


def bilinear_sample(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample img at float coordinates; second return marks in-bounds points."""
    h, w = img.shape
    ok = (x >= 0.0) & (x <= w - 1.0) & (y >= 0.0) & (y <= h - 1.0)
    xc = np.clip(x, 0.0, w - 1.0)
    yc = np.clip(y, 0.0, h - 1.0)
    x0 = np.minimum(xc.astype(int), w - 2)
    y0 = np.minimum(yc.astype(int), h - 2)
    fx = xc - x0
    fy = yc - y0
    v00 = img[y0, x0]
    v01 = img[y0, x0 + 1]
    v10 = img[y0 + 1, x0]
    v11 = img[y0 + 1, x0 + 1]
    top = v00 + fx * (v01 - v00)
    bot = v10 + fx * (v11 - v10)
    return top + fy * (bot - top), ok


def _central_gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gy, gx = np.gradient(img)
    return gx, gy


def track_features(
    img_a: GrayImage, img_b: GrayImage, features: FeatureSet, cfg: TrackerConfig = TrackerConfig()
) -> Correspondences:
    if (img_a.width, img_a.height) != (img_b.width, img_b.height):
        raise ValueError("image dimension mismatch")
    if cfg.window_size % 2 == 0 or cfg.window_size < 3:
        raise ValueError("window_size must be odd and >= 3")
    n = len(features)
    if n == 0:
        empty = np.empty((0, 2))
        return Correspondences(empty, empty, np.empty(0, dtype=bool))

    pts = features.points
    pyr_a = build_pyramid(img_a.pixels, cfg.pyramid_levels)
    pyr_b = build_pyramid(img_b.pixels, cfg.pyramid_levels)
    half = cfg.window_size // 2
    grid = np.arange(-half, half + 1, dtype=np.float64)
    off_x = np.tile(grid, cfg.window_size)
    off_y = np.repeat(grid, cfg.window_size)
    npix = cfg.window_size**2

    flow = np.zeros((n, 2))
    alive = np.ones(n, dtype=bool)
    residual = np.full(n, np.inf)

    for level in range(len(pyr_a) - 1, -1, -1):
        ia = pyr_a[level]
        ib = pyr_b[level]
        finest = level == 0
        scale = float(2**level)
        base = pts / scale

        gx, gy = _central_gradients(ia)
        tx = base[:, 0:1] + off_x
        ty = base[:, 1:2] + off_y
        template, t_ok = bilinear_sample(ia, tx, ty)
        gpx, _ = bilinear_sample(gx, tx, ty)
        gpy, _ = bilinear_sample(gy, tx, ty)
        usable = alive & t_ok.all(axis=1)

        gxx = (gpx * gpx).sum(axis=1)
        gyy = (gpy * gpy).sum(axis=1)
        gxy = (gpx * gpy).sum(axis=1)
        trace_half = 0.5 * (gxx + gyy)
        min_eig = (trace_half - np.sqrt((0.5 * (gxx - gyy)) ** 2 + gxy * gxy)) / npix
        det = gxx * gyy - gxy * gxy
        solvable = usable & (det > 1e-24) & (min_eig > cfg.min_eigenvalue)
        if finest:
            alive &= solvable
        v = np.zeros((n, 2))
        active = solvable.copy()

        for _ in range(cfg.max_iterations):
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            sx = base[idx, 0:1] + flow[idx, 0:1] + v[idx, 0:1] + off_x
            sy = base[idx, 1:2] + flow[idx, 1:2] + v[idx, 1:2] + off_y
            warped, w_ok = bilinear_sample(ib, sx, sy)
            inb = w_ok.all(axis=1)
            diff = template[idx] - warped
            bx = (diff * gpx[idx]).sum(axis=1)
            by = (diff * gpy[idx]).sum(axis=1)
            d = det[idx]
            nu_x = (gyy[idx] * bx - gxy[idx] * by) / d
            nu_y = (gxx[idx] * by - gxy[idx] * bx) / d
            v[idx, 0] += np.where(inb, nu_x, 0.0)
            v[idx, 1] += np.where(inb, nu_y, 0.0)
            still = inb & (np.hypot(nu_x, nu_y) >= cfg.epsilon)
            active[idx] = still

        flow = np.where(solvable[:, None], flow + v, flow)
        if finest:
            idx = np.nonzero(solvable)[0]
            if len(idx):
                sx = base[idx, 0:1] + flow[idx, 0:1] + off_x
                sy = base[idx, 1:2] + flow[idx, 1:2] + off_y
                warped, w_ok = bilinear_sample(ib, sx, sy)
                diff = template[idx] - warped
                res = np.sqrt((diff * diff).mean(axis=1))
                # the target patch must carry gradient too: a flat patch
                # matches any dark template within the residual budget
                hx, hy = _central_gradients(ib)
                wgx, _ = bilinear_sample(hx, sx, sy)
                wgy, _ = bilinear_sample(hy, sx, sy)
                bxx = (wgx * wgx).sum(axis=1)
                byy = (wgy * wgy).sum(axis=1)
                bxy = (wgx * wgy).sum(axis=1)
                b_eig = (
                    0.5 * (bxx + byy)
                    - np.sqrt((0.5 * (bxx - byy)) ** 2 + bxy * bxy)
                ) / npix
                res[b_eig <= cfg.min_eigenvalue] = np.inf
                res[~w_ok.all(axis=1)] = np.inf
                residual[idx] = res
        else:
            flow = flow * 2.0

    points_b = pts + flow
    h, w = img_b.pixels.shape
    inside = (
        (points_b[:, 0] >= 0.0)
        & (points_b[:, 0] <= w - 1.0)
        & (points_b[:, 1] >= 0.0)
        & (points_b[:, 1] <= h - 1.0)
    )
    status = alive & inside & (residual <= cfg.max_residual)
    return Correspondences(pts.copy(), points_b, status)
