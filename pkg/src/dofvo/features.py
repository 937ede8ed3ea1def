"""Corner detection: Harris response for detection, Shi-Tomasi min-eigenvalue
as a patch-quality filter.

Both scores derive from the same structure tensor M, the block-window sum of
gradient outer products (Sobel aperture 3, reflect-101 borders):

    harris = det(M) - k * trace(M)^2
    shi_tomasi = min eigenvalue of M

Detection keeps local maxima of the Harris response above a quality fraction
of the global maximum, greedily enforces a minimum distance, and refines each
kept corner to sub-pixel by parabolic interpolation of the response.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .euroc import GrayImage

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])


@dataclass(frozen=True)
class DetectorConfig:
    block_size: int = 3
    harris_k: float = 0.04
    max_features: int = 500
    quality_ratio: float = 0.01
    min_distance: float = 8.0
    border_margin: int = 12


@dataclass(frozen=True)
class FeatureSet:
    """Sub-pixel corner locations with scores in nonincreasing order."""

    points: np.ndarray  # (N, 2) of (x, y)
    scores: np.ndarray  # (N,)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        sc = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if len(pts) != len(sc):
            raise ValueError("points and scores length mismatch")
        pts.flags.writeable = False
        sc.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "scores", sc)

    def __len__(self) -> int:
        return len(self.points)

    @staticmethod
    def empty() -> "FeatureSet":
        return FeatureSet(np.empty((0, 2)), np.empty(0))


def _correlate3(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    padded = np.pad(img, 1, mode="reflect")
    out = np.zeros_like(img)
    for dy in range(3):
        for dx in range(3):
            w = kernel[dy, dx]
            if w != 0.0:
                out += w * padded[dy : dy + img.shape[0], dx : dx + img.shape[1]]
    return out


def _block_sum(img: np.ndarray, block: int) -> np.ndarray:
    half = block // 2
    padded = np.pad(img, half, mode="reflect")
    out = np.zeros_like(img)
    for dy in range(block):
        for dx in range(block):
            out += padded[dy : dy + img.shape[0], dx : dx + img.shape[1]]
    return out


def sobel_gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return _correlate3(img, SOBEL_X), _correlate3(img, SOBEL_X.T)


def structure_tensor(img: np.ndarray, block: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Block-summed (sum gx^2, sum gy^2, sum gx*gy) per pixel."""
    gx, gy = sobel_gradients(img)
    return _block_sum(gx * gx, block), _block_sum(gy * gy, block), _block_sum(gx * gy, block)


def harris_response(img: np.ndarray, block: int, k: float) -> np.ndarray:
    a, b, c = structure_tensor(img, block)
    return (a * b - c * c) - k * (a + b) ** 2


def min_eigenvalue_map(img: np.ndarray, block: int) -> np.ndarray:
    a, b, c = structure_tensor(img, block)
    half_trace = 0.5 * (a + b)
    return half_trace - np.sqrt((0.5 * (a - b)) ** 2 + c * c)


def _subpixel_offset(r_minus: float, r_center: float, r_plus: float) -> float:
    denom = r_minus - 2.0 * r_center + r_plus
    if abs(denom) < 1e-30:
        return 0.0
    offset = 0.5 * (r_minus - r_plus) / denom
    return float(np.clip(offset, -0.5, 0.5))


def harris_corners(img: GrayImage, cfg: DetectorConfig = DetectorConfig()) -> FeatureSet:
    """Detect corners; deterministic for fixed input, empty on flat images."""
    if cfg.block_size % 2 == 0 or cfg.block_size < 1:
        raise ValueError("block_size must be odd and positive")
    response = harris_response(img.pixels, cfg.block_size, cfg.harris_k)
    peak = float(response.max(initial=0.0))
    if peak <= 0.0:
        return FeatureSet.empty()
    threshold = cfg.quality_ratio * peak

    # Local maxima over the 8-neighborhood, borders excluded.
    m = cfg.border_margin
    h, w = response.shape
    if h <= 2 * m or w <= 2 * m:
        return FeatureSet.empty()
    interior = response[1:-1, 1:-1]
    is_max = interior >= threshold
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            is_max &= interior >= response[1 + dy : h - 1 + dy, 1 + dx : w - 1 + dx]
    ys, xs = np.nonzero(is_max)
    ys += 1
    xs += 1
    inside = (xs >= m) & (xs < w - m) & (ys >= m) & (ys < h - m)
    ys, xs = ys[inside], xs[inside]
    if len(xs) == 0:
        return FeatureSet.empty()

    order = np.argsort(-response[ys, xs], kind="stable")
    ys, xs = ys[order], xs[order]

    accepted_x: list[float] = []
    accepted_y: list[float] = []
    accepted_score: list[float] = []
    min_dist_sq = cfg.min_distance**2
    for x, y in zip(xs, ys):
        if accepted_x:
            dx = np.array(accepted_x) - x
            dy = np.array(accepted_y) - y
            if np.min(dx * dx + dy * dy) < min_dist_sq:
                continue
        accepted_x.append(float(x))
        accepted_y.append(float(y))
        accepted_score.append(float(response[y, x]))
        if len(accepted_x) >= cfg.max_features:
            break

    points = np.empty((len(accepted_x), 2))
    for i, (x, y) in enumerate(zip(accepted_x, accepted_y)):
        xi, yi = int(x), int(y)
        points[i, 0] = x + _subpixel_offset(response[yi, xi - 1], response[yi, xi], response[yi, xi + 1])
        points[i, 1] = y + _subpixel_offset(response[yi - 1, xi], response[yi, xi], response[yi + 1, xi])
    return FeatureSet(points, np.array(accepted_score))


def shi_tomasi_rescore(
    img: GrayImage, features: FeatureSet, cfg: DetectorConfig = DetectorConfig()
) -> FeatureSet:
    """Rescore by patch min-eigenvalue; drop features below the quality cut."""
    if len(features) == 0:
        return features
    eig = min_eigenvalue_map(img.pixels, cfg.block_size)
    xs = np.clip(np.rint(features.points[:, 0]).astype(int), 0, img.width - 1)
    ys = np.clip(np.rint(features.points[:, 1]).astype(int), 0, img.height - 1)
    scores = eig[ys, xs]
    cutoff = cfg.quality_ratio * float(scores.max(initial=0.0))
    keep = scores >= max(cutoff, 0.0)
    if cutoff <= 0.0:
        keep = scores > 0.0
    points = features.points[keep]
    scores = scores[keep]
    order = np.argsort(-scores, kind="stable")
    return FeatureSet(points[order], scores[order])
