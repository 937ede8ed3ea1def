"""Two-view epipolar geometry: normalized 8-point estimation inside a seeded
RANSAC loop, essential-matrix decomposition with cheirality voting, and DLT
triangulation.

Conventions. A correspondence (x_a, x_b) satisfies x_b^T F x_a = 0 in pixel
coordinates and n_b^T E n_a = 0 in normalized camera coordinates, with
E = K^T F K. The pose recovered from E maps frame-a points into frame b:
X_b = R X_a + t, with t of unit norm (scale is unobservable).

All residuals are Sampson distances in pixels, so essential-matrix estimates
are scored through F = K^-T E K^-1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    CheiralityError,
    DegenerateGeometryError,
    InsufficientCorrespondencesError,
)
from .flow import Correspondences

W_MATRIX = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
MIN_SAMPLE = 8
NO_PARALLAX_TOL = 1e-12


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0.0 and self.fy > 0.0):
            raise ValueError("focal lengths must be positive")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def normalize(self, pts: np.ndarray) -> np.ndarray:
        """Pixel (N, 2) to normalized camera coordinates (N, 2)."""
        out = np.empty_like(pts, dtype=np.float64)
        out[:, 0] = (pts[:, 0] - self.cx) / self.fx
        out[:, 1] = (pts[:, 1] - self.cy) / self.fy
        return out


@dataclass(frozen=True)
class RansacConfig:
    max_iterations: int = 2000
    confidence: float = 0.999
    threshold_px: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.confidence < 1.0):
            raise ValueError("confidence must lie in (0, 1)")
        if self.threshold_px <= 0.0 or self.max_iterations < 1:
            raise ValueError("invalid consensus parameters")


@dataclass(frozen=True)
class EssentialMatrix:
    matrix: np.ndarray  # (3, 3), singular values (s, s, 0), Frobenius sqrt(2)
    inlier_mask: np.ndarray  # (M,) bool over the valid correspondences

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64).reshape(3, 3)
        mask = np.asarray(self.inlier_mask, dtype=bool).reshape(-1)
        m.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "inlier_mask", mask)


@dataclass(frozen=True)
class FundamentalMatrix:
    matrix: np.ndarray  # (3, 3), rank 2, unit Frobenius norm
    inlier_mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64).reshape(3, 3)
        mask = np.asarray(self.inlier_mask, dtype=bool).reshape(-1)
        m.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "inlier_mask", mask)


@dataclass(frozen=True)
class RecoveredPose:
    rotation: np.ndarray  # (3, 3), X_b = R X_a + t
    translation: np.ndarray  # (3,), unit norm
    inlier_count: int
    cheirality_votes: tuple[int, int, int, int] = (0, 0, 0, 0)

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)


@dataclass(frozen=True)
class TriangulatedPoint:
    point: np.ndarray  # (3,) in frame a
    depth_positive_a: bool
    depth_positive_b: bool
    no_parallax: bool


def _homogeneous(pts: np.ndarray) -> np.ndarray:
    return np.hstack([pts, np.ones((len(pts), 1))])


def _hartley_transform(pts: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin and RMS radius to sqrt(2)."""
    centroid = pts.mean(axis=0)
    rms = np.sqrt(((pts - centroid) ** 2).sum(axis=1).mean())
    scale = math.sqrt(2.0) / rms if rms > 1e-12 else 1.0
    return np.array(
        [
            [scale, 0.0, -scale * centroid[0]],
            [0.0, scale, -scale * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )


def _canonical_sign(m: np.ndarray) -> np.ndarray:
    flat = m.reshape(-1)
    lead = flat[np.argmax(np.abs(flat))]
    return -m if lead < 0.0 else m


def eight_point(pts_a: np.ndarray, pts_b: np.ndarray) -> np.ndarray:
    """Linear epipolar estimate from >= 8 correspondences (2D points, any
    common coordinate frame). Includes Hartley conditioning. The result is
    unit-Frobenius with sign fixed by the largest-magnitude entry."""
    pts_a = np.asarray(pts_a, dtype=np.float64)
    pts_b = np.asarray(pts_b, dtype=np.float64)
    if len(pts_a) < MIN_SAMPLE or len(pts_a) != len(pts_b):
        raise InsufficientCorrespondencesError(
            f"need at least {MIN_SAMPLE} correspondences, got {len(pts_a)}"
        )
    ta = _hartley_transform(pts_a)
    tb = _hartley_transform(pts_b)
    ha = _homogeneous(pts_a) @ ta.T
    hb = _homogeneous(pts_b) @ tb.T
    design = (hb[:, :, None] * ha[:, None, :]).reshape(len(pts_a), 9)
    # full_matrices: an 8x9 minimal system keeps its null vector only in the
    # full 9x9 right factor.
    _, s, vt = np.linalg.svd(design, full_matrices=True)
    if s[7] < 1e-12 * max(s[0], 1.0):
        raise DegenerateGeometryError("correspondences are degenerate for the 8-point system")
    f_hat = vt[-1].reshape(3, 3)
    f = tb.T @ f_hat @ ta
    norm = np.linalg.norm(f)
    if norm < 1e-15:
        raise DegenerateGeometryError("8-point solution collapsed to zero")
    return _canonical_sign(f / norm)


def project_to_essential(m: np.ndarray) -> np.ndarray:
    """Nearest essential matrix: singular values forced to (s, s, 0) with
    s chosen so the Frobenius norm is sqrt(2)."""
    u, s, vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    if s[1] < 1e-15:
        raise DegenerateGeometryError("matrix is too close to rank 1 for the essential manifold")
    e = u @ np.diag([1.0, 1.0, 0.0]) @ vt
    return _canonical_sign(e)


def project_to_fundamental(m: np.ndarray) -> np.ndarray:
    """Nearest rank-2 matrix, renormalized to unit Frobenius norm."""
    u, s, vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    s = s.copy()
    s[2] = 0.0
    if s[1] < 1e-15:
        raise DegenerateGeometryError("matrix is too close to rank 1")
    f = u @ np.diag(s) @ vt
    return _canonical_sign(f / np.linalg.norm(f))


def sampson_distance(f: np.ndarray, pts_a: np.ndarray, pts_b: np.ndarray) -> np.ndarray:
    """First-order geometric distance to the epipolar constraint, in the units
    of the input points (pixels when f is a fundamental matrix)."""
    ha = _homogeneous(np.asarray(pts_a, dtype=np.float64))
    hb = _homogeneous(np.asarray(pts_b, dtype=np.float64))
    fa = ha @ f.T  # rows F x_a
    fb = hb @ f  # rows F^T x_b
    num = np.abs((hb * fa).sum(axis=1))
    denom = np.sqrt(fa[:, 0] ** 2 + fa[:, 1] ** 2 + fb[:, 0] ** 2 + fb[:, 1] ** 2)
    out = np.full(len(ha), np.inf)
    ok = denom > 1e-15
    out[ok] = num[ok] / denom[ok]
    return out


def _ransac_epipolar(
    pts_a: np.ndarray,
    pts_b: np.ndarray,
    residual_fn,
    solve_fn,
    cfg: RansacConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    n = len(pts_a)
    best_mask = None
    best_count = 0
    best_model = None
    required = cfg.max_iterations
    it = 0
    while it < required and it < cfg.max_iterations:
        it += 1
        sample = rng.choice(n, size=MIN_SAMPLE, replace=False)
        try:
            model = solve_fn(pts_a[sample], pts_b[sample])
        except DegenerateGeometryError:
            continue
        mask = residual_fn(model) < cfg.threshold_px
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
            best_model = model
            ratio = count / n
            if ratio >= 1.0:
                break
            fail_p = 1.0 - ratio**MIN_SAMPLE
            if fail_p <= 0.0:
                break
            if fail_p < 1.0:
                required = min(
                    cfg.max_iterations,
                    int(math.ceil(math.log(1.0 - cfg.confidence) / math.log(fail_p))),
                )
    if best_model is None or best_count < MIN_SAMPLE:
        raise DegenerateGeometryError(
            f"consensus failed: best support {best_count} of {n} correspondences"
        )
    # Expand the consensus: refit on the inlier set and refresh the mask until
    # it stabilizes. Minimal-sample models are noisy, so their raw consensus
    # is biased small; the least-squares refit recruits the rest. Refits that
    # lose support are discarded, which keeps the expansion monotone.
    model, mask, count = best_model, best_mask, best_count
    for _ in range(15):
        try:
            refined = solve_fn(pts_a[mask], pts_b[mask])
        except DegenerateGeometryError:
            break
        new_mask = residual_fn(refined) < cfg.threshold_px
        new_count = int(new_mask.sum())
        if new_count < count or new_count < MIN_SAMPLE:
            break
        model, count = refined, new_count
        if np.array_equal(new_mask, mask):
            mask = new_mask
            break
        mask = new_mask
    return model, mask


def estimate_essential(
    corr: Correspondences,
    intrinsics: CameraIntrinsics,
    cfg: RansacConfig = RansacConfig(),
    rng: np.random.Generator | None = None,
) -> EssentialMatrix:
    """Essential matrix from tracked correspondences, scored in pixels."""
    if rng is None:
        rng = np.random.default_rng(0)
    pa, pb = corr.valid_pairs()
    if len(pa) < MIN_SAMPLE:
        raise InsufficientCorrespondencesError(
            f"need at least {MIN_SAMPLE} valid correspondences, got {len(pa)}"
        )
    k = intrinsics.matrix()
    k_inv = np.linalg.inv(k)
    na = intrinsics.normalize(pa)
    nb = intrinsics.normalize(pb)

    def solve(sa: np.ndarray, sb: np.ndarray) -> np.ndarray:
        return project_to_essential(eight_point(sa, sb))

    def residuals(e: np.ndarray) -> np.ndarray:
        f = k_inv.T @ e @ k_inv
        return sampson_distance(f, pa, pb)

    e, mask = _ransac_epipolar(na, nb, residuals, solve, cfg, rng)

    # Nonlinear polish on the essential manifold. The linear fit is biased at
    # realistic noise, so walk (R, t) down the Sampson cost from several
    # starts: both twisted decompositions of the consensus model, plus both
    # decompositions of a least-squares fit over every pair. The latter
    # rescues runs where an unlucky minimal sample left a tiny, skewed
    # consensus; with real outliers its support stays low and it simply
    # loses the ranking. Sampson cost cannot tell a twisted pair apart, so
    # candidates are ranked by full-set cheirality votes, then support,
    # then cost.
    starts = list(_twist_starts(e))
    try:
        starts.extend(_twist_starts(solve(na, nb)))
    except DegenerateGeometryError:
        pass
    rot, t = None, None
    best_key = (-1, -1, -np.inf)
    for rot0, t0 in starts:
        cand_rot, cand_t = _refine_pose(rot0, t0, pa[mask], pb[mask], k_inv)
        r = residuals(_skew(cand_t) @ cand_rot)
        support = int((r < cfg.threshold_px).sum())
        cost = float(r[mask] @ r[mask])
        votes = max(
            _front_votes(cand_rot, cand_t, na, nb),
            _front_votes(cand_rot, -cand_t, na, nb),
        )
        key = (votes, support, -cost)
        if key > best_key:
            best_key = key
            rot, t = cand_rot, cand_t
    # Let the polished model recruit inliers, refitting until the mask
    # settles. Masks that would shrink the support are not followed.
    count = int(mask.sum())
    for _ in range(4):
        new_mask = residuals(_skew(t) @ rot) < cfg.threshold_px
        new_count = int(new_mask.sum())
        if new_count < max(count, MIN_SAMPLE):
            break
        done = np.array_equal(new_mask, mask)
        mask, count = new_mask, new_count
        if done:
            break
        rot, t = _refine_pose(rot, t, pa[mask], pb[mask], k_inv)

    e = _skew(t) @ rot
    scale = math.sqrt(2.0) / np.linalg.norm(e)
    return EssentialMatrix(_canonical_sign(e * scale), mask)


def estimate_fundamental(
    corr: Correspondences,
    cfg: RansacConfig = RansacConfig(),
    rng: np.random.Generator | None = None,
) -> FundamentalMatrix:
    """Fundamental matrix straight from pixel correspondences."""
    if rng is None:
        rng = np.random.default_rng(0)
    pa, pb = corr.valid_pairs()
    if len(pa) < MIN_SAMPLE:
        raise InsufficientCorrespondencesError(
            f"need at least {MIN_SAMPLE} valid correspondences, got {len(pa)}"
        )

    def solve(sa: np.ndarray, sb: np.ndarray) -> np.ndarray:
        return project_to_fundamental(eight_point(sa, sb))

    f, mask = _ransac_epipolar(pa, pb, lambda f_: sampson_distance(f_, pa, pb), solve, cfg, rng)
    return FundamentalMatrix(f, mask)


def essential_from_fundamental(f: FundamentalMatrix, intrinsics: CameraIntrinsics) -> EssentialMatrix:
    k = intrinsics.matrix()
    e = project_to_essential(k.T @ f.matrix @ k)
    return EssentialMatrix(e * (math.sqrt(2.0) / np.linalg.norm(e)), f.inlier_mask)


def _triangulate_linear(
    na: np.ndarray, nb: np.ndarray, rotation: np.ndarray, translation: np.ndarray
) -> TriangulatedPoint:
    ray_a = np.array([na[0], na[1], 1.0])
    ray_b_in_a = rotation.T @ np.array([nb[0], nb[1], 1.0])
    cross = np.cross(ray_a, ray_b_in_a)
    parallel = np.linalg.norm(cross) < NO_PARALLAX_TOL * (
        np.linalg.norm(ray_a) * np.linalg.norm(ray_b_in_a)
    )
    baseline = np.linalg.norm(translation) < NO_PARALLAX_TOL

    p2 = np.hstack([rotation, translation.reshape(3, 1)])
    a = np.empty((4, 4))
    a[0] = np.array([-1.0, 0.0, na[0], 0.0])
    a[1] = np.array([0.0, -1.0, na[1], 0.0])
    a[2] = nb[0] * p2[2] - p2[0]
    a[3] = nb[1] * p2[2] - p2[1]
    _, _, vt = np.linalg.svd(a)
    xh = vt[-1]
    if abs(xh[3]) < NO_PARALLAX_TOL:
        return TriangulatedPoint(np.full(3, np.inf), False, False, True)
    x = xh[:3] / xh[3]
    xb = rotation @ x + translation
    return TriangulatedPoint(x, bool(x[2] > 0.0), bool(xb[2] > 0.0), bool(parallel or baseline))


def triangulate(
    x_a: np.ndarray, x_b: np.ndarray, pose: RecoveredPose
) -> TriangulatedPoint:
    """Midpoint of the epipolar constraint via DLT; inputs are normalized
    camera coordinates (2,)."""
    return _triangulate_linear(
        np.asarray(x_a, dtype=np.float64).reshape(2),
        np.asarray(x_b, dtype=np.float64).reshape(2),
        pose.rotation,
        pose.translation,
    )


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


def _twist_starts(e: np.ndarray):
    """Both rotation decompositions of an essential matrix, with t = u3."""
    u, _, vt = np.linalg.svd(e)
    if np.linalg.det(u) < 0.0:
        u = -u
    if np.linalg.det(vt) < 0.0:
        vt = -vt
    yield u @ W_MATRIX @ vt, u[:, 2]
    yield u @ W_MATRIX.T @ vt, u[:, 2]


def _front_votes(rotation: np.ndarray, translation: np.ndarray, na: np.ndarray, nb: np.ndarray) -> int:
    """Count correspondences triangulating in front of both cameras."""
    good = 0
    for i in range(len(na)):
        tri = _triangulate_linear(na[i], nb[i], rotation, translation)
        if not tri.no_parallax and tri.depth_positive_a and tri.depth_positive_b:
            good += 1
    return good


def _rodrigues(w: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        return np.eye(3) + _skew(w)
    k = _skew(w / theta)
    return np.eye(3) + math.sin(theta) * k + (1.0 - math.cos(theta)) * (k @ k)


def _tangent_basis(t: np.ndarray) -> np.ndarray:
    """(3, 2) orthonormal basis of the plane orthogonal to unit vector t."""
    axis = np.zeros(3)
    axis[np.argmin(np.abs(t))] = 1.0
    b1 = np.cross(t, axis)
    b1 /= np.linalg.norm(b1)
    return np.column_stack([b1, np.cross(t, b1)])


def _refine_pose(
    rotation: np.ndarray,
    translation: np.ndarray,
    pa: np.ndarray,
    pb: np.ndarray,
    k_inv: np.ndarray,
    iterations: int = 25,
) -> tuple[np.ndarray, np.ndarray]:
    """Damped Gauss-Newton on (R, t) minimizing Huber-weighted pixel Sampson
    distances. t stays on the unit sphere; 5 parameters total. The Jacobian
    is built by central differences, which is plenty at this problem size.

    The Huber scale is frozen from the starting residuals so the objective
    stays fixed for the whole descent. Clipping only beyond four robust
    sigmas keeps essentially full efficiency on Gaussian residuals, so on
    well-behaved data this is plain least squares; a stray gross
    correspondence that slipped into the mask only ever pulls with bounded
    (linear) force."""

    def residuals(rot: np.ndarray, t: np.ndarray) -> np.ndarray:
        f = k_inv.T @ (_skew(t) @ rot) @ k_inv
        return sampson_distance(f, pa, pb)

    rot, t = rotation, translation / np.linalg.norm(translation)
    r0 = residuals(rot, t)
    sigma = 1.4826 * float(np.median(np.abs(r0)))
    huber = max(4.0 * sigma, 1e-10)

    def cost_and_weights(r: np.ndarray) -> tuple[float, np.ndarray]:
        a = np.abs(r)
        quad = a <= huber
        w = np.where(quad, 1.0, huber / np.maximum(a, 1e-300))
        c = float(np.where(quad, r * r, 2.0 * huber * a - huber * huber).sum())
        return c, w

    cost, wts = cost_and_weights(r0)
    if not np.isfinite(cost) or cost < 1e-20:
        return rot, t
    lam = 1e-6
    eps = 1e-6
    for _ in range(iterations):
        basis = _tangent_basis(t)
        jac = np.empty((len(r0), 5))
        for j in range(3):
            w = np.zeros(3)
            w[j] = eps
            rp = residuals(_rodrigues(w) @ rot, t)
            rm = residuals(_rodrigues(-w) @ rot, t)
            jac[:, j] = (rp - rm) / (2.0 * eps)
        for j in range(2):
            tp = t + eps * basis[:, j]
            tm = t - eps * basis[:, j]
            rp = residuals(rot, tp / np.linalg.norm(tp))
            rm = residuals(rot, tm / np.linalg.norm(tm))
            jac[:, 3 + j] = (rp - rm) / (2.0 * eps)
        g = jac.T @ (wts * r0)
        h = (jac * wts[:, None]).T @ jac
        stepped = False
        for _ in range(8):
            try:
                step = np.linalg.solve(h + lam * np.eye(5), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            rot_new = _rodrigues(step[:3]) @ rot
            t_new = t + basis @ step[3:]
            t_new /= np.linalg.norm(t_new)
            r_new = residuals(rot_new, t_new)
            cost_new, wts_new = cost_and_weights(r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                rot, t, r0, wts = rot_new, t_new, r_new, wts_new
                improvement = cost - cost_new
                cost = cost_new
                lam = max(lam * 0.3, 1e-12)
                stepped = True
                if improvement < 1e-14 * (cost + 1e-14):
                    return rot, t
                break
            lam *= 10.0
        if not stepped:
            break
    return rot, t


def recover_pose(
    e: EssentialMatrix, corr: Correspondences, intrinsics: CameraIntrinsics
) -> RecoveredPose:
    """Pick the (R, t) factorization of E whose triangulations put points in
    front of both cameras, then polish it against the inlier Sampson cost.
    The winner must carry a strict majority of the parallax-bearing
    inliers."""
    pa, pb = corr.valid_pairs()
    if e.inlier_mask.shape[0] != len(pa):
        raise ValueError("inlier mask does not match correspondence count")
    na = intrinsics.normalize(pa)[e.inlier_mask]
    nb = intrinsics.normalize(pb)[e.inlier_mask]
    if len(na) < 5:
        raise InsufficientCorrespondencesError(
            f"pose recovery needs at least 5 inliers, got {len(na)}"
        )

    u, _, vt = np.linalg.svd(e.matrix)
    if np.linalg.det(u) < 0.0:
        u = -u
    if np.linalg.det(vt) < 0.0:
        vt = -vt
    r1 = u @ W_MATRIX @ vt
    r2 = u @ W_MATRIX.T @ vt
    t = u[:, 2]
    candidates = [(r1, t), (r1, -t), (r2, t), (r2, -t)]

    votes = []
    votable = []
    for rot, trans in candidates:
        good = 0
        usable = 0
        for i in range(len(na)):
            tri = _triangulate_linear(na[i], nb[i], rot, trans)
            if tri.no_parallax:
                continue
            usable += 1
            if tri.depth_positive_a and tri.depth_positive_b:
                good += 1
        votes.append(good)
        votable.append(usable)

    best = int(np.argmax(votes))
    if votable[best] == 0 or votes[best] * 2 <= votable[best]:
        raise CheiralityError(
            f"no decomposition wins a majority: votes {votes} of {votable} usable"
        )
    rot, trans = candidates[best]
    trans = trans / np.linalg.norm(trans)
    k_inv = np.linalg.inv(intrinsics.matrix())
    rot, trans = _refine_pose(rot, trans, pa[e.inlier_mask], pb[e.inlier_mask], k_inv)
    return RecoveredPose(rot, trans, int(len(na)), tuple(votes))
