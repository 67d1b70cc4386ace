"""Pinhole camera model, rigid poses, depth reprojection, and the
heuristic confidence priors.

Depth images are distances along the camera z axis (positive in front
of the camera). Poses are camera-to-world: ``rotation`` columns are the
camera axes expressed in world coordinates and ``translation`` is the
camera center. Invalid pixels are represented as NaN in float outputs
plus an explicit boolean mask where one is returned.
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .grids import grad

__all__ = [
    "EPS_FLOOR",
    "CameraIntrinsics",
    "Pose",
    "backproject",
    "reproject",
    "normal_map",
    "geometric_confidence",
    "edge_confidence",
    "hyperparams_from_priors",
]

EPS_FLOOR = 1e-3


@dataclass(frozen=True)
class CameraIntrinsics:
    f: float
    cu: float
    cv: float

    def __post_init__(self):
        if self.f <= 0:
            raise ValueError("focal length must be positive")

    def rays(self, height, width):
        """Unnormalized viewing rays A^{-1} [u, v, 1]^T, shape (H, W, 3)."""
        u = np.arange(width, dtype=np.float64)
        v = np.arange(height, dtype=np.float64)
        uu, vv = np.meshgrid(u, v)
        r = np.empty((height, width, 3))
        r[..., 0] = (uu - self.cu) / self.f
        r[..., 1] = (vv - self.cv) / self.f
        r[..., 2] = 1.0
        return r

    def project(self, points):
        """Perspective projection of (..., 3) points; no rounding."""
        z = points[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.f * points[..., 0] / z + self.cu
            v = self.f * points[..., 1] / z + self.cv
        return u, v


@dataclass(frozen=True)
class Pose:
    """Rigid camera-to-world transform (rotation, camera center)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-9:
            raise ValueError("rotation is not orthonormal")
        if np.linalg.det(r) < 0:
            raise ValueError("rotation must be proper (det +1)")

    @staticmethod
    def identity():
        return Pose(np.eye(3), np.zeros(3))

    def compose(self, other):
        """self after other: maps other's source frame through both."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def inverse(self):
        return Pose(self.rotation.T, -self.rotation.T @ self.translation)

    def relative_to(self, reference):
        """Transform taking this camera's frame into the reference frame."""
        return reference.inverse().compose(self)

    def apply(self, points):
        return points @ self.rotation.T + self.translation


def backproject(d, intrinsics, pose=None, valid=None):
    """Lift a depth image to 3-D points d(u) R A^{-1}[u;1] + t.

    Returns (points, valid): an (H, W, 3) array (NaN at invalid pixels)
    and the validity mask.
    """
    d = np.asarray(d, dtype=np.float64)
    if valid is None:
        valid = np.isfinite(d)
    rays = intrinsics.rays(*d.shape)
    pts = np.where(valid[..., None], d[..., None] * rays, np.nan)
    if pose is not None:
        pts = np.where(valid[..., None], pose.apply(pts), np.nan)
    return pts, valid


def reproject(d, pose, intrinsics, valid=None):
    """Forward-warp a depth image into the camera given by ``pose``.

    ``pose`` maps source-frame points into the target frame. Each valid
    source pixel is backprojected, transformed, and imaged at the
    nearest target pixel; among source pixels landing on one target
    pixel the minimum depth wins (z-buffer). Points at or behind the
    target camera are discarded; unhit target pixels are invalid.
    Returns (depth, valid).
    """
    h, w = np.asarray(d).shape
    pts, src_valid = backproject(d, intrinsics, pose, valid)
    z = pts[..., 2]
    u, v = intrinsics.project(pts)
    ok = src_valid & np.isfinite(z) & (z > 0)
    ok &= np.isfinite(u) & np.isfinite(v)
    ui = np.round(u[ok]).astype(np.int64)
    vi = np.round(v[ok]).astype(np.int64)
    zi = z[ok]
    inside = (ui >= 0) & (ui < w) & (vi >= 0) & (vi < h)
    flat = vi[inside] * w + ui[inside]

    buf = np.full(h * w, np.inf)
    np.minimum.at(buf, flat, zi[inside])
    buf = buf.reshape(h, w)
    hit = np.isfinite(buf)
    return np.where(hit, buf, np.nan), hit


def normal_map(d, intrinsics, valid=None):
    """Unit normals of the backprojected surface, oriented toward the
    camera (n . ray < 0).

    Tangents are forward differences of the 3-D points, so the last row
    and column (and any pixel whose forward neighbors are invalid, or
    whose tangents are near-parallel) are invalid (NaN).
    """
    pts, valid = backproject(d, intrinsics, None, valid)
    h, w = valid.shape
    tan_u = np.full((h, w, 3), np.nan)
    tan_v = np.full((h, w, 3), np.nan)
    tan_u[:, :-1] = pts[:, 1:] - pts[:, :-1]
    tan_v[:-1, :] = pts[1:, :] - pts[:-1, :]

    n = np.cross(tan_u, tan_v)
    norm = np.linalg.norm(n, axis=-1)
    ok = np.isfinite(norm) & (norm > 1e-12)
    with np.errstate(invalid="ignore"):
        n = n / norm[..., None]
    # flip to face the camera
    rays = intrinsics.rays(h, w)
    flip = np.sum(n * rays, axis=-1) > 0
    n = np.where(flip[..., None], -n, n)
    return np.where(ok[..., None], n, np.nan)


def geometric_confidence(d, intrinsics, valid=None, eps_floor=EPS_FLOOR):
    """Confidence |n(u) . r(u)| from the angle between surface normal
    and normalized viewing ray, clamped to [eps_floor, 1]; pixels with
    no valid normal receive the floor.
    """
    n = normal_map(d, intrinsics, valid)
    rays = intrinsics.rays(*np.asarray(d).shape)
    rays = rays / np.linalg.norm(rays, axis=-1, keepdims=True)
    dots = np.abs(np.sum(n * rays, axis=-1))
    conf = np.clip(dots, eps_floor, 1.0)
    return np.where(np.isfinite(dots), conf, eps_floor)


def edge_confidence(image, gain=1.0, exponent=1.0, sigma=1.0,
                    eps_floor=EPS_FLOOR):
    """Confidence from intensity edges: gain * |G_sigma * grad I|^exponent.

    Each gradient channel is smoothed with a discrete Gaussian truncated
    at 3 sigma and normalized (sigma = 0 skips smoothing); the per-pixel
    Euclidean magnitude is raised to ``exponent``, scaled by ``gain``,
    and floored at ``eps_floor``.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if gain <= 0:
        raise ValueError("gain must be positive")
    g = grad(np.asarray(image, dtype=np.float64))
    if sigma > 0:
        for axis in (0, 1):
            g = gaussian_filter1d(g, sigma, axis=axis, mode="nearest",
                                  truncate=3.0)
    mag = np.sqrt(g[..., 0] ** 2 + g[..., 1] ** 2)
    return gain * mag ** exponent + eps_floor


def hyperparams_from_priors(priors, b0, eps_floor=EPS_FLOOR):
    """Combine confidence priors into the model hyperparameters (w, b).

    The combined prior is the pointwise product of the priors (each one
    rescaled by its maximum if that exceeds 1, floored at eps_floor);
    w = combined / (2 b0) and b = b0, so the confidence upper bound
    2 b w equals the combined prior for any b0 > 0.
    """
    if not priors:
        raise ValueError("at least one prior is required")
    if b0 <= 0:
        raise ValueError("b0 must be positive")
    combined = None
    for prior in priors:
        prior = np.asarray(prior, dtype=np.float64)
        peak = float(prior.max())
        if peak > 1.0:
            prior = prior / peak
        prior = np.maximum(prior, eps_floor)
        combined = prior if combined is None else combined * prior
    return combined / (2.0 * b0), float(b0)
