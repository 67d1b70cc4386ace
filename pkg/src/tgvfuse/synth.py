"""Synthetic scenes, noise injection, camera paths, and bundle assembly."""

import math
from dataclasses import dataclass

import numpy as np

from .energy import ObservationBundle
from .geometry import Pose, reproject

__all__ = [
    "NoiseSpec",
    "make_boxes_scene",
    "add_noise",
    "camera_path",
    "depth_to_disparity",
    "identity_bundle",
    "warped_views",
    "reproject_bundle",
]

# fractional (row, col) centers of the default four-box layout
_DEFAULT_CENTERS = ((0.1875, 0.1875), (0.1875, 0.75),
                    (0.75, 0.1875), (0.6875, 0.6875))


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "laplace"
    scale: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("laplace", "gaussian"):
            raise ValueError("noise kind must be 'laplace' or 'gaussian'")
        if self.scale < 0:
            raise ValueError("noise scale must be nonnegative")


def make_boxes_scene(height=128, width=128, box_sizes=(8, 16, 32, 64),
                     box_depths=(4.0, 2.0, 4.5, 2.5), background=3.0,
                     centers=None):
    """Piecewise-constant depth field with axis-aligned square boxes.

    Later boxes overwrite earlier ones where they overlap. Default
    layout: four boxes of sides 8/16/32/64 on a 128x128 grid (placement
    scales with the grid). Box positions are clipped to stay inside.
    """
    if len(box_sizes) != len(box_depths):
        raise ValueError("box_sizes and box_depths must have equal length")
    d = np.full((height, width), float(background))
    if centers is None:
        centers = [
            (_DEFAULT_CENTERS[i % len(_DEFAULT_CENTERS)][0] * height,
             _DEFAULT_CENTERS[i % len(_DEFAULT_CENTERS)][1] * width)
            for i in range(len(box_sizes))
        ]
    for (cr, cc), size, depth in zip(centers, box_sizes, box_depths):
        if size > min(height, width):
            raise ValueError(f"box of side {size} does not fit the grid")
        r0 = int(np.clip(round(cr - size / 2), 0, height - size))
        c0 = int(np.clip(round(cc - size / 2), 0, width - size))
        d[r0:r0 + size, c0:c0 + size] = float(depth)
    return d


def add_noise(d, spec):
    """Add i.i.d. Laplace(0, scale) or Normal(0, scale^2) noise; the
    same spec always produces bitwise-identical output."""
    d = np.asarray(d, dtype=np.float64)
    if spec.scale == 0.0:
        return d.copy()
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "laplace":
        noise = rng.laplace(0.0, spec.scale, d.shape)
    else:
        noise = rng.normal(0.0, spec.scale, d.shape)
    return d + noise


def camera_path(kind, count, spacing=None, radius=3.0,
                step=2.0 * math.pi / 72.0):
    """Camera-to-world poses along an orbit or a straight translation.

    orbit: centers on a circle of the given radius around the origin in
    the y=0 plane, each camera facing the origin; consecutive poses are
    ``step`` radians apart and the first one is the identity-oriented
    camera at (0, 0, -radius). translation: identity orientation,
    centers stepped by ``spacing`` (default 4.0) along the world x axis.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    poses = []
    if kind == "orbit":
        for i in range(count):
            theta = i * step
            center = np.array([radius * math.sin(theta), 0.0,
                               -radius * math.cos(theta)])
            x_cam = np.array([math.cos(theta), 0.0, math.sin(theta)])
            y_cam = np.array([0.0, 1.0, 0.0])
            z_cam = np.array([-math.sin(theta), 0.0, math.cos(theta)])
            poses.append(Pose(np.column_stack([x_cam, y_cam, z_cam]),
                              center))
    elif kind == "translation":
        spacing = 4.0 if spacing is None else float(spacing)
        for i in range(count):
            poses.append(Pose(np.eye(3), np.array([i * spacing, 0.0, 0.0])))
    else:
        raise ValueError(f"unknown camera path kind: {kind!r}")
    return poses


def depth_to_disparity(d, f, baseline, valid=None):
    """disparity = f * baseline / depth; invalid pixels propagate."""
    d = np.asarray(d, dtype=np.float64)
    if valid is None:
        valid = np.isfinite(d)
    if np.any(d[valid] <= 0):
        raise ValueError("depth must be positive at valid pixels")
    out = np.full(d.shape, np.nan)
    out[valid] = f * baseline / d[valid]
    return out


def identity_bundle(gt, k, noise=None):
    """K observations of one depth field in its own frame (exact data
    association), each with independently seeded noise."""
    noise = noise or NoiseSpec()
    views = [
        add_noise(gt, NoiseSpec(noise.kind, noise.scale, noise.seed + i))
        for i in range(k)
    ]
    return ObservationBundle(np.stack(views))


def warped_views(gt_ref, poses, intrinsics, ref_index, noise=None):
    """Per-view depth maps generated from ground truth in the reference
    view: the reference surface is warped into each camera, then noised
    in that camera's frame. Returns a list of (depth, valid) pairs.
    """
    noise = noise or NoiseSpec()
    ref_pose = poses[ref_index]
    views = []
    for i, pose in enumerate(poses):
        if i == ref_index:
            d, valid = np.asarray(gt_ref, dtype=np.float64).copy(), None
            valid = np.isfinite(d)
        else:
            d, valid = reproject(gt_ref, ref_pose.relative_to(pose),
                                 intrinsics)
        if noise.scale > 0:
            noisy = add_noise(np.where(valid, d, 0.0),
                              NoiseSpec(noise.kind, noise.scale,
                                        noise.seed + i))
            d = np.where(valid, noisy, np.nan)
        views.append((d, valid))
    return views


def reproject_bundle(views, poses, intrinsics, ref_index):
    """Reproject per-view depth maps into the reference camera and stack
    them into an observation bundle."""
    ref_pose = poses[ref_index]
    depths = []
    masks = []
    for (d, valid), pose in zip(views, poses):
        if pose is ref_pose or (
            np.array_equal(pose.rotation, ref_pose.rotation)
            and np.array_equal(pose.translation, ref_pose.translation)
        ):
            dr, mr = np.asarray(d, dtype=np.float64), valid
            if mr is None:
                mr = np.isfinite(dr)
        else:
            dr, mr = reproject(d, pose.relative_to(ref_pose), intrinsics,
                               valid)
        depths.append(np.where(mr, dr, np.nan))
        masks.append(mr)
    return ObservationBundle(np.stack(depths), np.stack(masks))
