import math

import numpy as np
import pytest

from tgvfuse.synth import (
    NoiseSpec,
    make_boxes_scene,
    add_noise,
    camera_path,
    depth_to_disparity,
    identity_bundle,
    warped_views,
    reproject_bundle,
)
from tgvfuse.geometry import CameraIntrinsics


class TestBoxesScene:
    def test_no_boxes_constant(self):
        d = make_boxes_scene(32, 32, (), (), background=2.5)
        assert np.all(d == 2.5)

    def test_single_box_pixel_count(self):
        d = make_boxes_scene(64, 64, (8,), (4.0,), background=3.0)
        assert np.sum(d == 4.0) == 64
        assert np.sum(d == 3.0) == 64 * 64 - 64

    def test_histogram_matches_depth_multiset(self):
        sizes = (8, 16, 32)
        depths = (4.0, 2.0, 4.5)
        d = make_boxes_scene(128, 128, sizes, depths, background=3.0)
        values, counts = np.unique(d, return_counts=True)
        expected = {v: s * s for v, s in zip(depths, sizes)}
        expected[3.0] = 128 * 128 - sum(s * s for s in sizes)
        assert dict(zip(values, counts)) == expected

    def test_overlap_overwrites(self):
        d = make_boxes_scene(32, 32, (8, 8), (4.0, 5.0), background=3.0,
                             centers=((16, 16), (16, 16)))
        assert np.sum(d == 5.0) == 64
        assert np.sum(d == 4.0) == 0

    def test_box_must_fit(self):
        with pytest.raises(ValueError):
            make_boxes_scene(16, 16, (20,), (1.0,))


class TestNoise:
    def test_zero_scale_identity(self):
        d = np.arange(16.0).reshape(4, 4)
        out = add_noise(d, NoiseSpec("laplace", 0.0, 3))
        np.testing.assert_array_equal(out, d)

    def test_deterministic_per_seed(self):
        d = np.zeros((32, 32))
        a = add_noise(d, NoiseSpec("gaussian", 0.3, 12))
        b = add_noise(d, NoiseSpec("gaussian", 0.3, 12))
        c = add_noise(d, NoiseSpec("gaussian", 0.3, 13))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_laplace_mean_absolute_deviation(self):
        d = np.zeros((1000, 1000))
        out = add_noise(d, NoiseSpec("laplace", 0.6, 0))
        mad = np.mean(np.abs(out))
        assert abs(mad - 0.6) < 0.006

    def test_bad_kind_rejected(self):
        with pytest.raises(ValueError):
            NoiseSpec("poisson", 0.1, 0)


class TestCameraPath:
    def test_single_orbit_pose_identity_facing(self):
        (pose,) = camera_path("orbit", 1)
        np.testing.assert_allclose(pose.rotation, np.eye(3), atol=1e-15)
        np.testing.assert_allclose(pose.translation, [0, 0, -3.0])

    def test_orbit_chordal_spacing(self):
        poses = camera_path("orbit", 12)
        chord = 2.0 * 3.0 * math.sin(math.pi / 72.0)
        for a, b in zip(poses, poses[1:]):
            dist = np.linalg.norm(a.translation - b.translation)
            np.testing.assert_allclose(dist, chord, rtol=1e-12)

    def test_orbit_faces_origin(self):
        for pose in camera_path("orbit", 9):
            optical_axis = pose.rotation[:, 2]
            to_origin = -pose.translation / np.linalg.norm(pose.translation)
            np.testing.assert_allclose(optical_axis, to_origin, atol=1e-12)

    def test_translation_span(self):
        poses = camera_path("translation", 11, spacing=4.0)
        span = np.linalg.norm(poses[-1].translation - poses[0].translation)
        np.testing.assert_allclose(span, 40.0)

    def test_count_validated(self):
        with pytest.raises(ValueError):
            camera_path("orbit", 0)


class TestDisparity:
    def test_paper_scale_constants(self):
        baseline = 3.0 * math.sin(math.pi / 72.0)
        d = depth_to_disparity(np.full((2, 2), 3.0), 576.0, baseline)
        np.testing.assert_allclose(d, 25.1248, atol=1e-3)

    def test_far_depth_vanishes(self):
        d = depth_to_disparity(np.full((2, 2), 1e12), 576.0, 0.13)
        assert np.all(d < 1e-7)

    def test_halving_depth_doubles_disparity(self):
        a = depth_to_disparity(np.full((2, 2), 4.0), 500.0, 0.2)
        b = depth_to_disparity(np.full((2, 2), 2.0), 500.0, 0.2)
        np.testing.assert_allclose(b, 2 * a)

    def test_invalid_propagates_and_nonpositive_rejected(self):
        d = np.array([[2.0, np.nan]])
        out = depth_to_disparity(d, 100.0, 0.1)
        assert np.isnan(out[0, 1]) and np.isfinite(out[0, 0])
        with pytest.raises(ValueError):
            depth_to_disparity(np.array([[-1.0]]), 100.0, 0.1)


class TestBundles:
    def test_identity_bundle_shapes_and_independence(self):
        gt = make_boxes_scene(16, 16, (4,), (4.0,), 3.0)
        bundle = identity_bundle(gt, 3, NoiseSpec("laplace", 0.2, 5))
        assert bundle.k == 3
        assert bundle.valid.all()
        assert not np.array_equal(bundle.depths[0], bundle.depths[1])

    def test_warp_and_reproject_round_trip(self):
        intr = CameraIntrinsics(57.6, 16.0, 16.0)
        gt = make_boxes_scene(32, 32, (6,), (27.0,), 30.0)
        poses = camera_path("translation", 5, spacing=0.5)
        views = warped_views(gt, poses, intr, 2, NoiseSpec("laplace", 0.0))
        bundle = reproject_bundle(views, poses, intr, 2)
        # the reference view is passed through untouched
        np.testing.assert_array_equal(bundle.depths[2], gt)
        # other views mostly agree with the ground truth where valid
        ok = bundle.valid[0]
        assert ok.mean() > 0.5
        agree = np.abs(bundle.depths[0][ok] - gt[ok]) < 0.75
        assert agree.mean() > 0.9
