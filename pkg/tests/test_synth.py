"""Synthetic scene generation and the density/uncertainty correlation."""

import math

import numpy as np
import pytest

from boxbelief import (
    B_MIN,
    BoxParams,
    CornerBelief,
    CornerSet,
    InsufficientDataError,
    InvalidInputError,
    PointCloud,
    SceneSpec,
    SyntheticSample,
    corners_from_box,
    density_uncertainty_correlation,
    fit_laplace_mle,
    fit_observation_belief,
    points_in_box,
    sample_scene,
    yaw_rotation,
)


class TestSceneSpecValidation:
    def test_rejects_bad_ranges(self):
        with pytest.raises(InvalidInputError):
            SceneSpec(n_boxes=1, range_min=10.0, range_max=5.0)
        with pytest.raises(InvalidInputError):
            SceneSpec(n_boxes=-1)

    def test_rejects_sub_floor_noise(self):
        with pytest.raises(InvalidInputError):
            SceneSpec(n_boxes=1, noise_b_near=0.1 * B_MIN)


class TestSampleScene:
    def test_deterministic_for_fixed_spec(self):
        spec = SceneSpec(n_boxes=4, seed=123)
        a, b = sample_scene(spec), sample_scene(spec)
        for sa, sb in zip(a, b):
            assert sa.gt_box == sb.gt_box
            np.testing.assert_array_equal(sa.cloud.points, sb.cloud.points)
            np.testing.assert_array_equal(sa.true_belief.b, sb.true_belief.b)
            for ca, cb in zip(sa.noisy_corner_observations, sb.noisy_corner_observations):
                np.testing.assert_array_equal(ca.corners, cb.corners)

    def test_zero_boxes(self):
        assert sample_scene(SceneSpec(n_boxes=0, seed=0)) == []

    def test_all_points_lie_on_box_surface(self):
        for sample in sample_scene(SceneSpec(n_boxes=6, seed=9)):
            box = sample.gt_box
            inside = points_in_box(box, sample.cloud, margin=4 * 0.05)
            assert len(inside) == len(sample.cloud)
            # every point sits on some face: max |local|/half == 1
            local = (sample.cloud.points - box.center) @ yaw_rotation(box.psi)
            ratio = np.abs(local) / (0.5 * np.array([box.l, box.h, box.w]))
            np.testing.assert_allclose(ratio.max(axis=1), 1.0, atol=1e-9)

    def test_no_points_on_faces_looking_away(self):
        """Outward normals of point-bearing faces must face the sensor."""
        for sample in sample_scene(SceneSpec(n_boxes=8, seed=10)):
            box = sample.gt_box
            rot = yaw_rotation(box.psi)
            dims = np.array([box.l, box.h, box.w])
            local = (sample.cloud.points - box.center) @ rot
            for axis in range(3):
                for sign in (1.0, -1.0):
                    on_face = np.abs(local[:, axis] - sign * dims[axis] / 2) < 1e-9
                    if not np.any(on_face):
                        continue
                    normal = sign * rot[:, axis]
                    face_center = box.center + normal * dims[axis] / 2
                    assert float(normal @ face_center) < 0.0

    def test_box_dead_ahead_gets_points_only_on_near_faces(self):
        """An axis-aligned box straight in front of the sensor: points on
        the sensor-side w-face (and possibly the top), never the far or
        side faces."""
        from boxbelief.synth import _sample_surface_points

        box = BoxParams(0.0, 1.2, 20.0, h=1.5, w=1.6, l=3.9, psi=math.pi / 2)
        points = _sample_surface_points(box, 60.0, np.random.default_rng(5))
        local = (points - box.center) @ yaw_rotation(box.psi)
        half = 0.5 * np.array([box.l, box.h, box.w])
        on_near_w = np.abs(local[:, 2] + half[2]) < 1e-9
        on_top = np.abs(local[:, 1] + half[1]) < 1e-9  # -y is up toward camera
        assert len(points) > 0
        assert np.all(on_near_w | on_top)
        assert not np.any(np.abs(local[:, 2] - half[2]) < 1e-9)  # far w-face
        assert not np.any(np.abs(np.abs(local[:, 0]) - half[0]) < 1e-9)  # l-faces

    def test_inverse_square_density(self):
        """Pinned ranges 10 m and 20 m with identical geometry streams:
        total point counts scale by (10/20)^2 = 1/4 within Poisson noise."""
        base = dict(n_boxes=100, seed=77, h_spread=0.0, w_spread=0.0, l_spread=0.0)
        near = sample_scene(SceneSpec(range_min=10, range_max=10, **base))
        far = sample_scene(SceneSpec(range_min=20, range_max=20, **base))
        count_near = sum(len(s.cloud) for s in near)
        count_far = sum(len(s.cloud) for s in far)
        ratio = count_far / count_near
        # ~3 sigma of Poisson noise on the ratio
        sigma = ratio * math.sqrt(1 / count_far + 1 / count_near)
        assert abs(ratio - 0.25) < 3 * sigma + 0.005

    def test_mle_recovers_generating_diversities(self):
        """Per-corner fits on 1e4 observation draws land within 5% of the
        near/far noise levels."""
        spec = SceneSpec(
            n_boxes=1, seed=21, n_observations=10_000,
            noise_b_near=0.02, noise_b_far=0.1,
        )
        sample = sample_scene(spec)[0]
        stack = np.stack([cs.corners for cs in sample.noisy_corner_observations])
        for k in range(8):
            expected = sample.true_belief.b[k, 0]
            for j in range(3):
                fitted = fit_laplace_mle(stack[:, k, j])
                assert fitted.b == pytest.approx(expected, rel=0.05)

    def test_near_corners_get_near_noise(self):
        sample = sample_scene(SceneSpec(n_boxes=1, seed=22))[0]
        ranges = np.linalg.norm(corners_from_box(sample.gt_box).corners, axis=1)
        b = sample.true_belief.b[:, 0]
        near = np.argsort(ranges)[:4]
        assert set(np.flatnonzero(b == b.min())) == set(near)

    def test_fit_observation_belief_matches_per_entry_mle(self):
        sample = sample_scene(SceneSpec(n_boxes=1, seed=23, n_observations=64))[0]
        fitted = fit_observation_belief(sample)
        stack = np.stack([cs.corners for cs in sample.noisy_corner_observations])
        for k, j in ((0, 0), (3, 1), (7, 2)):
            single = fit_laplace_mle(stack[:, k, j])
            assert fitted.b[k, j] == pytest.approx(single.b, rel=1e-12)
            assert fitted.mu[k, j] == pytest.approx(single.mu, rel=1e-12)


class TestDensityUncertaintyCorrelation:
    def test_asymmetric_noise_gives_strong_positive_correlation(self):
        spec = SceneSpec(n_boxes=100, seed=30, noise_b_near=0.02, noise_b_far=0.1)
        result = density_uncertainty_correlation(sample_scene(spec))
        assert not result.degenerate
        assert result.rho > 0.5

    def test_symmetric_noise_gives_no_correlation(self):
        spec = SceneSpec(n_boxes=100, seed=31, noise_b_near=0.04, noise_b_far=0.04)
        result = density_uncertainty_correlation(sample_scene(spec))
        assert not result.degenerate
        assert abs(result.rho) < 0.1

    def test_tied_profiles_return_degenerate_zero(self):
        """Observations with zero spread fit the diversity floor everywhere,
        so the uncertainty ranking is undefined."""
        box = BoxParams(0, 1, 12, 1.5, 1.6, 3.9, 0.3)
        corners = corners_from_box(box)
        observations = tuple(CornerSet(corners.corners) for _ in range(16))
        sample = SyntheticSample(
            gt_box=box,
            cloud=PointCloud(box.center + np.random.default_rng(1).uniform(-0.3, 0.3, (30, 3))),
            noisy_corner_observations=observations,
            true_belief=CornerBelief.from_box(box, B_MIN),
        )
        result = density_uncertainty_correlation([sample])
        assert result.degenerate
        assert result.rho == 0.0

    def test_too_few_samples_rejected(self):
        spec = SceneSpec(n_boxes=5, seed=32)
        with pytest.raises(InsufficientDataError):
            density_uncertainty_correlation(sample_scene(spec))

    def test_empty_input_rejected(self):
        with pytest.raises(InsufficientDataError):
            density_uncertainty_correlation([])
