"""Scene generation, projection, rendering, and the record stream."""

import numpy as np
import pytest

from eanet.data import (
    Camera,
    GenConfig,
    iter_samples,
    loss_targets,
    peek_geometry,
    project_2_5d,
    rasterize,
    read_samples,
    sample_from_bytes,
    sample_rng,
    sample_scene,
    sample_to_bytes,
    unproject_2_5d,
    write_samples,
)
from eanet.errors import ConfigError, FormatError
from eanet.hand import default_template, mirror_pose, skin_mesh
from eanet.hand.template import SHAPE_DIM

GEOM = dict(image_size=64, heat_size=4, depth_bins=8, depth_range=0.12)


@pytest.fixture(scope="module")
def template():
    return default_template()


def make_camera():
    return Camera(scale_x=110.0, scale_y=120.0, offset_x=30.0, offset_y=34.0)


class TestProjection:
    def test_round_trip_inside_the_box(self, rng):
        camera = make_camera()
        root = np.array([0.01, -0.02, 0.015])
        pts = root + rng.uniform(-0.05, 0.05, size=(40, 3))
        coords, clamped = project_2_5d(pts, camera, root, **GEOM)
        back = unproject_2_5d(coords[~clamped], camera, root, **GEOM)
        np.testing.assert_allclose(back, pts[~clamped], atol=1e-12)

    def test_root_depth_is_exactly_the_middle_bin(self):
        camera = make_camera()
        root = np.array([0.0, 0.0, 0.0173])
        coords, clamped = project_2_5d(root[None, :], camera, root, **GEOM)
        assert coords[0, 2] == 3.5
        assert not clamped[0]

    def test_clamping_flags_and_bounds(self):
        camera = make_camera()
        root = np.zeros(3)
        pts = np.array([[0.0, 0.0, 0.0], [5.0, 0.0, 0.0], [0.0, 0.0, 0.5]])
        coords, clamped = project_2_5d(pts, camera, root, **GEOM)
        assert list(clamped) == [False, True, True]
        assert (coords[:, :2] >= 0).all() and (coords[:, :2] <= 3).all()
        assert (coords[:, 2] >= 0).all() and (coords[:, 2] <= 7).all()

    def test_world_shift_moves_grid_coords_linearly(self):
        camera = make_camera()
        root = np.zeros(3)
        p = np.array([[0.005, -0.003, 0.0]])
        a, _ = project_2_5d(p, camera, root, **GEOM)
        b, _ = project_2_5d(p + [0.004, 0.0, 0.0], camera, root, **GEOM)
        stride = GEOM["image_size"] / GEOM["heat_size"]
        assert b[0, 0] - a[0, 0] == pytest.approx(camera.scale_x * 0.004 / stride, abs=1e-12)
        assert b[0, 1] == a[0, 1]


class TestRasterize:
    def test_image_bounds_and_shape(self, rng):
        camera = make_camera()
        verts = rng.normal(size=(64, 3)) * 0.03
        image = rasterize(64, camera, [(0, verts, 0.0), (1, verts + 0.01, 0.0)], 0.12)
        assert image.shape == (64, 64, 3)
        assert image.min() >= 0.0 and image.max() <= 1.0

    def test_single_hand_leaves_other_channels_empty(self, rng):
        camera = make_camera()
        verts = rng.normal(size=(64, 3)) * 0.03
        image = rasterize(64, camera, [(0, verts, 0.0)], 0.12)
        assert image[:, :, 0].max() > 0.1
        assert np.array_equal(image[:, :, 1], np.zeros((64, 64)))
        assert np.array_equal(image[:, :, 2], np.zeros((64, 64)))

    def test_overlap_channel_is_the_product(self, rng):
        camera = make_camera()
        a = rng.normal(size=(64, 3)) * 0.03
        image = rasterize(64, camera, [(0, a, 0.0), (1, a + 0.002, 0.0)], 0.12)
        assert np.array_equal(image[:, :, 2], image[:, :, 0] * image[:, :, 1])

    def test_near_vertex_splats_at_full_brightness(self):
        camera = Camera(1.0, 1.0, 0.0, 0.0)
        # one vertex projecting exactly to pixel (20, 30), well in front
        verts = np.array([[20.0, 30.0, -0.12]])
        image = rasterize(64, camera, [(0, verts, 0.0)], 0.12)
        assert image[30, 20, 0] == 1.0
        assert image[30, 20, 0] == image[:, :, 0].max()

    def test_splat_centroid_recovers_the_projection(self):
        camera = Camera(1.0, 1.0, 0.0, 0.0)
        verts = np.array([[33.25, 17.75, 0.0]])
        image = rasterize(64, camera, [(0, verts, 0.0)], 0.12)
        ys, xs = np.mgrid[0:64, 0:64]
        mass = image[:, :, 0].sum()
        cx = (xs * image[:, :, 0]).sum() / mass
        cy = (ys * image[:, :, 0]).sum() / mass
        assert abs(cx - 33.25) < 0.05 and abs(cy - 17.75) < 0.05

    def test_farther_vertices_are_dimmer(self):
        camera = Camera(1.0, 1.0, 0.0, 0.0)
        near = rasterize(64, camera, [(0, np.array([[32.0, 32.0, -0.06]]), 0.0)], 0.12)
        far = rasterize(64, camera, [(0, np.array([[32.0, 32.0, 0.06]]), 0.0)], 0.12)
        assert near[32, 32, 0] > far[32, 32, 0]


class TestSceneSampling:
    def test_identical_seeds_reproduce_the_sample_bitwise(self, template):
        cfg = GenConfig()
        a = sample_scene(cfg, sample_rng(7, 0, 3), template)
        b = sample_scene(cfg, sample_rng(7, 0, 3), template)
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.aux, b.aux)
        assert np.array_equal(a.left.vertices, b.left.vertices)
        assert np.array_equal(a.right.theta, b.right.theta)

    def test_different_indices_differ(self, template):
        cfg = GenConfig()
        a = sample_scene(cfg, sample_rng(7, 0, 0), template)
        b = sample_scene(cfg, sample_rng(7, 0, 1), template)
        assert not np.array_equal(a.image, b.image)

    def test_two_hand_ratio_controls_flags(self, template):
        cfg = GenConfig(two_hand_ratio=1.0)
        for i in range(10):
            s = sample_scene(cfg, sample_rng(1, 0, i), template)
            assert s.flags.tolist() == [1.0, 1.0]
        cfg = GenConfig(two_hand_ratio=0.0)
        seen = set()
        for i in range(20):
            s = sample_scene(cfg, sample_rng(1, 0, i), template)
            assert s.flags.sum() == 1.0
            seen.add(tuple(s.flags))
        assert len(seen) == 2  # both single-hand kinds occur

    def test_ground_truth_regenerates_bitwise_from_the_record(self, template):
        cfg = GenConfig(two_hand_ratio=1.0)
        sample = sample_scene(cfg, sample_rng(11, 0, 5), template)
        for hand in ("left", "right"):
            rec = getattr(sample, hand)
            root = sample.root(hand)
            mesh = skin_mesh(template, rec.theta, rec.beta, hand)
            wrist = mesh.joints.data[0]
            verts = (mesh.vertices.data - wrist) + root
            joints = (mesh.joints.data - wrist) + root
            assert np.array_equal(verts, rec.vertices)
            coords, _ = project_2_5d(joints, sample.camera, root, **GEOM)
            assert np.array_equal(coords, rec.joints25)

    def test_wrist_sits_on_the_root_bitwise(self, template):
        cfg = GenConfig(two_hand_ratio=1.0)
        sample = sample_scene(cfg, sample_rng(2, 0, 0), template)
        for hand in ("left", "right"):
            rec = getattr(sample, hand)
            mesh = skin_mesh(template, rec.theta, rec.beta, hand)
            wrist_world = (mesh.joints.data[0] - mesh.joints.data[0]) + sample.root(hand)
            assert np.array_equal(wrist_world, sample.root(hand))
            assert rec.joints25[0, 2] == 3.5  # wrist depth is the middle bin

    def test_full_symmetry_mirrors_the_left_hand(self, template):
        cfg = GenConfig(two_hand_ratio=1.0, symmetry=1.0)
        sample = sample_scene(cfg, sample_rng(4, 0, 2), template)
        assert np.array_equal(sample.right.theta, mirror_pose(sample.left.theta))
        assert np.array_equal(sample.right.beta, sample.left.beta)

    def test_zero_symmetry_leaves_hands_independent(self, template):
        cfg = GenConfig(two_hand_ratio=1.0, symmetry=0.0)
        sample = sample_scene(cfg, sample_rng(4, 0, 2), template)
        assert not np.allclose(sample.right.theta, mirror_pose(sample.left.theta), atol=0.05)

    def test_blended_poses_respect_the_limits(self, template):
        lo, hi = template.pose_limits[:, 0], template.pose_limits[:, 1]
        cfg = GenConfig(two_hand_ratio=1.0, symmetry=0.5)
        for i in range(20):
            sample = sample_scene(cfg, sample_rng(9, 0, i), template)
            assert (sample.right.theta >= lo).all() and (sample.right.theta <= hi).all()
            mirrored = mirror_pose(sample.left.theta)
            assert (mirrored >= lo).all() and (mirrored <= hi).all()

    def test_single_hand_sample_zeroes_the_absent_side(self, template):
        cfg = GenConfig(two_hand_ratio=0.0)
        for i in range(20):
            sample = sample_scene(cfg, sample_rng(3, 0, i), template)
            absent = "right" if sample.flags[0] else "left"
            channel = 1 if absent == "right" else 0
            rec = getattr(sample, absent)
            assert np.array_equal(rec.theta, np.zeros(48))
            assert np.array_equal(rec.vertices, np.zeros((64, 3)))
            assert np.array_equal(sample.rel, np.zeros(3))
            assert np.array_equal(sample.image[:, :, channel], np.zeros((64, 64)))
            assert np.array_equal(sample.image[:, :, 2], np.zeros((64, 64)))

    def test_relative_translation_matches_the_roots(self, template):
        cfg = GenConfig(two_hand_ratio=1.0)
        sample = sample_scene(cfg, sample_rng(6, 0, 1), template)
        np.testing.assert_allclose(
            sample.right_root - sample.left_root, sample.rel, atol=1e-15
        )
        assert 0.05 <= sample.rel[0] <= 0.11

    def test_loss_targets_are_wrist_relative(self, template):
        cfg = GenConfig(two_hand_ratio=1.0)
        sample = sample_scene(cfg, sample_rng(8, 0, 0), template)
        targets = loss_targets(sample)
        for hand in ("left", "right"):
            expected = getattr(sample, hand).vertices - sample.root(hand)
            assert np.array_equal(targets[hand]["verts_rel"], expected)
            assert targets[hand]["theta"].shape == (48,)
        assert np.array_equal(targets["flags"], sample.flags)

    def test_shape_blend_stays_in_sampler_bounds(self, template):
        cfg = GenConfig(two_hand_ratio=1.0, symmetry=0.3)
        for i in range(10):
            sample = sample_scene(cfg, sample_rng(5, 0, i), template)
            assert (np.abs(sample.right.beta) <= 1.0).all()
            assert sample.right.beta.shape == (SHAPE_DIM,)


class TestGenConfig:
    def test_json_round_trip(self, tmp_path):
        cfg = GenConfig(train_samples=32, symmetry=0.25, seed=9)
        path = tmp_path / "gen.json"
        import json

        path.write_text(json.dumps(cfg.to_dict()))
        assert GenConfig.from_json(path) == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            GenConfig.from_dict({"sample_count": 5})

    def test_bad_json_raises_config_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            GenConfig.from_json(path)

    @pytest.mark.parametrize("kw", [
        {"two_hand_ratio": 1.5},
        {"symmetry": -0.1},
        {"depth_range": 0.0},
        {"heat_size": 0},
        {"train_samples": -1},
        {"camera_scale": (130.0, 100.0)},
        {"camera_scale": (0.0, 100.0)},
        {"camera_offset": (36.0,)},
    ])
    def test_validation(self, kw):
        with pytest.raises(ConfigError):
            GenConfig(**kw)

    def test_camera_ranges_feed_the_sampler(self):
        cfg = GenConfig(camera_scale=(110.0, 110.0), camera_offset=(30.0, 30.0))
        cam = sample_scene(cfg, sample_rng(5, 0, 0)).camera
        assert (cam.scale_x, cam.scale_y) == (110.0, 110.0)
        assert (cam.offset_x, cam.offset_y) == (30.0, 30.0)


@pytest.fixture(scope="module")
def samples():
    cfg = GenConfig(two_hand_ratio=0.75)
    return [sample_scene(cfg, sample_rng(13, 0, i)) for i in range(4)]


class TestRecordStream:
    def test_round_trip_is_bitwise(self, tmp_path, samples):
        path = tmp_path / "data.bin"
        write_samples(path, samples)
        back = read_samples(path)
        assert len(back) == len(samples)
        for a, b in zip(samples, back):
            assert np.array_equal(a.image, b.image)
            assert np.array_equal(a.flags, b.flags)
            assert np.array_equal(a.rel, b.rel)
            assert np.array_equal(a.aux, b.aux)
            for hand in ("left", "right"):
                ra, rb = getattr(a, hand), getattr(b, hand)
                assert np.array_equal(ra.joints25, rb.joints25)
                assert np.array_equal(ra.vertices, rb.vertices)
                assert np.array_equal(ra.theta, rb.theta)
                assert np.array_equal(ra.beta, rb.beta)

    def test_empty_file_is_an_empty_dataset(self, tmp_path):
        path = tmp_path / "empty.bin"
        path.write_bytes(b"")
        assert read_samples(path) == []
        assert peek_geometry(path) is None

    def test_truncated_body_names_the_record(self, tmp_path, samples):
        path = tmp_path / "cut.bin"
        write_samples(path, samples)
        blob = path.read_bytes()
        one = len(sample_to_bytes(samples[0]))
        path.write_bytes(blob[: 2 * one + one // 3])
        with pytest.raises(FormatError) as exc_info:
            read_samples(path)
        assert exc_info.value.record_index == 2
        assert "record 2" in str(exc_info.value)

    def test_truncated_length_prefix_names_the_record(self, tmp_path, samples):
        path = tmp_path / "cut.bin"
        write_samples(path, samples[:1])
        path.write_bytes(path.read_bytes() + b"\x07\x01\x02")
        with pytest.raises(FormatError) as exc_info:
            read_samples(path)
        assert exc_info.value.record_index == 1

    def test_streaming_yields_prefix_before_failing(self, tmp_path, samples):
        path = tmp_path / "cut.bin"
        write_samples(path, samples)
        one = len(sample_to_bytes(samples[0]))
        path.write_bytes(path.read_bytes()[: 3 * one + 11])
        seen = 0
        with pytest.raises(FormatError):
            for _ in iter_samples(path):
                seen += 1
        assert seen == 3

    def test_wrong_field_shape_is_rejected(self, samples):
        import dataclasses

        bad = dataclasses.replace(samples[0], flags=np.zeros(5))
        body = sample_to_bytes(bad)[8:]
        with pytest.raises(FormatError) as exc_info:
            sample_from_bytes(body, 0)
        assert "flags" in str(exc_info.value)

    def test_peek_geometry_reads_the_first_record(self, tmp_path, samples):
        path = tmp_path / "data.bin"
        write_samples(path, samples)
        geom = peek_geometry(path)
        assert geom == {"image_size": 64, "heat_size": 4, "depth_bins": 8}
