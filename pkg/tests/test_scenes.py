"""Scene generator, domain shifts, dataset writer, and the small file formats."""

import json
import os

import numpy as np
import pytest

from bicross.errors import FormatError, InvalidParameterError
from bicross.fileio import (
    read_depth,
    read_lum,
    read_pgm,
    read_ppm,
    write_depth,
    write_lum,
    write_pgm,
    write_ppm,
)
from bicross.scenes import (
    DatasetConfig,
    SceneConfig,
    apply_domain_shift,
    build_scene,
    encode_scene_stream,
    generate_scene,
    load_manifest,
    make_dataset,
)
from bicross.spike import read_spk

SMALL = SceneConfig(height=16, width=16, t_lum=6, n_objects_range=(1, 3))
EMPTY = SceneConfig(height=16, width=16, t_lum=4, n_objects_range=(0, 0))


def plane_ramp_oracle(cfg: SceneConfig, geom) -> np.ndarray:
    """Independent evaluation of the tilted-ramp formula."""
    ys, xs = np.mgrid[0 : cfg.height, 0 : cfg.width].astype(np.float64)
    u = np.cos(geom.plane_tilt) * ys / (cfg.height - 1) + np.sin(geom.plane_tilt) * (
        xs / (cfg.width - 1) - 0.5
    )
    frac = np.clip(u, 0.0, 1.0)
    return geom.plane_far + (geom.plane_near - geom.plane_far) * frac


class TestGenerateScene:
    def test_same_seed_bit_identical(self):
        a = generate_scene(7, SMALL)
        b = generate_scene(7, SMALL)
        assert np.array_equal(a.rgb, b.rgb)
        assert np.array_equal(a.lum_seq.frames, b.lum_seq.frames)
        assert np.array_equal(a.depth_gt, b.depth_gt)

    def test_different_seeds_differ(self):
        a = generate_scene(1, SMALL)
        b = generate_scene(2, SMALL)
        assert not np.array_equal(a.depth_gt, b.depth_gt)

    def test_empty_scene_is_pure_ramp(self):
        scene = generate_scene(3, EMPTY)
        ramp = plane_ramp_oracle(EMPTY, scene.geometry)
        np.testing.assert_allclose(scene.depth_gt, ramp, atol=1e-12)

    def test_single_object_two_depth_modes(self):
        cfg = SceneConfig(height=24, width=24, t_lum=4, n_objects_range=(1, 1))
        scene = generate_scene(7, cfg)
        obj = scene.geometry.objects[0]
        ramp_values = set(np.round(plane_ramp_oracle(cfg, scene.geometry).ravel(), 12))
        observed = set(np.round(np.unique(scene.depth_gt), 12))
        assert round(obj.depth, 12) in observed
        assert observed <= ramp_values | {round(obj.depth, 12)}
        assert len(observed & ramp_values) > 0

    def test_depth_positive_and_shapes_aligned(self):
        scene = generate_scene(11, SMALL)
        assert np.all(scene.depth_gt > 0)
        assert scene.rgb.shape == (16, 16, 3)
        assert scene.lum_seq.frames.shape == (6, 16, 16)
        assert scene.depth_gt.shape == (16, 16)

    def test_invalid_depth_range(self):
        with pytest.raises(InvalidParameterError):
            SceneConfig(depth_range=(0.0, 20.0))

    def test_camera_motion_changes_frames(self):
        scene = generate_scene(5, SMALL)
        assert not np.array_equal(scene.lum_seq.frames[0], scene.lum_seq.frames[-1])


class TestDomainShift:
    def test_zero_strength_is_identity(self):
        scene = generate_scene(1, SMALL)
        assert apply_domain_shift(scene, "fog", 0.0) is scene

    def test_unknown_kind_rejected(self):
        scene = generate_scene(1, SMALL)
        with pytest.raises(InvalidParameterError):
            apply_domain_shift(scene, "snow", 0.5)

    def test_fog_formula_at_pixel(self):
        scene = generate_scene(2, SMALL)
        strength = 1.0
        fogged = apply_domain_shift(scene, "fog", strength)
        d_max = SMALL.depth_range[1]
        y, x = 3, 4
        f = np.exp(-strength * scene.depth_gt[y, x] / d_max)
        for t in range(SMALL.t_lum):
            assert fogged.lum_seq.frames[t, y, x] == pytest.approx(
                scene.lum_seq.frames[t, y, x] * f, abs=1e-12
            )
        np.testing.assert_allclose(
            fogged.rgb[y, x], scene.rgb[y, x] * f + 0.8 * (1.0 - f), atol=1e-12
        )

    def test_fog_at_d_max_attenuates_by_inv_e(self):
        # pixel at depth d_max under strength 1: luminance scaled by exp(-1)
        scene = generate_scene(3, EMPTY)
        fogged = apply_domain_shift(scene, "fog", 1.0)
        top = scene.depth_gt[0, 0]
        assert top == pytest.approx(scene.geometry.plane_far)
        ratio = fogged.lum_seq.frames[0, 0, 0] / scene.lum_seq.frames[0, 0, 0]
        assert ratio == pytest.approx(np.exp(-1.0 * top / SMALL.depth_range[1]), abs=1e-12)

    def test_fog_keeps_geometry(self):
        scene = generate_scene(2, SMALL)
        fogged = apply_domain_shift(scene, "fog", 0.8)
        np.testing.assert_array_equal(fogged.depth_gt, scene.depth_gt)

    def test_fog_spike_monotonicity_in_strength(self):
        cfg = SceneConfig(height=16, width=16, t_lum=8, n_objects_range=(1, 3), theta=0.02)
        scene = generate_scene(4, cfg)
        counts = []
        for strength in (0.0, 0.3, 0.6, 0.9):
            shifted = apply_domain_shift(scene, "fog", strength)
            counts.append(encode_scene_stream(shifted).bits.sum(axis=0))
        assert counts[0].sum() > 0
        for lo, hi in zip(counts[1:], counts[:-1]):
            assert np.all(lo <= hi)  # pixelwise non-increasing with strength
        assert counts[-1].sum() < counts[0].sum()

    def test_rain_is_seeded_and_repeatable(self):
        scene = generate_scene(5, SMALL)
        a = apply_domain_shift(scene, "rain_noise", 0.8)
        b = apply_domain_shift(scene, "rain_noise", 0.8)
        assert np.array_equal(a.lum_seq.frames, b.lum_seq.frames)
        salted = a.lum_seq.frames != scene.lum_seq.frames
        assert salted.any()
        assert np.all(a.lum_seq.frames[salted] == 1.0)

    def test_layout_moves_objects_keeps_identity(self):
        scene = generate_scene(6, SMALL)
        moved = apply_domain_shift(scene, "layout", 1.0)
        olds, news = scene.geometry.objects, moved.geometry.objects
        assert len(olds) == len(news)
        assert any(o.cx != n.cx or o.cy != n.cy for o, n in zip(olds, news))
        for o, n in zip(olds, news):
            assert (o.depth, o.half_w, o.half_h, o.kind) == (n.depth, n.half_w, n.half_h, n.kind)
        assert not np.array_equal(moved.depth_gt, scene.depth_gt)


class TestMakeDataset:
    def _tiny_cfg(self, seed=0):
        # theta low enough that 8 luminance steps produce spikes
        return DatasetConfig(
            scene=SceneConfig(height=16, width=16, t_lum=8, n_objects_range=(1, 2), theta=0.02),
            n_source=2,
            n_target=2,
            shift_kind="fog",
            shift_strength=0.7,
            seed=seed,
        )

    def test_manifest_counts_and_tags(self, tmp_path):
        manifest = make_dataset(self._tiny_cfg(), tmp_path)
        assert len(manifest.samples) == 4
        assert [s["domain"] for s in manifest.samples] == ["source"] * 2 + ["target"] * 2
        assert all(s["shift"] == "none" for s in manifest.records("source"))
        assert all(s["shift"] == "fog" for s in manifest.records("target"))
        ids = [s["id"] for s in manifest.samples]
        assert len(set(ids)) == len(ids)
        for s in manifest.samples:
            for key in ("rgb", "spk", "depth"):
                assert (tmp_path / s[key]).exists()

    def test_manifest_regeneration_byte_identical(self, tmp_path):
        cfg = self._tiny_cfg(seed=9)
        make_dataset(cfg, tmp_path / "a")
        make_dataset(cfg, tmp_path / "b")
        a = (tmp_path / "a" / "manifest.json").read_bytes()
        b = (tmp_path / "b" / "manifest.json").read_bytes()
        assert a == b
        # spike payloads too
        for name in json.loads(a)["samples"]:
            assert (tmp_path / "a" / name["spk"]).read_bytes() == (
                tmp_path / "b" / name["spk"]
            ).read_bytes()

    def test_fog_targets_have_strictly_fewer_spikes(self, tmp_path):
        cfg = self._tiny_cfg(seed=3)
        manifest = make_dataset(cfg, tmp_path)
        for i, rec in enumerate(manifest.records("target")):
            shifted = read_spk(tmp_path / rec["spk"])
            twin = build_scene(DatasetConfig(**{**cfg.__dict__, "shift_strength": 0.0}), "target", i)
            unshifted = encode_scene_stream(twin)
            assert shifted.bits.sum() < unshifted.bits.sum()

    def test_load_manifest_roundtrip(self, tmp_path):
        cfg = self._tiny_cfg()
        written = make_dataset(cfg, tmp_path)
        loaded, base = load_manifest(tmp_path)
        assert loaded.samples == written.samples
        assert loaded.seed == written.seed
        assert base == str(tmp_path)


class TestFileFormats:
    def test_pgm_roundtrip(self, tmp_path):
        img = np.random.default_rng(0).integers(0, 256, size=(7, 9), dtype=np.uint8)
        write_pgm(img, tmp_path / "x.pgm")
        np.testing.assert_array_equal(read_pgm(tmp_path / "x.pgm"), img)

    def test_ppm_roundtrip(self, tmp_path):
        img = np.random.default_rng(1).integers(0, 256, size=(5, 4, 3), dtype=np.uint8)
        write_ppm(img, tmp_path / "x.ppm")
        np.testing.assert_array_equal(read_ppm(tmp_path / "x.ppm"), img)

    def test_depth_roundtrip_is_float32_exact(self, tmp_path):
        depth = np.random.default_rng(2).uniform(1.0, 20.0, size=(6, 8))
        write_depth(depth, tmp_path / "d.f32")
        back = read_depth(tmp_path / "d.f32")
        np.testing.assert_array_equal(back, depth.astype(np.float32).astype(np.float64))

    def test_lum_roundtrip(self, tmp_path):
        frames = np.random.default_rng(3).random((4, 3, 5))
        write_lum(frames, tmp_path / "l.lum")
        back = read_lum(tmp_path / "l.lum")
        np.testing.assert_array_equal(back, frames.astype(np.float32).astype(np.float64))

    def test_corrupt_pgm_rejected(self, tmp_path):
        (tmp_path / "bad.pgm").write_bytes(b"P5\n3 3\n255\nxy")
        with pytest.raises(FormatError):
            read_pgm(tmp_path / "bad.pgm")

    def test_truncated_depth_rejected(self, tmp_path):
        write_depth(np.ones((4, 4)), tmp_path / "d.f32")
        raw = (tmp_path / "d.f32").read_bytes()
        (tmp_path / "d.f32").write_bytes(raw[:-5])
        with pytest.raises(FormatError):
            read_depth(tmp_path / "d.f32")
