import numpy as np
import pytest

from affineiq.errors import ArgumentError, ConfigError, UnsupportedFamilyError
from affineiq.imaging import (
    RGB_TO_XYZ,
    WHITE_E,
    ImageBuffer,
    chromaticity_of_xyz,
    rmse_energy,
    srgb_to_linear,
)
from affineiq.transforms import (
    GridConfig,
    TransformSpec,
    ViewingGeometry,
    apply_illuminant,
    apply_transform,
    hue_path,
    identity_spec,
    illuminant_gains,
    theta_grid,
)

from conftest import random_image

GEOM = ViewingGeometry(pixels_per_degree=100.0)


class TestSpecValidation:
    def test_negative_translation_rejected(self):
        with pytest.raises(ArgumentError):
            TransformSpec("translation", -0.1, direction=(1, 0))

    def test_rotation_range(self):
        with pytest.raises(ArgumentError):
            TransformSpec("rotation", 11.0)

    def test_scale_range(self):
        with pytest.raises(ArgumentError):
            TransformSpec("scale", 0.05)

    def test_illuminant_target_validated(self):
        with pytest.raises(ArgumentError):
            TransformSpec("illuminant", (0.9, 0.3))

    def test_direction_normalized(self):
        spec = TransformSpec("translation", 0.1, direction=(3, 4))
        assert spec.direction == pytest.approx((0.6, 0.8))

    def test_axis_values(self):
        assert TransformSpec("rotation", -2.5).axis_value == 2.5
        assert TransformSpec("scale", 1.25).axis_value == 1.25
        t = TransformSpec("illuminant", (WHITE_E[0] + 0.03, WHITE_E[1]))
        assert t.axis_value == pytest.approx(0.03)


class TestIdentityBypass:
    @pytest.mark.parametrize("family", ["translation", "rotation", "scale", "illuminant"])
    def test_identity_is_bit_exact(self, family, rng):
        img = random_image(rng, 24, 24, 3)
        out = apply_transform(img, identity_spec(family), GEOM)
        assert out is img


class TestTranslation:
    def test_integral_shift_matches_index_oracle(self, rng):
        img = random_image(rng, 40, 40, 3)
        # 0.3 degrees at 100 px/deg = 30 px rightward
        spec = TransformSpec("translation", 0.3, direction=(1, 0))
        out = apply_transform(img, spec, GEOM)
        assert (out.height, out.width) == (40, 40)
        # away from the border the output is an exact index shift
        np.testing.assert_array_equal(out.data[:, 30:, :], img.data[:, :10, :])
        assert rmse_energy(img, out) > 0

    @pytest.mark.parametrize("direction,slicer", [
        ((-1, 0), lambda o, i: (o[:, :10, :], i[:, 30:, :])),
        ((0, 1), lambda o, i: (o[30:, :, :], i[:10, :, :])),
        ((0, -1), lambda o, i: (o[:10, :, :], i[30:, :, :])),
    ])
    def test_all_axis_directions(self, rng, direction, slicer):
        img = random_image(rng, 40, 40, 1)
        out = apply_transform(img, TransformSpec("translation", 0.3, direction=direction), GEOM)
        got, want = slicer(out.data, img.data)
        np.testing.assert_array_equal(got, want)

    def test_fractional_shift_changes_image(self, rng):
        img = random_image(rng, 40, 40, 1)
        out = apply_transform(img, TransformSpec("translation", 0.005, direction=(1, 0)), GEOM)
        assert rmse_energy(img, out) > 0


class TestRotationScale:
    def test_rotation_preserves_dims(self, rng):
        img = random_image(rng, 30, 30, 3)
        out = apply_transform(img, TransformSpec("rotation", 7.3), GEOM)
        assert (out.height, out.width) == (30, 30)

    def test_rotation_symmetric_energy(self, rng):
        # +theta and -theta produce equal energies on a symmetric resampler
        img = random_image(rng, 32, 32, 1)
        e_pos = rmse_energy(img, apply_transform(img, TransformSpec("rotation", 5.0), GEOM))
        e_neg = rmse_energy(img, apply_transform(img, TransformSpec("rotation", -5.0), GEOM))
        assert e_pos == pytest.approx(e_neg, rel=0.05)

    def test_scale_preserves_dims(self, rng):
        img = random_image(rng, 32, 32, 3)
        for f in (0.5, 1.25, 2.0):
            out = apply_transform(img, TransformSpec("scale", f), GEOM)
            assert (out.height, out.width) == (32, 32)

    def test_scale_two_x_center_pixel_block(self):
        # scaling a centered 2x2 block by 2 fills the central 4x4
        data = np.zeros((8, 8, 1))
        data[3:5, 3:5, 0] = 1.0
        out = apply_transform(ImageBuffer(data), TransformSpec("scale", 2.0), GEOM)
        assert out.data[2:6, 2:6, 0].min() > 0.5
        assert out.data[0, 0, 0] == 0.0


class TestIlluminant:
    def test_white_target_is_desaturation_with_unit_gains(self, rng):
        np.testing.assert_allclose(illuminant_gains(WHITE_E), [1.0, 1.0, 1.0], atol=1e-12)
        img = random_image(rng, 8, 8, 3)
        out = apply_illuminant(img, WHITE_E)
        # achromatic output: all channels equal
        assert np.max(np.abs(out.data - out.data[:, :, :1])) < 1e-12

    def test_grayscale_rejected(self, rng):
        img = random_image(rng, 8, 8, 1)
        with pytest.raises(UnsupportedFamilyError):
            apply_illuminant(img, WHITE_E)

    def test_out_of_gamut_target_rejected(self):
        with pytest.raises(ArgumentError):
            illuminant_gains((0.7, 0.25))

    def test_mid_gray_hits_target_chromaticity(self):
        # forward-conversion oracle: encode, decode, measure xy per pixel
        cfg = GridConfig(base_size=8)
        specs = hue_path(0, cfg)
        target = specs[-1].theta  # hue angle 0, saturation step 8
        img = ImageBuffer(np.full((4, 4, 3), 0.5))
        out = apply_illuminant(img, target)
        lin = srgb_to_linear(out)
        for px in lin.data.reshape(-1, 3):
            xyz = RGB_TO_XYZ @ px
            x, y = chromaticity_of_xyz(*xyz)
            assert abs(x - target[0]) < 1e-4
            assert abs(y - target[1]) < 1e-4

    def test_luminance_preserved_for_gray(self):
        img = ImageBuffer(np.full((2, 2, 3), 0.5))
        cfg = GridConfig(base_size=8)
        for spec in hue_path(3, cfg):
            out = apply_illuminant(img, spec.theta)
            lin = srgb_to_linear(out)
            from affineiq.imaging import luminance

            y_in = luminance(srgb_to_linear(img))
            np.testing.assert_allclose(luminance(lin), y_in, atol=1e-9)


class TestGrids:
    def test_rotation_grid_contains_zero_uniform_spacing(self):
        grid = theta_grid("rotation", GridConfig(base_size=8))
        thetas = [s.theta for s in grid]
        assert 0.0 in thetas
        assert len(thetas) == 201
        diffs = np.diff(sorted(thetas))
        np.testing.assert_allclose(diffs, 0.1, atol=1e-9)

    def test_illuminant_grid_has_160_specs(self):
        grid = theta_grid("illuminant", GridConfig(base_size=8))
        assert len(grid) == 160

    def test_scale_grid_enumeration_oracle(self):
        cfg = GridConfig(base_size=56, scale_one_sided=False)
        grid = theta_grid("scale", cfg)
        factors = {s.theta for s in grid}
        expected = set()
        for n in range(1, 113):
            f = n / 56
            if 0.1 <= f <= 2.0 and round(56 * f) % 2 == 0:
                expected.add(f)
        assert factors == expected
        assert all(round(56 * f) % 2 == 0 for f in factors)
        assert 1.0 in factors

    def test_scale_grid_one_sided_default(self):
        grid = theta_grid("scale", GridConfig(base_size=56))
        assert min(s.theta for s in grid) == 1.0

    def test_translation_grid_four_directions(self):
        cfg = GridConfig(base_size=8, translation_steps=5)
        grid = theta_grid("translation", cfg)
        assert len(grid) == 1 + 5 * 4
        nonzero = [s for s in grid if s.theta > 0]
        assert max(s.theta for s in nonzero) == pytest.approx(0.3)
        assert len({s.direction for s in nonzero}) == 4

    def test_bad_config_rejected(self):
        with pytest.raises(ConfigError):
            GridConfig(base_size=8, scale_min=1.5, scale_max=0.5)
        with pytest.raises(ConfigError):
            GridConfig(base_size=7)
        with pytest.raises(ConfigError):
            GridConfig(base_size=8, rotation_step=-0.1)

    def test_grid_dims_preserved(self, rng):
        img = random_image(rng, 16, 16, 3)
        cfg = GridConfig(
            base_size=16, rotation_step=2.0, translation_steps=3, saturation_steps=2, hue_count=4
        )
        for family in ("translation", "rotation", "scale", "illuminant"):
            for spec in theta_grid(family, cfg):
                out = apply_transform(img, spec, GEOM)
                assert (out.height, out.width) == (16, 16)


class TestMonotonicity:
    @pytest.mark.parametrize("family", ["translation", "rotation", "scale"])
    def test_energy_nondecreasing_along_grid(self, family, rng):
        geom = ViewingGeometry(32.0)
        cfg = GridConfig(base_size=24, rotation_step=1.0, translation_steps=6)
        images = [random_image(rng, 24, 24, 1) for _ in range(20)]
        grid = theta_grid(family, cfg)
        axes = sorted({s.axis_value for s in grid})
        means = []
        for ax in axes:
            specs = [s for s in grid if s.axis_value == ax]
            e = np.mean(
                [rmse_energy(i, apply_transform(i, s, geom)) for s in specs for i in images]
            )
            means.append(e)
        means = np.array(means)
        span = means.max() - means.min()
        assert np.all(np.diff(means) >= -0.01 * span)
