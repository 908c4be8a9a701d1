import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crosscompose.core import (
    DegenerateImageError,
    ImagePlane,
    MaskPlane,
    PipelineConfig,
    Placement,
    dilate_mask,
    disk_footprint,
    grow_window,
    latent_mask_footprint,
    longest_edge_dims,
    mask_to_latent,
    mask_to_latent_interior,
    resize_longest_edge,
    resize_mask_to,
    round_to_multiple,
)
from util import random_image, rect_mask


class TestImagePlane:
    def test_valid_image(self):
        img = random_image(16, 24, 0)
        assert img.shape_hw == (16, 24)
        assert img.pixels.dtype == np.float64

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            ImagePlane(np.full((16, 16, 3), 1.5))

    def test_rejects_non_finite(self):
        px = np.zeros((16, 16, 3))
        px[0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            ImagePlane(px)

    def test_rejects_tiny(self):
        with pytest.raises(ValueError, match="at least"):
            ImagePlane(np.zeros((4, 16, 3)))

    def test_pixels_read_only(self):
        img = random_image(16, 16, 1)
        with pytest.raises(ValueError):
            img.pixels[0, 0, 0] = 0.5


class TestMaskPlane:
    def test_bg_box_must_be_filled_rectangle(self):
        bits = np.zeros((16, 16), dtype=bool)
        bits[2:6, 3:9] = True
        MaskPlane(bits, "bg_box")  # fine
        bits = bits.copy()
        bits[3, 4] = False  # hole
        with pytest.raises(ValueError, match="filled rectangle"):
            MaskPlane(bits, "bg_box")

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="kind"):
            MaskPlane(np.zeros((8, 8), bool), "wat")

    def test_bbox(self):
        m = rect_mask(16, 16, 2, 3, 6, 9)
        assert m.bbox() == (2, 3, 6, 9)
        with pytest.raises(ValueError):
            rect_mask(16, 16, 0, 0, 0, 0).bbox()


class TestResize:
    def test_exact_two_to_one(self):
        img = random_image(1024, 2048, 0)
        out = resize_longest_edge(img, 1024, 64)
        assert out.shape_hw == (512, 1024)

    def test_rounding_to_multiple(self):
        # 1000x750 at target 1024: short side 750 * 1.024 = 768.0 -> 768
        assert longest_edge_dims((750, 1000), 1024, 64) == (768, 1024)
        img = random_image(750, 1000, 1)
        assert resize_longest_edge(img, 1024, 64).shape_hw == (768, 1024)

    def test_identity(self):
        img = random_image(1024, 1024, 2)
        out = resize_longest_edge(img, 1024, 64)
        assert out is img

    def test_ties_round_up(self):
        # 96 / 64 = 1.5 -> rounds up to 128
        assert round_to_multiple(96, 64) == 128
        assert round_to_multiple(95.9, 64) == 64

    def test_degenerate_rejected(self):
        with pytest.raises(DegenerateImageError):
            longest_edge_dims((64, 4096), 1024, 64)

    def test_value_range_preserved(self):
        img = random_image(100, 60, 3)
        out = resize_longest_edge(img, 128, 8)
        assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0

    def test_mask_companion_nearest_stays_binary(self):
        m = rect_mask(100, 60, 10, 10, 50, 40)
        dims = longest_edge_dims((100, 60), 128, 8)
        out = resize_mask_to(m, dims)
        assert out.shape_hw == dims
        assert out.bits.dtype == bool
        assert out.kind == m.kind

    def test_target_below_multiple_rejected(self):
        with pytest.raises(ValueError):
            longest_edge_dims((100, 100), 32, 64)


class TestDilate:
    def test_empty_stays_empty(self):
        m = rect_mask(32, 32, 0, 0, 0, 0)
        out = dilate_mask(m, 15)
        assert out.is_empty
        assert out.kind == "dilated"

    def test_single_pixel_radius_one_is_cross(self):
        bits = np.zeros((11, 11), dtype=bool)
        bits[5, 5] = True
        out = dilate_mask(MaskPlane(bits, "fg_object"), 1)
        expected = np.zeros((11, 11), dtype=bool)
        for dy, dx in [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)]:
            expected[5 + dy, 5 + dx] = True
        assert np.array_equal(out.bits, expected)

    def test_radius_zero_identity(self):
        m = rect_mask(16, 16, 4, 4, 8, 8)
        out = dilate_mask(m, 0)
        assert np.array_equal(out.bits, m.bits)
        assert out.kind == "dilated"

    def test_negative_radius_rejected(self):
        with pytest.raises(ValueError, match=">= 0"):
            dilate_mask(rect_mask(16, 16, 4, 4, 8, 8), -1)

    def test_wrong_kind_rejected(self):
        with pytest.raises(ValueError, match="fg_object"):
            dilate_mask(rect_mask(16, 16, 2, 2, 6, 6, kind="bg_box"), 3)

    def test_disk_footprint_shape(self):
        disk = disk_footprint(2)
        assert disk.shape == (5, 5)
        assert disk[2, 2] and disk[0, 2] and not disk[0, 0]

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**36 - 1), st.integers(0, 2**36 - 1), st.integers(0, 3))
    def test_monotone_and_extensive(self, bits_a, bits_b, radius):
        a = np.array([(bits_a >> i) & 1 for i in range(36)], dtype=bool).reshape(6, 6)
        both = a | np.array([(bits_b >> i) & 1 for i in range(36)], dtype=bool).reshape(6, 6)
        da = dilate_mask(MaskPlane(a, "fg_object"), radius).bits
        dboth = dilate_mask(MaskPlane(both, "fg_object"), radius).bits
        assert np.all(da <= dboth)  # monotone
        assert np.all(a <= da)  # extensive


class TestMaskToLatent:
    def test_all_ones(self):
        m = MaskPlane(np.ones((64, 64), bool), "fg_object")
        out = mask_to_latent(m, 8)
        assert out.shape_hw == (8, 8)
        assert out.bits.all()

    def test_all_zeros(self):
        m = MaskPlane(np.zeros((64, 64), bool), "fg_object")
        assert not mask_to_latent(m, 8).bits.any()

    def test_checkerboard_matches_brute_force(self):
        bits = np.indices((8, 8)).sum(axis=0) % 2 == 0
        big = np.kron(bits, np.ones((2, 2), dtype=bool))  # 2x2 blocks, factor 2
        m = MaskPlane(big, "fg_object")
        out = mask_to_latent(m, 2)

        # brute-force resampler implementing the top-left rule
        expected = np.zeros((8, 8), dtype=bool)
        for i in range(8):
            for j in range(8):
                expected[i, j] = big[i * 2, j * 2]
        assert np.array_equal(out.bits, expected)

    def test_non_divisible_rejected(self):
        with pytest.raises(ValueError, match="divisible"):
            mask_to_latent(MaskPlane(np.ones((10, 10), bool), "fg_object"), 4)

    def test_interior_rule_keeps_only_covered_cells(self):
        bits = np.zeros((16, 16), dtype=bool)
        bits[0:8, 0:8] = True  # one fully covered cell at factor 8
        bits[8, 8] = True  # straddler, not covered
        out = mask_to_latent_interior(MaskPlane(bits, "fg_object"), 8)
        assert out.bits[0, 0] and not out.bits[1, 1]

    def test_interior_fallback_warns_for_tiny_mask(self):
        bits = np.zeros((16, 16), dtype=bool)
        bits[5, 5] = True
        with pytest.warns(RuntimeWarning, match="centroid"):
            out = mask_to_latent_interior(MaskPlane(bits, "fg_object"), 8)
        assert out.bits.sum() == 1 and out.bits[0, 0]

    def test_footprint_expands_cells(self):
        lm = MaskPlane(np.eye(2, dtype=bool), "dilated")
        fp = latent_mask_footprint(lm, 4)
        assert fp.shape_hw == (8, 8)
        assert fp.bits[:4, :4].all() and not fp.bits[:4, 4:].any()


class TestPlacement:
    def test_scaled_size_rounding(self):
        assert Placement(0, 0, 0.5).scaled_size((33, 33)) == (17, 17)  # 16.5 rounds up
        assert Placement(0, 0, 2.0).scaled_size((16, 16)) == (32, 32)

    def test_validate_inside(self):
        Placement(10, 10, 1.0).validate_inside((64, 64), (32, 32))
        with pytest.raises(ValueError, match="does not fit"):
            Placement(40, 40, 1.0).validate_inside((64, 64), (32, 32))
        with pytest.raises(ValueError, match="non-negative"):
            Placement(-1, 0, 1.0).validate_inside((64, 64), (32, 32))

    def test_bad_scale(self):
        with pytest.raises(ValueError):
            Placement(0, 0, 0.0)
        with pytest.raises(ValueError):
            Placement(0, 0, -2.0)


class TestPipelineConfig:
    def test_defaults_match_reference_settings(self):
        cfg = PipelineConfig()
        assert cfg.steps_invert == 10
        assert cfg.steps_denoise == 10
        assert cfg.inject_steps == 5
        assert cfg.lambda_init == 1.0
        assert cfg.lambda_diffusion == 0.1

    def test_inject_bound(self):
        with pytest.raises(ValueError, match="inject_steps"):
            PipelineConfig(inject_steps=11)

    def test_lambda_bounds(self):
        with pytest.raises(ValueError):
            PipelineConfig(lambda_init=1.5)

    def test_roundtrip_dict(self):
        cfg = PipelineConfig(steps_invert=4, steps_denoise=4, inject_steps=2, seed=9)
        assert PipelineConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_field_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            PipelineConfig.from_dict({"nope": 1})


def test_grow_window():
    assert grow_window(3, 5, 20, 8) == (3, 11)
    assert grow_window(15, 18, 20, 8) == (12, 20)
    assert grow_window(2, 12, 20, 8) == (2, 12)
