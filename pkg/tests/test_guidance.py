import numpy as np
import pytest

from crosscompose.core import LatentGrid, MaskPlane, dilate_mask
from crosscompose.guidance import (
    AttentionMaskField,
    GuidanceBundle,
    apply_guidance,
    preserve_background,
    rectified_cross_attention,
    step_adain,
)
from crosscompose.integrator.features import PromptFeature
from util import rect_mask


def dense_attention_oracle(z, tokens, w_q, w_k, w_v):
    """Brute-force scaled dot-product attention, nested loops and all."""
    q = z @ w_q
    k = tokens @ w_k
    v = tokens @ w_v
    d = w_k.shape[1]
    out = np.zeros((z.shape[0], w_v.shape[1]))
    for i in range(z.shape[0]):
        logits = np.array([q[i] @ k[j] / np.sqrt(d) for j in range(k.shape[0])])
        e = np.exp(logits - logits.max())
        p = e / e.sum()
        for j in range(k.shape[0]):
            out[i] += p[j] * v[j]
    return out


def random_instance(rng, n_max=16, t_max=8, d_max=8):
    n = int(rng.integers(1, n_max + 1))
    t = int(rng.integers(1, t_max + 1))
    d_model = int(rng.integers(1, d_max + 1))
    d_key = int(rng.integers(1, d_max + 1))
    d_tok = int(rng.integers(1, d_max + 1))
    z = rng.standard_normal((n, d_model))
    tokens = PromptFeature(rng.standard_normal((t, d_tok)), "integrated")
    w_q = rng.standard_normal((d_model, d_key))
    w_k = rng.standard_normal((d_tok, d_key))
    w_v = rng.standard_normal((d_tok, d_model))
    return z, tokens, (w_q, w_k, w_v)


class TestRectifiedAttention:
    def test_all_ones_mask_matches_dense_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            z, tokens, weights = random_instance(rng)
            mask = np.ones(z.shape[0], dtype=bool)
            got = rectified_cross_attention(z, tokens, weights, mask)
            want = dense_attention_oracle(z, tokens.tokens, *weights)
            assert np.abs(got - want).max() < 1e-6

    def test_all_zeros_mask_gives_zero_matrix(self):
        rng = np.random.default_rng(1)
        z, tokens, weights = random_instance(rng)
        out = rectified_cross_attention(z, tokens, weights, np.zeros(z.shape[0], bool))
        assert np.array_equal(out, np.zeros_like(out))

    def test_hand_softmax_oracle(self):
        # logits row 0 = [0, ln 3] -> softmax [0.25, 0.75]; row 1 = [0, 0] -> [0.5, 0.5]
        # token column 0 drives keys, column 1 drives values [1, 3]
        z = np.eye(2)
        w_q = np.eye(2)
        tokens = PromptFeature(np.array([[0.0, 1.0], [np.sqrt(2.0) * np.log(3.0), 3.0]]), "integrated")
        w_k = np.array([[1.0, 0.0], [0.0, 0.0]])
        w_v = np.array([[0.0], [1.0]])
        out = rectified_cross_attention(z, tokens, (w_q, w_k, w_v), np.ones(2, bool))
        assert np.allclose(out, [[0.25 * 1 + 0.75 * 3], [0.5 * 1 + 0.5 * 3]], atol=1e-12)

    def test_mixed_mask_rows(self):
        rng = np.random.default_rng(2)
        z, tokens, weights = random_instance(rng)
        mask = rng.uniform(size=z.shape[0]) < 0.5
        out = rectified_cross_attention(z, tokens, weights, mask)
        dense = dense_attention_oracle(z, tokens.tokens, *weights)
        assert np.array_equal(out[~mask], np.zeros_like(out[~mask]))
        assert np.abs(out[mask] - dense[mask]).max() < 1e-6

    def test_non_finite_logits_error_with_context(self):
        z = np.full((2, 2), 1e300)
        tokens = PromptFeature(np.full((2, 2), 1e300), "integrated")
        w = np.eye(2)
        with pytest.raises(FloatingPointError, match="step 3"):
            rectified_cross_attention(z, tokens, (w, w, w), np.ones(2, bool), context="step 3")

    def test_shape_mismatches(self):
        rng = np.random.default_rng(3)
        z = rng.standard_normal((4, 3))
        tokens = PromptFeature(rng.standard_normal((2, 5)), "integrated")
        w_q = rng.standard_normal((3, 4))
        w_k = rng.standard_normal((5, 4))
        w_v = rng.standard_normal((5, 3))
        with pytest.raises(ValueError, match="mask rows"):
            rectified_cross_attention(z, tokens, (w_q, w_k, w_v), np.ones(3, bool))
        with pytest.raises(ValueError, match="W_q input"):
            rectified_cross_attention(rng.standard_normal((4, 2)), tokens, (w_q, w_k, w_v), np.ones(4, bool))


class TestApplyGuidance:
    def _bundle(self, mask_px, f_int=None, f_text=None):
        field = AttentionMaskField(mask_px, 4)
        return GuidanceBundle(f_integrate=f_int, mask_field=field, lambda_diffusion=0.1, inject_steps=5, f_text=f_text)

    def _weights(self, rng, d_model=6, d_tok=4, d_key=3):
        return {
            kind: (
                rng.standard_normal((d_model, d_key)),
                rng.standard_normal((d_tok, d_key)),
                rng.standard_normal((d_tok, d_model)),
            )
            for kind in ("image", "text")
        }

    def test_no_features_passthrough(self):
        rng = np.random.default_rng(4)
        mask = dilate_mask(rect_mask(16, 16, 4, 4, 12, 12), 2)
        z = rng.standard_normal((16, 6))
        out = apply_guidance(z, self._bundle(mask), self._weights(rng), (4, 4))
        assert np.array_equal(out, z)

    def test_out_of_mask_cells_bit_identical(self):
        rng = np.random.default_rng(5)
        mask = dilate_mask(rect_mask(16, 16, 0, 0, 9, 9), 1)
        f_int = PromptFeature(rng.standard_normal((2, 4)), "integrated")
        f_text = PromptFeature(rng.standard_normal((2, 4)), "text")
        bundle = self._bundle(mask, f_int, f_text)
        z = rng.standard_normal((16, 6))
        rows = bundle.mask_field.query_rows((4, 4))
        out = apply_guidance(z, bundle, self._weights(rng), (4, 4))
        assert np.array_equal(out[~rows], z[~rows])
        assert not np.array_equal(out[rows], z[rows])

    def test_single_token_analytic(self):
        # one token: softmax over one key is 1, so each in-mask row gains V exactly
        rng = np.random.default_rng(6)
        mask = dilate_mask(rect_mask(16, 16, 0, 0, 16, 16), 0)  # all in-mask
        f_int = PromptFeature(rng.standard_normal((1, 4)), "integrated")
        f_text = PromptFeature(rng.standard_normal((1, 4)), "text")
        weights = self._weights(rng)
        bundle = self._bundle(mask, f_int, f_text)
        z = rng.standard_normal((16, 6))
        out = apply_guidance(z, bundle, weights, (4, 4))
        v_int = f_int.tokens @ weights["image"][2]
        v_text = f_text.tokens @ weights["text"][2]
        assert np.allclose(out, z + v_int + v_text, atol=1e-9)

    def test_image_branch_disabled_contributes_nothing(self):
        rng = np.random.default_rng(7)
        mask = dilate_mask(rect_mask(16, 16, 0, 0, 9, 9), 1)
        f_text = PromptFeature(rng.standard_normal((2, 4)), "text")
        weights = self._weights(rng)
        z = rng.standard_normal((16, 6))
        text_only = apply_guidance(z, self._bundle(mask, None, f_text), weights, (4, 4))
        f_int = PromptFeature(rng.standard_normal((2, 4)), "integrated")
        both = apply_guidance(z, self._bundle(mask, f_int, f_text), weights, (4, 4))
        assert not np.array_equal(text_only, both)


class TestAttentionMaskField:
    def test_requires_dilated_kind(self):
        with pytest.raises(ValueError, match="dilated"):
            AttentionMaskField(rect_mask(16, 16, 0, 0, 8, 8), 4)

    def test_additive_form(self):
        mask = dilate_mask(rect_mask(16, 16, 0, 0, 8, 8), 0)
        field = AttentionMaskField(mask, 4)
        add = field.additive((4, 4))
        bits = field.resolution_mask((4, 4))
        assert np.all(add[bits] == 0.0)
        assert np.all(np.isneginf(add[~bits]))

    def test_nonempty_base_yields_nonempty_field(self):
        bits = np.zeros((32, 32), dtype=bool)
        bits[9, 9] = True
        mask = MaskPlane(bits, "dilated")
        field = AttentionMaskField(mask, 8)
        with pytest.warns(RuntimeWarning):
            rows = field.query_rows((4, 4))
        assert rows.any()

    def test_non_dividing_resolution_rejected(self):
        mask = dilate_mask(rect_mask(16, 16, 0, 0, 8, 8), 0)
        with pytest.raises(ValueError, match="divide"):
            AttentionMaskField(mask, 4).resolution_mask((5, 5))


class TestStepAdain:
    def test_lambda_zero_unchanged(self):
        rng = np.random.default_rng(8)
        z = LatentGrid(rng.standard_normal((3, 4, 4)), 8)
        mask = np.zeros((4, 4), bool)
        mask[:2] = True
        out = step_adain(z, mask, 0.0)
        assert np.array_equal(out.data, z.data)

    def test_hand_moments_oracle_2x2(self):
        data = np.array([[[0.0, 10.0], [2.0, 14.0]]])  # masked column [0,2], unmasked [10,14]
        z = LatentGrid(data, 8)
        mask = np.array([[True, False], [True, False]])
        out = step_adain(z, mask, 1.0)
        assert np.abs(out.data[0][:, 0] - np.array([10.0, 14.0])).max() < 1e-5
        assert np.array_equal(out.data[0][:, 1], data[0][:, 1])

    def test_matched_stats_fixed_point(self):
        rng = np.random.default_rng(9)
        vals = rng.standard_normal((2, 32))
        data = np.zeros((2, 8, 8))
        data[:, :, :4] = vals.reshape(2, 8, 4)
        data[:, :, 4:] = vals[:, rng.permutation(32)].reshape(2, 8, 4)
        z = LatentGrid(data, 8)
        mask = np.zeros((8, 8), bool)
        mask[:, :4] = True
        out = step_adain(z, mask, 1.0)
        assert np.abs(out.data - z.data).max() < 1e-5

    def test_unmasked_untouched(self):
        rng = np.random.default_rng(10)
        z = LatentGrid(rng.standard_normal((3, 6, 6)), 8)
        mask = np.zeros((6, 6), bool)
        mask[1:3, 1:3] = True
        out = step_adain(z, mask, 0.7)
        assert np.array_equal(out.data[:, ~mask], z.data[:, ~mask])

    def test_degenerate_masks_warn_and_skip(self):
        rng = np.random.default_rng(11)
        z = LatentGrid(rng.standard_normal((2, 4, 4)), 8)
        with pytest.warns(RuntimeWarning, match="skipped"):
            out = step_adain(z, np.ones((4, 4), bool), 1.0)
        assert np.array_equal(out.data, z.data)
        with pytest.warns(RuntimeWarning, match="skipped"):
            out = step_adain(z, np.zeros((4, 4), bool), 1.0)
        assert np.array_equal(out.data, z.data)

    def test_moments_match_for_large_regions(self):
        rng = np.random.default_rng(12)
        z = LatentGrid(rng.standard_normal((3, 8, 8)) * 2 + 1, 8)
        mask = np.zeros((8, 8), bool)
        mask[:4] = True  # 32 cells each side
        out = step_adain(z, mask, 1.0)
        for c in range(3):
            masked = out.data[c][mask]
            unmasked = z.data[c][~mask]
            assert abs(masked.mean() - unmasked.mean()) < 1e-5
            assert abs(masked.std() - unmasked.std()) < 1e-5


class TestPreserveBackground:
    def _pair(self, seed):
        rng = np.random.default_rng(seed)
        return LatentGrid(rng.standard_normal((2, 4, 4)), 8), LatentGrid(rng.standard_normal((2, 4, 4)), 8)

    def test_empty_mask_returns_trajectory(self):
        z, traj = self._pair(13)
        out = preserve_background(z, traj, np.zeros((4, 4), bool))
        assert np.array_equal(out.data, traj.data)

    def test_full_mask_returns_current(self):
        z, traj = self._pair(14)
        out = preserve_background(z, traj, np.ones((4, 4), bool))
        assert np.array_equal(out.data, z.data)

    def test_single_cell_survives_exhaustive(self):
        z, traj = self._pair(15)
        for i in range(4):
            for j in range(4):
                mask = np.zeros((4, 4), bool)
                mask[i, j] = True
                out = preserve_background(z, traj, mask)
                for ii in range(4):
                    for jj in range(4):
                        want = z.data[:, ii, jj] if (ii, jj) == (i, j) else traj.data[:, ii, jj]
                        assert np.array_equal(out.data[:, ii, jj], want)

    def test_idempotent(self):
        z, traj = self._pair(16)
        mask = np.zeros((4, 4), bool)
        mask[1:3, 1:3] = True
        once = preserve_background(z, traj, mask)
        twice = preserve_background(once, traj, mask)
        assert np.array_equal(once.data, twice.data)

    def test_shape_mismatch_rejected(self):
        z, _ = self._pair(17)
        other = LatentGrid(np.zeros((2, 5, 5)), 8)
        with pytest.raises(ValueError, match="differ"):
            preserve_background(z, other, np.zeros((4, 4), bool))
