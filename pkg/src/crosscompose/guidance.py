"""Step-time manipulations inside reconstruction: mask-local cross-attention,
per-step AdaIN toward the unmasked region, and background latent preservation.

All three touch only the cells selected by the dilated-mask field; everything
outside stays bit-identical, which is what keeps the background stable across
the stochastic denoising steps.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .blend import adain
from .core import LatentGrid, MaskPlane, mask_to_latent_interior
from .integrator.features import PromptFeature


@dataclass(frozen=True)
class AttentionMaskField:
    """Per-resolution masks derived from the image-space dilated mask.

    Cells are selected with the interior rule (set only when the whole pixel
    block is inside the dilated mask), so any pixel outside the dilated mask
    belongs to an untouched cell. The additive form (0 inside, -inf outside)
    is available for inspection; the attention op consumes the boolean rows.
    """

    base: MaskPlane
    scale_factor: int

    def __post_init__(self):
        if self.base.kind != "dilated":
            raise ValueError(f"attention masks derive from the dilated mask, got kind {self.base.kind!r}")

    def resolution_mask(self, hw: tuple[int, int]) -> np.ndarray:
        h, w = hw
        bh, bw = self.base.shape_hw
        if bh % h or bw % w:
            raise ValueError(f"resolution {h}x{w} does not divide base mask {bh}x{bw}")
        fy, fx = bh // h, bw // w
        if fy != fx:
            raise ValueError(f"anisotropic downsample {fy}x{fx} not supported")
        if self.base.is_empty:
            return np.zeros((h, w), dtype=bool)
        return mask_to_latent_interior(self.base, fy).bits

    def query_rows(self, hw: tuple[int, int]) -> np.ndarray:
        """Row-major flattened per-query mask for attention at one resolution."""
        return self.resolution_mask(hw).reshape(-1)

    def additive(self, hw: tuple[int, int]) -> np.ndarray:
        bits = self.resolution_mask(hw)
        out = np.where(bits, 0.0, -np.inf)
        return out


@dataclass(frozen=True)
class GuidanceBundle:
    """Everything reconstruction needs to steer the masked region."""

    f_integrate: PromptFeature | None
    mask_field: AttentionMaskField
    lambda_diffusion: float
    inject_steps: int
    f_text: PromptFeature | None = None

    @property
    def has_features(self) -> bool:
        return self.f_integrate is not None or self.f_text is not None


def rectified_cross_attention(
    queries: np.ndarray,
    tokens: PromptFeature,
    weights: tuple[np.ndarray, np.ndarray, np.ndarray],
    mask_row: np.ndarray,
    context: str = "",
) -> np.ndarray:
    """Scaled dot-product attention over prompt tokens, zeroed outside the mask.

    A fully-masked query row would put -inf in every logit, which has no
    defined softmax; those rows are returned as exact zeros instead, so adding
    the output leaves out-of-mask features untouched.
    """
    w_q, w_k, w_v = weights
    z = np.asarray(queries, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError(f"queries must be (N, d), got {z.shape}")
    mask_row = np.asarray(mask_row, dtype=bool).reshape(-1)
    if mask_row.shape[0] != z.shape[0]:
        raise ValueError(f"mask rows ({mask_row.shape[0]}) must align with queries ({z.shape[0]})")
    if z.shape[1] != w_q.shape[0]:
        raise ValueError(f"query width {z.shape[1]} does not match W_q input {w_q.shape[0]}")
    if tokens.shape[1] != w_k.shape[0] or tokens.shape[1] != w_v.shape[0]:
        raise ValueError(f"token width {tokens.shape[1]} does not match projection inputs")
    if w_q.shape[1] != w_k.shape[1]:
        raise ValueError("W_q and W_k must project to the same key width")

    out = np.zeros((z.shape[0], w_v.shape[1]))
    if not mask_row.any():
        return out

    q = z[mask_row] @ w_q
    k = tokens.tokens @ w_k
    v = tokens.tokens @ w_v
    d = w_k.shape[1]
    logits = (q @ k.T) / np.sqrt(d)
    if not np.isfinite(logits).all():
        where = f" ({context})" if context else ""
        raise FloatingPointError(f"non-finite attention logits{where}")
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    out[mask_row] = p @ v
    return out


def apply_guidance(
    queries: np.ndarray,
    bundle: GuidanceBundle,
    weights: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]],
    hw: tuple[int, int],
    context: str = "",
) -> np.ndarray:
    """Add the rectified attention outputs for the integrated and text prompts.

    Absent features contribute nothing, so with both missing (or the image
    branch ablated away) the latent features pass through unchanged.
    """
    mask_row = bundle.mask_field.query_rows(hw)
    out = np.asarray(queries, dtype=np.float64).copy()
    if bundle.f_integrate is not None:
        out += rectified_cross_attention(queries, bundle.f_integrate, weights["image"], mask_row, context)
    if bundle.f_text is not None:
        out += rectified_cross_attention(queries, bundle.f_text, weights["text"], mask_row, context)
    return out


def step_adain(z: LatentGrid, mask_bits: np.ndarray, lam: float) -> LatentGrid:
    """Pull the masked region's per-channel statistics toward the unmasked region's.

    Needs both a masked and an unmasked population; otherwise there is no
    statistics source and the step is skipped with a warning.
    """
    m = np.asarray(mask_bits, dtype=bool)
    if m.shape != z.spatial_hw:
        raise ValueError(f"mask {m.shape} does not match latent {z.spatial_hw}")
    if not m.any() or m.all():
        warnings.warn("mask has no masked/unmasked split; AdaIN step skipped", RuntimeWarning, stacklevel=2)
        return z
    if lam == 0.0:
        return z
    data = z.data.copy()
    data[:, m] = adain(z.data[:, m], z.data[:, ~m], lam)
    return z.with_data(data)


def preserve_background(z_t: LatentGrid, z_t_inverted: LatentGrid, mask_bits: np.ndarray) -> LatentGrid:
    """Replace every cell outside the mask with the stored trajectory cell."""
    if z_t.shape_chw != z_t_inverted.shape_chw:
        raise ValueError(f"latent shapes differ: {z_t.shape_chw} vs {z_t_inverted.shape_chw}")
    m = np.asarray(mask_bits, dtype=bool)
    if m.shape != z_t.spatial_hw:
        raise ValueError(f"mask {m.shape} does not match latent {z_t.spatial_hw}")
    merged = np.where(m[None, :, :], z_t.data, z_t_inverted.data)
    return z_t.with_data(merged)
