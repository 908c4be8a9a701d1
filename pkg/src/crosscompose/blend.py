"""Initial blending: pixel-space paste of the foreground into the background,
then AdaIN on the encoded latent so the pasted region adopts the background's
per-channel color statistics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    ImagePlane,
    LatentGrid,
    MaskPlane,
    PipelineConfig,
    Placement,
    dilate_mask,
    mask_to_latent,
)

ADAIN_EPS = 1e-6


@dataclass(frozen=True)
class BlendResult:
    """Everything the pipeline needs after the initial blend."""

    blended_image: ImagePlane
    z_blend: LatentGrid
    z_bg: LatentGrid
    placed_fg_mask: MaskPlane
    dilated_mask: MaskPlane


def _scale_foreground(fg: ImagePlane, fg_mask: MaskPlane, placement: Placement):
    dims = placement.scaled_size(fg.shape_hw)
    if dims == fg.shape_hw:
        return fg.pixels, fg_mask.bits
    # nearest-neighbor for both so image and mask stay aligned bit-for-bit
    from .core import _nearest_indices  # deterministic index mapping

    ridx = _nearest_indices(fg.shape_hw[0], dims[0])
    cidx = _nearest_indices(fg.shape_hw[1], dims[1])
    return fg.pixels[np.ix_(ridx, cidx)], fg_mask.bits[np.ix_(ridx, cidx)]


def paste_pixels(
    bg: ImagePlane, fg: ImagePlane, fg_mask: MaskPlane, placement: Placement
) -> tuple[ImagePlane, MaskPlane]:
    """Paste the masked foreground into the background frame.

    Returns the pasted image and the placed mask (foreground mask expressed in
    background coordinates). Pixels outside the mask are the background,
    untouched.
    """
    if fg_mask.shape_hw != fg.shape_hw:
        raise ValueError(f"foreground mask {fg_mask.shape_hw} does not pair with foreground {fg.shape_hw}")
    placement.validate_inside(bg.shape_hw, fg.shape_hw)

    scaled_px, scaled_bits = _scale_foreground(fg, fg_mask, placement)
    h, w = scaled_bits.shape
    oy, ox = placement.offset_y, placement.offset_x

    out = bg.pixels.copy()
    window = out[oy : oy + h, ox : ox + w]
    window[scaled_bits] = scaled_px[scaled_bits]

    placed = np.zeros(bg.shape_hw, dtype=bool)
    placed[oy : oy + h, ox : ox + w] = scaled_bits
    return ImagePlane(out), MaskPlane(placed, "fg_object")


def extract_pixels(img: ImagePlane, placement: Placement, fg_shape_hw: tuple[int, int]) -> np.ndarray:
    """Cut the placement window back out; inverse of the paste under the placed mask."""
    h, w = placement.scaled_size(fg_shape_hw)
    oy, ox = placement.offset_y, placement.offset_x
    return img.pixels[oy : oy + h, ox : ox + w].copy()


def adain(x: np.ndarray, y_stats_source: np.ndarray, lam: float, eps: float = ADAIN_EPS) -> np.ndarray:
    """Renormalize region ``x`` toward the per-channel statistics of ``y``.

    Both regions are (C, N) arrays of latent values. The result is the blend
    (1 - lam) * x + lam * x' where x' carries y's mean and std per channel.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y_stats_source, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError(f"regions must be (C, N) with matching C, got {x.shape} and {y.shape}")
    if x.shape[1] == 0 or y.shape[1] == 0:
        raise ValueError("adain regions must be nonempty")
    if not (0.0 <= lam <= 1.0):
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if lam == 0.0:
        return x.copy()
    mu_x = x.mean(axis=1, keepdims=True)
    sigma_x = x.std(axis=1, keepdims=True)
    mu_y = y.mean(axis=1, keepdims=True)
    sigma_y = y.std(axis=1, keepdims=True)
    x_prime = sigma_y * (x - mu_x) / (sigma_x + eps) + mu_y
    return (1.0 - lam) * x + lam * x_prime


def initial_blend(
    bg: ImagePlane,
    fg: ImagePlane,
    fg_mask: MaskPlane,
    placement: Placement,
    cfg: PipelineConfig,
    backbone,
) -> BlendResult:
    """Pixel paste + latent AdaIN, producing the starting latent for inversion.

    With ``cfg.use_init_blend`` off the AdaIN step is skipped and the raw
    pasted-image latent is returned unchanged.
    """
    pasted, placed = paste_pixels(bg, fg, fg_mask, placement)
    dilated = dilate_mask(placed, cfg.dilation_radius_px)

    try:
        z_paste = backbone.encode(pasted)
    except Exception as e:  # noqa: BLE001 - context added, cause chained
        raise RuntimeError("autoencoder encode of the pasted image failed") from e
    try:
        z_bg = backbone.encode(bg)
    except Exception as e:  # noqa: BLE001
        raise RuntimeError("autoencoder encode of the background failed") from e

    z_blend = z_paste
    if cfg.use_init_blend and cfg.lambda_init > 0.0:
        latent_mask = mask_to_latent(placed, z_paste.scale_factor)
        m = latent_mask.bits
        if not m.any():
            pass  # nothing to renormalize
        elif m.all():
            warnings.warn(
                "placed mask covers the whole latent; no unmasked statistics source, AdaIN skipped",
                RuntimeWarning,
                stacklevel=2,
            )
        else:
            region = z_paste.data[:, m]
            stats_src = z_bg.data[:, ~m]
            mixed = adain(region, stats_src, cfg.lambda_init)
            data = z_paste.data.copy()
            data[:, m] = mixed
            z_blend = z_paste.with_data(data)

    return BlendResult(
        blended_image=pasted,
        z_blend=z_blend,
        z_bg=z_bg,
        placed_fg_mask=placed,
        dilated_mask=dilated,
    )
