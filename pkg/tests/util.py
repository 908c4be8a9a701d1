"""Builders shared across test modules."""

from __future__ import annotations

import numpy as np

from crosscompose import ImagePlane, MaskPlane, PipelineConfig, Placement
from crosscompose.integrator.features import PromptFeature, StyleTriplet
from crosscompose.pipeline import CompositionJob


def random_image(h: int, w: int, seed: int) -> ImagePlane:
    return ImagePlane(np.random.default_rng(seed).uniform(size=(h, w, 3)))


def rect_mask(h: int, w: int, r0: int, c0: int, r1: int, c1: int, kind: str = "fg_object") -> MaskPlane:
    bits = np.zeros((h, w), dtype=bool)
    bits[r0:r1, c0:c1] = True
    return MaskPlane(bits, kind)


def standard_job(seed: int = 3, cfg: PipelineConfig | None = None, prompt: str | None = None) -> CompositionJob:
    """96x96 background, 32x32 foreground with a centered 16x16 object."""
    bg = random_image(96, 96, seed)
    fg = random_image(32, 32, seed + 1)
    fg_mask = rect_mask(32, 32, 8, 8, 24, 24)
    return CompositionJob(
        bg=bg,
        fg=fg,
        fg_mask=fg_mask,
        placement=Placement(offset_x=30, offset_y=30, scale=1.0),
        cfg=cfg or PipelineConfig(seed=seed),
        prompt=prompt,
    )


def linear_world_triplets(
    n: int, seed: int, t: int = 4, d: int = 64, w_content: float = 0.7, noise: float = 0.0
) -> list[StyleTriplet]:
    """Synthetic world where the stylized feature is a fixed mix of content and style."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        fc = rng.standard_normal((t, d))
        fs = rng.standard_normal((t, d))
        fl = w_content * fc + (1.0 - w_content) * fs
        if noise:
            fl = fl + noise * rng.standard_normal((t, d))
        out.append(
            StyleTriplet(
                PromptFeature(fc, "image_content"),
                PromptFeature(fs, "image_style"),
                PromptFeature(fl, "integrated"),
            )
        )
    return out
