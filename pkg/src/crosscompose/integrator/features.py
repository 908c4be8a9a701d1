"""Adapter token features and the triples they form for training."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import ImagePlane, _freeze
from ..errors import CapabilityError

FEATURE_SOURCES = ("text", "image_content", "image_style", "integrated", "residual")


@dataclass(frozen=True)
class PromptFeature:
    """A T x D token sequence injected through cross-attention."""

    tokens: np.ndarray
    source: str

    def __post_init__(self):
        tok = np.asarray(self.tokens, dtype=np.float64)
        if tok.ndim != 2:
            raise ValueError(f"tokens must be TxD, got shape {tok.shape}")
        if not np.isfinite(tok).all():
            raise ValueError("tokens contain non-finite values")
        if self.source not in FEATURE_SOURCES:
            raise ValueError(f"unknown feature source {self.source!r}")
        object.__setattr__(self, "tokens", _freeze(tok))

    @property
    def shape(self) -> tuple[int, int]:
        return self.tokens.shape  # type: ignore[return-value]

    def flat(self) -> np.ndarray:
        """Row-major flattening; the layout every model in this package assumes."""
        return self.tokens.reshape(-1)

    def retag(self, source: str) -> "PromptFeature":
        return PromptFeature(self.tokens, source)


@dataclass(frozen=True)
class StyleTriplet:
    """(content, style, stylized) features; the unit the integrator trains on."""

    f_c: PromptFeature
    f_s: PromptFeature
    f_l: PromptFeature

    def __post_init__(self):
        if not (self.f_c.shape == self.f_s.shape == self.f_l.shape):
            raise ValueError(
                f"triplet features must share TxD shape, got {self.f_c.shape}, {self.f_s.shape}, {self.f_l.shape}"
            )


@dataclass
class TripletRecord:
    """A triplet plus provenance and (optionally) the raw stylizer output.

    ``features`` is None when the stylized image could not be encoded (e.g.
    non-finite pixels); such records exist so the filter can reject them with
    an explicit reason instead of them vanishing silently.
    """

    content_id: str
    style_id: str
    stylizer_id: str
    features: StyleTriplet | None = None
    stylized_pixels: np.ndarray | None = None
    content_path: str | None = None
    style_path: str | None = None
    stylized_path: str | None = None
    extra: dict = field(default_factory=dict)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def visualize_integrated_feature(f: PromptFeature, backbone, seed: int) -> ImagePlane:
    """Render an image conditioned only on the given token feature.

    Used to inspect what the integrator produced. Requires a backbone that can
    generate from image-prompt tokens alone.
    """
    generate = getattr(backbone, "generate_from_features", None)
    if generate is None or "image_prompt_generation" not in getattr(backbone, "capabilities", ()):
        raise CapabilityError("backbone does not support image-prompt-only generation")
    return generate(f, seed)
