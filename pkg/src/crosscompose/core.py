"""Shared value types and geometry rules: pixel planes, binary masks, latent
grids, placement, resizing, and mask morphology.

Everything here is a pure function on immutable values. Arrays stored inside
the dataclasses are marked read-only so instances can be shared freely across
workers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

MASK_KINDS = ("bg_box", "fg_object", "dilated")

MIN_IMAGE_EDGE = 8


class DegenerateImageError(ValueError):
    """Raised when a resize would produce an image smaller than the backbone can encode."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ImagePlane:
    """An sRGB image as an H x W x 3 float array with values in [0, 1]."""

    pixels: np.ndarray
    colorspace: str = "srgb"

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"image must be HxWx3, got shape {px.shape}")
        if px.shape[0] < MIN_IMAGE_EDGE or px.shape[1] < MIN_IMAGE_EDGE:
            raise ValueError(f"image must be at least {MIN_IMAGE_EDGE}px per side, got {px.shape[:2]}")
        if not np.isfinite(px).all():
            raise ValueError("image contains non-finite values")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        if self.colorspace != "srgb":
            raise ValueError(f"unsupported colorspace {self.colorspace!r}")
        object.__setattr__(self, "pixels", _freeze(px))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape_hw(self) -> tuple[int, int]:
        return self.pixels.shape[0], self.pixels.shape[1]


@dataclass(frozen=True)
class MaskPlane:
    """A binary H x W mask. ``kind`` records what the mask delimits."""

    bits: np.ndarray
    kind: str

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise ValueError(f"mask must be HxW, got shape {bits.shape}")
        bits = bits.astype(bool)
        if self.kind not in MASK_KINDS:
            raise ValueError(f"unknown mask kind {self.kind!r}, expected one of {MASK_KINDS}")
        if self.kind == "bg_box":
            _require_filled_rectangle(bits)
        object.__setattr__(self, "bits", _freeze(bits))

    @property
    def shape_hw(self) -> tuple[int, int]:
        return self.bits.shape[0], self.bits.shape[1]

    @property
    def is_empty(self) -> bool:
        return not self.bits.any()

    def count(self) -> int:
        return int(self.bits.sum())

    def bbox(self) -> tuple[int, int, int, int]:
        """Bounding box (row0, col0, row1, col1), end-exclusive. Mask must be nonempty."""
        if self.is_empty:
            raise ValueError("cannot take the bounding box of an empty mask")
        rows = np.flatnonzero(self.bits.any(axis=1))
        cols = np.flatnonzero(self.bits.any(axis=0))
        return int(rows[0]), int(cols[0]), int(rows[-1]) + 1, int(cols[-1]) + 1


def _require_filled_rectangle(bits: np.ndarray) -> None:
    if not bits.any():
        raise ValueError("bg_box mask must be a nonempty filled rectangle")
    rows = np.flatnonzero(bits.any(axis=1))
    cols = np.flatnonzero(bits.any(axis=0))
    r0, r1 = int(rows[0]), int(rows[-1]) + 1
    c0, c1 = int(cols[0]), int(cols[-1]) + 1
    if not bits[r0:r1, c0:c1].all() or int(bits.sum()) != (r1 - r0) * (c1 - c0):
        raise ValueError("bg_box mask must be an axis-aligned filled rectangle")


@dataclass(frozen=True)
class Placement:
    """Where and at what scale the foreground lands in the background frame."""

    offset_x: int
    offset_y: int
    scale: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"placement scale must be a positive finite number, got {self.scale}")

    def scaled_size(self, fg_shape_hw: tuple[int, int]) -> tuple[int, int]:
        """Foreground footprint (H, W) after scaling, half-up rounding."""
        h = max(1, int(np.floor(fg_shape_hw[0] * self.scale + 0.5)))
        w = max(1, int(np.floor(fg_shape_hw[1] * self.scale + 0.5)))
        return h, w

    def validate_inside(self, bg_shape_hw: tuple[int, int], fg_shape_hw: tuple[int, int]) -> None:
        h, w = self.scaled_size(fg_shape_hw)
        if self.offset_x < 0 or self.offset_y < 0:
            raise ValueError(f"placement offsets must be non-negative, got ({self.offset_x}, {self.offset_y})")
        if self.offset_y + h > bg_shape_hw[0] or self.offset_x + w > bg_shape_hw[1]:
            raise ValueError(
                f"scaled foreground {h}x{w} at ({self.offset_x}, {self.offset_y}) "
                f"does not fit inside background {bg_shape_hw[0]}x{bg_shape_hw[1]}"
            )


@dataclass(frozen=True)
class LatentGrid:
    """A C x h x w latent tensor plus the image-to-latent resolution ratio."""

    data: np.ndarray
    scale_factor: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError(f"latent must be Cxhxw, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise ValueError("latent contains non-finite values")
        if int(self.scale_factor) < 1:
            raise ValueError(f"scale_factor must be >= 1, got {self.scale_factor}")
        object.__setattr__(self, "scale_factor", int(self.scale_factor))
        object.__setattr__(self, "data", _freeze(data))

    @property
    def shape_chw(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def spatial_hw(self) -> tuple[int, int]:
        return self.data.shape[1], self.data.shape[2]

    def with_data(self, data: np.ndarray) -> "LatentGrid":
        return LatentGrid(data, self.scale_factor)


@dataclass(frozen=True)
class PipelineConfig:
    """All knobs of one composition run.

    Defaults follow the reference settings: 10 inversion and 10 denoising
    steps, guidance injected during the first 5 steps, AdaIN blend ratio 1.0
    at the initial blend and 0.1 inside the diffusion loop.
    """

    steps_invert: int = 10
    steps_denoise: int = 10
    inject_steps: int = 5
    lambda_init: float = 1.0
    lambda_diffusion: float = 0.1
    dilation_radius_px: int = 15
    seed: int = 0
    use_image_clip: bool = True
    use_init_blend: bool = True
    use_inversion: bool = True
    full_diffusion: bool = False

    def __post_init__(self):
        if self.steps_invert < 1 or self.steps_denoise < 1:
            raise ValueError("step counts must be >= 1")
        if self.inject_steps < 0 or self.inject_steps > self.steps_denoise:
            raise ValueError(
                f"inject_steps must lie in [0, steps_denoise], got {self.inject_steps} vs {self.steps_denoise}"
            )
        for name in ("lambda_init", "lambda_diffusion"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.dilation_radius_px < 0:
            raise ValueError(f"dilation radius must be >= 0, got {self.dilation_radius_px}")

    def to_dict(self) -> dict:
        return {
            "steps_invert": self.steps_invert,
            "steps_denoise": self.steps_denoise,
            "inject_steps": self.inject_steps,
            "lambda_init": self.lambda_init,
            "lambda_diffusion": self.lambda_diffusion,
            "dilation_radius_px": self.dilation_radius_px,
            "seed": self.seed,
            "use_image_clip": self.use_image_clip,
            "use_init_blend": self.use_init_blend,
            "use_inversion": self.use_inversion,
            "full_diffusion": self.full_diffusion,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**known)


# ---------------------------------------------------------------------------
# Resizing


def round_to_multiple(x: float, multiple: int) -> int:
    """Round to the nearest multiple, ties rounding up."""
    return int(np.floor(x / multiple + 0.5)) * multiple


def longest_edge_dims(shape_hw: tuple[int, int], target: int, multiple: int) -> tuple[int, int]:
    """Output dims for a longest-edge resize where both dims snap to ``multiple``."""
    if multiple < 1:
        raise ValueError(f"multiple must be >= 1, got {multiple}")
    if target < multiple:
        raise ValueError(f"target ({target}) must be >= multiple ({multiple})")
    h, w = shape_hw
    long_edge = max(h, w)
    scale = target / long_edge
    new_h = round_to_multiple(h * scale, multiple)
    new_w = round_to_multiple(w * scale, multiple)
    if new_h < multiple or new_w < multiple:
        raise DegenerateImageError(
            f"resize of {h}x{w} to longest edge {target} collapses a side below {multiple}px"
        )
    return new_h, new_w


def _bilinear_resample(arr: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Center-aligned bilinear resample of an HxWxC array. Deterministic numpy math."""
    h, w = arr.shape[:2]
    oh, ow = out_hw
    ys = (np.arange(oh) + 0.5) * (h / oh) - 0.5
    xs = (np.arange(ow) + 0.5) * (w / ow) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    top = arr[y0][:, x0] * (1 - wx) + arr[y0][:, x1] * wx
    bot = arr[y1][:, x0] * (1 - wx) + arr[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def _nearest_indices(n_src: int, n_dst: int) -> np.ndarray:
    return np.minimum((np.floor((np.arange(n_dst) + 0.5) * (n_src / n_dst))).astype(int), n_src - 1)


def resize_longest_edge(img: ImagePlane, target: int, multiple: int) -> ImagePlane:
    """Bilinear resize so the longest edge hits ``target`` with both dims multiples of ``multiple``."""
    dims = longest_edge_dims(img.shape_hw, target, multiple)
    if dims == img.shape_hw:
        return img
    out = _bilinear_resample(img.pixels, dims)
    return ImagePlane(np.clip(out, 0.0, 1.0))


def resize_image_to(img: ImagePlane, dims: tuple[int, int]) -> ImagePlane:
    if dims == img.shape_hw:
        return img
    return ImagePlane(np.clip(_bilinear_resample(img.pixels, dims), 0.0, 1.0))


def resize_mask_to(mask: MaskPlane, dims: tuple[int, int]) -> MaskPlane:
    """Companion nearest-neighbor resize so a mask tracks its image exactly."""
    if dims == mask.shape_hw:
        return mask
    ridx = _nearest_indices(mask.shape_hw[0], dims[0])
    cidx = _nearest_indices(mask.shape_hw[1], dims[1])
    return MaskPlane(mask.bits[np.ix_(ridx, cidx)], mask.kind)


# ---------------------------------------------------------------------------
# Mask morphology and resolution changes


def disk_footprint(radius_px: int) -> np.ndarray:
    """Disk structuring element: offsets with dy^2 + dx^2 <= r^2."""
    if radius_px < 0:
        raise ValueError(f"radius must be >= 0, got {radius_px}")
    r = radius_px
    dy, dx = np.mgrid[-r : r + 1, -r : r + 1]
    return (dy * dy + dx * dx) <= r * r


def dilate_mask(m: MaskPlane, radius_px: int) -> MaskPlane:
    """Morphological dilation with a disk element; grows the guidance band around the object."""
    if m.kind != "fg_object":
        raise ValueError(f"dilation expects a placed fg_object mask, got kind {m.kind!r}")
    if radius_px < 0:
        raise ValueError(f"dilation radius must be >= 0, got {radius_px}")
    if radius_px == 0 or m.is_empty:
        return MaskPlane(m.bits, "dilated")
    out = ndimage.binary_dilation(m.bits, structure=disk_footprint(radius_px))
    return MaskPlane(out, "dilated")


def mask_to_latent(m: MaskPlane, scale_factor: int) -> MaskPlane:
    """Downsample a pixel mask to latent resolution.

    Deterministic rule: a latent cell is set iff the top-left pixel of its
    source block is set.
    """
    h, w = m.shape_hw
    if scale_factor < 1:
        raise ValueError(f"scale_factor must be >= 1, got {scale_factor}")
    if h % scale_factor or w % scale_factor:
        raise ValueError(f"mask dims {h}x{w} are not divisible by scale factor {scale_factor}")
    return MaskPlane(m.bits[::scale_factor, ::scale_factor], m.kind)


def mask_to_latent_interior(m: MaskPlane, scale_factor: int) -> MaskPlane:
    """Downsample keeping only fully-covered cells (set iff every source pixel is set).

    This is the conservative rule the diffusion loop uses for guidance
    targeting and background preservation: a cell may be altered only when its
    whole pixel block sits inside the mask, so every pixel outside the mask
    lives in a preserved cell. Falls back to the single cell under the mask
    centroid when no cell is fully covered, so a nonempty mask always yields a
    nonempty field.
    """
    h, w = m.shape_hw
    if scale_factor < 1:
        raise ValueError(f"scale_factor must be >= 1, got {scale_factor}")
    if h % scale_factor or w % scale_factor:
        raise ValueError(f"mask dims {h}x{w} are not divisible by scale factor {scale_factor}")
    f = scale_factor
    blocks = m.bits.reshape(h // f, f, w // f, f)
    interior = blocks.all(axis=(1, 3))
    if not interior.any() and m.bits.any():
        ys, xs = np.nonzero(m.bits)
        cy = int(np.floor(ys.mean())) // f
        cx = int(np.floor(xs.mean())) // f
        interior = interior.copy()
        interior[cy, cx] = True
        warnings.warn(
            "mask has no fully-covered latent cell; falling back to its centroid cell",
            RuntimeWarning,
            stacklevel=2,
        )
    return MaskPlane(interior, m.kind)


def latent_mask_footprint(latent_mask: MaskPlane, scale_factor: int) -> MaskPlane:
    """Pixel-resolution footprint of a latent mask (each cell expands to its block)."""
    bits = np.kron(latent_mask.bits, np.ones((scale_factor, scale_factor), dtype=bool))
    return MaskPlane(bits, latent_mask.kind)


def scale_mask_nearest(m: MaskPlane, dims: tuple[int, int]) -> MaskPlane:
    """Nearest-neighbor rescale used when a Placement scales the foreground."""
    return resize_mask_to(m, dims)


def grow_window(lo: int, hi: int, size: int, min_len: int) -> tuple[int, int]:
    """Expand [lo, hi) to at least ``min_len`` while staying inside [0, size)."""
    if hi - lo >= min_len:
        return lo, hi
    hi = min(size, lo + min_len)
    lo = max(0, hi - min_len)
    return lo, hi
