"""PNG/JPEG loading and saving for images and single-channel masks."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from .core import ImagePlane, MaskPlane


def load_image(path: str | Path) -> ImagePlane:
    """Decode an 8-bit PNG/JPEG to float pixels in [0, 1]."""
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float64) / 255.0
    return ImagePlane(arr)


def load_image_bytes(data: bytes) -> ImagePlane:
    with Image.open(io.BytesIO(data)) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return ImagePlane(arr)


def load_mask(path: str | Path, kind: str) -> MaskPlane:
    """Decode a single-channel PNG; any nonzero value counts as set."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return MaskPlane(arr > 0, kind)


def load_mask_bytes(data: bytes, kind: str) -> MaskPlane:
    with Image.open(io.BytesIO(data)) as im:
        arr = np.asarray(im.convert("L"))
    return MaskPlane(arr > 0, kind)


def to_uint8(img: ImagePlane) -> np.ndarray:
    """Quantize to 8-bit; this is the canonical form golden-file hashes use."""
    return np.clip(np.round(img.pixels * 255.0), 0, 255).astype(np.uint8)


def save_image(img: ImagePlane, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(img)).save(path)


def image_png_bytes(img: ImagePlane) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(to_uint8(img)).save(buf, format="PNG")
    return buf.getvalue()


def save_mask(mask: MaskPlane, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray((mask.bits * np.uint8(255))).save(path)


def mask_png_bytes(mask: MaskPlane) -> bytes:
    buf = io.BytesIO()
    Image.fromarray((mask.bits * np.uint8(255))).save(buf, format="PNG")
    return buf.getvalue()
