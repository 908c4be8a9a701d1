"""Diffusion backbone abstraction.

The pipeline only ever talks to a handle exposing encode/decode, paired
invert/denoise steps, feature extraction, and per-layer cross-attention
projection weights. Two bindings ship here:

* ``ToyBackbone`` - a fully deterministic, exactly invertible stand-in used
  for desk-scale verification: the autoencoder is a lossless space-to-depth
  packing, the "denoiser" is a fixed orthogonal channel mixing plus
  schedule-scaled seeded noise, and the feature encoder projects image
  statistics to adapter tokens.
* ``SdxlBackbone`` - the documented adapter contract for a real SDXL +
  image-prompt-adapter binding; it reports itself unavailable unless weights
  and runtime are configured.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .core import ImagePlane, LatentGrid
from .errors import BackboneUnavailableError
from .integrator.features import PromptFeature


def _stream_id(tag: str) -> int:
    return int.from_bytes(hashlib.sha256(tag.encode()).digest()[:8], "little")


def _rng(seed: int, tag: str, index: int = 0):
    return np.random.default_rng([seed % (2**63), _stream_id(tag), index])


@dataclass(frozen=True)
class BackboneProfile:
    name: str
    scale_factor: int
    latent_channels: int
    token_count: int
    token_dim: int
    key_width: int
    train_timesteps: int
    base_sigma: float
    size_multiple: int
    resize_target: int | None
    rng_key: int


TOY_PROFILE = BackboneProfile(
    name="toy",
    scale_factor=8,
    latent_channels=192,  # 3 * 8 * 8 packed channels, lossless
    token_count=4,
    token_dim=64,
    key_width=32,
    train_timesteps=1000,
    base_sigma=0.25,
    size_multiple=8,
    resize_target=None,
    rng_key=7,
)

SDXL_PROFILE = BackboneProfile(
    name="sdxl",
    scale_factor=8,
    latent_channels=4,
    token_count=4,
    token_dim=2048,
    key_width=64,
    train_timesteps=1000,
    base_sigma=1.0,
    size_multiple=64,
    resize_target=1024,
    rng_key=1,
)


@dataclass(frozen=True)
class Schedule:
    """Discrete timesteps walked during inversion/denoising plus their noise scale."""

    timestep_ids: np.ndarray  # (steps,), ascending
    sigmas: np.ndarray  # (steps,)

    @property
    def steps(self) -> int:
        return len(self.timestep_ids)


@runtime_checkable
class BackboneHandle(Protocol):
    """Adapter contract every backbone binding satisfies.

    ``invert_step`` and ``denoise_step`` advance one scheduler level given
    (latent, schedule, level index, seed, conditioning); ``denoise_step``
    additionally accepts a guidance hook called at each cross-attention site
    with (flattened query features, layer id, spatial resolution).
    """

    profile: BackboneProfile
    capabilities: frozenset[str]

    def encode(self, img: ImagePlane) -> LatentGrid: ...

    def decode(self, z: LatentGrid) -> ImagePlane: ...

    def make_schedule(self, steps: int) -> Schedule: ...

    def invert_step(self, z: LatentGrid, schedule: Schedule, k: int, seed: int, conditioning=None) -> LatentGrid: ...

    def denoise_step(
        self, z: LatentGrid, schedule: Schedule, k: int, seed: int, conditioning=None, guidance_hook=None
    ) -> LatentGrid: ...

    def forward_noise_step(self, z: LatentGrid, schedule: Schedule, k: int, seed: int) -> LatentGrid: ...

    def initial_noise(self, hw_latent: tuple[int, int], seed: int) -> LatentGrid: ...

    def text_features(self, prompt: str) -> PromptFeature: ...

    def image_features(self, img: ImagePlane) -> PromptFeature: ...

    def exceptional_prompt(self) -> PromptFeature: ...

    def cross_attention_layers(self) -> tuple[str, ...]: ...

    def attention_weights(self, layer: str) -> dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]: ...


class ToyBackbone:
    """Deterministic, exactly invertible backbone for tests and demos."""

    def __init__(self, profile: BackboneProfile = TOY_PROFILE):
        if profile.latent_channels != 3 * profile.scale_factor**2:
            raise ValueError("toy backbone requires lossless channel packing (C = 3 * f^2)")
        self.profile = profile
        self.capabilities = frozenset(
            {
                "encode",
                "decode",
                "denoise_step",
                "invert_step",
                "text_features",
                "image_features",
                "forward_noise",
                "image_prompt_generation",
            }
        )
        c = profile.latent_channels
        rng = _rng(profile.rng_key, "toy-mixing")
        q, r = np.linalg.qr(rng.standard_normal((c, c)))
        self._mix = q * np.sign(np.diag(r))  # orthogonal, sign-fixed for determinism
        self._weights = self._build_attention_weights()
        self._feature_proj = _rng(profile.rng_key, "toy-feature").standard_normal(
            (profile.token_count * profile.token_dim, 54)
        ) / np.sqrt(54)
        self._viz_proj = _rng(profile.rng_key, "toy-viz").standard_normal(
            (6, profile.token_count * profile.token_dim)
        ) / np.sqrt(profile.token_count * profile.token_dim)

    # -- autoencoder (lossless space-to-depth) -------------------------------

    def encode(self, img: ImagePlane) -> LatentGrid:
        f = self.profile.scale_factor
        h_px, w_px = img.shape_hw
        if h_px % f or w_px % f:
            raise ValueError(f"image dims {h_px}x{w_px} must be multiples of the scale factor {f}")
        h, w = h_px // f, w_px // f
        packed = img.pixels.reshape(h, f, w, f, 3).transpose(1, 3, 4, 0, 2).reshape(f * f * 3, h, w)
        return LatentGrid(packed, f)

    def decode(self, z: LatentGrid) -> ImagePlane:
        f = self.profile.scale_factor
        c, h, w = z.shape_chw
        if c != f * f * 3:
            raise ValueError(f"latent has {c} channels, expected {f * f * 3}")
        px = z.data.reshape(f, f, 3, h, w).transpose(3, 0, 4, 1, 2).reshape(h * f, w * f, 3)
        return ImagePlane(np.clip(px, 0.0, 1.0))

    # -- scheduler ------------------------------------------------------------

    def make_schedule(self, steps: int) -> Schedule:
        if steps < 1:
            raise ValueError("schedule needs at least one step")
        t_max = self.profile.train_timesteps
        ids = np.round(np.linspace(t_max / steps, t_max, steps)).astype(int)
        sigmas = self.profile.base_sigma * np.sqrt(ids / t_max)
        return Schedule(ids, sigmas)

    def _noise(self, seed: int, tag: str, k: int, shape) -> np.ndarray:
        return _rng(seed, tag, k).standard_normal(shape)

    def _mix_channels(self, data: np.ndarray, transpose: bool) -> np.ndarray:
        m = self._mix.T if transpose else self._mix
        return np.einsum("cd,dhw->chw", m, data)

    # -- diffusion steps -------------------------------------------------------

    def invert_step(self, z: LatentGrid, schedule: Schedule, k: int, seed: int, conditioning=None) -> LatentGrid:
        noisy = self._mix_channels(z.data, transpose=False) + schedule.sigmas[k] * self._noise(
            seed, "toy-step-noise", k, z.shape_chw
        )
        return z.with_data(noisy)

    def denoise_step(
        self, z: LatentGrid, schedule: Schedule, k: int, seed: int, conditioning=None, guidance_hook=None
    ) -> LatentGrid:
        denoised = z.data - schedule.sigmas[k] * self._noise(seed, "toy-step-noise", k, z.shape_chw)
        out = self._mix_channels(denoised, transpose=True)
        if guidance_hook is not None:
            c, h, w = out.shape
            flat = out.reshape(c, h * w).T
            flat = guidance_hook(flat, "xattn0", (h, w))
            out = np.asarray(flat).T.reshape(c, h, w)
        return z.with_data(out)

    def forward_noise_step(self, z: LatentGrid, schedule: Schedule, k: int, seed: int) -> LatentGrid:
        """Scheduler forward-noising; same recurrence shape, independent noise stream."""
        noisy = self._mix_channels(z.data, transpose=False) + schedule.sigmas[k] * self._noise(
            seed, "toy-forward-noise", k, z.shape_chw
        )
        return z.with_data(noisy)

    def initial_noise(self, hw_latent: tuple[int, int], seed: int) -> LatentGrid:
        data = _rng(seed, "toy-initial-noise").standard_normal(
            (self.profile.latent_channels, hw_latent[0], hw_latent[1])
        )
        return LatentGrid(data, self.profile.scale_factor)

    # -- conditioning features --------------------------------------------------

    def _image_stats(self, img: ImagePlane) -> np.ndarray:
        px = img.pixels
        means = px.mean(axis=(0, 1))
        stds = px.std(axis=(0, 1))
        rows = np.array_split(px, 4, axis=0)
        thumb = np.stack([np.stack([b.mean(axis=(0, 1)) for b in np.array_split(r, 4, axis=1)]) for r in rows])
        return np.concatenate([means, stds, thumb.reshape(-1)])

    def image_features(self, img: ImagePlane) -> PromptFeature:
        stats = self._image_stats(img)
        tokens = (self._feature_proj @ stats).reshape(self.profile.token_count, self.profile.token_dim)
        return PromptFeature(tokens, "image_content")

    def text_features(self, prompt: str) -> PromptFeature:
        rng = _rng(self.profile.rng_key, "toy-text:" + prompt)
        tokens = 0.5 * rng.standard_normal((self.profile.token_count, self.profile.token_dim))
        return PromptFeature(tokens, "text")

    def exceptional_prompt(self) -> PromptFeature:
        """Reserved inversion conditioning: the all-zero token sequence."""
        return PromptFeature(np.zeros((self.profile.token_count, self.profile.token_dim)), "text")

    # -- attention surface -------------------------------------------------------

    def _build_attention_weights(self):
        p = self.profile
        weights = {}
        for kind in ("image", "text"):
            rng = _rng(p.rng_key, f"toy-attn-{kind}")
            w_q = rng.standard_normal((p.latent_channels, p.key_width)) / np.sqrt(p.latent_channels)
            w_k = rng.standard_normal((p.token_dim, p.key_width)) / np.sqrt(p.token_dim)
            w_v = rng.standard_normal((p.token_dim, p.latent_channels)) / np.sqrt(p.token_dim)
            weights[kind] = (w_q, w_k, w_v)
        return {"xattn0": weights}

    def cross_attention_layers(self) -> tuple[str, ...]:
        return ("xattn0",)

    def attention_weights(self, layer: str) -> dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]:
        return self._weights[layer]

    # -- image-prompt-only generation ---------------------------------------------

    def generate_from_features(self, f: PromptFeature, seed: int) -> ImagePlane:
        coeffs = np.tanh(self._viz_proj @ f.flat())
        size = 64
        yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
        channels = []
        for ch in range(3):
            base = 0.5 + 0.25 * coeffs[ch] + 0.25 * coeffs[3 + ch] * (xx + yy - 1.0)
            channels.append(base)
        img = np.stack(channels, axis=-1)
        img += 0.02 * _rng(seed, "toy-viz-noise").standard_normal(img.shape)
        return ImagePlane(np.clip(img, 0.0, 1.0))


class SdxlBackbone:
    """Adapter stub for a real SDXL + image-prompt-adapter binding.

    The concrete binding must provide: VAE encode/decode at scale factor 8,
    paired solver invert/denoise steps given (latent, schedule level,
    conditioning), adapter image-feature extraction returning token_count x
    token_dim tokens, text encoding, and per-layer cross-attention projection
    weights. Construction fails with BackboneUnavailableError until weights
    and the runtime are configured via CROSSCOMPOSE_SDXL_WEIGHTS.
    """

    profile = SDXL_PROFILE

    def __init__(self, weights_root: str | None = None):
        root = weights_root or os.environ.get("CROSSCOMPOSE_SDXL_WEIGHTS")
        if not root or not Path(root).exists():
            raise BackboneUnavailableError(
                "SDXL backbone needs weights; set CROSSCOMPOSE_SDXL_WEIGHTS to the weight directory"
            )
        raise BackboneUnavailableError(
            "SDXL runtime binding is not bundled with this package; plug a concrete adapter "
            "implementing the BackboneHandle contract"
        )


def toy_backbone(profile: BackboneProfile = TOY_PROFILE) -> ToyBackbone:
    return ToyBackbone(profile)


def load_backbone(name: str, **kwargs) -> BackboneHandle:
    if name == "toy":
        return toy_backbone(**kwargs)
    if name == "sdxl":
        return SdxlBackbone(**kwargs)  # type: ignore[return-value]
    raise ValueError(f"unknown backbone {name!r}; expected 'toy' or 'sdxl'")
