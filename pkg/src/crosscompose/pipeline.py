"""Single-branch fewer-step composition flow: encode and blend, invert the
blended latent, denoise with mask-local guidance, decode.

The denoiser is only called steps_invert + steps_denoise times per job (20
with the defaults), against 80 for a hypothetical dual-branch full-step
configuration; ``dual_branch_full_calls`` documents that arithmetic.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .backbone import BackboneHandle
from .blend import BlendResult, initial_blend
from .core import (
    ImagePlane,
    LatentGrid,
    MaskPlane,
    PipelineConfig,
    Placement,
    grow_window,
    longest_edge_dims,
    resize_image_to,
    resize_mask_to,
    round_to_multiple,
)
from .errors import StageError
from .guidance import AttentionMaskField, GuidanceBundle, apply_guidance, preserve_background, step_adain
from .integrator.features import PromptFeature
from .integrator.mlp import IntegratorModel, integrate_features

FULL_DIFFUSION_STEPS = 20
EXCEPTIONAL_PROMPT_ID = "zero-tokens"


class Trace:
    """Instrumentation log: one record per hook firing.

    Records are {step, phase, hook, call_count} with call_count the running
    total for that hook, serializable as line-delimited JSON.
    """

    def __init__(self, listener: Callable[[str, str, int], None] | None = None):
        self.records: list[dict] = []
        self._counts: dict[str, int] = {}
        self._listener = listener

    def record(self, phase: str, hook: str, step: int) -> None:
        self._counts[hook] = self._counts.get(hook, 0) + 1
        self.records.append({"step": step, "phase": phase, "hook": hook, "call_count": self._counts[hook]})
        if self._listener is not None:
            self._listener(phase, hook, step)

    def count(self, hook: str, phase: str | None = None) -> int:
        if phase is None:
            return self._counts.get(hook, 0)
        return sum(1 for r in self.records if r["hook"] == hook and r["phase"] == phase)

    def schema(self) -> tuple[tuple[str, str], ...]:
        """Ordered distinct (phase, hook) kinds; structural shape of a run."""
        seen: list[tuple[str, str]] = []
        for r in self.records:
            key = (r["phase"], r["hook"])
            if key not in seen:
                seen.append(key)
        return tuple(seen)

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(r) for r in self.records) + ("\n" if self.records else "")


@dataclass(frozen=True)
class InversionTrajectory:
    """Latents Z_0..Z_T (Z_0 is the blended latent), kept for preservation."""

    latents: tuple[LatentGrid, ...]
    timestep_ids: tuple[int, ...]
    exceptional_prompt_id: str = EXCEPTIONAL_PROMPT_ID
    kind: str = "inverted"  # or "forward_noised" for the no-inversion ablation

    def __post_init__(self):
        if len(self.latents) != len(self.timestep_ids):
            raise ValueError("trajectory latents and timestep ids must align")
        if len(self.latents) < 2:
            raise ValueError("trajectory needs at least the start and one step")

    @property
    def steps(self) -> int:
        return len(self.latents) - 1

    @property
    def z_start(self) -> LatentGrid:
        return self.latents[0]

    @property
    def z_noisy(self) -> LatentGrid:
        return self.latents[-1]


@dataclass(frozen=True)
class CompositionJob:
    """One full composition request."""

    bg: ImagePlane
    fg: ImagePlane
    fg_mask: MaskPlane
    placement: Placement
    cfg: PipelineConfig
    bg_box: MaskPlane | None = None
    prompt: str | None = None

    def validate(self) -> None:
        if self.fg_mask.kind != "fg_object":
            raise ValueError(f"fg_mask must have kind fg_object, got {self.fg_mask.kind!r}")
        if self.fg_mask.shape_hw != self.fg.shape_hw:
            raise ValueError(f"fg_mask {self.fg_mask.shape_hw} does not pair with fg {self.fg.shape_hw}")
        if self.bg_box is not None:
            if self.bg_box.kind != "bg_box":
                raise ValueError(f"bg_box must have kind bg_box, got {self.bg_box.kind!r}")
            if self.bg_box.shape_hw != self.bg.shape_hw:
                raise ValueError(f"bg_box {self.bg_box.shape_hw} does not pair with bg {self.bg.shape_hw}")
        self.placement.validate_inside(self.bg.shape_hw, self.fg.shape_hw)

    def config_hash(self, extra: dict | None = None) -> str:
        h = hashlib.sha256()
        for arr in (self.bg.pixels, self.fg.pixels, self.fg_mask.bits):
            h.update(np.ascontiguousarray(arr).tobytes())
        if self.bg_box is not None:
            h.update(np.ascontiguousarray(self.bg_box.bits).tobytes())
        payload = {
            "placement": [self.placement.offset_x, self.placement.offset_y, self.placement.scale],
            "prompt": self.prompt,
            "cfg": self.cfg.to_dict(),
            "extra": extra or {},
        }
        h.update(json.dumps(payload, sort_keys=True).encode())
        return h.hexdigest()


@dataclass
class ComposeRun:
    """Composition result plus the debugging artifacts the run produced."""

    image: ImagePlane
    preview: ImagePlane
    z_blend: LatentGrid
    placed_fg_mask: MaskPlane
    dilated_mask: MaskPlane
    trace: Trace
    config_hash: str
    effective_cfg: PipelineConfig
    blend: BlendResult | None = None


def effective_config(cfg: PipelineConfig) -> PipelineConfig:
    """The full-diffusion toggle only changes step counts and the start latent."""
    if cfg.full_diffusion:
        return replace(cfg, steps_invert=FULL_DIFFUSION_STEPS, steps_denoise=FULL_DIFFUSION_STEPS)
    return cfg


def planned_denoiser_calls(cfg: PipelineConfig) -> int:
    eff = effective_config(cfg)
    return (eff.steps_invert if eff.use_inversion else 0) + eff.steps_denoise


def dual_branch_full_calls(steps_invert: int = FULL_DIFFUSION_STEPS, steps_denoise: int = FULL_DIFFUSION_STEPS) -> int:
    """Denoiser budget of a two-branch, full-step pipeline: both the foreground
    and background branches pay an inversion pass and a reconstruction pass."""
    return 2 * (steps_invert + steps_denoise)


# ---------------------------------------------------------------------------
# Inversion


def invert(
    z_blend: LatentGrid,
    steps: int,
    backbone: BackboneHandle,
    seed: int = 0,
    trace: Trace | None = None,
    conditioning: PromptFeature | None = None,
) -> InversionTrajectory:
    """Walk the blended latent up to the noisy level, retaining every latent."""
    if steps < 1:
        raise ValueError("inversion needs at least one step")
    trace = trace if trace is not None else Trace()
    schedule = backbone.make_schedule(steps)
    cond = conditioning if conditioning is not None else backbone.exceptional_prompt()
    latents = [z_blend]
    z = z_blend
    for k in range(steps):
        try:
            z = backbone.invert_step(z, schedule, k, seed, conditioning=cond)
        except Exception as e:  # noqa: BLE001
            raise StageError("invert", str(e), step=k) from e
        trace.record("invert", "denoiser", k + 1)
        latents.append(z)
    ids = (0, *(int(t) for t in schedule.timestep_ids))
    return InversionTrajectory(tuple(latents), ids, kind="inverted")


def forward_noise_trajectory(
    z_blend: LatentGrid, steps: int, backbone: BackboneHandle, seed: int = 0, trace: Trace | None = None
) -> InversionTrajectory:
    """No-inversion ablation: scheduler forward-noising to the same timestep.

    Produces a trajectory of the same shape without any denoiser calls.
    """
    if "forward_noise" not in backbone.capabilities:
        raise StageError("invert", "backbone cannot forward-noise; the no-inversion ablation needs it")
    trace = trace if trace is not None else Trace()
    schedule = backbone.make_schedule(steps)
    latents = [z_blend]
    z = z_blend
    for k in range(steps):
        z = backbone.forward_noise_step(z, schedule, k, seed)
        trace.record("invert", "forward_noise", k + 1)
        latents.append(z)
    ids = (0, *(int(t) for t in schedule.timestep_ids))
    return InversionTrajectory(tuple(latents), ids, kind="forward_noised")


# ---------------------------------------------------------------------------
# Reconstruction


def reconstruct(
    traj: InversionTrajectory,
    bundle: GuidanceBundle,
    cfg: PipelineConfig,
    backbone: BackboneHandle,
    trace: Trace | None = None,
    start_override: LatentGrid | None = None,
) -> LatentGrid:
    """Denoise from the noisy latent back to z_0.

    Guidance (rectified cross-attention, then the AdaIN step) runs during the
    first ``inject_steps`` steps; afterwards the latent follows the free
    process. Background preservation against the stored trajectory applies at
    every step.
    """
    trace = trace if trace is not None else Trace()
    steps = cfg.steps_denoise
    schedule = backbone.make_schedule(steps)
    z = start_override if start_override is not None else traj.z_noisy
    hw = z.spatial_hw
    mask_bits = bundle.mask_field.resolution_mask(hw)

    guidance_on = bundle.has_features and bool(mask_bits.any())
    adain_on = bool(mask_bits.any()) and not bool(mask_bits.all()) and cfg.lambda_diffusion > 0.0
    if cfg.inject_steps > 0 and mask_bits.all():
        warnings.warn(
            "mask covers the whole latent; no unmasked statistics source, AdaIN guidance skipped",
            RuntimeWarning,
            stacklevel=2,
        )

    for j in range(1, steps + 1):
        k = steps - j  # scheduler level this step lands on
        inject = j <= cfg.inject_steps

        hook = None
        if inject and guidance_on:

            def hook(feats, layer, hw_layer, _step=j):
                trace.record("denoise", "guidance", _step)
                return apply_guidance(
                    feats,
                    bundle,
                    backbone.attention_weights(layer),
                    hw_layer,
                    context=f"step {_step}, layer {layer}",
                )

        try:
            z = backbone.denoise_step(z, schedule, k, cfg.seed, conditioning=None, guidance_hook=hook)
        except Exception as e:  # noqa: BLE001
            raise StageError("reconstruct", str(e), step=j) from e
        trace.record("denoise", "denoiser", j)

        if inject and adain_on:
            z = step_adain(z, mask_bits, cfg.lambda_diffusion)
            trace.record("denoise", "adain", j)

        traj_level = round(k * traj.steps / steps)
        z = preserve_background(z, traj.latents[traj_level], mask_bits)
        trace.record("denoise", "preserve", j)
    return z


# ---------------------------------------------------------------------------
# Full flow


def crop_to_mask_on_white(img: ImagePlane, mask: MaskPlane, min_edge: int = 8) -> ImagePlane:
    """Content view of the foreground: mask bbox crop, white outside the mask."""
    if mask.shape_hw != img.shape_hw:
        raise ValueError("mask does not pair with image")
    if mask.is_empty:
        return img
    r0, c0, r1, c1 = mask.bbox()
    r0, r1 = grow_window(r0, r1, img.height, min_edge)
    c0, c1 = grow_window(c0, c1, img.width, min_edge)
    crop = img.pixels[r0:r1, c0:c1].copy()
    bits = mask.bits[r0:r1, c0:c1]
    crop[~bits] = 1.0
    return ImagePlane(crop)


def _prepare_background(
    bg: ImagePlane, bg_box: MaskPlane | None, placement: Placement, profile
) -> tuple[ImagePlane, MaskPlane | None, Placement]:
    """Resize the background (and its box) to backbone-compatible dims and
    carry the placement into the resized frame."""
    h, w = bg.shape_hw
    if profile.resize_target is not None:
        dims = longest_edge_dims((h, w), profile.resize_target, profile.size_multiple)
    else:
        m = profile.size_multiple
        dims = (max(m, round_to_multiple(h, m)), max(m, round_to_multiple(w, m)))
    if dims == (h, w):
        return bg, bg_box, placement
    ry, rx = dims[0] / h, dims[1] / w
    new_placement = Placement(
        offset_x=int(np.floor(placement.offset_x * rx + 0.5)),
        offset_y=int(np.floor(placement.offset_y * ry + 0.5)),
        scale=placement.scale * (rx + ry) / 2.0,
    )
    bg2 = resize_image_to(bg, dims)
    box2 = resize_mask_to(bg_box, dims) if bg_box is not None else None
    return bg2, box2, new_placement


def _clamp_placement(placement: Placement, bg_hw: tuple[int, int], fg_hw: tuple[int, int]) -> Placement:
    """Pull a placement back into the frame; anisotropic resize rounding can
    push an edge-fitting placement out by a pixel."""
    fh, fw = placement.scaled_size(fg_hw)
    max_y = max(0, bg_hw[0] - fh)
    max_x = max(0, bg_hw[1] - fw)
    return Placement(
        offset_x=min(max_x, max(0, placement.offset_x)),
        offset_y=min(max_y, max(0, placement.offset_y)),
        scale=placement.scale,
    )


def compose_detailed(
    job: CompositionJob,
    backbone: BackboneHandle,
    model: IntegratorModel,
    on_progress: Callable[[str, int], None] | None = None,
) -> ComposeRun:
    """Run the whole flow and keep the intermediate artifacts."""

    def progress(stage: str, step: int = 0):
        if on_progress is not None:
            on_progress(stage, step)

    trace = Trace(listener=(lambda phase, hook, step: progress(phase, step)) if on_progress else None)
    partial: dict = {}

    def stage(name: str):
        progress(name)
        return name

    try:
        stage("validate")
        job.validate()
        cfg = effective_config(job.cfg)
    except Exception as e:  # noqa: BLE001
        raise StageError("validate", str(e), partial=partial) from e

    try:
        stage("prepare")
        bg, bg_box, placement = _prepare_background(job.bg, job.bg_box, job.placement, backbone.profile)
        if placement is not job.placement:
            placement = _clamp_placement(placement, bg.shape_hw, job.fg.shape_hw)
    except Exception as e:  # noqa: BLE001
        raise StageError("prepare", str(e), partial=partial) from e

    try:
        stage("blend")
        blend_res = initial_blend(bg, job.fg, job.fg_mask, placement, cfg, backbone)
        preview = backbone.decode(blend_res.z_blend)
        partial["z_blend"] = blend_res.z_blend
        partial["preview"] = preview
    except Exception as e:  # noqa: BLE001
        raise StageError("blend", str(e), partial=partial) from e

    try:
        stage("features")
        f_integrate = None
        if cfg.use_image_clip:
            content_view = crop_to_mask_on_white(job.fg, job.fg_mask)
            f_c = backbone.image_features(content_view).retag("image_content")
            f_s = backbone.image_features(bg).retag("image_style")
            f_integrate = integrate_features(model, f_c, f_s)
        f_text = backbone.text_features(job.prompt) if job.prompt else None
    except Exception as e:  # noqa: BLE001
        raise StageError("features", str(e), partial=partial) from e

    try:
        stage("invert")
        if cfg.use_inversion:
            traj = invert(blend_res.z_blend, cfg.steps_invert, backbone, seed=cfg.seed, trace=trace)
        else:
            traj = forward_noise_trajectory(blend_res.z_blend, cfg.steps_invert, backbone, seed=cfg.seed, trace=trace)
    except StageError:
        raise
    except Exception as e:  # noqa: BLE001
        raise StageError("invert", str(e), partial=partial) from e

    try:
        stage("reconstruct")
        mask_field = AttentionMaskField(blend_res.dilated_mask, backbone.profile.scale_factor)
        bundle = GuidanceBundle(
            f_integrate=f_integrate,
            mask_field=mask_field,
            lambda_diffusion=cfg.lambda_diffusion,
            inject_steps=cfg.inject_steps,
            f_text=f_text,
        )
        start = backbone.initial_noise(blend_res.z_blend.spatial_hw, cfg.seed) if cfg.full_diffusion else None
        z0 = reconstruct(traj, bundle, cfg, backbone, trace=trace, start_override=start)
    except StageError:
        raise
    except Exception as e:  # noqa: BLE001
        raise StageError("reconstruct", str(e), partial=partial) from e

    try:
        stage("decode")
        image = backbone.decode(z0)
    except Exception as e:  # noqa: BLE001
        raise StageError("decode", str(e), partial=partial) from e

    return ComposeRun(
        image=image,
        preview=preview,
        z_blend=blend_res.z_blend,
        placed_fg_mask=blend_res.placed_fg_mask,
        dilated_mask=blend_res.dilated_mask,
        trace=trace,
        config_hash=job.config_hash(extra={"backbone": backbone.profile.name}),
        effective_cfg=cfg,
        blend=blend_res,
    )


def compose(job: CompositionJob, backbone: BackboneHandle, model: IntegratorModel) -> ImagePlane:
    """Compose the job and return just the final image."""
    return compose_detailed(job, backbone, model).image
