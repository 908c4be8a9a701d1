"""crosscompose: blend a foreground object into a stylistically different
background with a fewer-step diffusion pipeline, guided by integrated image
features instead of text prompts.
"""

from .backbone import (
    BackboneHandle,
    BackboneProfile,
    SdxlBackbone,
    ToyBackbone,
    load_backbone,
    toy_backbone,
)
from .blend import BlendResult, adain, initial_blend, paste_pixels
from .core import (
    ImagePlane,
    LatentGrid,
    MaskPlane,
    PipelineConfig,
    Placement,
    dilate_mask,
    mask_to_latent,
    resize_longest_edge,
)
from .errors import BackboneUnavailableError, CapabilityError, StageError, TrainingDivergedError
from .guidance import (
    AttentionMaskField,
    GuidanceBundle,
    apply_guidance,
    preserve_background,
    rectified_cross_attention,
    step_adain,
)
from .integrator import (
    IntegratorModel,
    PromptFeature,
    StyleTriplet,
    integrate_features,
    lda_separability,
    mlp_forward,
    train_integrator,
)
from .pipeline import (
    CompositionJob,
    ComposeRun,
    InversionTrajectory,
    Trace,
    compose,
    compose_detailed,
    dual_branch_full_calls,
    invert,
    planned_denoiser_calls,
    reconstruct,
)

__version__ = "0.1.0"

__all__ = [
    "BackboneHandle",
    "BackboneProfile",
    "SdxlBackbone",
    "ToyBackbone",
    "load_backbone",
    "toy_backbone",
    "BlendResult",
    "adain",
    "initial_blend",
    "paste_pixels",
    "ImagePlane",
    "LatentGrid",
    "MaskPlane",
    "PipelineConfig",
    "Placement",
    "dilate_mask",
    "mask_to_latent",
    "resize_longest_edge",
    "BackboneUnavailableError",
    "CapabilityError",
    "StageError",
    "TrainingDivergedError",
    "AttentionMaskField",
    "GuidanceBundle",
    "apply_guidance",
    "preserve_background",
    "rectified_cross_attention",
    "step_adain",
    "IntegratorModel",
    "PromptFeature",
    "StyleTriplet",
    "integrate_features",
    "lda_separability",
    "mlp_forward",
    "train_integrator",
    "CompositionJob",
    "ComposeRun",
    "InversionTrajectory",
    "Trace",
    "compose",
    "compose_detailed",
    "dual_branch_full_calls",
    "invert",
    "planned_denoiser_calls",
    "reconstruct",
    "__version__",
]
