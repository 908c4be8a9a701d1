"""Content/style feature integration: adapter tokens, the residual MLP, its
trainer, the triplet data pipeline, and the LDA clustering check.
"""

from .features import (
    PromptFeature,
    StyleTriplet,
    TripletRecord,
    cosine_similarity,
    visualize_integrated_feature,
)
from .lda import LdaResult, lda_separability
from .mlp import (
    IntegratorModel,
    IntegratorProfile,
    default_profile,
    hidden_width_for_param_target,
    integrate_features,
    mlp_forward,
    parameter_count,
)
from .training import TrainerConfig, TrainingResult, train_integrator
from .triplets import (
    FilterOutcome,
    FilterThresholds,
    build_triplets,
    filter_triplets,
    read_triplet_manifest,
    write_review_manifest,
    write_triplet_manifest,
)

__all__ = [
    "PromptFeature",
    "StyleTriplet",
    "TripletRecord",
    "cosine_similarity",
    "visualize_integrated_feature",
    "LdaResult",
    "lda_separability",
    "IntegratorModel",
    "IntegratorProfile",
    "default_profile",
    "hidden_width_for_param_target",
    "integrate_features",
    "mlp_forward",
    "parameter_count",
    "TrainerConfig",
    "TrainingResult",
    "train_integrator",
    "FilterOutcome",
    "FilterThresholds",
    "build_triplets",
    "filter_triplets",
    "read_triplet_manifest",
    "write_review_manifest",
    "write_triplet_manifest",
]
