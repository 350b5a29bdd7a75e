from .networks import MlpNetwork, feature_tap
from .objectives import (
    discriminator_loss,
    discriminator_objective,
    generator_objective,
    generator_terms,
    gradient_penalty,
    original_generator_loss,
)
from .trainer import (
    DivergenceError,
    GanConfig,
    MetricsRecord,
    TrainResult,
    evaluate,
    load_parameters,
    mode_coverage,
    save_parameters,
    train,
)

__all__ = [
    "DivergenceError",
    "GanConfig",
    "MetricsRecord",
    "MlpNetwork",
    "TrainResult",
    "discriminator_loss",
    "discriminator_objective",
    "evaluate",
    "feature_tap",
    "generator_objective",
    "generator_terms",
    "gradient_penalty",
    "load_parameters",
    "mode_coverage",
    "original_generator_loss",
    "save_parameters",
    "train",
]
