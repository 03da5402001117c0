"""Data augmentation invariance: training engine and evaluation tools."""

from auginv._core import (  # noqa: F401
    AugmentParams,
    AugmentScheme,
    CheckpointError,
    ConfigError,
    DataError,
    Model,
    NumericError,
    RngStream,
    __version__,
    alpha_schedule,
    apply_augmentation,
    cross_entropy,
    eval_run,
    invariance_loss,
    invariance_score,
    make_synthetic_dataset,
    mean_sq_distance,
    pairwise_mean_sq_dists,
    sample_eval_extreme_params,
    sample_train_params,
    total_loss,
    train_run,
)
