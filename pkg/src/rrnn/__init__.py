"""Residual random neural and kernel networks for classification.

Seeded random-feature classifiers trained by iterated ridge refits on the
residual of one-hot targets, with a deterministic preprocessing pipeline
(hypersphere normalization, resizing, FFT augmentation), orthonormal-key
data obfuscation, and the unit-sphere geometry that motivates the method.
"""

from .geometry import (
    BallMetrics,
    orthogonality_bound,
    orthogonality_experiment,
    shell_fraction,
    unit_ball_metrics,
)
from .idx import RawImageSet, load_idx, load_split
from .kernel import RrknModel, kernel_matrix, predict_rrkn, train_rrkn
from .model_io import load_key, load_model, save_model, save_secret_key, save_user_key
from .network import (
    RrnnModel,
    TrainingTrace,
    accuracy,
    classify,
    predict,
    project,
    train_baseline,
    train_rrnn,
)
from .obfuscation import (
    SecretKey,
    SplitKey,
    UserKey,
    encrypt_matrix,
    generate_key,
    host_transform,
    split_key,
    user_transform,
)
from .pipeline import (
    PipelineConfig,
    center_normalize,
    fft_augment,
    one_hot_encode,
    resize_images,
    run_pipeline,
    sqrt_transform,
)
from .ridge import gram_accumulate, solve_ridge
from .rng import (
    ALGORITHM_ID,
    SeedSpec,
    derive_substream,
    gaussian_matrix,
    random_orthonormal,
    select_block_indices,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHM_ID",
    "BallMetrics",
    "PipelineConfig",
    "RawImageSet",
    "RrknModel",
    "RrnnModel",
    "SecretKey",
    "SeedSpec",
    "SplitKey",
    "TrainingTrace",
    "UserKey",
    "accuracy",
    "center_normalize",
    "classify",
    "derive_substream",
    "encrypt_matrix",
    "fft_augment",
    "gaussian_matrix",
    "generate_key",
    "gram_accumulate",
    "host_transform",
    "kernel_matrix",
    "load_idx",
    "load_key",
    "load_model",
    "load_split",
    "one_hot_encode",
    "orthogonality_bound",
    "orthogonality_experiment",
    "predict",
    "predict_rrkn",
    "project",
    "random_orthonormal",
    "resize_images",
    "run_pipeline",
    "save_model",
    "save_secret_key",
    "save_user_key",
    "select_block_indices",
    "shell_fraction",
    "solve_ridge",
    "split_key",
    "sqrt_transform",
    "train_baseline",
    "train_rrkn",
    "train_rrnn",
    "unit_ball_metrics",
    "user_transform",
]
