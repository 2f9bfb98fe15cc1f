"""Video splicing localization: procedural data, training, inference and scoring."""

from ._scfnet import (
    ArgumentError,
    ConfigError,
    FormatError,
    IoError,
    ShapeError,
    TrainingError,
    best_threshold,
    degrade,
    desk_model_config,
    desk_train_config,
    evaluate,
    gradient_suite,
    infer,
    lr_at_epoch,
    psnr,
    read_video,
    score,
    sweep,
    synth_dataset,
    threshold_grid,
    train,
)

__all__ = [
    "ArgumentError",
    "ConfigError",
    "FormatError",
    "IoError",
    "ShapeError",
    "TrainingError",
    "best_threshold",
    "degrade",
    "desk_model_config",
    "desk_train_config",
    "evaluate",
    "gradient_suite",
    "infer",
    "lr_at_epoch",
    "psnr",
    "read_video",
    "score",
    "sweep",
    "synth_dataset",
    "threshold_grid",
    "train",
]
