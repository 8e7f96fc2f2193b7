"""Fine-grained crowd counting with density-aware context propagation."""

from ._core import (
    DataError,
    Error,
    NumericError,
    UsageError,
    cmae,
    downsample_density,
    evaluate,
    generate_scene,
    mae_per_category,
    make_segmentation_maps,
    omae,
    predict,
    render_density_maps,
    run_cli,
    segmentation_metrics,
    train,
)

__all__ = [
    "DataError",
    "Error",
    "NumericError",
    "UsageError",
    "cmae",
    "downsample_density",
    "evaluate",
    "generate_scene",
    "mae_per_category",
    "make_segmentation_maps",
    "omae",
    "predict",
    "render_density_maps",
    "run_cli",
    "segmentation_metrics",
    "train",
]
