"""Visuo-tactile cross-modal object recognition."""

from ._vitac import (
    Error,
    GfkModel,
    Model,
    PointCloud,
    benchmark,
    clue,
    cmr_train,
    default_config,
    describe,
    equalize,
    esf,
    estimate_normals,
    generate_dataset,
    geodesic_point,
    gfk_fit,
    load_model,
    mls_resample,
    read_cloud,
    shot,
    tlcmr_train,
    voxel_filter,
    write_cloud,
)

__all__ = [
    "Error",
    "GfkModel",
    "Model",
    "PointCloud",
    "benchmark",
    "clue",
    "cmr_train",
    "default_config",
    "describe",
    "equalize",
    "esf",
    "estimate_normals",
    "generate_dataset",
    "geodesic_point",
    "gfk_fit",
    "load_model",
    "mls_resample",
    "read_cloud",
    "shot",
    "tlcmr_train",
    "voxel_filter",
    "write_cloud",
]
