from .generate import (
    TRAIN_SPLIT,
    VAL_SPLIT,
    GenConfig,
    generate_samples,
    loss_targets,
    sample_rng,
    sample_scene,
)
from .records import (
    iter_samples,
    peek_geometry,
    read_samples,
    sample_from_bytes,
    sample_to_bytes,
    write_samples,
)
from .scene import (
    AUX_SIZE,
    Camera,
    HandRecord,
    Sample,
    make_aux,
    project_2_5d,
    rasterize,
    unproject_2_5d,
)

__all__ = [
    "AUX_SIZE",
    "Camera",
    "GenConfig",
    "HandRecord",
    "Sample",
    "TRAIN_SPLIT",
    "VAL_SPLIT",
    "generate_samples",
    "iter_samples",
    "loss_targets",
    "make_aux",
    "peek_geometry",
    "project_2_5d",
    "rasterize",
    "read_samples",
    "sample_from_bytes",
    "sample_rng",
    "sample_scene",
    "sample_to_bytes",
    "unproject_2_5d",
    "write_samples",
]
