from .errors import (
    MetricReport,
    aggregate,
    evaluate,
    mpjpe,
    mpvpe,
    mrrpe,
    per_sample_metrics,
    pose_difference,
    skeleton_length,
    write_metrics_csv,
    write_metrics_json,
)
from .gradcheck import (
    GradProbe,
    GradReport,
    check_primitives,
    end_to_end_gradcheck,
    grad_check,
    primitive_suite,
)
from .tokens import TokenStats, token_homogeneity

__all__ = [
    "GradProbe",
    "GradReport",
    "MetricReport",
    "TokenStats",
    "aggregate",
    "check_primitives",
    "end_to_end_gradcheck",
    "evaluate",
    "grad_check",
    "mpjpe",
    "mpvpe",
    "mrrpe",
    "per_sample_metrics",
    "pose_difference",
    "primitive_suite",
    "skeleton_length",
    "token_homogeneity",
    "write_metrics_csv",
    "write_metrics_json",
]
