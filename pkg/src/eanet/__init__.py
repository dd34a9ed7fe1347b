"""Two-hand mesh recovery with fused-token attention, self-contained from the
autodiff core up. The public surface is the scikit-learn style estimator plus
the building blocks it is assembled from.
"""

__version__ = "0.1.0"

from .errors import ConfigError, FormatError, NumericError, ShapeError

__all__ = [
    "ConfigError",
    "FormatError",
    "NumericError",
    "ShapeError",
    "EANetRegressor",
    "__version__",
]


def __getattr__(name):
    # estimator pulls in the whole stack; import lazily to keep
    # `import eanet` cheap for users of the low-level pieces
    if name == "EANetRegressor":
        from .estimator import EANetRegressor

        return EANetRegressor
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
