"""Cross-checks between datasets, model configs, and predictions.

Geometry mismatches (a dataset rendered for a different grid than the
model expects) fail loudly with the differing field named, instead of
producing silently wrong supervision.
"""

from __future__ import annotations

from .data import Sample
from .errors import ConfigError


def ensure_samples(x, what="X"):
    """Require a non-empty sequence of dataset records; return it as a list."""
    samples = list(x)
    if not samples:
        raise ConfigError(f"{what} wants at least one sample")
    for i, s in enumerate(samples):
        if not isinstance(s, Sample):
            raise ConfigError(f"{what}[{i}] is {type(s).__name__}, not a dataset record")
    return samples


def check_geometry(config, samples, where="dataset"):
    """Verify every sample's recorded geometry matches the model config.

    Raises ConfigError naming the first differing field.
    """
    for i, s in enumerate(samples):
        pairs = (
            ("image_size", s.image.shape[0], config.image_size),
            ("heat_size", s.heat_size, config.grid_size),
            ("depth_bins", s.depth_bins, config.depth_bins),
        )
        for field, got, want in pairs:
            if got != want:
                raise ConfigError(
                    f"{where} record {i} has {field} {got}, but the model wants {want}"
                )
    return samples
