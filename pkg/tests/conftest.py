import numpy as np
import pytest


@pytest.fixture
def rng():
    """Fresh deterministic generator per test."""
    return np.random.default_rng(12345)


def finite_difference(f, arrays, index, coord, step=1e-6):
    """Central-difference d f / d arrays[index][coord] for scalar-valued f.

    ``arrays`` are plain numpy arrays; ``f`` maps them to a float. Used as the
    independent route against which backward gradients are compared.
    """
    plus = [a.copy() for a in arrays]
    minus = [a.copy() for a in arrays]
    plus[index][coord] += step
    minus[index][coord] -= step
    return (f(*plus) - f(*minus)) / (2.0 * step)


def relative_error(a, b, floor=1e-8):
    return abs(a - b) / max(abs(a), abs(b), floor)
