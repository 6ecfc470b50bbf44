"""Input checks shared by the public entry points.

Every helper raises :class:`~hflow.exceptions.ConfigurationError` naming the
offending parameter and returns the (possibly coerced) value.
"""

from __future__ import annotations

import numbers

import numpy as np

from .exceptions import ConfigurationError


def check_choice(name, value, choices):
    if value not in choices:
        raise ConfigurationError(f"{name} must be one of {tuple(choices)}, got {value!r}")
    return value


def check_positive(name, value, allow_zero=False):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ConfigurationError(f"{name} must be a real number, got {value!r}")
    ok = value >= 0 if allow_zero else value > 0
    if not (ok and np.isfinite(value)):
        bound = "nonnegative" if allow_zero else "positive"
        raise ConfigurationError(f"{name} must be {bound} and finite, got {value!r}")
    return float(value)


def check_int(name, value, minimum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigurationError(f"{name} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigurationError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_grid_size(value, name="gridSize", minimum=8):
    """A pair of even integers, each at least ``minimum``; a single integer means a square grid."""
    if isinstance(value, numbers.Integral) and not isinstance(value, bool):
        value = (value, value)
    try:
        pair = tuple(value)
    except TypeError:
        raise ConfigurationError(f"{name} must be an integer or a pair of integers, got {value!r}") from None
    if len(pair) != 2:
        raise ConfigurationError(f"{name} must have two components, got {value!r}")
    for n in pair:
        check_int(name, n, minimum)
        if n % 2:
            raise ConfigurationError(f"{name} components must be even, got {n}")
    return tuple(int(n) for n in pair)


def check_array(name, value, shape=None, finite=True):
    """Float array with an optional exact shape; ``None`` entries in ``shape`` match any length."""
    arr = np.asarray(value, dtype=float)
    if shape is not None:
        if arr.ndim != len(shape) or any(s is not None and s != n for s, n in zip(shape, arr.shape)):
            raise ConfigurationError(f"{name} must have shape {shape}, got {arr.shape}")
    if finite and not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} must be finite everywhere")
    return arr


def check_surface_state(state):
    """Structural checks on a :class:`~hflow.surface.SurfaceState`; returns it."""
    from .surface import SurfaceState

    if not isinstance(state, SurfaceState):
        raise ConfigurationError(f"expected a SurfaceState, got {type(state).__name__}")
    return state
