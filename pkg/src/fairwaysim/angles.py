"""Angle wrapping helpers shared across the package."""

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap_angle(angle):
    """Wrap an angle (scalar or array) to the interval (-pi, pi].

    -pi maps to +pi so the representation is unique.
    """
    return np.pi - np.mod(np.pi - angle, TWO_PI)


def angle_diff(a, b):
    """Shortest signed difference a - b, wrapped to (-pi, pi]."""
    return wrap_angle(a - b)
