"""Smooth radial cutoff ω_R."""

import logging

import numpy as np

from mcf_modes.types import FloatArray

logger = logging.getLogger(__name__)

INNER = 0.2
OUTER = 0.1


def smoothstep(t: FloatArray) -> FloatArray:
    """Quintic smoothstep 6t⁵ − 15t⁴ + 10t³ clipped to [0, 1] (C² at both ends)."""
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (t * (6.0 * t - 15.0) + 10.0)


def radial_cutoff(r: FloatArray, R: float) -> FloatArray:
    """ω(r − R): 1 for r <= R − 0.2, 0 for r >= R − 0.1, monotone in between.

    Args:
        r (FloatArray): radii |x|
        R (float): cutoff radius, at least 1

    Returns:
        FloatArray: values in [0, 1]
    """
    if not R >= 1.0:
        raise ValueError(f"cutoff radius must be >= 1, got {R}")
    if np.isinf(R):
        return np.ones_like(np.asarray(r, dtype=float))
    s = np.asarray(r, dtype=float) - R
    return 1.0 - smoothstep((s + INNER) / (INNER - OUTER))


def cutoff(x: FloatArray, R: float) -> FloatArray:
    """ω_R at points of shape (..., k)."""
    x = np.asarray(x, dtype=float)
    return radial_cutoff(np.sqrt(np.sum(x * x, axis=-1)), R)
