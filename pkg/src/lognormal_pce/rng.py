"""Counter-based Gaussian variates keyed by (seed, sample index, coordinate).

Each variate is a pure function of its key, so any partition of the sample
range over workers reproduces the same stream bit for bit.  Uniforms come
from the SplitMix64 finalizer applied to the key; Gaussians from the inverse
normal CDF.
"""

import numpy as np
from scipy.special import ndtri

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def uniforms(seed: int, start: int, stop: int, J: int) -> np.ndarray:
    """Uniforms in (0, 1) of shape ``(stop - start, J)`` for samples ``start..stop-1``."""
    if stop < start:
        raise ValueError("stop must be >= start")
    with np.errstate(over="ignore"):
        key = _mix(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64) ^ _GAMMA)
        i = np.arange(start, stop, dtype=np.uint64)[:, None] + np.uint64(1)
        j = np.arange(1, J + 1, dtype=np.uint64)[None, :]
        z = _mix(key + _GAMMA * i)
        z = _mix(_mix(z + _GAMMA * j) ^ key)
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def gaussians(seed: int, start: int, stop: int, J: int) -> np.ndarray:
    """Standard normal variates ``y_j`` of samples ``start..stop-1``, shape ``(n, J)``."""
    return ndtri(uniforms(seed, start, stop, J))
