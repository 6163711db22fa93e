"""Portable deterministic random draws for the augmentation pipeline.

Counter-based construction on the splitmix64 finalizer (constants
0x9E3779B97F4A7C15 / 0xBF58476D1CE4E5B9 / 0x94D049BB133111EB): every draw is
a pure 64-bit integer function of (seed, stream, index), so streams are
independent and draws are order-free -- enabling or disabling one transform
never shifts the draws of another.  Uniforms take the top 53 bits, giving
values in [0, 1).

The scalar and the vectorized paths are bit-identical; a test asserts it.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_U53 = 2.0**-53


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def _stream_base(seed: int, stream: int) -> int:
    return mix64(mix64(seed) ^ ((stream + 1) * _GOLDEN & _MASK))


def unit_uniform(seed: int, stream: int, index: int) -> float:
    """One uniform draw in [0, 1) at (seed, stream, index)."""
    base = _stream_base(seed, stream)
    value = mix64((base + (index + 1) * _GOLDEN) & _MASK)
    return (value >> 11) * _U53


def unit_uniforms(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """count uniform draws at consecutive indices start, start+1, ..."""
    base = np.uint64(_stream_base(seed, stream))
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = base + idx * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * _U53


def normals(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """count standard-normal draws via Box-Muller on paired uniforms.

    Draw k consumes uniform indices 2k and 2k+1 of the stream, so normal
    sequences are as order-free as the uniforms underneath.
    """
    u = unit_uniforms(seed, stream, 2 * start, 2 * count)
    u1 = u[0::2]
    u2 = u[1::2]
    # 1 - u1 lies in (0, 1]: log never sees zero
    return np.sqrt(-2.0 * np.log(1.0 - u1)) * np.cos(2.0 * np.pi * u2)
