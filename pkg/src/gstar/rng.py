"""Portable counter-based random numbers.

The stream is defined bit-for-bit so simulated data can be reproduced by any
implementation:

* counter ``c = 0, 1, 2, ...`` and a 64-bit ``seed``;
* ``z = seed + (c + 1) * 0x9E3779B97F4A7C15  (mod 2**64)``;
* SplitMix64 finalizer:
  ``z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
  z *= 0x94D049BB133111EB; z ^= z >> 31`` (all mod ``2**64``);
* uniform ``u = (z >> 11) * 2**-53`` in ``[0, 1)``.

Standard normals use Box-Muller on consecutive uniform pairs
``(u1, u2) = (u[2m], u[2m+1])``:
``n[2m] = r cos(2 pi u2)``, ``n[2m+1] = r sin(2 pi u2)`` with
``r = sqrt(-2 * log1p(-u1))``.
"""

from __future__ import annotations

import numpy as np

__all__ = ["splitmix64", "uniforms", "normals"]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed: int, counters: np.ndarray) -> np.ndarray:
    """Raw 64-bit outputs for the given counter values."""
    z = np.uint64(seed % 2**64) + (np.asarray(counters, dtype=np.uint64) + np.uint64(1)) * _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def uniforms(seed: int, n: int, offset: int = 0) -> np.ndarray:
    """``n`` uniforms in ``[0, 1)`` starting at counter ``offset``."""
    counters = np.arange(offset, offset + n, dtype=np.uint64)
    return (splitmix64(seed, counters) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def normals(seed: int, n: int, offset: int = 0) -> np.ndarray:
    """``n`` standard normals; ``offset`` counts normals, not uniforms.

    Normal ``q`` depends only on ``(seed, q)``, so any slice of the stream can
    be regenerated independently.
    """
    first = offset - offset % 2
    pairs = (offset + n - first + 1) // 2
    u = uniforms(seed, 2 * pairs, offset=first)
    u1, u2 = u[0::2], u[1::2]
    r = np.sqrt(-2.0 * np.log1p(-u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(2 * pairs)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[offset - first : offset - first + n]
