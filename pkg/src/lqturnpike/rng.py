"""Counter-based Gaussian sampling: SplitMix64 outputs fed through Box-Muller.

The ``i``-th output of the stream with seed ``s`` is ``mix64(s + (i+1)*GOLDEN)``
(mod 2**64), so any sample can be addressed directly by ``(seed, index)``. The
normal with index ``j`` uses stream outputs ``2j`` and ``2j+1``. Everything is
plain integer arithmetic plus ``log``/``sqrt``/``cos``, which keeps test
vectors reproducible across platforms and languages.
"""
from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 2.0 ** -53


def mix64(z) -> np.ndarray:
    """SplitMix64 finalizer on a uint64 array (wrapping arithmetic)."""
    z = np.array(z, dtype=np.uint64, copy=True, ndmin=1)
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


def derive_seed(seed, *tags):
    """Deterministic child seed for a sub-stream labelled by integer tags.

    Accepts arrays for ``seed`` or any tag (broadcasting); returns a Python
    ``int`` when every input is scalar.
    """
    scalar = np.ndim(seed) == 0 and all(np.ndim(t) == 0 for t in tags)
    s = np.asarray(seed, dtype=np.uint64)
    for t in tags:
        s = mix64(s + mix64(np.asarray(t, dtype=np.uint64)).reshape(np.shape(t)))
        s = s.reshape(np.broadcast_shapes(np.shape(s), np.shape(t)))
    return int(s.reshape(-1)[0]) if scalar else s


def splitmix_outputs(seed, index) -> np.ndarray:
    """Raw 64-bit outputs at the given stream positions (broadcasting)."""
    seed = np.asarray(seed, dtype=np.uint64)
    idx = np.asarray(index, dtype=np.uint64)
    return mix64(seed + (idx + np.uint64(1)) * GOLDEN).reshape(np.broadcast_shapes(seed.shape, idx.shape))


def uniforms(seed, index) -> np.ndarray:
    """Uniforms in [0, 1) with 53-bit resolution."""
    return (splitmix_outputs(seed, index) >> np.uint64(11)).astype(np.float64) * _TWO_M53


def standard_normals(seed, index) -> np.ndarray:
    """Standard normal variates addressed by ``(seed, index)`` (broadcasting)."""
    idx = np.asarray(index, dtype=np.uint64)
    two = np.uint64(2)
    r1 = splitmix_outputs(seed, idx * two)
    r2 = splitmix_outputs(seed, idx * two + np.uint64(1))
    # u1 in (0, 1] keeps the log finite
    u1 = ((r1 >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_M53
    u2 = (r2 >> np.uint64(11)).astype(np.float64) * _TWO_M53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
