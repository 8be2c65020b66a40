"""Counter-based seed derivation and Gaussian deviates.

Every random quantity in the package is addressed by a 64-bit key rather than
drawn from a shared sequential stream, so results never depend on evaluation
order or thread scheduling.

Seed derivation
---------------
``derive_seed(master, tag, index)`` is

    mix64(mix64(master XOR TAG_KEYS[tag]) + (index + 1) * GOLDEN)   (mod 2**64)

where ``mix64`` is the SplitMix64 finalizer (a bijection on 64-bit words) and
``GOLDEN = 0x9E3779B97F4A7C15`` is odd.  For fixed ``master`` and ``tag`` the map
``index -> seed`` is therefore injective over all 2**64 indices.

Normal deviates
---------------
``normals_from_key(key, size)`` runs Philox4x64-10 (Random123) with the 128-bit
key ``(key, 0)`` from counter zero and converts consecutive word pairs
``(w0, w1)`` by Box-Muller::

    u1 = ((w0 >> 11) + 0.5) * 2**-53        # in (0, 1)
    u2 = (w1 >> 11) * 2**-53                 # in [0, 1)
    z0 = sqrt(-2 log u1) cos(2 pi u2)
    z1 = sqrt(-2 log u1) sin(2 pi u2)

Output ``2p`` and ``2p + 1`` come from words ``2p`` and ``2p + 1``, so a longer
request extends a shorter one without changing its prefix.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

TAG_KEYS = {
    "ensemble": 0x243F6A8885A308D3,
    "replication": 0x13198A2E03707344,
    "sampler": 0xA4093822299F31D0,
}


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix64_array(z: np.ndarray) -> np.ndarray:
    """Vectorized :func:`mix64` on ``uint64`` arrays (wrapping arithmetic)."""
    z = np.array(z, dtype=np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return z


def _tag_key(tag: str) -> int:
    try:
        return TAG_KEYS[tag]
    except KeyError:
        raise ValueError(f"unknown seed purpose tag {tag!r}; expected one of {sorted(TAG_KEYS)}") from None


def derive_seed(master: int, tag: str, index: int) -> int:
    """Derive a 64-bit child seed from ``(master, tag, index)``."""
    if index < 0:
        raise ValueError("index must be nonnegative")
    head = mix64((master & MASK64) ^ _tag_key(tag))
    return mix64(head + (index + 1) * GOLDEN)


def derive_seeds(master: int, tag: str, indices) -> np.ndarray:
    """Vectorized :func:`derive_seed` over an array of indices."""
    head = np.uint64(mix64((master & MASK64) ^ _tag_key(tag)))
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = head + (idx + np.uint64(1)) * np.uint64(GOLDEN)
    return mix64_array(z)


def normals_from_key(key: int, size: int) -> np.ndarray:
    """Return ``size`` standard normal deviates addressed by ``key``."""
    if size <= 0:
        return np.empty(0)
    npair = (size + 1) // 2
    words = np.random.Philox(key=key & MASK64).random_raw(2 * npair)
    w0 = words[0::2] >> np.uint64(11)
    w1 = words[1::2] >> np.uint64(11)
    u1 = w0.astype(np.float64)
    u1 += 0.5
    u1 *= 2.0**-53
    angle = w1.astype(np.float64)
    angle *= 2.0 * np.pi * 2.0**-53
    radius = np.log(u1)
    radius *= -2.0
    np.sqrt(radius, out=radius)
    out = np.empty(2 * npair)
    np.cos(angle, out=out[0::2])
    np.sin(angle, out=out[1::2])
    out[0::2] *= radius
    out[1::2] *= radius
    return out[:size]


def uniforms_from_key(key: int, size: int) -> np.ndarray:
    """Uniform deviates on ``[0, 1)`` addressed by ``key`` (53-bit resolution)."""
    if size <= 0:
        return np.empty(0)
    words = np.random.Philox(key=key & MASK64).random_raw(size)
    return (words >> np.uint64(11)).astype(np.float64) * 2.0**-53


def generator_from_key(key: int) -> np.random.Generator:
    """A numpy Generator on a Philox stream keyed by ``key``.

    Used only where a variable number of draws is needed (integer choices);
    Gaussian matrices always go through :func:`normals_from_key`.
    """
    return np.random.Generator(np.random.Philox(key=key & MASK64))
