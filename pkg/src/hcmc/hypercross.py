"""Dyadic blocks, hyperbolic layers and their cardinalities.

A smoothness multi-index ``s`` in N_0^d selects the dyadic block

    rho(s) = {k in Z^d : floor(2**(s_l - 1)) <= |k_l| < 2**s_l for every l},

and the hyperbolic layer ``Q_j`` is the union of all blocks with ``|s|_1 = j``.
The cumulative cross ``Q_[J]`` collects layers ``0..J``.  Blocks partition
``Z^d``, so every frequency has a unique level ``s`` (see :func:`layer_of`).

Frequency sets are returned as ``(N, d)`` ``int64`` arrays.  Iteration order is
lexicographic on ``(j, s, k)``; columns of Gaussian ensembles refer to this order,
so it must never change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np

INDEX_LIMIT = 2**63 - 1
"""Largest cardinality usable as an array dimension."""


@dataclass(frozen=True)
class LayerStats:
    d: int
    j: int
    compositions: int
    layer_size: int
    cumulative_size: int


def _check_dim(d: int) -> None:
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d!r}")


def _check_level(s) -> tuple[int, ...]:
    s = tuple(int(v) for v in s)
    if not s:
        raise ValueError("multi-index must have at least one entry")
    if any(v < 0 for v in s):
        raise ValueError(f"multi-index entries must be nonnegative, got {s}")
    return s


def compositions(d: int, j: int) -> Iterator[tuple[int, ...]]:
    """All ``s`` in N_0^d with ``|s|_1 = j``, in lexicographic order."""
    _check_dim(d)
    if j < 0:
        raise ValueError("layer degree must be nonnegative")
    if d == 1:
        yield (j,)
        return
    for head in range(j + 1):
        for tail in compositions(d - 1, j - head):
            yield (head,) + tail


def composition_count(d: int, j: int) -> int:
    """Exact number of compositions, ``C(d + j - 1, d - 1)``."""
    _check_dim(d)
    if j < 0:
        raise ValueError("layer degree must be nonnegative")
    return math.comb(d + j - 1, d - 1)


def _axis_values(level: int) -> np.ndarray:
    if level == 0:
        return np.zeros(1, dtype=np.int64)
    lo, hi = 1 << (level - 1), 1 << level
    pos = np.arange(lo, hi, dtype=np.int64)
    return np.concatenate([-pos[::-1], pos])


@lru_cache(maxsize=4096)
def _block_cached(s: tuple[int, ...]) -> np.ndarray:
    axes = [_axis_values(v) for v in s]
    grids = np.meshgrid(*axes, indexing="ij")
    out = np.stack([g.ravel() for g in grids], axis=1)
    out.setflags(write=False)
    return out


def block(s, d: int | None = None) -> np.ndarray:
    """Frequencies of the dyadic block ``rho(s)`` in lexicographic order.

    Raises
    ------
    ValueError
        If ``d`` is given and differs from ``len(s)``.
    """
    s = _check_level(s)
    if d is not None and d != len(s):
        raise ValueError(f"multi-index {s} does not have dimension {d}")
    if sum(s) > 62:
        raise OverflowError("block cardinality exceeds the addressable range")
    return _block_cached(s)


@lru_cache(maxsize=256)
def _layer_cached(d: int, j: int) -> np.ndarray:
    parts = [_block_cached(s) for s in compositions(d, j)]
    out = np.concatenate(parts, axis=0)
    out.setflags(write=False)
    return out


def layer(d: int, j: int) -> np.ndarray:
    """The hyperbolic layer ``Q_j`` as a disjoint union of blocks."""
    _check_dim(d)
    if j < 0:
        raise ValueError("layer degree must be nonnegative")
    layer_stats(d, j)  # overflow guard
    return _layer_cached(d, j)


def layers(d: int, first: int, last: int) -> tuple[np.ndarray, np.ndarray]:
    """Frequencies of ``Q_first, ..., Q_last`` and the layer degree of each row.

    An empty range (``last < first``) yields empty arrays.
    """
    _check_dim(d)
    if first < 0:
        raise ValueError("layer degree must be nonnegative")
    if last < first:
        return np.empty((0, d), dtype=np.int64), np.empty(0, dtype=np.int64)
    parts = [layer(d, j) for j in range(first, last + 1)]
    degrees = [np.full(len(p), j, dtype=np.int64) for j, p in zip(range(first, last + 1), parts)]
    return np.concatenate(parts, axis=0), np.concatenate(degrees)


def cross(d: int, J: int) -> np.ndarray:
    """The hyperbolic cross ``Q_[J]`` (layers ``0..J``)."""
    return layers(d, 0, J)[0]


def levels(keys) -> np.ndarray:
    """Dyadic level ``s`` of every row of ``keys`` (vectorized :func:`layer_of`)."""
    k = np.abs(np.asarray(keys, dtype=np.int64))
    if k.ndim != 2:
        raise ValueError("keys must be a 2-d array of shape (N, d)")
    # s_l is the bit length of |k_l|
    s = np.zeros(k.shape, dtype=np.int64)
    v = k.copy()
    while v.any():
        s += v > 0
        v >>= 1
    return s


def layer_degrees(keys) -> np.ndarray:
    """Layer degree ``j = |s|_1`` of every row of ``keys``."""
    return levels(keys).sum(axis=1)


def layer_of(k) -> tuple[tuple[int, ...], int]:
    """Return ``(s, j)`` with ``k`` in ``rho(s)`` and ``j = |s|_1``."""
    k = tuple(int(v) for v in k)
    if not k:
        raise ValueError("frequency must have at least one entry")
    s = tuple(abs(v).bit_length() for v in k)
    return s, sum(s)


def layer_stats(d: int, j: int) -> LayerStats:
    """Exact sizes of ``Q_j`` and ``Q_[j]``.

    Raises
    ------
    OverflowError
        When a count no longer fits a signed 64-bit array dimension.
    """
    comp = composition_count(d, j)
    size = comp << j
    cumulative = sum(composition_count(d, i) << i for i in range(j + 1))
    if cumulative > INDEX_LIMIT:
        raise OverflowError(
            f"|Q_[{j}]| = {cumulative} in dimension {d} exceeds the 64-bit index range"
        )
    return LayerStats(d=d, j=j, compositions=comp, layer_size=size, cumulative_size=cumulative)


def cross_size(d: int, J: int) -> int:
    """``|Q_[J]|``; zero for ``J < 0``."""
    if J < 0:
        return 0
    return layer_stats(d, J).cumulative_size


def budget_to_J(d: int, n: int) -> int:
    """Largest ``J >= 0`` with ``2 |Q_[J]| <= n``.

    If even ``J = 0`` does not fit, ``0`` is returned and
    :func:`is_degraded_budget` reports the shortfall.
    """
    _check_dim(d)
    if n < 2:
        raise ValueError(f"information budget must be at least 2, got {n}")
    J = 0
    while 2 * cross_size(d, J + 1) <= n:
        J += 1
    return J


def is_degraded_budget(d: int, n: int) -> bool:
    return 2 * cross_size(d, 0) > n


def truncation_depth(d: int, n: int) -> int:
    """Largest ``J`` with ``|Q_[J]| <= n`` (whole budget spent on coefficients)."""
    _check_dim(d)
    if n < 1:
        raise ValueError(f"budget must be at least 1, got {n}")
    J = 0
    while cross_size(d, J + 1) <= n:
        J += 1
    return J


def degree(keys) -> int:
    """``max |k|_1`` over a frequency set."""
    k = np.asarray(keys, dtype=np.int64)
    if k.size == 0:
        return 0
    return int(np.abs(k).sum(axis=1).max())
