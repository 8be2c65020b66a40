"""Rank-n Gaussian sketching of coefficient vectors.

For an ``n x m`` matrix ``Xi`` of i.i.d. standard normals the map

    a  ->  b = (1/n) Xi^T (Xi a)

is linear, has rank at most ``n`` and is unbiased: ``E b = a``.  Row ``i`` of
``Xi`` is ``normals_from_key(derive_seed(seed, "ensemble", i), m)``, so any row
can be regenerated independently and appending columns never changes the
existing ones.

Two execution routes produce the sketch of a fixed input:

* the ensemble route (:func:`sketch_apply`, :func:`stream_sketch`) uses the
  addressed ensemble itself, one row block at a time;
* the law route (:func:`sketch_in_law`) draws ``b`` from its exact distribution
  in ``O(n + m)`` operations, for configurations where ``n * m`` normals per
  replication are too expensive.  It is used only for error estimation.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from hcmc.seeding import derive_seed, normals_from_key

ENSEMBLE_CAP = 2**26
"""Maximum number of entries of a materialized ensemble."""

BLOCK_ENTRIES = 2**20
"""Target entries per row block in the streaming sketch."""


@dataclass(frozen=True)
class GaussianEnsemble:
    """Materialized ``n x m`` matrix of standard normals addressed by ``seed``."""

    n: int
    m: int
    seed: int
    entries: np.ndarray = field(repr=False)
    column_order: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class SketchResult:
    output_coeffs: np.ndarray
    rank_used: int
    oversized: bool = False
    """True when ``n >= m``; no error guarantee applies in that regime."""


def ensemble_rows(seed: int, rows, m: int) -> np.ndarray:
    """Rows ``rows`` of the ensemble with ``m`` columns."""
    rows = list(rows)
    out = np.empty((len(rows), m))
    for i, row in enumerate(rows):
        out[i] = normals_from_key(derive_seed(seed, "ensemble", row), m)
    return out


def draw_ensemble(n: int, m: int, seed: int, *, column_order=None, cap: int = ENSEMBLE_CAP) -> GaussianEnsemble:
    """Materialize the full ensemble.

    Raises
    ------
    MemoryError
        If ``n * m`` exceeds ``cap``.
    """
    if n < 1 or m < 1:
        raise ValueError(f"ensemble needs n, m >= 1, got n={n}, m={m}")
    if n * m > cap:
        raise MemoryError(f"ensemble of {n}x{m} entries exceeds the cap of {cap}")
    entries = ensemble_rows(seed, range(n), m)
    entries.setflags(write=False)
    if column_order is not None:
        column_order = np.asarray(column_order)
        if column_order.shape[0] != m:
            raise ValueError("column_order must have one row per column")
    return GaussianEnsemble(n=n, m=m, seed=seed, entries=entries, column_order=column_order)


def sketch_apply(ens: GaussianEnsemble, a) -> SketchResult:
    """``b = (1/n) Xi^T (Xi a)``, as two matrix-vector products."""
    a = np.asarray(a)
    if a.shape != (ens.m,):
        raise ValueError(f"input of shape {a.shape} does not match {ens.m} columns")
    y = ens.entries @ a
    b = (ens.entries.T @ y) / ens.n
    return SketchResult(output_coeffs=b, rank_used=ens.n, oversized=ens.n >= ens.m)


def _block_partial(seed: int, rows: range, a: np.ndarray, functionals=None) -> np.ndarray:
    X = ensemble_rows(seed, rows, a.shape[0])
    y = X @ a if functionals is None else functionals(X)
    return X.T @ y


def stream_sketch(seed: int, n: int, a, *, threads: int = 1, functionals=None) -> SketchResult:
    """Ensemble-route sketch without materializing ``Xi``.

    Rows are processed in blocks of fixed size (independent of ``threads``) and
    the block contributions are summed in block order, so the result is
    bit-identical for every thread count.

    ``functionals``, if given, replaces ``X @ a`` for each row block ``X``; the
    approximation algorithms use it to route information access through a
    counting wrapper.
    """
    a = np.asarray(a)
    m = a.shape[0]
    if n < 1 or m < 1:
        raise ValueError(f"sketch needs n, m >= 1, got n={n}, m={m}")
    per_block = max(1, BLOCK_ENTRIES // m)
    blocks = [range(lo, min(n, lo + per_block)) for lo in range(0, n, per_block)]
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(lambda rows: _block_partial(seed, rows, a, functionals), blocks))
    else:
        partials = [_block_partial(seed, rows, a, functionals) for rows in blocks]
    b = partials[0].copy()
    for p in partials[1:]:
        b += p
    b /= n
    return SketchResult(output_coeffs=b, rank_used=n, oversized=n >= m)


def sketch_in_law(a, n: int, seed: int) -> SketchResult:
    """Draw ``(1/n) Xi^T Xi a`` from its exact distribution for a fixed ``a``.

    Let ``U`` be an orthonormal basis of ``span{Re a, Im a}`` and ``P = I - U U^T``.
    Then ``G = Xi U`` has i.i.d. standard normal entries, ``Xi P`` is independent
    of ``G``, and with ``Y = [Re(Xi a), Im(Xi a)]``

        Xi^T (Xi a) = U G^T (Xi a) + P Z S (1, i)^T,

    where ``Z`` is an ``m x 2`` standard normal matrix and ``S`` is the symmetric
    square root of ``Y^T Y``.  Only ``O(n + m)`` normals are needed.
    """
    a = np.asarray(a, dtype=np.complex128)
    m = a.shape[0]
    if n < 1 or m < 1:
        raise ValueError(f"sketch needs n, m >= 1, got n={n}, m={m}")
    if not np.any(a):
        return SketchResult(output_coeffs=np.zeros(m, dtype=np.complex128), rank_used=n, oversized=n >= m)
    # any orthonormal U with [Re a, Im a] = U R works, degenerate columns included
    U, R = np.linalg.qr(np.stack([a.real, a.imag], axis=1))
    rank = U.shape[1]
    draws = normals_from_key(derive_seed(seed, "ensemble", 1 << 62), n * rank + 2 * m)
    G = draws[: n * rank].reshape(n, rank)
    Z = draws[n * rank:].reshape(m, 2)
    Y = G @ R
    y = Y[:, 0] + 1j * Y[:, 1]
    gram = Y.T @ Y
    w, V = np.linalg.eigh(gram)
    S = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
    Z = Z - U @ (U.T @ Z)
    ortho = Z @ S
    b = U @ (G.T @ y) + ortho[:, 0] + 1j * ortho[:, 1]
    return SketchResult(output_coeffs=b / n, rank_used=n, oversized=n >= m)


def split_complex(a) -> tuple[np.ndarray, np.ndarray]:
    """Real and imaginary parts, ``a = re + 1j * im``."""
    a = np.asarray(a)
    return np.real(a).astype(np.float64), np.imag(a).astype(np.float64)
