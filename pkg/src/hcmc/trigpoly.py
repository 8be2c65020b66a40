"""Sparse trigonometric polynomials on the d-torus ``[0, 1)^d``.

A :class:`TrigPoly` stores a finite map ``k -> c_k`` and represents

    f(x) = sum_k c_k exp(2 pi i (k, x)).

Norms on the torus are estimated on equispaced grids produced by a zero-padded
inverse FFT.  The sup-norm estimate is the maximum modulus over a grid and is
therefore a lower bound on the true sup-norm; refining the grid by an integer
factor can only increase it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from hcmc.hypercross import layer_degrees, levels
from hcmc.seeding import derive_seed, uniforms_from_key

GRID_CAP = 2**26
"""Default maximum number of grid points for dense evaluation."""

RANDOM_POINTS = 10**6
"""Number of sample points used when a grid would exceed the cap."""

_EVAL_CHUNK = 2**22


class GridTooLargeError(ValueError):
    """Raised when a dense grid would exceed the configured point cap."""


def encode_keys(keys: np.ndarray, bound: int) -> np.ndarray:
    """Order-preserving scalar codes for integer rows with ``|k_l| <= bound``."""
    d = keys.shape[1]
    base = 2 * bound + 1
    if base**d >= 2**63:
        raise OverflowError("frequency range too large to index")
    codes = np.zeros(keys.shape[0], dtype=np.int64)
    for col in range(d):
        codes = codes * base + (keys[:, col] + bound)
    return codes


class TrigPoly:
    """Immutable sparse trigonometric polynomial.

    Parameters
    ----------
    d : int
        Torus dimension.
    keys : array_like of int, shape (N, d)
        Frequencies; must be distinct.
    values : array_like of complex, shape (N,)
        Coefficients.  Exact zeros are dropped.
    """

    __slots__ = ("d", "keys", "values")

    def __init__(self, d: int, keys=None, values=None):
        if int(d) != d or d < 1:
            raise ValueError(f"dimension must be a positive integer, got {d!r}")
        d = int(d)
        if keys is None or np.size(keys) == 0:
            keys = np.empty((0, d), dtype=np.int64)
            values = np.empty(0, dtype=np.complex128) if values is None else values
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, d)
        values = np.asarray(values, dtype=np.complex128).reshape(-1)
        if keys.shape[0] != values.shape[0]:
            raise ValueError(f"{keys.shape[0]} keys but {values.shape[0]} coefficients")
        keep = values != 0
        keys, values = keys[keep], values[keep]
        if keys.shape[0]:
            codes = encode_keys(keys, int(np.abs(keys).max()))
            order = np.argsort(codes, kind="stable")
            if np.any(codes[order][1:] == codes[order][:-1]):
                raise ValueError("duplicate frequencies")
            keys, values = keys[order], values[order]
        self._freeze(d, keys, values)

    @classmethod
    def _trusted(cls, d: int, keys: np.ndarray, values: np.ndarray) -> TrigPoly:
        """Wrap keys already sorted, distinct and paired with nonzero values."""
        obj = cls.__new__(cls)
        obj._freeze(d, keys, values)
        return obj

    def _freeze(self, d, keys, values) -> None:
        keys.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "values", values)

    def __setattr__(self, name, value):
        raise AttributeError("TrigPoly is immutable")

    # construction helpers

    @classmethod
    def zero(cls, d: int) -> TrigPoly:
        return cls(d)

    @classmethod
    def monomial(cls, k, coeff: complex = 1.0) -> TrigPoly:
        k = np.atleast_1d(np.asarray(k, dtype=np.int64))
        return cls(len(k), k[None, :], [coeff])

    @classmethod
    def from_dict(cls, d: int, mapping: dict) -> TrigPoly:
        if not mapping:
            return cls(d)
        keys = np.array([tuple(k) if np.ndim(k) else (k,) for k in mapping], dtype=np.int64)
        return cls(d, keys, list(mapping.values()))

    @classmethod
    def sum_of(cls, d: int, keys, values) -> TrigPoly:
        """Build a polynomial from possibly repeated frequencies by summing them."""
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, d)
        values = np.asarray(values, dtype=np.complex128).reshape(-1)
        if keys.shape[0] == 0:
            return cls(d)
        codes = encode_keys(keys, int(np.abs(keys).max()))
        _, first, inverse = np.unique(codes, return_index=True, return_inverse=True)
        acc = np.zeros(first.shape[0], dtype=np.complex128)
        np.add.at(acc, inverse.reshape(-1), values)
        keep = acc != 0
        return cls._trusted(d, keys[first][keep], acc[keep])

    def to_dict(self) -> dict:
        return {tuple(int(v) for v in k): complex(c) for k, c in zip(self.keys, self.values)}

    # queries

    def __len__(self) -> int:
        return self.keys.shape[0]

    @property
    def max_frequency(self) -> int:
        """Largest ``|k_l|`` over the support (0 for the zero polynomial)."""
        if len(self) == 0:
            return 0
        return int(np.abs(self.keys).max())

    def coefficients_at(self, query) -> np.ndarray:
        """Coefficients at the rows of ``query`` (zero outside the support)."""
        query = np.asarray(query, dtype=np.int64).reshape(-1, self.d)
        out = np.zeros(query.shape[0], dtype=np.complex128)
        if len(self) == 0 or query.shape[0] == 0:
            return out
        bound = max(self.max_frequency, int(np.abs(query).max()))
        mine = encode_keys(self.keys, bound)
        theirs = encode_keys(query, bound)
        pos = np.searchsorted(mine, theirs)
        pos_c = np.minimum(pos, len(mine) - 1)
        hit = mine[pos_c] == theirs
        out[hit] = self.values[pos_c[hit]]
        return out

    def coeff(self, k) -> complex:
        return complex(self.coefficients_at(np.atleast_1d(k)[None, :])[0])

    def restrict(self, mask) -> TrigPoly:
        """Keep only the terms where ``mask`` (aligned with :attr:`keys`) is true."""
        mask = np.asarray(mask, dtype=bool)
        return TrigPoly._trusted(self.d, self.keys[mask], self.values[mask])

    def is_real(self, tol: float = 1e-12) -> bool:
        """Whether ``c_{-k} = conj(c_k)`` for all ``k`` up to ``tol`` (relative)."""
        if len(self) == 0:
            return True
        mirrored = self.coefficients_at(-self.keys)
        scale = max(1.0, float(np.abs(self.values).max()))
        return bool(np.all(np.abs(mirrored - np.conj(self.values)) <= tol * scale))

    # arithmetic

    def _check_same(self, other: TrigPoly) -> None:
        if not isinstance(other, TrigPoly):
            raise TypeError(f"cannot combine TrigPoly with {type(other).__name__}")
        if other.d != self.d:
            raise ValueError(f"dimension mismatch: {self.d} vs {other.d}")

    def __add__(self, other: TrigPoly) -> TrigPoly:
        self._check_same(other)
        if len(other) == 0:
            return self
        if len(self) == 0:
            return other
        return TrigPoly.sum_of(
            self.d,
            np.concatenate([self.keys, other.keys]),
            np.concatenate([self.values, other.values]),
        )

    def __neg__(self) -> TrigPoly:
        return TrigPoly._trusted(self.d, self.keys, -self.values)

    def __sub__(self, other: TrigPoly) -> TrigPoly:
        self._check_same(other)
        return self + (-other)

    def __mul__(self, scalar) -> TrigPoly:
        if isinstance(scalar, TrigPoly):
            raise TypeError("product of polynomials is not supported")
        return TrigPoly(self.d, self.keys, self.values * complex(scalar))

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrigPoly):
            return NotImplemented
        return (
            self.d == other.d
            and self.keys.shape == other.keys.shape
            and bool(np.array_equal(self.keys, other.keys))
            and bool(np.array_equal(self.values, other.values))
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"TrigPoly(d={self.d}, terms={len(self)}, K={self.max_frequency})"


@dataclass(frozen=True)
class SmoothnessParams:
    """Parameters of a mixed-smoothness Sobolev space ``W_p^r``."""

    d: int
    r: float
    p: float = 2.0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d!r}")
        if not self.r >= 0:
            raise ValueError(f"smoothness must be nonnegative, got {self.r}")
        if not 1 < self.p < np.inf:
            raise ValueError(f"integrability p must lie in (1, inf), got {self.p}")


@dataclass(frozen=True)
class LayerSplit:
    low: TrigPoly
    mid: TrigPoly
    high: TrigPoly


def evaluate(f: TrigPoly, x) -> np.ndarray | complex:
    """Evaluate ``f`` at one point (shape ``(d,)``) or many (shape ``(P, d)``)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != f.d:
        raise ValueError(f"points have dimension {pts.shape[1]}, polynomial has {f.d}")
    out = np.zeros(pts.shape[0], dtype=np.complex128)
    if len(f):
        chunk = max(1, _EVAL_CHUNK // len(f))
        kt = f.keys.T.astype(np.float64)
        for start in range(0, pts.shape[0], chunk):
            phase = pts[start:start + chunk] @ kt
            phase -= np.floor(phase)
            out[start:start + chunk] = np.exp(2j * np.pi * phase) @ f.values
    return complex(out[0]) if single else out


def grid_values(f: TrigPoly, M: int, *, cap: int = GRID_CAP, workers: int | None = None) -> np.ndarray:
    """Values of ``f`` at ``x = (m_1/M, ..., m_d/M)`` as a ``(M,)*d`` array.

    Frequencies are folded modulo ``M`` before the transform, so the grid values
    are exact even when ``M <= 2K``.

    Raises
    ------
    GridTooLargeError
        If ``M**d`` exceeds ``cap``; use :func:`sup_norm_estimate`, which then
        falls back to random sampling.
    """
    M = int(M)
    if M < 1:
        raise ValueError("grid size must be positive")
    if M**f.d > cap:
        raise GridTooLargeError(
            f"grid of {M}^{f.d} points exceeds the cap of {cap}; "
            "use the random-sampling sup-norm estimator instead"
        )
    spectrum = np.zeros((M,) * f.d, dtype=np.complex128)
    if len(f):
        np.add.at(spectrum, tuple((f.keys % M).T), f.values)
    return scipy.fft.ifftn(spectrum, norm="forward", workers=workers)


def grid_size(f: TrigPoly, sigma: int = 4) -> int:
    """Points per coordinate used by :func:`sup_norm_estimate`."""
    return int(sigma) * (2 * f.max_frequency + 1)


def grid_fits(f: TrigPoly, sigma: int = 4, cap: int = GRID_CAP) -> bool:
    return grid_size(f, sigma) ** f.d <= cap


def sup_norm_estimate(
    f: TrigPoly,
    sigma: int = 4,
    *,
    cap: int = GRID_CAP,
    n_random: int = RANDOM_POINTS,
    seed: int = 0,
) -> float:
    """Lower estimate of ``sup |f|`` from an oversampled grid.

    The grid has ``sigma * (2K + 1)`` points per coordinate, ``K`` the largest
    frequency component.  When that grid exceeds ``cap`` points the maximum is
    taken over ``n_random`` seeded uniform points instead.  Both are lower
    bounds of the true supremum.
    """
    if sigma < 2:
        raise ValueError("oversampling factor must be at least 2")
    if len(f) == 0:
        return 0.0
    if grid_fits(f, sigma, cap):
        return float(np.abs(grid_values(f, grid_size(f, sigma), cap=cap)).max())
    key = derive_seed(seed, "sampler", 0)
    pts = uniforms_from_key(key, n_random * f.d).reshape(n_random, f.d)
    return float(np.abs(evaluate(f, pts)).max())


def lq_norm_estimate(f: TrigPoly, q: float, M: int | None = None, *, cap: int = GRID_CAP) -> float:
    """Grid quadrature ``(M^-d sum |f|^q)^(1/q)``; ``q = inf`` gives the grid max.

    For ``q = 2`` and ``M > 2K`` the result equals the coefficient l2 norm
    (discrete Parseval).  For other ``q`` it is a quadrature approximation of
    the integral whose error decays as ``M`` grows.
    """
    if not q > 0:
        raise ValueError("q must be positive")
    if len(f) == 0:
        return 0.0
    if M is None:
        M = grid_size(f, 4)
    mod = np.abs(grid_values(f, M, cap=cap))
    if np.isinf(q):
        return float(mod.max())
    return float(np.mean(mod**q) ** (1.0 / q))


def sobolev_norm_2(f: TrigPoly, r: float) -> float:
    """Exact ``W_2^r`` norm ``(sum_j 2^(2jr) sum_{k in Q_j} |c_k|^2)^(1/2)``."""
    if len(f) == 0:
        return 0.0
    j = layer_degrees(f.keys)
    weights = np.exp2(r * j.astype(np.float64))
    return float(np.linalg.norm(weights * np.abs(f.values)))


def sobolev_norm_numeric(f: TrigPoly, params: SmoothnessParams, M: int | None = None, *, cap: int = GRID_CAP) -> float:
    """``W_p^r`` norm through grid quadrature of the dyadic square function."""
    if params.d != f.d:
        raise ValueError(f"params for dimension {params.d}, polynomial has {f.d}")
    if len(f) == 0:
        return 0.0
    if M is None:
        M = grid_size(f, 4)
    s = levels(f.keys)
    blocks, inverse = np.unique(s, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    square = np.zeros((M,) * f.d)
    for b, level in enumerate(blocks):
        part = f.restrict(inverse == b)
        square += np.exp2(2.0 * params.r * level.sum()) * np.abs(grid_values(part, M, cap=cap)) ** 2
    sq = np.sqrt(square)
    return float(np.mean(sq**params.p) ** (1.0 / params.p))


def split_layers(f: TrigPoly, J: int, L: int) -> LayerSplit:
    """Partition ``f`` by layer degree into ``j <= J``, ``J < j <= L`` and ``j > L``."""
    if not 0 <= J <= L:
        raise ValueError(f"need 0 <= J <= L, got J={J}, L={L}")
    j = layer_degrees(f.keys) if len(f) else np.empty(0, dtype=np.int64)
    return LayerSplit(
        low=f.restrict(j <= J),
        mid=f.restrict((j > J) & (j <= L)),
        high=f.restrict(j > L),
    )
