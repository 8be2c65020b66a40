"""Monte Carlo and deterministic approximation of mixed-smoothness functions.

The linear Monte Carlo method with parameters ``J <= L`` reads the Fourier
coefficients on the hyperbolic cross ``Q_[J]`` directly (``n0 = |Q_[J]|``
values) and spends another ``n0`` random linear functionals on the layers
``J+1..L``::

    A(f) = sum_{k in Q_[J]} c_k e_k + (1/n0) sum_i L_i(f) g_i,
    L_i(f) = sum_{j=J+1}^{L} 2^{rj}  sum_{k in Q_j} xi_{i,k} c_k,
    g_i    = sum_{j=J+1}^{L} 2^{-rj} sum_{k in Q_j} xi_{i,k} e_k.

In the coordinates ``a_k = 2^{rj} c_k`` of the orthonormal basis
``2^{-rj} e_k`` of ``W_2^r`` this is a Gaussian sketch ``(1/n0) Xi^T Xi a``
shared by all sketched layers; columns follow the enumeration order of
:mod:`hcmc.hypercross`.

Information model: inputs are coefficient maps, and a method only sees them
through :class:`LinearInformation`, which counts every scalar it hands out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from hcmc.hypercross import budget_to_J, cross, cross_size, is_degraded_budget, layer_degrees, layers, truncation_depth
from hcmc.sketch import sketch_in_law, stream_sketch
from hcmc.trigpoly import SmoothnessParams, TrigPoly, encode_keys

SKETCH_ROUTES = ("ensemble", "law")


@dataclass(frozen=True)
class ApproxPlan:
    """All parameters of one run of the linear Monte Carlo method.

    ``budget`` is the information actually consumed (``2 * n0``);
    ``requested`` is the budget the plan was matched to.
    """

    params: SmoothnessParams
    J: int
    L: int
    n0: int
    budget: int
    seed: int
    variant: str = "complex"
    requested: int | None = None
    degraded: bool = False

    def __post_init__(self):
        if self.variant not in ("complex", "real"):
            raise ValueError(f"variant must be 'complex' or 'real', got {self.variant!r}")
        if not 0 <= self.J <= self.L:
            raise ValueError(f"need 0 <= J <= L, got J={self.J}, L={self.L}")
        if self.n0 != cross_size(self.params.d, self.J):
            raise ValueError("n0 must equal |Q_[J]|")
        if self.budget != 2 * self.n0:
            raise ValueError("budget must equal 2 * n0")
        _check_embedding(self.params.r)

    @property
    def sketch_columns(self) -> int:
        return cross_size(self.params.d, self.L) - self.n0


@dataclass(frozen=True)
class TwoStageParams:
    """Deterministic ``m``-term stage plus a randomized stage in ``W_2^{s_aux}``.

    ``plan`` carries the true smoothness ``r``; the randomized stage runs with
    weights built from ``s_aux``.
    """

    m: int
    s_aux: float
    plan: ApproxPlan

    def __post_init__(self):
        r = self.plan.params.r
        if self.m < 0:
            raise ValueError("m must be nonnegative")
        if not 0.5 < self.s_aux < r - 0.5:
            raise ValueError(
                f"auxiliary smoothness must satisfy 1/2 < s_aux < r - 1/2 = {r - 0.5}, got {self.s_aux}"
            )

    @property
    def stage_plan(self) -> ApproxPlan:
        params = replace(self.plan.params, r=self.s_aux, p=2.0)
        return replace(self.plan, params=params)


def _check_embedding(r: float) -> None:
    if not r > 0.5:
        raise ValueError(
            f"smoothness r = {r} is too small: W_2^r embeds into L_inf (and the "
            "method converges in sup-norm) only for r > 1/2"
        )


def default_L(d: int, r: float, J: int) -> int:
    """``max(J + 1, ceil(2rJ / (2r - 1)) + d)``."""
    _check_embedding(r)
    return max(J + 1, math.ceil(2 * r * J / (2 * r - 1)) + d)


def make_plan(params: SmoothnessParams, J: int, L: int | None = None, seed: int = 0, variant: str = "complex") -> ApproxPlan:
    """Plan with an explicit exact-recovery depth ``J``."""
    _check_embedding(params.r)
    if L is None:
        L = default_L(params.d, params.r, J)
    n0 = cross_size(params.d, J)
    return ApproxPlan(params=params, J=J, L=L, n0=n0, budget=2 * n0, seed=seed, variant=variant, requested=2 * n0)


def plan_from_budget(params: SmoothnessParams, n: int, L_override: int | None = None, seed: int = 0, variant: str = "complex") -> ApproxPlan:
    """Match an information budget ``n`` to ``J`` and choose ``L``."""
    _check_embedding(params.r)
    J = budget_to_J(params.d, n)
    L = default_L(params.d, params.r, J) if L_override is None else int(L_override)
    n0 = cross_size(params.d, J)
    return ApproxPlan(
        params=params, J=J, L=L, n0=n0, budget=2 * n0, seed=seed, variant=variant,
        requested=n, degraded=is_degraded_budget(params.d, n),
    )


def two_stage_params(params: SmoothnessParams, n: int, m: int, s_aux: float | None = None,
                     L_override: int | None = None, seed: int = 0) -> TwoStageParams:
    """Two-stage parameters; ``n`` is the budget of the randomized stage.

    ``s_aux`` defaults to ``r / 2``, the midpoint of ``(1/2, r - 1/2)``.  The
    default ``L`` is chosen for the randomized stage's smoothness ``s_aux``.
    """
    if s_aux is None:
        s_aux = params.r / 2
    if not 0.5 < s_aux < params.r - 0.5:
        raise ValueError(f"auxiliary smoothness must satisfy 1/2 < s_aux < r - 1/2, got {s_aux}")
    J = budget_to_J(params.d, n)
    L = default_L(params.d, s_aux, J) if L_override is None else int(L_override)
    n0 = cross_size(params.d, J)
    plan = ApproxPlan(params=params, J=J, L=L, n0=n0, budget=2 * n0, seed=seed,
                      requested=n, degraded=is_degraded_budget(params.d, n))
    return TwoStageParams(m=m, s_aux=s_aux, plan=plan)


class LinearInformation:
    """Counting access to the coefficients of an input function.

    ``coefficients`` hands out ``c_k`` one scalar per key; ``functionals``
    evaluates one linear functional per row of a weight matrix acting on the
    sketch coordinates.  ``tally`` records both counts.
    """

    def __init__(self, f: TrigPoly, tally: dict | None = None):
        self._f = f
        self.tally = tally if tally is not None else {}
        self.tally.setdefault("coefficients", 0)
        self.tally.setdefault("functionals", 0)

    def coefficients(self, keys) -> np.ndarray:
        keys = np.asarray(keys)
        self.tally["coefficients"] += keys.shape[0]
        return self._f.coefficients_at(keys)

    def bind(self, coords):
        """Return a callable ``X -> X @ coords`` that counts rows as functionals."""
        def apply(rows: np.ndarray) -> np.ndarray:
            self.tally["functionals"] += rows.shape[0]
            return rows @ coords
        return apply

    # sketch coordinates are only ever combined through counted functionals
    def coordinates(self, keys, weights) -> np.ndarray:
        return weights * self._f.coefficients_at(keys)

    def real_coordinates(self, keys, degrees, r: float) -> np.ndarray:
        return real_coordinates(self._f, keys, degrees, r)


def _check_input(f: TrigPoly, plan: ApproxPlan) -> None:
    if f.d != plan.params.d:
        raise ValueError(f"input has dimension {f.d}, plan expects {plan.params.d}")


def _sketch(info_apply, coords, plan: ApproxPlan, sketch: str, threads: int, info: LinearInformation):
    if sketch not in SKETCH_ROUTES:
        raise ValueError(f"unknown sketch route {sketch!r}; expected one of {SKETCH_ROUTES}")
    if not np.any(coords):
        # every functional reads zero and (1/n0) Xi^T 0 = 0 exactly; skip drawing the ensemble
        info.tally["functionals"] += plan.n0
        return np.zeros(coords.shape[0], dtype=coords.dtype)
    if sketch == "ensemble":
        return stream_sketch(plan.seed, plan.n0, coords, threads=threads, functionals=info_apply).output_coeffs
    if sketch == "law":
        info.tally["functionals"] += plan.n0
        return sketch_in_law(coords, plan.n0, plan.seed).output_coeffs
    raise ValueError(f"unknown sketch route {sketch!r}; expected one of {SKETCH_ROUTES}")


def approximate(f: TrigPoly, plan: ApproxPlan, *, sketch: str = "ensemble", threads: int = 1,
                tally: dict | None = None) -> TrigPoly:
    """Linear Monte Carlo approximation of ``f`` (complex basis).

    Coefficients on ``Q_[J]`` are reproduced exactly, layers ``J+1..L`` receive
    the sketch reconstruction, higher layers are dropped.  ``sketch="law"``
    replaces the ensemble by an exact-in-distribution draw (see
    :func:`hcmc.sketch.sketch_in_law`).
    """
    _check_input(f, plan)
    d, r = plan.params.d, plan.params.r
    info = LinearInformation(f, tally)
    low_keys = cross(d, plan.J)
    low = info.coefficients(low_keys)
    mid_keys, mid_j = layers(d, plan.J + 1, plan.L)
    if mid_keys.shape[0] == 0:
        return TrigPoly(d, low_keys, low)
    up = np.exp2(r * mid_j.astype(np.float64))
    coords = info.coordinates(mid_keys, up)
    b = _sketch(info.bind(coords), coords, plan, sketch, threads, info)
    mid = b / up
    return TrigPoly(d, np.concatenate([low_keys, mid_keys]), np.concatenate([low, mid]))


def _positive(keys: np.ndarray) -> np.ndarray:
    """Whether the first nonzero entry of each row is positive."""
    nz = keys != 0
    first = np.argmax(nz, axis=1)
    lead = keys[np.arange(keys.shape[0]), first]
    return lead > 0


def _mirror_index(keys: np.ndarray) -> np.ndarray:
    """Position of ``-k`` for every row ``k`` of a mirror-symmetric key set."""
    bound = int(np.abs(keys).max())
    codes = encode_keys(keys, bound)
    order = np.argsort(codes)
    return order[np.searchsorted(codes[order], encode_keys(-keys, bound))]


def real_coordinates(f: TrigPoly, keys, degrees, r: float) -> np.ndarray:
    """Coordinates of ``f`` in the real basis ``2^{-rj} sqrt(2) cos / sin``.

    Each row ``k`` of ``keys`` with positive leading entry maps to the cosine
    coordinate of the pair ``{k, -k}``; its mirror ``-k`` maps to the sine
    coordinate.  For ``f = A cos(2 pi (k, x)) + B sin(2 pi (k, x))`` the
    coordinates are ``A 2^{rj} / sqrt(2)`` and ``B 2^{rj} / sqrt(2)``.
    """
    keys = np.asarray(keys)
    pos = _positive(keys)
    rep = np.where(pos[:, None], keys, -keys)
    c = f.coefficients_at(rep)
    scale = np.sqrt(2.0) * np.exp2(r * np.asarray(degrees, dtype=np.float64))
    return np.where(pos, scale * c.real, -scale * c.imag)


def approximate_real(f: TrigPoly, plan: ApproxPlan, *, sketch: str = "ensemble", threads: int = 1,
                     tally: dict | None = None) -> TrigPoly:
    """Real-basis variant: real input gives real output.

    The pair ``e_k, e_{-k}`` of each sketched layer is replaced by
    ``2^{-rj} sqrt(2) cos(2 pi (k, .))`` and ``2^{-rj} sqrt(2) sin(2 pi (k, .))``,
    each with its own Gaussian column.

    Raises
    ------
    ValueError
        If ``f`` lacks conjugate symmetry ``c_{-k} = conj(c_k)`` (tolerance 1e-12).
    """
    _check_input(f, plan)
    if not f.is_real(1e-12):
        raise ValueError("input is not real-valued: coefficients lack conjugate symmetry")
    d, r = plan.params.d, plan.params.r
    info = LinearInformation(f, tally)
    low_keys = cross(d, plan.J)
    low = info.coefficients(low_keys)
    mid_keys, mid_j = layers(d, plan.J + 1, plan.L)
    if mid_keys.shape[0] == 0:
        return TrigPoly(d, low_keys, low)
    coords = info.real_coordinates(mid_keys, mid_j, r)
    b = np.real(_sketch(info.bind(coords), coords, plan, sketch, threads, info))
    # back to exponential coefficients: c_k = 2^{-rj} (alpha - i beta) / sqrt(2)
    pos = _positive(mid_keys)
    down = np.exp2(-r * mid_j.astype(np.float64)) / np.sqrt(2.0)
    partner = _mirror_index(mid_keys)
    alpha = np.where(pos, b, b[partner])
    beta = np.where(pos, b[partner], b)
    mid = down * np.where(pos, alpha - 1j * beta, alpha + 1j * beta)
    return TrigPoly(d, np.concatenate([low_keys, mid_keys]), np.concatenate([low, mid]))


def truncation_baseline(f: TrigPoly, n: int, params: SmoothnessParams | None = None) -> TrigPoly:
    """Deterministic hyperbolic truncation spending all ``n`` values on ``Q_[J*]``."""
    if params is not None and params.d != f.d:
        raise ValueError(f"input has dimension {f.d}, params expect {params.d}")
    J_star = truncation_depth(f.d, n)
    if len(f) == 0:
        return f
    return f.restrict(layer_degrees(f.keys) <= J_star)


def m_term_projection(f: TrigPoly, m: int, s_aux: float) -> TrigPoly:
    """Keep the ``m`` terms with the largest ``2^{s_aux j(k)} |c_k|``.

    Ties go to the lexicographically smaller frequency.  Since the weighted
    exponentials are orthogonal in ``W_2^{s_aux}``, this is the best
    ``m``-term restriction of ``f`` in that norm.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    if m >= len(f):
        return f
    if m == 0:
        return TrigPoly.zero(f.d)
    score = np.exp2(s_aux * layer_degrees(f.keys).astype(np.float64)) * np.abs(f.values)
    # keys are stored in lexicographic order, so a stable sort breaks ties correctly
    order = np.argsort(-score, kind="stable")
    keep = np.zeros(len(f), dtype=bool)
    keep[order[:m]] = True
    return f.restrict(keep)


def two_stage_approximate(f: TrigPoly, ts: TwoStageParams, *, sketch: str = "ensemble", threads: int = 1,
                          tally: dict | None = None) -> TrigPoly:
    """``h + A(f - h)`` with ``h`` the ``m``-term projection of ``f``."""
    h = m_term_projection(f, ts.m, ts.s_aux)
    if tally is not None:
        tally["m_term"] = tally.get("m_term", 0) + len(h)
    return h + approximate(f - h, ts.stage_plan, sketch=sketch, threads=threads, tally=tally)
