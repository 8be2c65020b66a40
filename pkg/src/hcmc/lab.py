"""Empirical error estimation for the approximation methods.

Errors are measured in sup-norm with :func:`hcmc.trigpoly.sup_norm_estimate`.
Replication ``i`` of an experiment with master seed ``s`` runs the method with
seed ``derive_seed(s, "replication", i)``; replications may run on several
threads but are aggregated in index order, so results do not depend on the
thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from hcmc.approx import (
    ApproxPlan,
    plan_from_budget,
    TwoStageParams,
    approximate,
    approximate_real,
    truncation_baseline,
    two_stage_approximate,
)
from hcmc.hypercross import budget_to_J, cross, degree, layer, layers
from hcmc.seeding import derive_seed, generator_from_key, normals_from_key
from hcmc.trigpoly import GRID_CAP, TrigPoly, grid_fits, lq_norm_estimate, sobolev_norm_2, split_layers, sup_norm_estimate

ALGORITHMS = ("approximate", "approximate_real", "two_stage", "truncation_baseline")
FAMILIES = ("random_ball", "single_layer", "flat_layer")

LAW_ROUTE_THRESHOLD = 2**22
"""Ensemble entries per replication above which ``sketch="auto"`` uses the law route."""


class MeanEstimate(NamedTuple):
    mean: float
    stderr: float


@dataclass(frozen=True)
class TestFunctionSpec:
    """A unit-ball test function.

    ``max_layer`` is the top layer of the support for ``random_ball`` and the
    single layer used by ``single_layer`` and ``flat_layer``.
    """

    __test__ = False  # not a pytest class

    kind: str
    d: int
    r: float
    max_layer: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise ValueError(f"unknown test family {self.kind!r}; expected one of {FAMILIES}")
        if self.max_layer < 0:
            raise ValueError("max_layer must be nonnegative")


@dataclass(frozen=True)
class ErrorRow:
    n: int
    J: int
    L: int
    family: str
    reps: int
    mean_err: float
    stderr: float
    seed: int
    flags: tuple[str, ...] = ()


@dataclass
class ErrorReport:
    rows: list[ErrorRow] = field(default_factory=list)

    def points(self) -> list[tuple[int, float]]:
        return [(row.n, row.mean_err) for row in self.rows]


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual_rms: float
    predictor: str


@dataclass(frozen=True)
class BoundReport:
    left_mean: float
    left_stderr: float
    right_mean: float
    right_stderr: float
    margin: float
    """``(right - left) / combined stderr``; the bound is accepted when ``>= -4``."""
    holds: bool


def sample_unit_ball(spec: TestFunctionSpec) -> TrigPoly:
    """Draw a test function of unit ``W_2^r`` norm.

    * ``random_ball``: i.i.d. complex Gaussian coefficients on ``Q_[max_layer]``,
      rescaled to norm one;
    * ``single_layer``: one basis function ``2^{-rj} e_k`` with ``k`` uniform in
      ``Q_j``, ``j = max_layer``;
    * ``flat_layer``: equal positive coefficients ``2^{-rj} / sqrt(|Q_j|)`` on
      all of ``Q_j``; its sup-norm ``2^{-rj} sqrt(|Q_j|)`` is attained at 0.
    """
    d, r, j = spec.d, spec.r, spec.max_layer
    key = derive_seed(spec.seed, "sampler", 0)
    if spec.kind == "random_ball":
        keys = cross(d, j)
        z = normals_from_key(key, 2 * keys.shape[0])
        f = TrigPoly(d, keys, z[0::2] + 1j * z[1::2])
    elif spec.kind == "single_layer":
        keys = layer(d, j)
        if keys.shape[0] == 0:
            raise ValueError("empty layer")
        pick = int(generator_from_key(key).integers(keys.shape[0]))
        return TrigPoly(d, keys[pick:pick + 1], [2.0 ** (-r * j)])
    else:
        keys = layer(d, j)
        if keys.shape[0] == 0:
            raise ValueError("empty layer")
        f = TrigPoly(d, keys, np.ones(keys.shape[0]))
    return f * (1.0 / sobolev_norm_2(f, r))


def _derived_plan_seed(master: int, index: int) -> int:
    return derive_seed(master, "replication", index)


def sketch_route(plan: ApproxPlan, sketch: str = "auto") -> str:
    """Resolve ``"auto"`` to the ensemble or the law route for ``plan``."""
    if sketch != "auto":
        return sketch
    return "ensemble" if plan.n0 * plan.sketch_columns <= LAW_ROUTE_THRESHOLD else "law"


def _run_once(algorithm: str, f: TrigPoly, config, seed: int, sketch: str) -> TrigPoly:
    if algorithm == "approximate":
        plan = replace(config, seed=seed)
        return approximate(f, plan, sketch=sketch_route(plan, sketch))
    if algorithm == "approximate_real":
        plan = replace(config, seed=seed)
        return approximate_real(f, plan, sketch=sketch_route(plan, sketch))
    if algorithm == "two_stage":
        ts = replace(config, plan=replace(config.plan, seed=seed))
        return two_stage_approximate(f, ts, sketch=sketch_route(ts.stage_plan, sketch))
    if algorithm == "truncation_baseline":
        return truncation_baseline(f, int(config))
    raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")


def _mean_stderr(values: np.ndarray) -> MeanEstimate:
    if values.shape[0] < 2:
        return MeanEstimate(float(values.mean()), 0.0)
    return MeanEstimate(float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.shape[0])))


def _replicate(fn, R: int, threads: int) -> np.ndarray:
    if threads > 1 and R > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return np.array(list(pool.map(fn, range(R))))
    return np.array([fn(i) for i in range(R)])


def expected_error(algorithm: str, f: TrigPoly, config, R: int, master_seed: int, *,
                   sigma: int = 4, sketch: str = "auto", threads: int = 1) -> MeanEstimate:
    """Mean and standard error of ``sup |f - A(f)|`` over ``R`` replications.

    ``config`` is an :class:`ApproxPlan` (``approximate``, ``approximate_real``),
    a :class:`TwoStageParams` (``two_stage``) or an integer budget
    (``truncation_baseline``, which is deterministic: ``R`` is forced to 1).
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    if algorithm == "truncation_baseline":
        err = sup_norm_estimate(f - truncation_baseline(f, int(config)), sigma)
        return MeanEstimate(err, 0.0)
    if R < 2:
        raise ValueError("at least two replications are needed for a standard error")

    def one(i: int) -> float:
        out = _run_once(algorithm, f, config, _derived_plan_seed(master_seed, i), sketch)
        return sup_norm_estimate(f - out, sigma)

    return _mean_stderr(_replicate(one, R, threads))


def expected_sup_norm(E, q: float, R: int, seed: int, *, weights=None, sigma: int = 4,
                      threads: int = 1) -> MeanEstimate:
    """Mean norm of ``sum_{k in E} w_k xi_k e_k`` with i.i.d. standard normal ``xi_k``.

    ``q = inf`` uses the sup-norm estimate, finite ``q`` the grid ``L_q`` norm.
    """
    E = np.asarray(E, dtype=np.int64)
    if E.ndim != 2 or E.shape[0] < 1:
        raise ValueError("frequency set must be a nonempty (N, d) array")
    w = np.ones(E.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    d = E.shape[1]

    def one(i: int) -> float:
        xi = normals_from_key(derive_seed(seed, "sampler", i + 1), E.shape[0])
        f = TrigPoly(d, E, w * xi)
        if np.isinf(q):
            return sup_norm_estimate(f, sigma)
        return lq_norm_estimate(f, q, sigma * (2 * f.max_frequency + 1))

    return _mean_stderr(_replicate(one, R, threads))


def lemma_bound(E, q: float) -> float:
    """Shape of the expected-norm bound: ``sqrt(|E| log2 deg E)`` or ``sqrt(q |E|)``."""
    size = len(E)
    if np.isinf(q):
        deg = degree(E)
        if deg < 2:
            raise ValueError("the sup-norm bound needs deg E >= 2")
        return math.sqrt(size * math.log2(deg))
    return math.sqrt(q * size)


def fit_rate(points, predictor: str = "raw_log", d: int | None = None) -> RateFit:
    """Least-squares fit of ``log2(error)`` against a budget predictor.

    ``raw_log`` regresses on ``log2 n`` (slope ``-r`` expected);
    ``hyperbolic`` regresses on ``log2((log2 n)^(d-1) / n)`` so that the main
    rate appears as slope ``r``.
    """
    pts = [(float(n), float(e)) for n, e in points]
    if len(pts) < 3:
        raise ValueError("at least three points are needed for a rate fit")
    n = np.array([p[0] for p in pts])
    err = np.array([p[1] for p in pts])
    if np.any(err <= 0):
        raise ValueError("errors must be positive for a log-log fit")
    if predictor == "raw_log":
        x = np.log2(n)
        label = "log2(n)"
    elif predictor == "hyperbolic":
        if d is None:
            raise ValueError("the hyperbolic predictor needs the dimension d")
        x = (d - 1) * np.log2(np.log2(n)) - np.log2(n)
        label = f"log2((log2 n)^{d - 1} / n)"
    else:
        raise ValueError(f"unknown predictor {predictor!r}")
    y = np.log2(err)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return RateFit(float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))), label)


def bound_check(plan: ApproxPlan, f: TrigPoly, R: int, master_seed: int = 0, *, sigma: int = 4,
                sketch: str = "auto", threads: int = 1) -> BoundReport:
    """Compare the sketched-layer error with ``(2 sqrt 2 / sqrt n0) E||S xi|| ||a||``.

    The left side is the expected sup-norm error of the method on the layers
    ``J+1..L`` of ``f``; ``a`` are the coordinates of those layers in the
    orthonormal basis, and ``S xi`` is the random polynomial
    ``sum_j 2^{-rj} sum_{k in Q_j} xi_k e_k``.
    """
    mid = split_layers(f, plan.J, plan.L).mid
    norm_a = sobolev_norm_2(mid, plan.params.r)
    if len(mid) == 0:
        left = MeanEstimate(0.0, 0.0)
    else:
        left = expected_error("approximate", mid, plan, R, master_seed, sigma=sigma, sketch=sketch, threads=threads)
    keys, j = layers(plan.params.d, plan.J + 1, plan.L)
    if keys.shape[0] == 0 or norm_a == 0:
        right = MeanEstimate(0.0, 0.0)
    else:
        raw = expected_sup_norm(keys, np.inf, R, derive_seed(master_seed, "sampler", 0),
                                weights=np.exp2(-plan.params.r * j), sigma=sigma, threads=threads)
        factor = 2 * math.sqrt(2) / math.sqrt(plan.n0) * norm_a
        right = MeanEstimate(raw.mean * factor, raw.stderr * factor)
    combined = math.hypot(left.stderr, right.stderr)
    gap = right.mean - left.mean
    if combined > 0:
        margin = gap / combined
    else:
        margin = math.inf if gap >= 0 else -math.inf
    return BoundReport(left.mean, left.stderr, right.mean, right.stderr, margin, bool(margin >= -4))


def estimator_flags(f: TrigPoly, plan: ApproxPlan | None, sigma: int = 4, sketch: str = "auto") -> tuple[str, ...]:
    """Flags describing which estimators an error run used."""
    flags = []
    if plan is not None:
        flags.append(f"sketch={sketch_route(plan, sketch)}")
        if plan.n0 >= plan.sketch_columns:
            flags.append("n0>=m")
        if plan.degraded:
            flags.append("degraded-budget")
        K = max(f.max_frequency, 2**plan.L - 1)
        if (sigma * (2 * K + 1)) ** f.d > GRID_CAP:
            flags.append("sup=random-points")
    elif not grid_fits(f, sigma, GRID_CAP):
        flags.append("sup=random-points")
    return tuple(flags)



def error_sweep(params, budgets, family: str, R: int, seed: int, *, L_offset: int | None = 2,
                sigma: int = 4, sketch: str = "auto", threads: int = 1) -> ErrorReport:
    """Expected error of the linear method over a list of budgets.

    Budget ``i`` uses the test function ``sample_unit_ball`` with seed
    ``derive_seed(seed, "sampler", i)`` and replication master seed
    ``derive_seed(seed, "replication", i)`` (reported in the row).
    ``L = J + L_offset``; ``L_offset=None`` selects the default ``L`` rule.
    ``random_ball`` functions live on ``Q_[L]``, the layer families on layer ``J+1``.
    """
    report = ErrorReport()
    for i, n in enumerate(budgets):
        J = budget_to_J(params.d, n)
        plan = plan_from_budget(params, n, None if L_offset is None else J + L_offset)
        top = plan.L if family == "random_ball" else J + 1
        f = sample_unit_ball(TestFunctionSpec(family, params.d, params.r, top, derive_seed(seed, "sampler", i)))
        rep_seed = derive_seed(seed, "replication", i)
        est = expected_error("approximate", f, plan, R, rep_seed, sigma=sigma, sketch=sketch, threads=threads)
        report.rows.append(ErrorRow(n=n, J=plan.J, L=plan.L, family=family, reps=R, mean_err=est.mean,
                                    stderr=est.stderr, seed=rep_seed,
                                    flags=estimator_flags(f, plan, sigma, sketch)))
    return report


def unit_ball_error(algorithm: str, config, d: int, r: float, max_layer: int, R: int, seed: int, *,
                    random_draws: int = 10, sigma: int = 4, sketch: str = "auto",
                    threads: int = 1) -> tuple[MeanEstimate, TestFunctionSpec]:
    """Largest expected error over the declared finite test family.

    The family is ``random_draws`` random_ball functions on ``Q_[max_layer]``
    plus flat_layer and single_layer at layer ``max_layer``.  This is a lower
    estimate of the worst-case error over the unit ball.
    """
    specs = [TestFunctionSpec("random_ball", d, r, max_layer, derive_seed(seed, "sampler", i))
             for i in range(random_draws)]
    specs.append(TestFunctionSpec("flat_layer", d, r, max_layer, seed))
    specs.append(TestFunctionSpec("single_layer", d, r, max_layer, derive_seed(seed, "sampler", random_draws)))
    best = None
    for spec in specs:
        est = expected_error(algorithm, sample_unit_ball(spec), config, R, seed, sigma=sigma, sketch=sketch,
                             threads=threads)
        if best is None or est.mean > best[0].mean:
            best = (est, spec)
    return best
