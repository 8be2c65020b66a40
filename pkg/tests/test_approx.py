from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_poly
from hcmc.approx import (
    ApproxPlan,
    TwoStageParams,
    approximate,
    approximate_real,
    default_L,
    make_plan,
    m_term_projection,
    plan_from_budget,
    real_coordinates,
    truncation_baseline,
    two_stage_approximate,
    two_stage_params,
)
from hcmc.hypercross import cross, layer, layer_degrees, layers
from hcmc.seeding import derive_seed
from hcmc.trigpoly import SmoothnessParams, TrigPoly, grid_values, sobolev_norm_2

P1 = SmoothnessParams(1, 1.0)
P2 = SmoothnessParams(2, 1.0)


def real_poly(d, J, seed):
    f = random_poly(d, J, seed)
    mirror = TrigPoly(d, -f.keys, np.conj(f.values))
    return (f + mirror) * 0.5


class TestPlans:
    def test_examples(self):
        plan = plan_from_budget(P1, 30)
        assert (plan.J, plan.L) == (3, 7)
        assert plan_from_budget(P1, 30, L_override=4).L == 4
        plan = plan_from_budget(P2, 98)
        assert (plan.J, plan.n0, plan.budget, plan.requested) == (3, 49, 98, 98)

    def test_default_L_formula(self):
        assert default_L(1, 1.0, 3) == 7
        assert default_L(2, 3.0, 0) == 2
        assert default_L(1, 0.75, 1) == 4

    @pytest.mark.parametrize("r", [0.5, 0.3, 0.0])
    def test_embedding_required(self, r):
        with pytest.raises(ValueError, match="embed"):
            plan_from_budget(SmoothnessParams(1, r), 30)

    def test_invariants(self):
        with pytest.raises(ValueError):
            ApproxPlan(P1, J=3, L=2, n0=15, budget=30, seed=0)
        with pytest.raises(ValueError):
            ApproxPlan(P1, J=3, L=5, n0=14, budget=28, seed=0)
        with pytest.raises(ValueError):
            make_plan(P1, 2, variant="quaternion")

    def test_two_stage_params(self):
        P = SmoothnessParams(1, 2.0)
        ts = two_stage_params(P, 30, m=4)
        assert ts.s_aux == 1.0 and ts.stage_plan.params.r == 1.0 and ts.plan.params.r == 2.0
        with pytest.raises(ValueError):
            two_stage_params(P, 30, m=4, s_aux=1.6)
        with pytest.raises(ValueError):
            two_stage_params(P, 30, m=4, s_aux=0.5)
        with pytest.raises(ValueError):
            TwoStageParams(m=-1, s_aux=1.0, plan=ts.plan)


class TestApproximate:
    @pytest.mark.parametrize("d,J", [(1, 4), (2, 3), (2, 6)])
    def test_exact_on_cross(self, d, J):
        f = random_poly(d, J, J)
        g = approximate(f, make_plan(SmoothnessParams(d, 1.0), J, seed=4))
        assert g.to_dict().keys() == f.to_dict().keys()
        np.testing.assert_allclose(g.coefficients_at(f.keys), f.values, rtol=1e-12, atol=0)

    def test_high_layers_vanish(self):
        keys, _ = layers(1, 6, 7)
        f = TrigPoly(1, keys, np.ones(keys.shape[0]))
        assert len(approximate(f, make_plan(P1, 2, L=5, seed=1))) == 0

    @pytest.mark.parametrize("seed", range(4))
    def test_support_contained(self, seed):
        f = random_poly(2, 6, seed)
        plan = make_plan(P2, 2, L=4, seed=seed)
        g = approximate(f, plan)
        assert layer_degrees(g.keys).max() <= plan.L

    def test_linearity(self):
        f, g = random_poly(2, 5, 1), random_poly(2, 5, 2)
        plan = make_plan(P2, 2, L=5, seed=8)
        lhs = approximate(f + g * (2 - 1j), plan)
        rhs = approximate(f, plan) + approximate(g, plan) * (2 - 1j)
        np.testing.assert_allclose(lhs.coefficients_at(cross(2, 5)), rhs.coefficients_at(cross(2, 5)),
                                   atol=1e-12 * np.abs(rhs.values).max())

    @pytest.mark.parametrize("sketch", ["ensemble", "law"])
    def test_information_count(self, sketch):
        f = random_poly(2, 6, 3)
        plan = plan_from_budget(P2, 98, L_override=5)
        tally = {}
        approximate(f, plan, sketch=sketch, tally=tally)
        assert tally["coefficients"] == plan.n0
        assert tally["functionals"] == plan.n0
        assert tally["coefficients"] + tally["functionals"] == plan.budget

    def test_matches_algorithm_definition(self):
        # explicit oracle: exact part plus (1/n0) sum_i L_i(f) g_i
        from hcmc.sketch import ensemble_rows

        f = random_poly(1, 5, 7)
        plan = make_plan(P1, 2, L=5, seed=3)
        g = approximate(f, plan)
        mid_keys, mid_j = layers(1, 3, 5)
        xi = ensemble_rows(plan.seed, range(plan.n0), mid_keys.shape[0])
        c = f.coefficients_at(mid_keys)
        expected = np.zeros(mid_keys.shape[0], dtype=complex)
        for i in range(plan.n0):
            Li = np.sum(2.0**mid_j * xi[i] * c)
            expected += Li * 2.0 ** (-mid_j) * xi[i]
        expected /= plan.n0
        np.testing.assert_allclose(g.coefficients_at(mid_keys), expected, rtol=1e-10)

    def test_deterministic_and_thread_independent(self):
        f = random_poly(2, 6, 5)
        plan = make_plan(P2, 3, L=6, seed=77)
        a = approximate(f, plan, threads=1)
        b = approximate(f, plan, threads=4)
        assert a == b

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            approximate(random_poly(1, 2, 0), make_plan(P2, 2))

    def test_unbiased_small(self):
        psi = TrigPoly.monomial((5,), 2.0**-3)
        plan = make_plan(P1, 2, L=4)
        vals = np.array([approximate(psi, ApproxPlan(**{**plan.__dict__, "seed": derive_seed(3, "replication", i)}))
                         .coeff((5,)) for i in range(3000)])
        se = vals.real.std(ddof=1) / np.sqrt(vals.size)
        assert abs(vals.real.mean() - 2.0**-3) < 4 * se


class TestReal:
    def test_cos_exact(self):
        cos = TrigPoly.from_dict(1, {(1,): 0.5, (-1,): 0.5})
        assert approximate_real(cos, make_plan(P1, 1, seed=3)) == cos

    @pytest.mark.parametrize("seed", range(3))
    def test_real_output(self, seed):
        f = TrigPoly.from_dict(1, {(5,): 0.5, (-5,): 0.5})
        g = approximate_real(f, make_plan(P1, 2, L=6, seed=seed))
        assert np.abs(grid_values(g, 256).imag).max() < 1e-12
        h = real_poly(2, 5, seed)
        out = approximate_real(h, make_plan(P2, 2, L=5, seed=seed))
        assert out.is_real(1e-12)
        M = 4 * (2 * out.max_frequency + 1)
        assert np.abs(grid_values(out, M).imag).max() < 1e-12

    def test_exact_and_count(self):
        f = real_poly(2, 3, 9)
        tally = {}
        g = approximate_real(f, plan_from_budget(P2, 98, L_override=5), tally=tally)
        np.testing.assert_allclose(g.coefficients_at(f.keys), f.values, rtol=1e-12)
        assert tally == {"coefficients": 49, "functionals": 49}

    def test_rejects_complex_input(self):
        with pytest.raises(ValueError, match="real"):
            approximate_real(TrigPoly.monomial((3,)), make_plan(P1, 1))

    def test_real_coordinates_oracle(self):
        # f = A cos(2 pi k x) + B sin(2 pi k x) with k=5 in layer 3
        A, B = 0.7, -0.3
        f = TrigPoly.from_dict(1, {(5,): (A - 1j * B) / 2, (-5,): (A + 1j * B) / 2})
        coords = real_coordinates(f, np.array([[5], [-5]]), np.array([3, 3]), 1.0)
        np.testing.assert_allclose(coords, [A * 8 / np.sqrt(2), B * 8 / np.sqrt(2)])

    def test_linear_on_real_inputs(self):
        f, g = real_poly(1, 6, 1), real_poly(1, 6, 2)
        plan = make_plan(P1, 2, L=6, seed=5)
        lhs = approximate_real(f + g * 3.0, plan)
        rhs = approximate_real(f, plan) + approximate_real(g, plan) * 3.0
        np.testing.assert_allclose(lhs.coefficients_at(cross(1, 6)), rhs.coefficients_at(cross(1, 6)), atol=1e-12)


class TestTruncation:
    def test_examples(self):
        f = TrigPoly.monomial((9,))
        assert len(truncation_baseline(f, 15)) == 0
        g = random_poly(1, 3, 0)
        assert truncation_baseline(g, 15) == g
        assert len(truncation_baseline(TrigPoly.zero(2), 10)) == 0

    def test_is_restriction(self):
        f = random_poly(2, 6, 1)
        t = truncation_baseline(f, 100)
        assert set(t.to_dict().items()) <= set(f.to_dict().items())
        assert layer_degrees(t.keys).max() == 3  # |Q_[3]| = 49 <= 100 < |Q_[4]| = 129


def weighted_residual(f, keep, s):
    mask = np.ones(len(f), dtype=bool)
    mask[list(keep)] = False
    w = np.exp2(s * layer_degrees(f.keys))
    return float(np.sum((w * np.abs(f.values))[mask] ** 2))


class TestMTerm:
    def test_example(self):
        f = TrigPoly.from_dict(1, {(1,): 1.0, (3,): 0.8})
        assert m_term_projection(f, 1, 1.0).to_dict() == {(3,): 0.8}
        assert m_term_projection(f, 0, 1.0) == TrigPoly.zero(1)
        assert m_term_projection(f, 5, 1.0) == f

    def test_ties_lexicographic(self):
        f = TrigPoly.from_dict(1, {(3,): 1.0, (-3,): -1.0, (2,): 1j})
        assert m_term_projection(f, 1, 1.0).to_dict() == {(-3,): -1.0}
        assert set(m_term_projection(f, 2, 1.0).to_dict()) == {(-3,), (2,)}

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 12), st.integers(0, 6), st.integers(0, 2**32 - 1), st.sampled_from([0.6, 1.0, 1.7]))
    def test_optimal_against_exhaustive(self, size, m, seed, s):
        rng = np.random.default_rng(seed)
        keys = rng.choice(np.arange(-40, 41), size=size, replace=False)[:, None]
        f = TrigPoly(1, keys, rng.normal(size=size) + 1j * rng.normal(size=size))
        h = m_term_projection(f, m, s)
        kept = [i for i, k in enumerate(f.keys[:, 0]) if (int(k),) in h.to_dict()]
        best = min(weighted_residual(f, c, s) for c in itertools.combinations(range(len(f)), min(m, len(f))))
        assert weighted_residual(f, kept, s) == pytest.approx(best, rel=1e-12, abs=1e-300)
        assert sobolev_norm_2(f - h, s) ** 2 == pytest.approx(best, rel=1e-9, abs=1e-300)


class TestTwoStage:
    def test_full_m_recovers(self):
        P = SmoothnessParams(1, 2.0)
        f = random_poly(1, 7, 3)
        ts = two_stage_params(P, 14, m=len(f), seed=1)
        g = two_stage_approximate(f, ts)
        np.testing.assert_allclose(g.coefficients_at(f.keys), f.values, rtol=1e-12)

    def test_m_zero_is_plain_method(self):
        P = SmoothnessParams(1, 2.0)
        f = random_poly(1, 7, 4)
        ts = two_stage_params(P, 30, m=0, seed=6)
        assert two_stage_approximate(f, ts) == approximate(f, ts.stage_plan)

    def test_tally(self):
        P = SmoothnessParams(1, 2.0)
        f = random_poly(1, 6, 4)
        ts = two_stage_params(P, 30, m=5, seed=6)
        tally = {}
        two_stage_approximate(f, ts, tally=tally)
        assert tally == {"m_term": 5, "coefficients": 15, "functionals": 15}
