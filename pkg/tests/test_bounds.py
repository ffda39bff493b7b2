import math

import mpmath as mp
import numpy as np
import pytest

from ecctlab.bounds import (
    Dims, GridSpec, LipschitzSet, alpha_t, eta, gen_bound, gen_bound_awgn,
    lipschitz_dense, lipschitz_qk_sparse, lipschitz_sparse, log_aggregate_b,
    log_alpha_t, log_covering_number, log_covering_number_aggregate,
    log_lambda_t, log_lipschitz_multilayer,
)
from ecctlab.channel import tail_probability
from ecctlab.model import NormBudget

mp.mp.dps = 60


def unit_budget() -> NormBudget:
    return NormBudget(b_x=1.0, b_qk=1.0, b_v=1.0, b_f1=1.0, b_f2=1.0,
                      b_emb=1.0, b_o1=1.0, b_o2=1.0, w=1.0, l_sigma=1.0)


def random_budget(seed: int) -> NormBudget:
    rng = np.random.default_rng(seed)
    vals = rng.uniform(0.5, 2.0, size=9)
    return NormBudget(b_x=vals[0], b_qk=vals[1], b_v=vals[2], b_f1=vals[3],
                      b_f2=vals[4], b_emb=vals[5], b_o1=vals[6], b_o2=vals[7],
                      w=vals[8], l_sigma=1.0)


# ---------------------------------------------------------------------------
# independent high-precision transcription of the bound formulas
# ---------------------------------------------------------------------------


def mp_budget(nb: NormBudget) -> dict:
    return {k: mp.mpf(v) for k, v in nb.as_dict().items()}


def mp_aggregate_b(b: dict) -> mp.mpf:
    return (b["b_o1"] ** 2 * b["l_sigma"] * b["b_f1"] ** 2 * b["b_f2"] ** 2
            * b["b_v"] ** 2 * b["b_qk"] * b["b_x"] ** 3 * b["w"] ** 2)


def mp_lambda_T(b: dict, L, P, T) -> mp.mpf:
    prefix = (b["b_o1"] * b["l_sigma"] * b["b_v"] * b["b_f1"] * b["b_f2"]
              * b["b_x"] ** 3 * b["w"] * mp.mpf(L) ** mp.mpf("1.5") * mp.sqrt(P))
    alpha = (mp.sqrt(P) * b["b_v"] * b["b_f1"] * b["b_f2"]
             * (1 + 2 * b["b_qk"] * b["b_x"] ** 2))
    return prefix * alpha ** (T - 1)


def mp_total(theorem, m, delta, L, d, u, T, P, nb) -> mp.mpf:
    b = mp_budget(nb)
    m_ = mp.mpf(m)
    statistical = 4 / mp.sqrt(m_)
    confidence = mp.sqrt(mp.log(1 / mp.mpf(delta)) / (2 * m_))
    if theorem == "T1":
        lam = mp_aggregate_b(b) * mp.mpf(L) ** 2
        expo, c = L + (2 * u + 2) * d * d, 18
    elif theorem == "T2":
        lam = mp_aggregate_b(b) * mp.mpf(L) ** mp.mpf("1.5") * mp.sqrt(P)
        expo, c = L + (2 * u + 2) * d * d, 18
    else:
        lam = mp_lambda_T(b, L, P, T)
        expo, c = L + (2 * u + 2) * d * d * T, 6
    complexity = 12 * mp.sqrt(expo * mp.log(c * mp.sqrt(m_ * d) * lam) / m_)
    return statistical + confidence + complexity


def rel_err(a, b) -> float:
    return float(abs(mp.mpf(a) - mp.mpf(b)) / abs(mp.mpf(b)))


# ---------------------------------------------------------------------------
# per-weight constants
# ---------------------------------------------------------------------------


class TestLipschitzConstants:
    def test_unit_budget_values(self):
        ls = lipschitz_dense(unit_budget(), 10)
        assert ls.l_o2 == pytest.approx(10.0, rel=1e-15)
        assert ls.l_o1 == pytest.approx(10.0, rel=1e-15)
        assert ls.l_f2 == pytest.approx(10.0, rel=1e-15)
        assert ls.l_qk == pytest.approx(100.0, rel=1e-15)

    def test_bx_cubes_in_qk(self):
        nb = unit_budget()
        doubled = NormBudget(**{**nb.as_dict(), "b_x": 2.0})
        assert lipschitz_dense(doubled, 10).l_qk == pytest.approx(
            8.0 * lipschitz_dense(nb, 10).l_qk, rel=1e-15)

    def test_dual_transcription_random_budgets(self):
        # independent restatement of the six product formulas
        for seed in range(10):
            nb = random_budget(seed)
            L = 12
            b = mp_budget(nb)
            core = b["l_sigma"] * L * b["b_x"]
            expected = {
                "l_o2": b["b_o1"] * b["b_f2"] * b["b_f1"] * b["b_v"] * core,
                "l_o1": b["b_o2"] * b["b_f2"] * b["b_f1"] * b["b_v"] * core,
                "l_f2": b["b_o1"] * b["b_o2"] * b["b_f1"] * b["b_v"] * core,
                "l_f1": b["b_o1"] * b["b_o2"] * b["b_f2"] * b["b_v"] * core,
                "l_v": b["b_o1"] * b["b_o2"] * b["b_f2"] * b["b_f1"] * core,
                "l_qk": (b["b_o1"] * b["l_sigma"] * b["b_f2"] * b["b_f1"]
                         * b["b_v"] * L**2 * b["b_x"] ** 3 * b["w"]),
            }
            got = lipschitz_dense(nb, L).as_dict()
            for key, val in expected.items():
                assert rel_err(got[key], val) < 1e-14, key

    def test_negative_budget_rejected(self):
        nb = NormBudget(**{**unit_budget().as_dict(), "b_v": -1.0})
        with pytest.raises(ValueError):
            lipschitz_dense(nb, 10)


class TestSparseQK:
    def test_dense_recovery(self):
        for seed in range(5):
            nb = random_budget(seed)
            L = 16
            sparse = lipschitz_qk_sparse(nb, L, L)
            dense = lipschitz_dense(nb, L).l_qk
            assert rel_err(sparse, dense) < 1e-12

    def test_unit_arithmetic(self):
        assert lipschitz_qk_sparse(unit_budget(), 16, 4) == pytest.approx(128.0, rel=1e-15)

    def test_ratio_is_contraction(self):
        for seed in range(5):
            nb = random_budget(seed)
            ratio = lipschitz_qk_sparse(nb, 16, 4) / lipschitz_dense(nb, 16).l_qk
            assert ratio == pytest.approx(math.sqrt(4 / 16), rel=1e-12)

    def test_rejects_p_above_l(self):
        with pytest.raises(ValueError):
            lipschitz_qk_sparse(unit_budget(), 8, 9)


class TestAlpha:
    def test_unit_value(self):
        assert alpha_t(unit_budget(), 1) == pytest.approx(3.0, rel=1e-15)

    def test_sqrt_p_scaling(self):
        nb = random_budget(1)
        assert alpha_t(nb, 4) == pytest.approx(2.0 * alpha_t(nb, 1), rel=1e-14)

    def test_dual_transcription(self):
        for seed in range(8):
            nb = random_budget(seed)
            b = mp_budget(nb)
            expected = (mp.sqrt(9) * b["l_sigma"] * b["b_v"] * b["b_f1"] * b["b_f2"]
                        * (1 + 2 * b["b_qk"] * b["b_x"] ** 2))
            assert rel_err(alpha_t(nb, 9), expected) < 1e-14
            assert abs(log_alpha_t(nb, 9) - float(mp.log(expected))) < 1e-13


class TestLambdaT:
    def test_unit_value_two_layers(self):
        # 10^1.5 * sqrt(10) * (sqrt(10) * 3) = 100 * 3 * sqrt(10)
        val = log_lambda_t(unit_budget(), 10, 10, 2)
        assert val == pytest.approx(math.log(100.0 * 3.0 * math.sqrt(10.0)), rel=1e-14)

    def test_single_layer_is_sparse_prefix(self):
        nb = random_budget(2)
        expected = float(mp.log(mp_lambda_T(mp_budget(nb), 12, 5, 1)))
        assert abs(log_lambda_t(nb, 12, 5, 1) - expected) < 1e-12

    def test_monotone_in_depth(self):
        vals = [log_lambda_t(unit_budget(), 10, 4, T) for T in range(1, 8)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_recursion_identity(self):
        nb = random_budget(3)
        step = log_alpha_t(nb, 6)
        for T in range(2, 30):
            diff = log_lambda_t(nb, 20, 6, T) - log_lambda_t(nb, 20, 6, T - 1)
            assert abs(diff - step) < 1e-12

    def test_sparse_dense_ratio_is_eta(self):
        nb = random_budget(4)
        for T in (1, 2, 5):
            log_ratio = log_lambda_t(nb, 16, 4, T) - log_lambda_t(nb, 16, 16, T)
            assert math.exp(log_ratio) == pytest.approx(eta(4, 16, T), rel=1e-12)

    def test_zero_budget_gives_neg_inf(self):
        nb = NormBudget(**{**unit_budget().as_dict(), "b_v": 0.0})
        assert log_lambda_t(nb, 10, 4, 2) == -math.inf

    def test_log_domain_survives_extremes(self):
        nb = NormBudget(b_x=1e6, b_qk=1e6, b_v=1e6, b_f1=1e6, b_f2=1e6,
                        b_emb=1e6, b_o1=1e6, b_o2=1e6, w=1e6, l_sigma=1.13)
        val = log_lambda_t(nb, 10**4, 10**4, 64)
        assert math.isfinite(val)
        report = gen_bound("T3", 10**12, 0.05, Dims(L=10**4, d=64, u=4, T=64), nb, 10**4)
        assert math.isfinite(report.total)


class TestCoveringNumber:
    def test_vanishes_for_huge_eps(self):
        ls = lipschitz_dense(unit_budget(), 10)
        dims = Dims(L=10, d=2, u=1, T=1)
        val = log_covering_number(1e30, ls, dims, unit_budget(), 6.0)
        assert val < 1e-12

    def test_monotone_decreasing_in_eps(self):
        ls = lipschitz_sparse(unit_budget(), 10, 4)
        dims = Dims(L=10, d=2, u=1, T=1)
        vals = [log_covering_number(e, ls, dims, unit_budget(), 6.0)
                for e in (0.01, 0.1, 1.0, 10.0)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_unit_budget_bounded_by_aggregate(self):
        # the closed-form exponent absorbs the per-weight product form
        nb = unit_budget()
        for dims in (Dims(L=10, d=2, u=1, T=1), Dims(L=24, d=8, u=2, T=1)):
            ls = lipschitz_dense(nb, dims.L)
            log_lam = log_aggregate_b(nb) + 2.0 * math.log(dims.L)
            for eps in (1e-3, 0.1, 1.0, 5.0):
                product_form = log_covering_number(eps, ls, dims, nb, 6.0)
                aggregate = log_covering_number_aggregate(eps, dims, log_lam)
                assert product_form <= aggregate + 1e-12

    def test_multilayer_accepts_log_sets(self):
        nb = random_budget(5)
        dims = Dims(L=12, d=4, u=2, T=3)
        lips = log_lipschitz_multilayer(nb, 12, 5, 3)
        t_factor = 4 * dims.T + 2
        val = log_covering_number(0.5, lips, dims, nb, t_factor)
        assert math.isfinite(val) and val > 0
        agg = log_covering_number_aggregate(
            0.5, dims, log_lambda_t(nb, 12, 5, 3), multi_layer=True)
        assert math.isfinite(agg)

    def test_rejects_nonpositive_eps(self):
        ls = lipschitz_dense(unit_budget(), 10)
        with pytest.raises(ValueError):
            log_covering_number(0.0, ls, Dims(L=10, d=2, u=1, T=1), unit_budget(), 6.0)


class TestGenBound:
    def test_confidence_vanishes_at_delta_one(self):
        report = gen_bound("T1", 100, 1.0, Dims(L=10, d=2, u=1, T=1), unit_budget(), 10)
        assert report.terms["confidence"] == 0.0

    def test_sparse_no_worse_than_dense(self):
        nb = random_budget(6)
        dims = Dims(L=24, d=8, u=1, T=1)
        t1 = gen_bound("T1", 5000, 0.05, dims, nb, 6)
        t2 = gen_bound("T2", 5000, 0.05, dims, nb, 6)
        assert t2.total <= t1.total
        assert t2.eta == pytest.approx(math.sqrt(6 / 24), rel=1e-15)

    def test_dual_transcription_unit_budget(self):
        dims = Dims(L=10, d=2, u=1, T=1)
        report = gen_bound("T1", 100, 0.05, dims, unit_budget(), 10)
        expected = mp_total("T1", 100, 0.05, 10, 2, 1, 1, 10, unit_budget())
        assert rel_err(report.total, expected) < 1e-12

    def test_dual_transcription_random_budgets_all_theorems(self):
        for seed in range(6):
            nb = random_budget(seed)
            dims = Dims(L=20, d=4, u=2, T=3)
            for theorem in ("T1", "T2", "T3"):
                report = gen_bound(theorem, 12800, 0.05, dims, nb, 7)
                expected = mp_total(theorem, 12800, 0.05, 20, 4, 2, 3, 7, nb)
                assert rel_err(report.total, expected) < 1e-12, (theorem, seed)

    def test_dense_recovery_t2_equals_t1(self):
        nb = random_budget(7)
        dims = Dims(L=16, d=4, u=1, T=1)
        t1 = gen_bound("T1", 4000, 0.05, dims, nb, 16)
        t2 = gen_bound("T2", 4000, 0.05, dims, nb, 16)
        assert rel_err(t2.total, t1.total) < 1e-12

    def test_total_is_sum_of_terms(self):
        report = gen_bound("T3", 10000, 0.05, Dims(L=24, d=8, u=1, T=2), random_budget(8), 9)
        assert report.total == pytest.approx(sum(report.terms.values()), rel=1e-15)
        assert all(v >= 0 for v in report.terms.values())

    def test_vacuous_flag(self):
        tiny = NormBudget(b_x=1e-30, b_qk=1e-30, b_v=1e-30, b_f1=1e-30, b_f2=1e-30,
                          b_emb=1e-30, b_o1=1e-30, b_o2=1e-30, w=1e-30, l_sigma=1.0)
        report = gen_bound("T3", 100, 0.05, Dims(L=10, d=2, u=1, T=1), tiny, 4)
        assert "vacuous" in report.flags
        assert math.isnan(report.total)

    def test_depth_flag(self):
        report = gen_bound("T3", 100, 0.05, Dims(L=10, d=2, u=1, T=2), unit_budget(), 4)
        assert "depth_large_vs_length" in report.flags

    def test_eta_values(self):
        assert gen_bound("T1", 100, 0.5, Dims(L=8, d=2, u=1, T=1), unit_budget(), 4).eta == 1.0
        t3 = gen_bound("T3", 100, 0.5, Dims(L=8, d=2, u=1, T=4), unit_budget(), 4)
        assert t3.eta == pytest.approx((4 / 8) ** 2, rel=1e-15)

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            gen_bound("T9", 100, 0.05, Dims(L=10, d=2, u=1, T=1), unit_budget(), 4)
        with pytest.raises(ValueError):
            gen_bound("T1", 1, 0.05, Dims(L=10, d=2, u=1, T=1), unit_budget(), 4)
        with pytest.raises(ValueError):
            gen_bound("T1", 100, 0.0, Dims(L=10, d=2, u=1, T=1), unit_budget(), 4)


class TestMonotonicity:
    def test_increasing_in_depth(self):
        nb = unit_budget()
        totals = [gen_bound("T3", 12800, 0.05, Dims(L=32, d=8, u=1, T=T), nb, 8).total
                  for T in range(1, 7)]
        assert all(b > a for a, b in zip(totals, totals[1:]))

    def test_increasing_in_length(self):
        nb = unit_budget()
        totals = [gen_bound("T3", 12800, 0.05, Dims(L=L, d=8, u=1, T=2), nb, 8).total
                  for L in (16, 32, 64, 128)]
        assert all(b > a for a, b in zip(totals, totals[1:]))

    def test_decreasing_in_samples(self):
        nb = unit_budget()
        totals = [gen_bound("T3", m, 0.05, Dims(L=32, d=8, u=1, T=2), nb, 8).total
                  for m in (10**3, 10**4, 10**5, 10**6)]
        assert all(b < a for a, b in zip(totals, totals[1:]))

    def test_increasing_in_each_budget_entry(self):
        dims = Dims(L=32, d=8, u=1, T=2)
        for key in ("b_o1", "b_v", "b_f1", "b_f2", "b_x", "w", "b_qk"):
            totals = []
            for scale in (0.5, 1.0, 2.0, 4.0, 8.0):
                nb = NormBudget(**{**unit_budget().as_dict(), key: scale})
                totals.append(gen_bound("T3", 12800, 0.05, dims, nb, 8).total)
            assert all(b > a for a, b in zip(totals, totals[1:])), key


class TestAWGNBound:
    def test_noiseless_limit_pins_bx_to_bemb(self):
        nb = random_budget(9)
        dims = Dims(L=16, d=4, u=1, T=1)
        report = gen_bound_awgn(10000, 0.05, dims, nb, 6, rho=1e-6, b_emb=2.0, n=8)
        assert abs(report.bx_star - 2.0) / 2.0 < 1e-2
        assert report.terms["tail"] < 1e-6

    def test_minimizer_dominates_grid(self):
        nb = random_budget(10)
        dims = Dims(L=16, d=4, u=1, T=2)
        rho, b_emb, n = 0.5, float(nb.b_emb), 8
        report = gen_bound_awgn(12800, 0.05, dims, nb, 6, rho=rho, b_emb=b_emb, n=n)
        lo = b_emb * max(0.0, 1.0 - 5.0 * rho) + 1e-6 * b_emb
        hi = b_emb * (1.0 + 10.0 * rho)
        grid = np.exp(np.linspace(math.log(lo), math.log(hi), 256))
        obj_star = report.terms["complexity"] + report.terms["tail"]
        for b_x in grid:
            nb_x = NormBudget(**{**nb.as_dict(), "b_x": float(b_x)})
            comp = gen_bound("T3", 12800, 0.05, dims, nb_x, 6).terms["complexity"]
            if math.isnan(comp):
                comp = math.inf  # vacuous points cannot beat the minimizer
            tail = tail_probability(float(b_x), b_emb, rho, n)
            assert obj_star <= comp + tail + 1e-12

    def test_bx_star_matches_dense_grid_oracle(self):
        nb = random_budget(11)
        dims = Dims(L=16, d=4, u=1, T=2)
        rho, b_emb, n = 0.4, float(nb.b_emb), 8
        coarse = GridSpec(points=200)
        report = gen_bound_awgn(12800, 0.05, dims, nb, 6, rho=rho, b_emb=b_emb, n=n,
                                search=coarse)
        lo = b_emb * max(0.0, 1.0 - 5.0 * rho) + 1e-6 * b_emb
        hi = b_emb * (1.0 + 10.0 * rho)
        coarse_grid = np.exp(np.linspace(math.log(lo), math.log(hi), 200))
        dense_grid = np.exp(np.linspace(math.log(lo), math.log(hi), 2000))

        def objective(b_x):
            nb_x = NormBudget(**{**nb.as_dict(), "b_x": float(b_x)})
            comp = gen_bound("T3", 12800, 0.05, dims, nb_x, 6).terms["complexity"]
            if math.isnan(comp):
                comp = math.inf
            return comp + tail_probability(float(b_x), b_emb, rho, n)

        dense_star = dense_grid[int(np.argmin([objective(b) for b in dense_grid]))]
        coarse_best = int(np.argmin([objective(b) for b in coarse_grid]))
        cell_lo = coarse_grid[max(coarse_best - 1, 0)]
        cell_hi = coarse_grid[min(coarse_best + 1, len(coarse_grid) - 1)]
        width = cell_hi - cell_lo
        assert abs(report.bx_star - dense_star) <= width + 1e-12

    def test_total_includes_tail(self):
        nb = random_budget(12)
        dims = Dims(L=16, d=4, u=1, T=1)
        report = gen_bound_awgn(6400, 0.05, dims, nb, 6, rho=0.8, b_emb=float(nb.b_emb), n=8)
        assert report.total == pytest.approx(sum(report.terms.values()), rel=1e-12)
        assert report.theorem == "T4"
        assert report.bx_star is not None

    def test_grid_spec_validation(self):
        with pytest.raises(ValueError):
            GridSpec(points=100)
        nb = random_budget(13)
        with pytest.raises(ValueError):
            gen_bound_awgn(100, 0.05, Dims(L=16, d=4, u=1, T=1), nb, 6,
                           rho=-1.0, b_emb=1.0, n=8)


class TestEta:
    def test_dense_is_one(self):
        for T in (1, 3, 7):
            assert eta(16, 16, T) == 1.0

    def test_exact_power(self):
        assert eta(4, 16, 2) == pytest.approx(0.25, rel=1e-15)
        assert eta(2, 8, 3) == pytest.approx((2 / 8) ** 1.5, rel=1e-15)

    def test_rejects_p_above_l(self):
        with pytest.raises(ValueError):
            eta(9, 8, 1)


class TestReportJSON:
    def test_round_trip(self):
        import json

        report = gen_bound("T2", 1000, 0.05, Dims(L=10, d=2, u=1, T=1), unit_budget(), 4)
        payload = json.loads(report.to_json())
        assert payload["theorem"] == "T2"
        assert payload["terms"]["statistical"] == report.terms["statistical"]
        assert payload["inputs"]["budget"]["b_x"] == 1.0
