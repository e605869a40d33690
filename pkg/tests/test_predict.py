"""One-step-ahead prediction: covariance draws, scores, Bayes factors."""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from odcfmsv import predict as pr
from odcfmsv.errors import ConfigError, DataError
from odcfmsv.gibbs import McmcConfig, run_chain
from odcfmsv.model import FactorDataset, ModelVariant


def _view(variant="odcfmsv", q=2, p=3, sigma_eta_sq=0.09, seed=0):
    """Hand-built sweep state with controllable SV noise."""
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((q, q))
    P = M @ M.T + q * np.eye(q)
    return pr.SweepView(
        variant=ModelVariant.parse(variant),
        B=rng.standard_normal((p, q)),
        sigma_sq=np.full(p, 0.3),
        mu=np.array([-0.4, -0.9])[:q],
        phi=np.array([0.9, 0.95])[:q],
        sigma_eta_sq=np.full(q, sigma_eta_sq),
        h_last=np.array([-0.2, -1.1])[:q],
        err_mu=np.full(p, -1.0),
        err_phi=np.full(p, 0.9),
        err_sigma_eta_sq=np.full(p, 0.04),
        err_h_last=np.full(p, -0.8),
        P_last=P,
        A=np.eye(q),
        d=0.5,
        k=q + 8.0,
    )


def small_chain(variant="odcfmsv", T=40, p=3, q=2, seed=0, kept=25):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((T, q))
    Y = F @ rng.standard_normal((p, q)).T + 0.4 * rng.standard_normal((T, p))
    data = FactorDataset(Y, F)
    cfg = McmcConfig(burn_in=15, kept=kept, seed=seed + 1, variant=variant)
    return data, run_chain(data, config=cfg)


class TestFactorCovDraw:
    def test_zero_sv_noise_is_deterministic(self):
        view = _view(sigma_eta_sq=0.0)
        lam = view.phi * view.h_last + (1 - view.phi) * view.mu
        for rep in range(3):
            R = pr.draw_predictive_factor_cov_o(view, np.random.default_rng(rep))
            # unit-diagonal correlation scaled by V puts V on the diagonal
            np.testing.assert_allclose(np.diag(R), np.exp(lam), rtol=1e-12)

    def test_lognormal_mean_oracle(self):
        # E[V] = exp(lambda + s2/2); 1e5 draws within 3 standard errors
        view = _view(q=2, sigma_eta_sq=0.09)
        lam = view.phi * view.h_last + (1 - view.phi) * view.mu
        rng = np.random.default_rng(42)
        n = 100_000
        vs = np.empty((n, 2))
        for i in range(n):
            vs[i] = np.diag(pr.draw_predictive_factor_cov_o(view, rng))
        target = np.exp(lam + 0.045)
        se = vs.std(axis=0, ddof=1) / math.sqrt(n)
        assert np.all(np.abs(vs.mean(axis=0) - target) < 3 * se)

    def test_rejects_pg_sweep(self):
        with pytest.raises(ConfigError):
            pr.draw_predictive_factor_cov_o(
                _view(variant="pg"), np.random.default_rng(0)
            )

    @pytest.mark.parametrize("variant", ["odcfmsv", "pg", "sverr"])
    def test_collection_invariants(self, variant):
        _, draws = small_chain(variant)
        pdraws = pr.draw_predictive(draws, np.random.default_rng(3))
        assert len(pdraws) == draws.n_draws
        for d in pdraws[:10]:
            np.testing.assert_allclose(np.diag(d.sigma_eps), 1.0, atol=1e-12)
            assert np.all(np.linalg.eigvalsh(d.factor_cov) > 0)
            assert np.all(np.diag(d.factor_cov) > 0)
            assert np.all(np.linalg.eigvalsh(d.return_cov) > 0)
            assert np.all(d.omega > 0)
        if variant == "pg":
            np.testing.assert_allclose(pdraws[0].V, 1.0)
            # the factor covariance is the raw correlation-process state
            assert not np.allclose(np.diag(pdraws[0].factor_cov), 1.0)


class TestPredictiveReturnCov:
    def test_single_draw_plugin(self):
        view = _view()
        rng = np.random.default_rng(5)
        pdraws = [
            pr.PredictiveDraw(
                V=np.ones(2), sigma_eps=np.eye(2), factor_cov=np.eye(2),
                f=np.zeros(2), B=view.B, omega=view.sigma_sq,
                return_cov=view.B @ view.B.T + np.diag(view.sigma_sq),
            )
        ]
        got = pr.predictive_return_cov(pdraws, "odcfmsv")
        np.testing.assert_allclose(got, pdraws[0].return_cov)

    def test_zero_loadings_gives_mean_omega(self):
        rng = np.random.default_rng(6)
        p, q = 3, 2
        pdraws = []
        for _ in range(40):
            om = rng.uniform(0.1, 1.0, p)
            pdraws.append(
                pr.PredictiveDraw(
                    V=np.ones(q), sigma_eps=np.eye(q), factor_cov=np.eye(q),
                    f=rng.standard_normal(q), B=np.zeros((p, q)), omega=om,
                    return_cov=np.diag(om),
                )
            )
        got = pr.predictive_return_cov(pdraws)
        target = np.diag(np.mean([d.omega for d in pdraws], axis=0))
        np.testing.assert_allclose(got, target, atol=1e-14)

    def test_monte_carlo_oracle(self):
        # covariance of simulated next-period returns matches the formula
        _, draws = small_chain("odcfmsv", kept=40)
        rng = np.random.default_rng(11)
        pdraws = pr.draw_predictive(draws, rng)
        sigma_hat = pr.predictive_return_cov(pdraws)
        n_per = 2000
        ys = []
        for d in pdraws:
            L = np.linalg.cholesky(d.return_cov)
            ys.append((L @ rng.standard_normal((3, n_per))).T)
        ys = np.concatenate(ys)
        prods = ys[:, :, None] * ys[:, None, :]
        se = prods.std(axis=0, ddof=1) / math.sqrt(ys.shape[0])
        assert np.all(np.abs(prods.mean(axis=0) - sigma_hat) < 3 * se + 1e-12)

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            pr.predictive_return_cov([])


class TestVarEstimate:
    def test_identity_basis_vector(self):
        covs = np.stack([np.eye(4)] * 7)
        w = np.zeros(4)
        w[0] = 1.0
        assert pr.var_estimate(covs, w) == pytest.approx(1.645, abs=1e-12)

    def test_identity_equal_weights(self):
        p = 10
        covs = np.stack([np.eye(p)] * 3)
        w = np.full(p, 1.0 / p)
        assert pr.var_estimate(covs, w) == pytest.approx(
            1.645 / math.sqrt(p), abs=1e-12
        )

    def test_single_matrix_accepted(self):
        assert pr.var_estimate(np.eye(2), np.array([1.0, 0.0])) == pytest.approx(
            1.645
        )

    def test_nonfinite_weights_rejected(self):
        with pytest.raises(DataError):
            pr.var_estimate(np.eye(2), np.array([np.inf, 0.0]))


def _toy_pdraws(rng, M, p=2, q=1):
    out = []
    for _ in range(M):
        B = rng.standard_normal((p, q))
        f = rng.standard_normal(q)
        om = rng.uniform(0.2, 0.8, p)
        out.append(
            pr.PredictiveDraw(
                V=np.ones(q), sigma_eps=np.eye(q), factor_cov=np.eye(q),
                f=f, B=B, omega=om,
                return_cov=B @ B.T + np.diag(om),
            )
        )
    return out


class TestLps:
    def test_single_draw_exact(self):
        rng = np.random.default_rng(0)
        (d,) = _toy_pdraws(rng, 1)
        y = rng.standard_normal(2)
        want = stats.multivariate_normal.logpdf(y, d.B @ d.f, np.diag(d.omega))
        assert pr.lps(y, [d]) == pytest.approx(want, abs=1e-10)

    def test_mixture_upper_bound(self):
        rng = np.random.default_rng(1)
        pdraws = _toy_pdraws(rng, 30)
        y = rng.standard_normal(2)
        per = [
            stats.multivariate_normal.logpdf(y, d.B @ d.f, np.diag(d.omega))
            for d in pdraws
        ]
        assert pr.lps(y, pdraws) <= max(per) + 1e-12

    def test_permutation_invariant(self):
        rng = np.random.default_rng(2)
        pdraws = _toy_pdraws(rng, 25)
        y = rng.standard_normal(2)
        a = pr.lps(y, pdraws)
        b = pr.lps(y, list(reversed(pdraws)))
        assert a == pytest.approx(b, abs=1e-12)

    def test_quadrature_oracle_univariate(self):
        # p = q = 1 with shared (b, omega) and f ~ N(0, r): the Monte
        # Carlo mixture converges to the integral of N(y|bf, om) over f
        b, om, r, y = 0.7, 0.3, 1.2, 0.4
        rng = np.random.default_rng(7)
        M = 4_000_000
        f = (rng.standard_normal(M) * math.sqrt(r)).reshape(M, 1)
        B = np.full((M, 1, 1), b)
        omega = np.full((M, 1), om)
        got = pr.lps(np.array([y]), (B, f, omega))

        def integrand(x):
            return stats.norm.pdf(y, b * x, math.sqrt(om)) * stats.norm.pdf(
                x, 0.0, math.sqrt(r)
            )

        quad, _ = integrate.quad(integrand, -12, 12)
        assert got == pytest.approx(math.log(quad), abs=1e-3)

    def test_underflow_warns(self):
        pdraws = _toy_pdraws(np.random.default_rng(3), 4)
        y = np.full(2, 1e200)  # quadratic term overflows to -inf
        with pytest.warns(RuntimeWarning):
            assert pr.lps(y, pdraws) == -math.inf

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            pr.lps(np.zeros(2), [])


class TestLpsEw:
    def test_univariate_unit_weight_equals_lps(self):
        rng = np.random.default_rng(4)
        pdraws = _toy_pdraws(rng, 20, p=1)
        y = rng.standard_normal(1)
        assert pr.lps_ew(y, np.array([1.0]), pdraws) == pytest.approx(
            pr.lps(y, pdraws), abs=1e-12
        )

    def test_doubling_weights_shifts_by_log2(self):
        rng = np.random.default_rng(5)
        pdraws = _toy_pdraws(rng, 20, p=3)
        y = rng.standard_normal(3)
        w = np.array([0.5, 0.3, 0.2])
        a = pr.lps_ew(y, w, pdraws)
        b = pr.lps_ew(y, 2 * w, pdraws)
        assert b == pytest.approx(a - math.log(2.0), abs=1e-12)

    def test_single_draw_closed_form(self):
        rng = np.random.default_rng(6)
        (d,) = _toy_pdraws(rng, 1, p=2)
        y = rng.standard_normal(2)
        w = np.array([0.6, 0.4])
        mean = w @ (d.B @ d.f)
        var = w @ np.diag(d.omega) @ w
        want = stats.norm.logpdf(w @ y, mean, math.sqrt(var))
        assert pr.lps_ew(y, w, pdraws := [d]) == pytest.approx(want, abs=1e-10)


class TestCumulativeBayesFactor:
    def test_identical_series_zero(self):
        s = np.array([-1.2, -0.4, -3.0])
        assert pr.cum_log_bayes_factor(s, s) == 0.0

    def test_two_period_arithmetic(self):
        assert pr.cum_log_bayes_factor([1.0, 2.0], [0.5, 0.5]) == pytest.approx(
            2.0, abs=1e-15
        )

    def test_antisymmetry(self):
        rng = np.random.default_rng(8)
        a, b = rng.standard_normal(12), rng.standard_normal(12)
        assert pr.cum_log_bayes_factor(a, b) == pytest.approx(
            -pr.cum_log_bayes_factor(b, a), abs=1e-12
        )

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            pr.cum_log_bayes_factor([1.0, 2.0], [1.0])


class TestEvidenceLabel:
    @pytest.mark.parametrize(
        "value,label",
        [
            (14.940, pr.Evidence.VERY_STRONG),
            (1.269, pr.Evidence.POSITIVE),
            (-27.864, pr.Evidence.FAVOR_MODEL_0),
            (0.0, pr.Evidence.BARE_MENTION),
            (0.999, pr.Evidence.BARE_MENTION),
            (1.0, pr.Evidence.POSITIVE),
            (3.0, pr.Evidence.STRONG),
            (4.999, pr.Evidence.STRONG),
            (5.0, pr.Evidence.VERY_STRONG),  # boundary assigned upward
            (-1e-9, pr.Evidence.FAVOR_MODEL_0),
        ],
    )
    def test_brackets(self, value, label):
        assert pr.evidence_label(value) is label

    def test_nan_rejected(self):
        with pytest.raises(DataError):
            pr.evidence_label(float("nan"))


class TestForecastPipeline:
    def test_one_step_without_realization(self):
        _, draws = small_chain("odcfmsv")
        pf = pr.one_step_forecast(draws, np.random.default_rng(0))
        assert math.isnan(pf.lps) and math.isnan(pf.lps_ew)
        assert pf.var_5 > 0
        assert pf.index == 40  # periods 0..39 fitted, target is 40

    def test_backtest_bookkeeping_and_comparison(self):
        data, _ = small_chain("odcfmsv", T=46)
        cfg = McmcConfig(burn_in=10, kept=15)
        rep1 = pr.rolling_backtest(
            data, 42, 3, "odcfmsv", config=cfg, seed=21
        )
        rep0 = pr.rolling_backtest(data, 42, 3, "pg", config=cfg, seed=22)
        assert rep1.indices == [42, 43, 44]

        both = pr.compare_reports(rep1, rep0)
        diffs = rep1.lps_series - rep0.lps_series
        assert both.cum_log_bf == pytest.approx(np.sum(diffs), abs=1e-12)
        flipped = pr.compare_reports(rep0, rep1)
        assert both.cum_log_bf == pytest.approx(-flipped.cum_log_bf, abs=1e-12)
        assert both.evidence is pr.evidence_label(both.cum_log_bf)

        text = pr.serialize_report(both, "sigma.npy")
        assert text.count("record index=") == 3
        assert "cum_log_bf=" in text and "aggregate" in text

    def test_backtest_deterministic_under_seed(self):
        data, _ = small_chain("pg", T=44)
        cfg = McmcConfig(burn_in=8, kept=10)
        a = pr.rolling_backtest(data, 42, 2, "pg", config=cfg, seed=5)
        b = pr.rolling_backtest(data, 42, 2, "pg", config=cfg, seed=5)
        np.testing.assert_array_equal(a.lps_series, b.lps_series)
        np.testing.assert_array_equal(
            a.periods[0].sigma_hat, b.periods[0].sigma_hat
        )

    def test_backtest_window_validation(self):
        data, _ = small_chain("odcfmsv", T=44)
        with pytest.raises(DataError):
            pr.rolling_backtest(data, 43, 2, "odcfmsv")
        with pytest.raises(ConfigError):
            pr.rolling_backtest(data, 40, 0, "odcfmsv")
        with pytest.raises(ConfigError):
            pr.rolling_backtest(data, 1, 2, "odcfmsv")

    def test_report_period_mismatch_rejected(self):
        data, _ = small_chain("odcfmsv", T=44)
        cfg = McmcConfig(burn_in=8, kept=10)
        a = pr.rolling_backtest(data, 41, 2, "odcfmsv", config=cfg, seed=1)
        b = pr.rolling_backtest(data, 42, 2, "odcfmsv", config=cfg, seed=1)
        with pytest.raises(DataError):
            pr.compare_reports(a, b)
