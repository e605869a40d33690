"""One-step-ahead prediction and model comparison.

Consumes the draws of a fitted chain and produces, per forecast period,
the predictive return covariance, the 5% portfolio VaR, the log
predictive score of the realized observation (joint and equally
weighted portfolio versions), and, when two models are compared, the
cumulative log predictive Bayes factor with its evidence label.

The predictive recipe per kept sweep: propagate each log-volatility one
AR(1) step, draw the next correlation state through one precision
transition, scale to the factor covariance, and draw a factor vector
from it.  Everything downstream is deterministic in those draws.
"""

from __future__ import annotations

import dataclasses
import enum
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError
from .gibbs import ChainDraws, McmcConfig, run_chain
from .matrixdist import cholesky_spd, sample_wishart, spd_power, standardize_corr
from .model import FactorDataset, ModelVariant, PriorConfig

__all__ = [
    "SweepView",
    "PredictiveDraw",
    "PeriodForecast",
    "ForecastReport",
    "Evidence",
    "sweep_view",
    "draw_predictive_factor_cov_o",
    "draw_predictive",
    "predictive_return_cov",
    "var_estimate",
    "lps",
    "lps_ew",
    "cum_log_bayes_factor",
    "evidence_label",
    "one_step_forecast",
    "rolling_backtest",
    "compare_reports",
    "serialize_report",
]

_LOG2PI = math.log(2.0 * math.pi)
VAR_QUANTILE = 1.645  # one-sided 5% normal quantile used throughout


@dataclass(frozen=True)
class SweepView:
    """The prediction-relevant state of a single kept sweep.

    Zero-width blocks of the variant come through as empty arrays, the
    same convention ChainDraws uses.
    """

    variant: ModelVariant
    B: np.ndarray
    sigma_sq: np.ndarray
    mu: np.ndarray
    phi: np.ndarray
    sigma_eta_sq: np.ndarray
    h_last: np.ndarray
    err_mu: np.ndarray
    err_phi: np.ndarray
    err_sigma_eta_sq: np.ndarray
    err_h_last: np.ndarray
    P_last: np.ndarray
    A: np.ndarray
    d: float
    k: float


def sweep_view(draws: ChainDraws, l: int) -> SweepView:
    """Extract sweep ``l`` of a chain as prediction input."""
    return SweepView(
        variant=draws.variant,
        B=draws.B[l],
        sigma_sq=draws.sigma_sq[l],
        mu=draws.mu[l],
        phi=draws.phi[l],
        sigma_eta_sq=draws.sigma_eta_sq[l],
        h_last=draws.h_last[l],
        err_mu=draws.err_mu[l],
        err_phi=draws.err_phi[l],
        err_sigma_eta_sq=draws.err_sigma_eta_sq[l],
        err_h_last=draws.err_h_last[l],
        P_last=draws.P_last[l],
        A=draws.A[l],
        d=float(draws.d[l]),
        k=float(draws.k[l]),
    )


@dataclass(frozen=True)
class PredictiveDraw:
    """One-step-ahead quantities generated from one kept sweep.

    ``factor_cov`` is the covariance the factor vector was drawn from:
    the volatility-scaled correlation draw for the observed-factor
    variants, the raw correlation-process state for the competing one.
    ``omega`` is the diagonal of the error covariance (a fresh
    log-volatility step under the SV-errors variant, the sweep's own
    sigma_sq otherwise).
    """

    V: np.ndarray
    sigma_eps: np.ndarray
    factor_cov: np.ndarray
    f: np.ndarray
    B: np.ndarray
    omega: np.ndarray
    return_cov: np.ndarray


def _next_corr_state(P_last, A, d, k, rng):
    # one precision transition: X ~ W(k, S) with S = (1/k) P^{-d/2} A P^{-d/2}
    M = spd_power(P_last, -0.5 * d)
    S = (M @ A @ M) / k
    X = sample_wishart(k, S, rng)
    L = cholesky_spd(X)
    Linv = np.linalg.inv(L)
    return Linv.T @ Linv


def _next_log_vol(mu, phi, sigma_eta_sq, h_last, rng):
    lam = phi * h_last + (1.0 - phi) * mu
    return lam + np.sqrt(sigma_eta_sq) * rng.standard_normal(mu.shape[0])


def _factor_cov_pieces(view: SweepView, rng):
    """(V, sigma_eps, factor_cov) for one sweep, variant aware."""
    P_next = _next_corr_state(view.P_last, view.A, view.d, view.k, rng)
    sigma_eps = standardize_corr(P_next)
    if view.variant is ModelVariant.PG:
        return np.ones(P_next.shape[0]), sigma_eps, P_next
    h_next = _next_log_vol(view.mu, view.phi, view.sigma_eta_sq, view.h_last, rng)
    V = np.exp(h_next)
    s = np.sqrt(V)
    R = sigma_eps * (s[:, None] * s[None, :])
    return V, sigma_eps, R


def draw_predictive_factor_cov_o(draw_l: SweepView, rng) -> np.ndarray:
    """Predictive factor covariance R for one sweep of an observed-factor fit.

    R = V^{1/2} Sigma_eps V^{1/2} where each predictive variance is
    exp(lambda_i + sigma_eta_i z) with lambda_i = phi_i h_i + (1-phi_i) mu_i,
    and Sigma_eps is the standardized draw of the next correlation state.
    """
    if draw_l.variant is ModelVariant.PG:
        raise ConfigError("observed-factor predictive requested from a pg sweep")
    _, _, R = _factor_cov_pieces(draw_l, rng)
    return R


def _error_diag(view: SweepView, rng):
    if view.variant is ModelVariant.SVERR:
        h = _next_log_vol(
            view.err_mu, view.err_phi, view.err_sigma_eta_sq, view.err_h_last, rng
        )
        return np.exp(h)
    return view.sigma_sq.copy()


def draw_predictive(draws: ChainDraws, rng) -> list[PredictiveDraw]:
    """One PredictiveDraw per kept sweep of the chain."""
    out = []
    q = draws.P_last.shape[1]
    for l in range(draws.n_draws):
        view = sweep_view(draws, l)
        V, sigma_eps, cov = _factor_cov_pieces(view, rng)
        f = cholesky_spd(cov) @ rng.standard_normal(q)
        omega = _error_diag(view, rng)
        ret = view.B @ cov @ view.B.T
        ret[np.diag_indices_from(ret)] += omega
        out.append(
            PredictiveDraw(
                V=V, sigma_eps=sigma_eps, factor_cov=cov, f=f,
                B=view.B, omega=omega, return_cov=ret,
            )
        )
    return out


def predictive_return_cov(
    draws: Sequence[PredictiveDraw], variant: ModelVariant | str | None = None
) -> np.ndarray:
    """Monte Carlo average of the per-sweep return covariances.

    The draws already carry the variant's factor covariance, so
    ``variant`` is accepted for interface symmetry only.
    """
    if len(draws) == 0:
        raise DataError("predictive_return_cov needs at least one draw")
    acc = np.zeros_like(draws[0].return_cov)
    for d in draws:
        acc += d.return_cov
    return acc / len(draws)


def var_estimate(cov_draws, w) -> float:
    """5% VaR of the weighted portfolio: 1.645 sqrt(mean of w' Sigma w)."""
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise DataError("portfolio weights must be finite")
    covs = np.asarray(cov_draws, dtype=np.float64)
    if covs.ndim == 2:
        covs = covs[None]
    quad = np.einsum("i,tij,j->t", w, covs, w)
    return VAR_QUANTILE * math.sqrt(float(np.mean(quad)))


def _stack_bfo(draws):
    # either a sequence of PredictiveDraw or a prestacked (B, f, omega) triple
    if isinstance(draws, tuple) and len(draws) == 3:
        B, f, omega = (np.asarray(x, dtype=np.float64) for x in draws)
        return B, f, omega
    B = np.stack([d.B for d in draws])
    f = np.stack([d.f for d in draws])
    omega = np.stack([d.omega for d in draws])
    return B, f, omega


def _log_mc_average(logdens: np.ndarray, context: str) -> float:
    m = float(np.max(logdens))
    if not math.isfinite(m):
        warnings.warn(
            f"{context}: every predictive density underflowed; score is -inf",
            RuntimeWarning,
        )
        return -math.inf
    return m + math.log(float(np.mean(np.exp(logdens - m))))


def lps(y_next, draws: Sequence[PredictiveDraw]) -> float:
    """Log predictive score: log of the Monte Carlo average of the
    conditional densities N_p(y | B f, Omega), max-shifted for stability."""
    if len(draws) == 0:
        raise DataError("lps needs at least one draw")
    y = np.asarray(y_next, dtype=np.float64)
    B, f, omega = _stack_bfo(draws)
    mean = np.einsum("lpq,lq->lp", B, f)
    resid = y[None, :] - mean
    logdens = -0.5 * (
        y.shape[0] * _LOG2PI
        + np.sum(np.log(omega), axis=1)
        + np.sum(resid * resid / omega, axis=1)
    )
    return _log_mc_average(logdens, "lps")


def lps_ew(y_next, w, draws: Sequence[PredictiveDraw]) -> float:
    """Log predictive score of the weighted portfolio w'y.

    Univariate analogue of :func:`lps` with conditional mean w'Bf and
    variance w'Omega w per sweep.
    """
    if len(draws) == 0:
        raise DataError("lps_ew needs at least one draw")
    w = np.asarray(w, dtype=np.float64)
    obs = float(w @ np.asarray(y_next, dtype=np.float64))
    B, f, omega = _stack_bfo(draws)
    mean = np.einsum("p,lpq,lq->l", w, B, f)
    var = omega @ (w * w)
    logdens = -0.5 * (_LOG2PI + np.log(var) + (obs - mean) ** 2 / var)
    return _log_mc_average(logdens, "lps_ew")


def cum_log_bayes_factor(lps_model1, lps_model0) -> float:
    """Sum over periods of the LPS differences, model 1 against model 0."""
    a = np.asarray(lps_model1, dtype=np.float64)
    b = np.asarray(lps_model0, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(
            f"LPS series have mismatched lengths {a.shape} vs {b.shape}"
        )
    return float(np.sum(a - b))


class Evidence(enum.Enum):
    """Half-open evidence brackets for a log predictive Bayes factor."""

    FAVOR_MODEL_0 = "favor Model 0"
    BARE_MENTION = "bare mention"
    POSITIVE = "positive"
    STRONG = "strong"
    VERY_STRONG = "very strong"


def evidence_label(log_bf: float) -> Evidence:
    """Classify a cumulative log Bayes factor of model 1 against model 0.

    Negative favors model 0; [0,1) is not worth more than a bare
    mention; [1,3) positive; [3,5) strong; 5 and above very strong (the
    boundary value is assigned upward).
    """
    x = float(log_bf)
    if math.isnan(x):
        raise DataError("evidence_label: log Bayes factor is NaN")
    if x < 0.0:
        return Evidence.FAVOR_MODEL_0
    if x < 1.0:
        return Evidence.BARE_MENTION
    if x < 3.0:
        return Evidence.POSITIVE
    if x < 5.0:
        return Evidence.STRONG
    return Evidence.VERY_STRONG


@dataclass(frozen=True)
class PeriodForecast:
    """One forecast period: target index, covariance, VaR, scores."""

    index: int
    sigma_hat: np.ndarray
    var_5: float
    lps: float
    lps_ew: float


@dataclass(frozen=True)
class ForecastReport:
    """Per-period forecasts plus, after comparison, Bayes factor aggregates.

    The aggregate block is attached by :func:`compare_reports`; the
    cumulative factors are exact sums of the stored per-period LPS
    differences, so additivity holds by construction.
    """

    variant: str
    weights: np.ndarray
    periods: tuple[PeriodForecast, ...]
    baseline: str | None = None
    cum_log_bf: float | None = None
    cum_log_bf_ew: float | None = None
    evidence: Evidence | None = None
    evidence_ew: Evidence | None = None

    @property
    def lps_series(self) -> np.ndarray:
        return np.array([p.lps for p in self.periods])

    @property
    def lps_ew_series(self) -> np.ndarray:
        return np.array([p.lps_ew for p in self.periods])

    @property
    def indices(self) -> list[int]:
        return [p.index for p in self.periods]


def one_step_forecast(
    draws: ChainDraws,
    rng,
    y_next=None,
    weights=None,
    index: int | None = None,
) -> PeriodForecast:
    """Forecast the period after the fitted sample from a finished chain.

    When the realized observation is unknown the scores are NaN; the
    covariance and VaR do not need it.
    """
    p = draws.B.shape[1]
    if weights is None:
        weights = np.full(p, 1.0 / p)
    pdraws = draw_predictive(draws, rng)
    sigma_hat = predictive_return_cov(pdraws, draws.variant)
    v = var_estimate(np.stack([d.return_cov for d in pdraws]), weights)
    if y_next is None:
        score = score_ew = math.nan
    else:
        score = lps(y_next, pdraws)
        score_ew = lps_ew(y_next, weights, pdraws)
    if index is None:
        index = int(draws.diagnostics.get("n_obs", -1))
    return PeriodForecast(
        index=index, sigma_hat=sigma_hat, var_5=v, lps=score, lps_ew=score_ew
    )


def rolling_backtest(
    data: FactorDataset,
    start: int,
    n_periods: int,
    variant: ModelVariant | str = ModelVariant.ODCFMSV,
    priors: PriorConfig | None = None,
    config: McmcConfig | None = None,
    seed=None,
    weights=None,
) -> ForecastReport:
    """Expanding-window one-step-ahead backtest.

    Period j refits the chain on rows [0, start+j) and scores row
    start+j; the realized observation then joins the sample for the
    next refit.  Refits are sequential by construction; each consumes
    an independent child rng stream so the report is reproducible under
    a fixed seed.
    """
    variant = ModelVariant.parse(variant) if isinstance(variant, str) else variant
    if n_periods < 1:
        raise ConfigError("backtest needs at least one forecast period")
    if start < 2:
        raise ConfigError("backtest start leaves no estimation sample")
    if start + n_periods > data.T:
        raise DataError(
            f"backtest needs rows up to {start + n_periods}, data has {data.T}"
        )
    if weights is None:
        weights = np.full(data.p, 1.0 / data.p)
    streams = np.random.SeedSequence(seed).spawn(n_periods)
    periods = []
    for j in range(n_periods):
        t = start + j
        sub = FactorDataset(data.returns[:t], data.factors[:t])
        fit_rng, pred_rng = (np.random.default_rng(s) for s in streams[j].spawn(2))
        draws = run_chain(sub, priors, config, fit_rng, variant=variant,
                          weights=weights)
        periods.append(
            one_step_forecast(
                draws, pred_rng, y_next=data.returns[t], weights=weights, index=t
            )
        )
    return ForecastReport(
        variant=variant.value, weights=np.asarray(weights, dtype=np.float64),
        periods=tuple(periods),
    )


def compare_reports(report1: ForecastReport, report0: ForecastReport) -> ForecastReport:
    """Attach cumulative Bayes factors of report1 against report0."""
    if report1.indices != report0.indices:
        raise DataError("forecast reports cover different periods")
    cum = cum_log_bayes_factor(report1.lps_series, report0.lps_series)
    cum_ew = cum_log_bayes_factor(report1.lps_ew_series, report0.lps_ew_series)
    return dataclasses.replace(
        report1,
        baseline=report0.variant,
        cum_log_bf=cum,
        cum_log_bf_ew=cum_ew,
        evidence=evidence_label(cum),
        evidence_ew=evidence_label(cum_ew),
    )


def serialize_report(report: ForecastReport, sigma_ref: str = "") -> str:
    """Structured-text rendering: one record per period plus aggregates.

    ``sigma_ref`` names the file the covariance path was saved to;
    records reference it by slot.
    """
    lines = ["forecast-report"]
    lines.append(f"variant {report.variant}")
    lines.append("weights " + " ".join(f"{x:.10g}" for x in report.weights))
    for slot, pf in enumerate(report.periods):
        ref = f"{sigma_ref}[{slot}]" if sigma_ref else "-"
        lines.append(
            f"record index={pf.index} sigma_ref={ref} "
            f"var={pf.var_5:.10g} lps={pf.lps:.10g} lps_ew={pf.lps_ew:.10g}"
        )
    lines.append(
        f"aggregate periods={len(report.periods)} "
        f"total_lps={float(np.sum(report.lps_series)):.10g} "
        f"total_lps_ew={float(np.sum(report.lps_ew_series)):.10g}"
    )
    if report.baseline is not None:
        lines.append(
            f"aggregate baseline={report.baseline} "
            f"cum_log_bf={report.cum_log_bf:.10g} "
            f"evidence={report.evidence.value!r} "
            f"cum_log_bf_ew={report.cum_log_bf_ew:.10g} "
            f"evidence_ew={report.evidence_ew.value!r}"
        )
    return "\n".join(lines) + "\n"
