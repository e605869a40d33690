"""Gibbs samplers for the three model variants.

One sweep visits, in order: the measurement block (loadings plus
idiosyncratic scale, or row-wise loadings plus per-series error
volatility), the per-factor volatility blocks, factor standardization,
the single-move correlation-precision path pass, the conjugate
innovation-scale draw, and adaptive rejection Metropolis steps for the
smoothness and tail parameters.  The covariance variant skips the
volatility blocks and treats the raw factors as the path observations.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError
from .matrixdist import cholesky_spd, wishart_logpdf
from .model import (
    CorrDynParams,
    CorrPath,
    FactorDataset,
    ModelVariant,
    PriorConfig,
    simulate_corr_path,
)
from .svsampler import (
    KSC_TABLE,
    PhiSigmaStep,
    ffbs_h,
    log_square_transform,
    sample_indicators,
    sample_mu,
    sample_phi_sigma,
)
from .wishartsampler import (
    ArmsConfig,
    arms,
    logpost_d,
    logpost_k,
    sample_A,
    transition_loglik,
)

CHECKPOINT_FORMAT = 1
_LOG2PI = math.log(2.0 * math.pi)


def _ig_logpdf(x: np.ndarray, shape: float, scale: float) -> float:
    lx = np.log(x)
    return float(
        np.sum(shape * math.log(scale) - math.lgamma(shape) - (shape + 1.0) * lx - scale / x)
    )


def _sv_logprior(H, mu, phi, sig2, pr: PriorConfig) -> float:
    """Log density of the volatility paths and their parameters: stationary
    AR(1) paths, normal levels, scaled-beta persistence, inverse-gamma
    innovation variances."""
    T = H.shape[0]
    one_m_phi2 = 1.0 - phi * phi
    innov = H[1:] - mu - phi * (H[:-1] - mu)
    total = -0.5 * float(
        (T - 1) * np.sum(np.log(2.0 * np.pi * sig2))
        + np.sum(innov * innov / sig2)
        + np.sum(np.log(2.0 * np.pi * sig2 / one_m_phi2))
        + np.sum((H[0] - mu) ** 2 * one_m_phi2 / sig2)
    )
    total += -0.5 * float(
        np.sum(np.log(2.0 * np.pi * pr.mu_prior_var) + mu * mu / pr.mu_prior_var)
    )
    a, b = pr.phi_beta_a, pr.phi_beta_b
    betaln = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    pt = 0.5 * (1.0 + phi)
    total += float(
        np.sum((a - 1.0) * np.log(pt) + (b - 1.0) * np.log1p(-pt)) - len(phi) * (betaln + math.log(2.0))
    )
    total += _ig_logpdf(sig2, pr.sigma_eta_shape, pr.sigma_eta_scale)
    return total


def _mvn_logpdf_sum(x: np.ndarray, cov: np.ndarray) -> float:
    """Sum over rows t of log N(x_t; 0, cov_t)."""
    L = np.linalg.cholesky(cov)
    z = np.linalg.solve(L, x[:, :, None])[..., 0]
    logdet = 2.0 * np.sum(np.log(L.diagonal(axis1=1, axis2=2)))
    return -0.5 * float(np.sum(z * z) + logdet + x.size * _LOG2PI)


@dataclass(frozen=True)
class McmcConfig:
    """Chain schedule: burn_in warmup sweeps, then kept * thin more with
    every thin-th recorded.

    path_thin keeps every path_thin-th recorded correlation path (the
    full path per draw is the one memory-heavy piece of the output).
    """

    burn_in: int = 10000
    kept: int = 10000
    thin: int = 1
    seed: int | None = None
    variant: str = ModelVariant.ODCFMSV.value
    adapt_every: int = 100
    arms_max_rejections: int = 1000
    path_thin: int = 1

    def __post_init__(self):
        v = self.variant
        v = v.value if isinstance(v, ModelVariant) else ModelVariant.parse(v).value
        object.__setattr__(self, "variant", v)
        if self.burn_in < 0:
            raise ConfigError("burn_in must be >= 0")
        if self.kept < 1 or self.thin < 1:
            raise ConfigError("kept and thin must be >= 1")
        if self.adapt_every < 1 or self.arms_max_rejections < 1:
            raise ConfigError("adapt_every and arms_max_rejections must be >= 1")
        if self.path_thin < 1:
            raise ConfigError("path_thin must be >= 1")

    @property
    def total_sweeps(self) -> int:
        return self.burn_in + self.kept * self.thin


def sample_B(
    Y: np.ndarray, F: np.ndarray, sigma_sq: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Matrix-normal conjugate draw of the loadings.

    Column covariance (F'F + I)^{-1}, row covariance diag(sigma_sq); the
    unit ridge comes from the N(0, sigma_j^2 I) prior on each loadings
    column.
    """
    q = F.shape[1]
    Sigma_B = np.linalg.inv(F.T @ F + np.eye(q))
    Sigma_B = 0.5 * (Sigma_B + Sigma_B.T)
    M = Y.T @ F @ Sigma_B
    L = cholesky_spd(Sigma_B)
    Z = rng.standard_normal(M.shape)
    return M + (np.sqrt(sigma_sq)[:, None] * Z) @ L.T


def sample_sigma_sq(
    Y: np.ndarray,
    F: np.ndarray,
    B: np.ndarray,
    priors: PriorConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Inverse-gamma draw of the idiosyncratic variances given B."""
    T = Y.shape[0]
    resid = Y - F @ B.T
    shape = 0.5 * (priors.nu0 + T)
    rate = 0.5 * (priors.nu0 * priors.s0 + np.sum(resid * resid, axis=0))
    return rate / rng.gamma(shape, 1.0, size=Y.shape[1])


def sample_loadings_hetero(
    Y: np.ndarray,
    F: np.ndarray,
    err_h: np.ndarray,
    c0: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Row-wise loadings draw when the measurement noise has log-variance
    path err_h (T, p); prior N(0, c0^2 I) per row."""
    p = Y.shape[1]
    q = F.shape[1]
    B = np.empty((p, q))
    prior_prec = np.eye(q) / (c0 * c0)
    for j in range(p):
        Fw = F * np.exp(-err_h[:, j])[:, None]
        cov = np.linalg.inv(prior_prec + F.T @ Fw)
        cov = 0.5 * (cov + cov.T)
        mean = cov @ (Fw.T @ Y[:, j])
        B[j] = mean + cholesky_spd(cov) @ rng.standard_normal(q)
    return B


def sv_group_sweep(
    fstar_col: np.ndarray,
    i: int,
    mu_arr: np.ndarray,
    phi_arr: np.ndarray,
    sig2_arr: np.ndarray,
    H: np.ndarray,
    steps: list[PhiSigmaStep],
    priors: PriorConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """One volatility-block pass for series i: indicators, the
    (phi, sigma_eta_sq) Metropolis step, the level, then the path.
    Mutates the parameter arrays and H in place; returns the indicators."""
    s = sample_indicators(fstar_col, H[:, i], rng)
    phi, sig2, _ = sample_phi_sigma(
        fstar_col, s, phi_arr[i], sig2_arr[i], priors, rng, steps[i]
    )
    mu = sample_mu(H[:, i], phi, sig2, priors.mu_prior_var, rng)
    H[:, i] = ffbs_h(fstar_col, s, mu, phi, sig2, rng)
    phi_arr[i] = phi
    sig2_arr[i] = sig2
    mu_arr[i] = mu
    return s


def corr_group_sweep(
    P_full: np.ndarray,
    A: np.ndarray,
    d: float,
    k: float,
    obs: np.ndarray,
    priors: PriorConfig,
    rng: np.random.Generator,
    lik_mode: int,
    d_cfg: ArmsConfig,
    k_cfg: ArmsConfig,
) -> tuple[np.ndarray, float, float, int, int]:
    """One pass of the correlation-group blocks on explicit state.

    Runs the single-move path sweep (mutating P_full in place, slot 0
    fixed), then the conjugate scale draw and the two scalar rejection
    samplers.  lik_mode 0 treats obs rows as standardized innovations,
    1 as raw vectors with covariance P_t.  Returns (A, d, k, accepts,
    chol_fails).
    """
    T, q = obs.shape
    caches = kernels.build_corr_caches(P_full)
    Pinv, eigvals, eigvecs, logdet = caches
    chi2 = np.empty((T, q))
    for i in range(q):
        chi2[:, i] = rng.chisquare(k - i, size=T)
    norms = rng.standard_normal((T, q, q))
    logu = np.log(rng.random(T))
    acc, fails = kernels.corr_path_sweep(
        P_full, Pinv, eigvals, eigvecs, logdet, np.ascontiguousarray(obs),
        A, np.linalg.inv(A), d, k, chi2, norms, logu, lik_mode,
    )
    path = CorrPath(P_full[1:])
    A = sample_A(path, d, k, priors, rng, caches=caches)
    d = arms(
        lambda dv: logpost_d(dv, path, A, k, priors, caches=caches),
        d, d_cfg, rng,
    )
    sums = kernels.wishart_trans_sums(
        Pinv, eigvals, eigvecs, logdet, np.linalg.inv(A), d
    )
    k = arms(
        lambda kv: logpost_k(kv, path, A, d, priors, caches=caches, sums=sums),
        k, k_cfg, rng,
    )
    return A, d, k, int(acc), int(fails)


@dataclass
class ChainDraws:
    """Recorded posterior draws plus running path summaries.

    Scalar blocks and the log-joint value are stored per kept draw; the
    latent paths are folded into online means (corr_mean is the
    standardized factor correlation path, cov_mean the return covariance
    path, portfolio_sd_mean the portfolio standard deviation under
    ``weights``).  h_last / P_last / err_h_last keep the final-time
    latent state of every draw for one-step-ahead prediction; P_path
    keeps every path_thin-th full correlation-precision path.  Blocks a
    variant does not have are zero-width.
    """

    variant: ModelVariant
    weights: np.ndarray
    B: np.ndarray
    sigma_sq: np.ndarray
    mu: np.ndarray
    phi: np.ndarray
    sigma_eta_sq: np.ndarray
    err_mu: np.ndarray
    err_phi: np.ndarray
    err_sigma_eta_sq: np.ndarray
    A: np.ndarray
    d: np.ndarray
    k: np.ndarray
    log_joint: np.ndarray
    h_last: np.ndarray
    err_h_last: np.ndarray
    P_last: np.ndarray
    P_path: np.ndarray
    path_thin: int
    corr_mean: np.ndarray
    cov_mean: np.ndarray
    portfolio_sd_mean: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    _ARRAYS = (
        "weights", "B", "sigma_sq", "mu", "phi", "sigma_eta_sq",
        "err_mu", "err_phi", "err_sigma_eta_sq", "A", "d", "k",
        "log_joint", "h_last", "err_h_last", "P_last", "P_path",
        "corr_mean", "cov_mean", "portfolio_sd_mean",
    )

    @property
    def n_draws(self) -> int:
        return self.d.shape[0]

    def save(self, path) -> None:
        meta = {
            "variant": self.variant.value,
            "path_thin": self.path_thin,
            "diagnostics": self.diagnostics,
        }
        arrays = {name: getattr(self, name) for name in self._ARRAYS}
        np.savez(path, meta=np.asarray(json.dumps(meta, sort_keys=True)), **arrays)

    @classmethod
    def load(cls, path) -> "ChainDraws":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"][()]))
            arrays = {name: z[name] for name in cls._ARRAYS}
        return cls(
            variant=ModelVariant(meta["variant"]),
            path_thin=meta["path_thin"],
            diagnostics=meta["diagnostics"],
            **arrays,
        )


class GibbsChain:
    """Stateful sampler over one dataset; supports checkpoint/resume.

    The same schedule split across save/load produces bit-identical
    draws: all randomness flows through one generator whose state is
    checkpointed, and per-sweep scratch (path caches, pre-drawn proposal
    noise) is rebuilt deterministically from the saved state.
    """

    def __init__(
        self,
        data: FactorDataset,
        config: McmcConfig | None = None,
        priors: PriorConfig | None = None,
        variant: ModelVariant | str | None = None,
        weights: np.ndarray | None = None,
        rng=None,
    ):
        self.data = data
        self.config = config if config is not None else McmcConfig()
        self.priors = priors if priors is not None else PriorConfig()
        if variant is None:
            variant = self.config.variant
        self.variant = (
            ModelVariant.parse(variant) if isinstance(variant, str) else variant
        )
        T, p, q = data.T, data.p, data.q
        if weights is None:
            w = np.full(p, 1.0 / p)
        else:
            w = np.asarray(weights, dtype=np.float64)
            if w.shape != (p,) or not np.all(np.isfinite(w)):
                raise ConfigError(f"weights must be a finite vector of length {p}")
        self.weights = w
        if rng is None:
            rng = self.config.seed
        self.rng = (
            rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        )

        Y, F = data.returns, data.factors
        Sigma_B = np.linalg.inv(F.T @ F + np.eye(q))
        self.B = Y.T @ F @ Sigma_B
        resid_var = np.clip((Y - F @ self.B.T).var(axis=0), 1e-8, None)
        has_factor_sv = self.variant is not ModelVariant.PG
        has_err_sv = self.variant is ModelVariant.SVERR
        self.sigma_sq = resid_var.copy() if not has_err_sv else np.empty(0)

        if has_factor_sv:
            self.fstar = log_square_transform(F)
            fvar = np.clip(F.var(axis=0), 1e-8, None)
            self.H = np.tile(np.log(fvar), (T, 1))
            self.mu = np.log(fvar)
            self.phi = np.full(q, 0.9)
            self.sigma_eta_sq = np.full(q, 0.0125)
            self.phi_steps = [PhiSigmaStep() for _ in range(q)]
        else:
            self.H = np.zeros((T, 0))
            self.mu = np.empty(0)
            self.phi = np.empty(0)
            self.sigma_eta_sq = np.empty(0)
            self.phi_steps = []
        if has_err_sv:
            self.err_H = np.tile(np.log(resid_var), (T, 1))
            self.err_mu = np.log(resid_var)
            self.err_phi = np.full(p, 0.9)
            self.err_sigma_eta_sq = np.full(p, 0.0125)
            self.err_steps = [PhiSigmaStep() for _ in range(p)]
        else:
            self.err_H = np.zeros((T, 0))
            self.err_mu = np.empty(0)
            self.err_phi = np.empty(0)
            self.err_sigma_eta_sq = np.empty(0)
            self.err_steps = []

        self.A = np.eye(q)
        self.d = 0.5
        self.k = float(q + 10)
        # a constant path leaves the memory parameter unidentified on the
        # first sweeps, so start from a forward draw of the transition
        init_corr = CorrDynParams(A=self.A, d=self.d, k=self.k)
        self.P_full = simulate_corr_path(init_corr, T, self.rng).with_initial()

        lo, hi = self.priors.d_bounds
        self._d_cfg = ArmsConfig(
            lo=lo, hi=hi, max_rejections=self.config.arms_max_rejections
        )
        self._k_cfg = ArmsConfig(
            lo=float(q),
            hi=float(q) + self.priors.k_domain_width,
            max_rejections=self.config.arms_max_rejections,
        )

        self.sweeps_done = 0
        self.n_recorded = 0
        self.pt_accepts = 0
        self.pt_proposals = 0
        self.chol_fails = 0
        self._alloc_draws()

    # -- storage -----------------------------------------------------------

    def _alloc_draws(self):
        M = self.config.kept
        T, p, q = self.data.T, self.data.p, self.data.q
        nq = self.mu.shape[0]
        ne = self.err_mu.shape[0]
        ns = self.sigma_sq.shape[0]
        self._draw_B = np.empty((M, p, q))
        self._draw_sigma_sq = np.empty((M, ns))
        self._draw_mu = np.empty((M, nq))
        self._draw_phi = np.empty((M, nq))
        self._draw_sigma_eta_sq = np.empty((M, nq))
        self._draw_err_mu = np.empty((M, ne))
        self._draw_err_phi = np.empty((M, ne))
        self._draw_err_sigma_eta_sq = np.empty((M, ne))
        self._draw_A = np.empty((M, q, q))
        self._draw_d = np.empty(M)
        self._draw_k = np.empty(M)
        self._draw_log_joint = np.empty(M)
        self._draw_h_last = np.empty((M, nq))
        self._draw_err_h_last = np.empty((M, ne))
        self._draw_P_last = np.empty((M, q, q))
        n_paths = -(-M // self.config.path_thin)
        self._draw_P_path = np.empty((n_paths, T, q, q))
        self.corr_mean = np.zeros((T, q, q))
        self.cov_mean = np.zeros((T, p, p))
        self.portfolio_sd_mean = np.zeros(T)

    # -- sweep blocks ------------------------------------------------------

    def _measurement_block(self):
        Y, F = self.data.returns, self.data.factors
        if self.variant is ModelVariant.SVERR:
            self.B = sample_loadings_hetero(Y, F, self.err_H, self.priors.c0, self.rng)
            err_fstar = log_square_transform(Y - F @ self.B.T)
            for j in range(self.data.p):
                sv_group_sweep(
                    err_fstar[:, j], j, self.err_mu, self.err_phi,
                    self.err_sigma_eta_sq, self.err_H, self.err_steps,
                    self.priors, self.rng,
                )
        else:
            self.B = sample_B(Y, F, self.sigma_sq, self.rng)
            self.sigma_sq = sample_sigma_sq(Y, F, self.B, self.priors, self.rng)

    def _factor_block(self):
        for i in range(self.data.q):
            sv_group_sweep(
                self.fstar[:, i], i, self.mu, self.phi, self.sigma_eta_sq,
                self.H, self.phi_steps, self.priors, self.rng,
            )

    def _corr_block(self):
        if self.variant is ModelVariant.PG:
            obs = self.data.factors
            lik_mode = 1
        else:
            obs = np.exp(-0.5 * self.H) * self.data.factors
            lik_mode = 0
        self.A, self.d, self.k, acc, fails = corr_group_sweep(
            self.P_full, self.A, self.d, self.k, obs, self.priors, self.rng,
            lik_mode, self._d_cfg, self._k_cfg,
        )
        self.pt_accepts += acc
        self.pt_proposals += self.data.T
        self.chol_fails += fails

    def sweep(self):
        """One full Gibbs sweep plus schedule bookkeeping."""
        cfg = self.config
        self._measurement_block()
        if self.variant is not ModelVariant.PG:
            self._factor_block()
        self._corr_block()
        self.sweeps_done += 1
        if self.sweeps_done <= cfg.burn_in:
            if self.sweeps_done % cfg.adapt_every == 0:
                for st in self.phi_steps:
                    st.adapt()
                for st in self.err_steps:
                    st.adapt()
        else:
            offset = self.sweeps_done - cfg.burn_in - 1
            if offset % cfg.thin == 0 and self.n_recorded < cfg.kept:
                self._record()

    def log_joint(self) -> float:
        """Log density of (data, latent paths, parameters) at the current
        state.  The innovation-scale prior is evaluated on the precision
        A^{-1} and the correlation path on the precisions P_t^{-1}."""
        pr = self.priors
        Y, F = self.data.returns, self.data.factors
        T, p, q = self.data.T, self.data.p, self.data.q
        total = 0.0

        resid = Y - F @ self.B.T
        if self.variant is ModelVariant.SVERR:
            total += -0.5 * float(
                np.sum(resid * resid * np.exp(-self.err_H))
                + np.sum(self.err_H) + T * p * _LOG2PI
            )
            c2 = pr.c0 * pr.c0
            total += -0.5 * float(
                np.sum(self.B * self.B) / c2 + p * q * (_LOG2PI + math.log(c2))
            )
            total += _sv_logprior(self.err_H, self.err_mu, self.err_phi,
                                  self.err_sigma_eta_sq, pr)
        else:
            ls = np.log(self.sigma_sq)
            total += -0.5 * float(
                np.sum(resid * resid / self.sigma_sq) + T * np.sum(ls) + T * p * _LOG2PI
            )
            total += -0.5 * float(
                np.sum(self.B * self.B / self.sigma_sq[:, None])
                + q * np.sum(ls) + p * q * _LOG2PI
            )
            total += _ig_logpdf(self.sigma_sq, 0.5 * pr.nu0, 0.5 * pr.nu0 * pr.s0)

        P = self.P_full[1:]
        if self.variant is ModelVariant.PG:
            total += _mvn_logpdf_sum(F, P)
        else:
            total += _sv_logprior(self.H, self.mu, self.phi, self.sigma_eta_sq, pr)
            dg = np.sqrt(P.diagonal(axis1=1, axis2=2))
            R = P / (dg[:, :, None] * dg[:, None, :])
            total += _mvn_logpdf_sum(np.exp(-0.5 * self.H) * F, R)
            total += -0.5 * float(np.sum(self.H))

        Pinv, eigvals, eigvecs, logdets = kernels.build_corr_caches(self.P_full)
        A_inv = np.linalg.inv(self.A)
        sums = kernels.wishart_trans_sums(Pinv, eigvals, eigvecs, logdets, A_inv, self.d)
        logdet_A = float(np.linalg.slogdet(self.A)[1])
        total += transition_loglik(*sums, T, q, logdet_A, self.d, self.k)

        a_df = pr.a_df if pr.a_df is not None else float(q)
        total += wishart_logpdf(A_inv, a_df, np.eye(q) / a_df)
        lo, hi = pr.d_bounds
        total += -math.log(hi - lo)
        total += math.log(pr.k_rate) - pr.k_rate * (self.k - q)
        return total

    def _check_invariants(self):
        # storage-time type invariants on the draw being recorded
        q = self.data.q
        assert np.all(np.abs(self.phi) < 1.0) and np.all(np.abs(self.err_phi) < 1.0)
        assert np.all(self.sigma_sq > 0.0)
        assert np.all(self.sigma_eta_sq > 0.0) and np.all(self.err_sigma_eta_sq > 0.0)
        assert -1.0 < self.d < 1.0
        assert self.k > q
        try:
            np.linalg.cholesky(self.A)
            np.linalg.cholesky(self.P_full)
        except np.linalg.LinAlgError as exc:
            raise AssertionError("stored draw has a non-SPD matrix") from exc

    def _record(self):
        self._check_invariants()
        m = self.n_recorded
        self._draw_B[m] = self.B
        self._draw_sigma_sq[m] = self.sigma_sq
        self._draw_mu[m] = self.mu
        self._draw_phi[m] = self.phi
        self._draw_sigma_eta_sq[m] = self.sigma_eta_sq
        self._draw_err_mu[m] = self.err_mu
        self._draw_err_phi[m] = self.err_phi
        self._draw_err_sigma_eta_sq[m] = self.err_sigma_eta_sq
        self._draw_A[m] = self.A
        self._draw_d[m] = self.d
        self._draw_k[m] = self.k
        lj = self.log_joint()
        assert math.isfinite(lj)
        self._draw_log_joint[m] = lj
        if self.H.shape[1]:
            self._draw_h_last[m] = self.H[-1]
        if self.err_H.shape[1]:
            self._draw_err_h_last[m] = self.err_H[-1]
        self._draw_P_last[m] = self.P_full[-1]
        if m % self.config.path_thin == 0:
            self._draw_P_path[m // self.config.path_thin] = self.P_full[1:]
        self.n_recorded = n = m + 1

        P = self.P_full[1:]
        dg = np.sqrt(P.diagonal(axis1=1, axis2=2))
        R = P / (dg[:, :, None] * dg[:, None, :])
        if self.variant is ModelVariant.PG:
            mid = P
        else:
            sv = np.exp(0.5 * self.H)
            mid = R * (sv[:, :, None] * sv[:, None, :])
        cov = np.einsum("pi,tij,rj->tpr", self.B, mid, self.B)
        p = self.data.p
        idx = np.arange(p)
        if self.variant is ModelVariant.SVERR:
            cov[:, idx, idx] += np.exp(self.err_H)
        else:
            cov[:, idx, idx] += self.sigma_sq
        sd = np.sqrt(
            np.clip(np.einsum("tpr,p,r->t", cov, self.weights, self.weights), 0.0, None)
        )
        self.corr_mean += (R - self.corr_mean) / n
        self.cov_mean += (cov - self.cov_mean) / n
        self.portfolio_sd_mean += (sd - self.portfolio_sd_mean) / n

    # -- driving -----------------------------------------------------------

    def run(self, n_sweeps: int | None = None) -> "GibbsChain":
        total = self.config.total_sweeps
        target = total if n_sweeps is None else min(total, self.sweeps_done + n_sweeps)
        while self.sweeps_done < target:
            self.sweep()
        return self

    def draws(self) -> ChainDraws:
        """Snapshot of everything recorded so far."""
        m = self.n_recorded
        diag = {
            "sweeps_done": self.sweeps_done,
            "n_recorded": m,
            "n_obs": self.data.T,
            "pt_accept_rate": (
                self.pt_accepts / self.pt_proposals if self.pt_proposals else 0.0
            ),
            "pt_chol_failures": self.chol_fails,
            "phi_accept_rates": [
                st.accepted / st.proposed if st.proposed else 0.0
                for st in self.phi_steps
            ],
            "err_phi_accept_rates": [
                st.accepted / st.proposed if st.proposed else 0.0
                for st in self.err_steps
            ],
        }
        mp = -(-m // self.config.path_thin)
        return ChainDraws(
            variant=self.variant,
            weights=self.weights.copy(),
            B=self._draw_B[:m].copy(),
            sigma_sq=self._draw_sigma_sq[:m].copy(),
            mu=self._draw_mu[:m].copy(),
            phi=self._draw_phi[:m].copy(),
            sigma_eta_sq=self._draw_sigma_eta_sq[:m].copy(),
            err_mu=self._draw_err_mu[:m].copy(),
            err_phi=self._draw_err_phi[:m].copy(),
            err_sigma_eta_sq=self._draw_err_sigma_eta_sq[:m].copy(),
            A=self._draw_A[:m].copy(),
            d=self._draw_d[:m].copy(),
            k=self._draw_k[:m].copy(),
            log_joint=self._draw_log_joint[:m].copy(),
            h_last=self._draw_h_last[:m].copy(),
            err_h_last=self._draw_err_h_last[:m].copy(),
            P_last=self._draw_P_last[:m].copy(),
            P_path=self._draw_P_path[:mp].copy(),
            path_thin=self.config.path_thin,
            corr_mean=self.corr_mean.copy(),
            cov_mean=self.cov_mean.copy(),
            portfolio_sd_mean=self.portfolio_sd_mean.copy(),
            diagnostics=diag,
        )

    # -- checkpointing -----------------------------------------------------

    _STATE_ARRAYS = (
        "B", "sigma_sq", "H", "mu", "phi", "sigma_eta_sq",
        "err_H", "err_mu", "err_phi", "err_sigma_eta_sq", "P_full", "A",
    )
    _DRAW_ARRAYS = (
        "_draw_B", "_draw_sigma_sq", "_draw_mu", "_draw_phi",
        "_draw_sigma_eta_sq", "_draw_err_mu", "_draw_err_phi",
        "_draw_err_sigma_eta_sq", "_draw_A", "_draw_d", "_draw_k",
        "_draw_log_joint", "_draw_h_last", "_draw_err_h_last", "_draw_P_last",
    )

    def save(self, path) -> None:
        """Write the full chain state; :meth:`load` resumes bit-identically."""
        meta = {
            "format": CHECKPOINT_FORMAT,
            "variant": self.variant.value,
            "config": asdict(self.config),
            "priors": asdict(self.priors),
            "sweeps_done": self.sweeps_done,
            "n_recorded": self.n_recorded,
            "pt_accepts": self.pt_accepts,
            "pt_proposals": self.pt_proposals,
            "chol_fails": self.chol_fails,
            "rng_state": self.rng.bit_generator.state,
            "phi_steps": [
                [list(map(float, st.scale)), st.accepted, st.proposed]
                for st in self.phi_steps
            ],
            "err_steps": [
                [list(map(float, st.scale)), st.accepted, st.proposed]
                for st in self.err_steps
            ],
        }
        arrays = {
            "returns": self.data.returns,
            "factors": self.data.factors,
            "weights": self.weights,
            "dk": np.array([self.d, self.k]),
            "corr_mean": self.corr_mean,
            "cov_mean": self.cov_mean,
            "portfolio_sd_mean": self.portfolio_sd_mean,
        }
        for name in self._STATE_ARRAYS:
            arrays[name] = getattr(self, name)
        m = self.n_recorded
        for name in self._DRAW_ARRAYS:
            arrays[name.lstrip("_")] = getattr(self, name)[:m]
        mp = -(-m // self.config.path_thin)
        arrays["draw_P_path"] = self._draw_P_path[:mp]
        np.savez(path, meta=np.asarray(json.dumps(meta, sort_keys=True)), **arrays)

    @classmethod
    def load(cls, path) -> "GibbsChain":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"][()]))
            if meta.get("format") != CHECKPOINT_FORMAT:
                raise ConfigError(
                    f"unsupported checkpoint format {meta.get('format')!r}"
                )
            pr = dict(meta["priors"])
            pr["d_bounds"] = tuple(pr["d_bounds"])
            chain = cls(
                FactorDataset(z["returns"], z["factors"]),
                config=McmcConfig(**meta["config"]),
                priors=PriorConfig(**pr),
                variant=ModelVariant(meta["variant"]),
                weights=z["weights"],
            )
            for name in cls._STATE_ARRAYS:
                setattr(chain, name, np.ascontiguousarray(z[name]))
            chain.d = float(z["dk"][0])
            chain.k = float(z["dk"][1])
            m = meta["n_recorded"]
            for name in cls._DRAW_ARRAYS:
                getattr(chain, name)[:m] = z[name.lstrip("_")]
            mp = -(-m // chain.config.path_thin)
            chain._draw_P_path[:mp] = z["draw_P_path"]
            chain.corr_mean = z["corr_mean"].copy()
            chain.cov_mean = z["cov_mean"].copy()
            chain.portfolio_sd_mean = z["portfolio_sd_mean"].copy()
        chain.sweeps_done = meta["sweeps_done"]
        chain.n_recorded = m
        chain.pt_accepts = meta["pt_accepts"]
        chain.pt_proposals = meta["pt_proposals"]
        chain.chol_fails = meta["chol_fails"]
        for st, (scale, accepted, proposed) in zip(chain.phi_steps, meta["phi_steps"]):
            st.scale = np.array(scale)
            st.accepted = accepted
            st.proposed = proposed
        for st, (scale, accepted, proposed) in zip(chain.err_steps, meta["err_steps"]):
            st.scale = np.array(scale)
            st.accepted = accepted
            st.proposed = proposed
        chain.rng.bit_generator.state = meta["rng_state"]
        return chain


def run_chain(
    data: FactorDataset,
    priors: PriorConfig | None = None,
    config: McmcConfig | None = None,
    rng=None,
    *,
    variant: ModelVariant | str | None = None,
    weights: np.ndarray | None = None,
) -> ChainDraws:
    """Run one chain to completion and return its draws."""
    return GibbsChain(data, config, priors, variant, weights, rng).run().draws()


# ---------------------------------------------------------------------------
# posterior summaries


@dataclass(frozen=True)
class SummaryRow:
    parameter: str
    name: str
    true: float | None
    mean: float
    lower: float
    upper: float

    @property
    def covered(self) -> bool | None:
        if self.true is None:
            return None
        return bool(self.lower <= self.true <= self.upper)


def _truth_entry(truth, group, index):
    if truth is None or group not in truth:
        return None
    val = truth[group]
    if index is None:
        return float(val)
    return float(np.asarray(val)[index])


def summarize(draws: ChainDraws, truth: dict | None = None) -> list[SummaryRow]:
    """Posterior mean and central 95 percent interval for every scalar
    parameter the variant carries.

    ``truth`` may hold arrays under the group names (B, omega, mu, phi,
    sigma_eta_sq, err_*, A, d, k); matching entries populate the ``true``
    column for coverage checks.
    """
    rows: list[SummaryRow] = []

    def emit(group, name, series, index):
        lo, hi = np.percentile(series, [2.5, 97.5])
        rows.append(
            SummaryRow(
                group, name, _truth_entry(truth, group, index),
                float(np.mean(series)), float(lo), float(hi),
            )
        )

    p, q = draws.B.shape[1], draws.B.shape[2]
    for r in range(p):
        for c in range(q):
            emit("B", f"B[{r + 1},{c + 1}]", draws.B[:, r, c], (r, c))
    for j in range(draws.sigma_sq.shape[1]):
        emit("omega", f"omega[{j + 1}]", draws.sigma_sq[:, j], j)
    for i in range(draws.mu.shape[1]):
        emit("mu", f"mu[{i + 1}]", draws.mu[:, i], i)
    for i in range(draws.phi.shape[1]):
        emit("phi", f"phi[{i + 1}]", draws.phi[:, i], i)
    for i in range(draws.sigma_eta_sq.shape[1]):
        emit("sigma_eta_sq", f"sigma_eta_sq[{i + 1}]", draws.sigma_eta_sq[:, i], i)
    for j in range(draws.err_mu.shape[1]):
        emit("err_mu", f"err_mu[{j + 1}]", draws.err_mu[:, j], j)
    for j in range(draws.err_phi.shape[1]):
        emit("err_phi", f"err_phi[{j + 1}]", draws.err_phi[:, j], j)
    for j in range(draws.err_sigma_eta_sq.shape[1]):
        emit(
            "err_sigma_eta_sq", f"err_sigma_eta_sq[{j + 1}]",
            draws.err_sigma_eta_sq[:, j], j,
        )
    for r in range(q):
        for c in range(r, q):
            emit("A", f"A[{r + 1},{c + 1}]", draws.A[:, r, c], (r, c))
    emit("d", "d", draws.d, None)
    emit("k", "k", draws.k, None)
    return rows


def coverage_count(rows: list[SummaryRow]) -> tuple[int, int]:
    """(number of covered true values, number of rows with a true value)"""
    with_truth = [r for r in rows if r.true is not None]
    return sum(1 for r in with_truth if r.covered), len(with_truth)
