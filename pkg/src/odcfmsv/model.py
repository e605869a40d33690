"""Model types, priors, simulators, and the joint density.

The observation model is a latent-factor decomposition of returns where
the observed factors carry stochastic volatility and a dynamically
correlated innovation vector.  Correlation dynamics follow an inverse
Wishart transition on the precision of a latent SPD matrix P_t whose
standardized version is the innovation correlation.  Three variants share
the machinery:

``odcfmsv``
    Factors observed; factor innovations standardized from P_t; constant
    diagonal idiosyncratic variance.
``pg``
    Factors observed with covariance P_t itself (no SV, no
    standardization); constant diagonal idiosyncratic variance.
``sverr``
    As ``odcfmsv`` but the idiosyncratic errors carry their own SV paths
    instead of constant variances.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .matrixdist import cholesky_spd, spd_power, sample_wishart, standardize_corr, wishart_logpdf

__all__ = [
    "ModelVariant",
    "PriorConfig",
    "FactorDataset",
    "MeasurementParams",
    "SvParams",
    "SvPath",
    "CorrDynParams",
    "CorrPath",
    "ModelState",
    "simulate_odcfmsv",
    "simulate_pg",
    "log_joint",
    "log_joint_terms",
    "sigma_eps_path",
    "sigma_y_path",
]

LOG2PI = math.log(2.0 * math.pi)


class ModelVariant(enum.Enum):
    ODCFMSV = "odcfmsv"
    PG = "pg"
    SVERR = "sverr"

    @classmethod
    def parse(cls, name: str) -> "ModelVariant":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(v.value for v in cls)
            raise ValueError(f"unknown variant {name!r}; expected one of: {valid}")


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters for every block.

    Defaults give the idiosyncratic variances an IG(5, 0.05) prior (mean
    0.0125), the volatility levels N(0, 10), the persistence parameters a
    Beta(20, 1.5) on (phi+1)/2 (mean 0.86), the innovation-scale inverse a
    Wishart with identity mean, a uniform smoothness parameter, and an
    exponential tail-parameter prior with mean q + 50.
    """

    nu0: float = 10.0
    s0: float = 0.01
    mu_prior_var: float = 10.0
    sigma_eta_shape: float = 5.0
    sigma_eta_scale: float = 0.05
    phi_beta_a: float = 20.0
    phi_beta_b: float = 1.5
    a_df: float | None = None  # defaults to q when used
    d_bounds: tuple[float, float] = (-1.0, 1.0)
    k_rate: float = 0.02
    k_domain_width: float = 800.0
    c0: float = 5.0

    def __post_init__(self):
        if self.nu0 <= 0 or self.s0 <= 0:
            raise ValueError("nu0 and s0 must be positive")
        if self.sigma_eta_shape <= 1 or self.sigma_eta_scale <= 0:
            raise ValueError("sigma_eta prior must have shape > 1 and scale > 0")
        if self.phi_beta_a <= 0 or self.phi_beta_b <= 0:
            raise ValueError("phi beta parameters must be positive")
        lo, hi = self.d_bounds
        if not (-1.0 <= lo < hi <= 1.0):
            raise ValueError("d_bounds must satisfy -1 <= lo < hi <= 1")
        if self.k_rate <= 0 or self.k_domain_width <= 0:
            raise ValueError("k prior rate and domain width must be positive")
        if self.mu_prior_var <= 0 or self.c0 <= 0:
            raise ValueError("mu_prior_var and c0 must be positive")


def _check_finite_2d(x, name):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


@dataclass(frozen=True)
class FactorDataset:
    """Observed returns (T, p) and observed factors (T, q)."""

    returns: np.ndarray
    factors: np.ndarray

    def __post_init__(self):
        Y = _check_finite_2d(self.returns, "returns")
        F = _check_finite_2d(self.factors, "factors")
        if Y.shape[0] != F.shape[0]:
            raise ValueError(
                f"returns and factors disagree on T: {Y.shape[0]} vs {F.shape[0]}"
            )
        if Y.shape[0] < 2:
            raise ValueError("need at least two observations")
        if not (1 <= F.shape[1] <= Y.shape[1]):
            raise ValueError("need 1 <= q <= p")
        object.__setattr__(self, "returns", Y)
        object.__setattr__(self, "factors", F)

    @property
    def T(self) -> int:
        return self.returns.shape[0]

    @property
    def p(self) -> int:
        return self.returns.shape[1]

    @property
    def q(self) -> int:
        return self.factors.shape[1]


@dataclass(frozen=True)
class MeasurementParams:
    """Loadings B (p, q) and idiosyncratic variances omega (p,)."""

    B: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        B = _check_finite_2d(self.B, "B")
        om = np.asarray(self.omega, dtype=np.float64)
        if om.ndim != 1 or om.shape[0] != B.shape[0]:
            raise ValueError("omega must be 1-d with one entry per return series")
        if np.any(om <= 0):
            raise ValueError("omega entries must be positive")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "omega", om)


@dataclass(frozen=True)
class SvParams:
    """Per-series AR(1) log-variance parameters."""

    mu: np.ndarray
    phi: np.ndarray
    sigma_eta_sq: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        phi = np.atleast_1d(np.asarray(self.phi, dtype=np.float64))
        s2 = np.atleast_1d(np.asarray(self.sigma_eta_sq, dtype=np.float64))
        if not (mu.shape == phi.shape == s2.shape):
            raise ValueError("mu, phi, sigma_eta_sq must share one shape")
        if np.any(np.abs(phi) >= 1.0):
            raise ValueError("|phi| must be < 1")
        if np.any(s2 < 0.0):
            raise ValueError("sigma_eta_sq must be >= 0")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "sigma_eta_sq", s2)


@dataclass(frozen=True)
class SvPath:
    """Log-variance path, shape (T, n_series)."""

    h: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "h", _check_finite_2d(self.h, "h"))

    def vol(self) -> np.ndarray:
        """exp(h / 2)"""
        return np.exp(0.5 * self.h)


@dataclass(frozen=True)
class CorrDynParams:
    """Innovation scale A (SPD), smoothness d in (-1, 1), tail k > q."""

    A: np.ndarray
    d: float
    k: float

    def __post_init__(self):
        A = _check_finite_2d(self.A, "A")
        cholesky_spd(A)  # raises if not SPD
        q = A.shape[0]
        if not -1.0 < self.d < 1.0:
            raise ValueError(f"d must lie in (-1, 1), got {self.d}")
        if not self.k > q:
            raise ValueError(f"k must exceed the dimension {q}, got {self.k}")
        object.__setattr__(self, "A", A)

    @property
    def q(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class CorrPath:
    """Latent SPD path P_1..P_T, shape (T, q, q); P_0 is the identity."""

    P: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=np.float64)
        if P.ndim != 3 or P.shape[1] != P.shape[2]:
            raise ValueError(f"P must have shape (T, q, q), got {P.shape}")
        if not np.all(np.isfinite(P)):
            raise ValueError("P contains non-finite values")
        object.__setattr__(self, "P", P)

    @property
    def T(self) -> int:
        return self.P.shape[0]

    @property
    def q(self) -> int:
        return self.P.shape[1]

    def with_initial(self) -> np.ndarray:
        """Path including the identity initial condition in slot 0."""
        out = np.empty((self.T + 1, self.q, self.q))
        out[0] = np.eye(self.q)
        out[1:] = self.P
        return out


@dataclass(frozen=True)
class ModelState:
    """All parameters and latent paths of one variant, bundled."""

    meas: MeasurementParams
    corr: CorrDynParams
    corr_path: CorrPath
    sv: SvParams | None = None
    sv_path: SvPath | None = None
    err_sv: SvParams | None = None
    err_sv_path: SvPath | None = None


def transition_scale(P_prev: np.ndarray, corr: CorrDynParams) -> np.ndarray:
    """Scale matrix S of the precision transition W(k, S) given P_{t-1}."""
    M = spd_power(P_prev, -0.5 * corr.d)
    return (M @ corr.A @ M) / corr.k


def simulate_corr_path(
    corr: CorrDynParams, T: int, rng: np.random.Generator
) -> CorrPath:
    """Draw P_1..P_T from the precision transition, starting at identity."""
    q = corr.q
    P = np.empty((T, q, q))
    prev = np.eye(q)
    for t in range(T):
        S = transition_scale(prev, corr)
        X = sample_wishart(corr.k, S, rng)
        L = cholesky_spd(X)
        Linv = np.linalg.inv(L)
        P[t] = Linv.T @ Linv
        prev = P[t]
    return CorrPath(P)


def _simulate_sv_path(sv: SvParams, T: int, rng: np.random.Generator) -> np.ndarray:
    n = sv.mu.shape[0]
    h = np.empty((T, n))
    sd = np.sqrt(sv.sigma_eta_sq)
    denom = 1.0 - sv.phi**2
    h[0] = sv.mu + np.where(sd > 0, sd / np.sqrt(denom), 0.0) * rng.standard_normal(n)
    for t in range(1, T):
        h[t] = sv.mu + sv.phi * (h[t - 1] - sv.mu) + sd * rng.standard_normal(n)
    return h


def simulate_odcfmsv(
    meas: MeasurementParams,
    sv: SvParams,
    corr: CorrDynParams,
    T: int,
    rng: np.random.Generator,
) -> tuple[FactorDataset, ModelState]:
    """Simulate returns and factors from the full model.

    Returns the dataset together with a state object holding the true
    parameters and latent paths.
    """
    p, q = meas.B.shape
    if sv.mu.shape[0] != q or corr.q != q:
        raise ValueError("factor dimension mismatch between parameter blocks")
    h = _simulate_sv_path(sv, T, rng)
    corr_path = simulate_corr_path(corr, T, rng)
    f = np.empty((T, q))
    for t in range(T):
        Sig = standardize_corr(corr_path.P[t])
        eps = cholesky_spd(Sig) @ rng.standard_normal(q)
        f[t] = np.exp(0.5 * h[t]) * eps
    e = np.sqrt(meas.omega) * rng.standard_normal((T, p))
    Y = f @ meas.B.T + e
    data = FactorDataset(Y, f)
    state = ModelState(
        meas=meas, corr=corr, corr_path=corr_path, sv=sv, sv_path=SvPath(h)
    )
    return data, state


def simulate_pg(
    meas: MeasurementParams,
    corr: CorrDynParams,
    T: int,
    rng: np.random.Generator,
) -> tuple[FactorDataset, ModelState]:
    """Simulate from the competing variant: factor covariance is P_t itself."""
    p, q = meas.B.shape
    if corr.q != q:
        raise ValueError("factor dimension mismatch between parameter blocks")
    corr_path = simulate_corr_path(corr, T, rng)
    f = np.empty((T, q))
    for t in range(T):
        f[t] = cholesky_spd(corr_path.P[t]) @ rng.standard_normal(q)
    e = np.sqrt(meas.omega) * rng.standard_normal((T, p))
    Y = f @ meas.B.T + e
    data = FactorDataset(Y, f)
    state = ModelState(meas=meas, corr=corr, corr_path=corr_path)
    return data, state


def sigma_eps_path(corr_path: CorrPath) -> np.ndarray:
    """Standardized (unit-diagonal) version of each P_t."""
    P = corr_path.P
    d = np.sqrt(np.einsum("tii->ti", P))
    R = P / (d[:, :, None] * d[:, None, :])
    for i in range(corr_path.q):
        R[:, i, i] = 1.0
    return R


def sigma_y_path(
    state: ModelState, variant: ModelVariant = ModelVariant.ODCFMSV
) -> np.ndarray:
    """Conditional return covariance path implied by a state."""
    B = state.meas.B
    if variant is ModelVariant.PG:
        mid = state.corr_path.P
    else:
        R = sigma_eps_path(state.corr_path)
        v = np.exp(0.5 * state.sv_path.h)
        mid = R * (v[:, :, None] * v[:, None, :])
    out = np.einsum("ij,tjk,lk->til", B, mid, B)
    if variant is ModelVariant.SVERR:
        lam = np.exp(state.err_sv_path.h)
        idx = np.arange(B.shape[0])
        out[:, idx, idx] += lam
    else:
        out[:, np.arange(B.shape[0]), np.arange(B.shape[0])] += state.meas.omega
    return out


def _norm_logpdf_diag(X: np.ndarray, var: np.ndarray) -> float:
    # sum of independent normal log densities; var broadcasts against X
    return float(
        -0.5 * np.sum(LOG2PI + np.log(var) + X * X / var)
    )


def _sv_transition_logpdf(h: np.ndarray, sv: SvParams) -> float:
    out = 0.0
    for i in range(h.shape[1]):
        s2 = sv.sigma_eta_sq[i]
        if s2 <= 0:
            raise NumericalError("sv transition density needs sigma_eta_sq > 0")
        v0 = s2 / (1.0 - sv.phi[i] ** 2)
        r0 = h[0, i] - sv.mu[i]
        out += -0.5 * (LOG2PI + math.log(v0) + r0 * r0 / v0)
        r = h[1:, i] - sv.mu[i] - sv.phi[i] * (h[:-1, i] - sv.mu[i])
        out += float(-0.5 * np.sum(LOG2PI + math.log(s2) + r * r / s2))
    return out


def _invgamma_logpdf(x: float, shape: float, scale: float) -> float:
    if x <= 0:
        return -np.inf
    return shape * math.log(scale) - math.lgamma(shape) - (shape + 1) * math.log(x) - scale / x


def _sv_prior_logpdf(sv: SvParams, priors: PriorConfig) -> float:
    out = 0.0
    logbeta = (
        math.lgamma(priors.phi_beta_a)
        + math.lgamma(priors.phi_beta_b)
        - math.lgamma(priors.phi_beta_a + priors.phi_beta_b)
    )
    for i in range(sv.mu.shape[0]):
        out += -0.5 * (LOG2PI + math.log(priors.mu_prior_var) + sv.mu[i] ** 2 / priors.mu_prior_var)
        pt = 0.5 * (sv.phi[i] + 1.0)
        out += (
            (priors.phi_beta_a - 1.0) * math.log(pt)
            + (priors.phi_beta_b - 1.0) * math.log(1.0 - pt)
            - logbeta
            - math.log(2.0)
        )
        out += _invgamma_logpdf(sv.sigma_eta_sq[i], priors.sigma_eta_shape, priors.sigma_eta_scale)
    return out


def log_joint_terms(
    data: FactorDataset,
    state: ModelState,
    priors: PriorConfig,
    variant: ModelVariant = ModelVariant.ODCFMSV,
) -> dict[str, float]:
    """Named additive pieces of the log joint density.

    The correlation-path factor is a density over the precision path, the
    same convention every sampler block uses.  Raises
    :class:`NumericalError` naming the first non-finite term.
    """
    Y, F = data.returns, data.factors
    T, p, q = data.T, data.p, data.q
    meas, corr = state.meas, state.corr
    terms: dict[str, float] = {}

    resid = Y - F @ meas.B.T
    if variant is ModelVariant.SVERR:
        lam = np.exp(state.err_sv_path.h)
        terms["measurement"] = _norm_logpdf_diag(resid, lam)
    else:
        terms["measurement"] = _norm_logpdf_diag(resid, meas.omega[None, :])

    if variant in (ModelVariant.ODCFMSV, ModelVariant.SVERR):
        h = state.sv_path.h
        terms["sv_transition"] = _sv_transition_logpdf(h, state.sv)
        eps = np.exp(-0.5 * h) * F
        # density of the observed factors: standardized-innovation density
        # plus the log Jacobian of the volatility scaling
        ll = -0.5 * float(np.sum(h))
        for t in range(T):
            Sig = standardize_corr(state.corr_path.P[t])
            L = cholesky_spd(Sig)
            u = np.linalg.solve(L, eps[t])
            ll += -0.5 * (q * LOG2PI + 2.0 * np.sum(np.log(np.diag(L))) + u @ u)
        terms["factor_given_corr"] = float(ll)
    else:
        ll = 0.0
        for t in range(T):
            L = cholesky_spd(state.corr_path.P[t])
            u = np.linalg.solve(L, F[t])
            ll += -0.5 * (q * LOG2PI + 2.0 * np.sum(np.log(np.diag(L))) + u @ u)
        terms["factor_given_corr"] = float(ll)

    trans = 0.0
    prev = np.eye(q)
    for t in range(T):
        S = transition_scale(prev, corr)
        X = np.linalg.inv(state.corr_path.P[t])
        trans += wishart_logpdf(X, corr.k, S)
        prev = state.corr_path.P[t]
    terms["corr_transition"] = float(trans)

    if variant is ModelVariant.SVERR:
        terms["prior_B"] = _norm_logpdf_diag(meas.B, np.full((1, q), priors.c0**2))
    else:
        # loading columns share the idiosyncratic covariance
        terms["prior_B"] = _norm_logpdf_diag(meas.B, meas.omega[:, None])
        terms["prior_sigma"] = float(
            sum(
                _invgamma_logpdf(w, 0.5 * priors.nu0, 0.5 * priors.nu0 * priors.s0)
                for w in meas.omega
            )
        )

    if variant in (ModelVariant.ODCFMSV, ModelVariant.SVERR):
        terms["prior_sv"] = _sv_prior_logpdf(state.sv, priors)
    if variant is ModelVariant.SVERR:
        terms["err_sv_transition"] = _sv_transition_logpdf(state.err_sv_path.h, state.err_sv)
        terms["prior_err_sv"] = _sv_prior_logpdf(state.err_sv, priors)

    a_df = priors.a_df if priors.a_df is not None else float(q)
    lo, hi = priors.d_bounds
    prior_corr = wishart_logpdf(np.linalg.inv(corr.A), a_df, np.eye(q) / a_df)
    prior_corr += -math.log(hi - lo) if lo < corr.d < hi else -np.inf
    # k - q is exponential with rate k_rate
    prior_corr += math.log(priors.k_rate) - priors.k_rate * (corr.k - q)
    terms["prior_corr"] = float(prior_corr)

    for name, value in terms.items():
        if not np.isfinite(value):
            raise NumericalError(f"log joint term {name!r} is not finite: {value}")
    return terms


def log_joint(
    data: FactorDataset,
    state: ModelState,
    priors: PriorConfig,
    variant: ModelVariant = ModelVariant.ODCFMSV,
) -> float:
    """Sum of :func:`log_joint_terms`."""
    return float(sum(log_joint_terms(data, state, priors, variant).values()))
