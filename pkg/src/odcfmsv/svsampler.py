"""Stochastic volatility block: mixture sampler for log-variance paths.

The observation equation ``log(f_t^2 + c) = h_t + log(chi2_1)`` is handled
by approximating the log chi-squared error with a seven-component normal
mixture, which makes the state equation conditionally linear-Gaussian.
Given mixture indicators the path is drawn by forward-filter
backward-sampling, the AR parameters by a random-walk Metropolis step on
the likelihood with the level and path integrated out, and the level by
its conjugate normal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NumericalError

__all__ = [
    "MixtureTable",
    "KSC_TABLE",
    "log_square_transform",
    "indicator_log_probs",
    "sample_indicators",
    "ffbs_h",
    "smoother_mean_h",
    "sv_loglik",
    "sample_phi_sigma",
    "sample_mu",
]

LOG2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MixtureTable:
    """Normal mixture approximation to the log chi-squared(1) density."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        m = np.asarray(self.means, dtype=np.float64)
        v = np.asarray(self.variances, dtype=np.float64)
        if not (w.shape == m.shape == v.shape) or w.ndim != 1:
            raise ValueError("mixture component arrays must share one shape")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {w.sum()!r}, not 1")
        if np.any(w < 0) or np.any(v <= 0):
            raise ValueError("mixture weights must be >= 0 and variances > 0")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    def mean(self) -> float:
        """Mixture mean; approximates E[log chi2_1] = -1.2704."""
        return float(self.weights @ self.means)


KSC_TABLE = MixtureTable(
    weights=np.array([0.00730, 0.10556, 0.00002, 0.04395, 0.34001, 0.24566, 0.25750]),
    means=np.array([-11.40039, -5.24321, -9.83726, 1.50746, -0.65098, 0.52478, -2.35859]),
    variances=np.array([5.79596, 2.61369, 5.17950, 0.16735, 0.64009, 0.34023, 1.26261]),
)


def log_square_transform(f: np.ndarray, c: float = 1e-5) -> np.ndarray:
    """Linearizing transform ``log(f^2 + c)``; the offset keeps zeros finite."""
    f = np.asarray(f, dtype=np.float64)
    return np.log(f * f + c)


def indicator_log_probs(
    fstar: np.ndarray, h: np.ndarray, table: MixtureTable = KSC_TABLE
) -> np.ndarray:
    """Log posterior probabilities of the mixture indicators.

    Returns an array of shape (T, n_components), rows normalized.
    """
    resid = np.asarray(fstar) - np.asarray(h)
    m = table.means
    v = table.variances
    logw = (
        np.log(table.weights)
        - 0.5 * (LOG2PI + np.log(v))
        - 0.5 * (resid[:, None] - m) ** 2 / v
    )
    top = logw.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(top)):
        raise NumericalError("indicator probabilities underflowed for some t")
    logz = top + np.log(np.exp(logw - top).sum(axis=1, keepdims=True))
    return logw - logz


def sample_indicators(
    fstar: np.ndarray,
    h: np.ndarray,
    rng: np.random.Generator,
    table: MixtureTable = KSC_TABLE,
) -> np.ndarray:
    """Draw mixture indicators s_t in {1, ..., n_components}."""
    probs = np.exp(indicator_log_probs(fstar, h, table))
    cum = np.cumsum(probs, axis=1)
    u = rng.uniform(size=(probs.shape[0], 1)) * cum[:, -1:]
    return 1 + (u > cum[:, :-1]).sum(axis=1).astype(np.int64)


def _moment_arrays(s: np.ndarray, table: MixtureTable):
    idx = np.asarray(s, dtype=np.int64) - 1
    if idx.min() < 0 or idx.max() >= table.n_components:
        raise ValueError("indicator out of range")
    return table.means[idx], table.variances[idx]


def ffbs_h(
    fstar: np.ndarray,
    s: np.ndarray,
    mu: float,
    phi: float,
    sigma_eta_sq: float,
    rng: np.random.Generator,
    table: MixtureTable = KSC_TABLE,
) -> np.ndarray:
    """Draw the log-variance path by forward-filter backward-sampling."""
    mean_s, var_s = _moment_arrays(s, table)
    z = rng.standard_normal(len(fstar))
    return kernels.ffbs_core(
        np.asarray(fstar, dtype=np.float64), mean_s, var_s, mu, phi, sigma_eta_sq, z
    )


def smoother_mean_h(
    fstar: np.ndarray,
    s: np.ndarray,
    mu: float,
    phi: float,
    sigma_eta_sq: float,
    table: MixtureTable = KSC_TABLE,
) -> np.ndarray:
    """Deterministic posterior mean of the path under the same model."""
    mean_s, var_s = _moment_arrays(s, table)
    return kernels.smoother_mean(
        np.asarray(fstar, dtype=np.float64), mean_s, var_s, mu, phi, sigma_eta_sq
    )


def sv_loglik(
    fstar: np.ndarray,
    s: np.ndarray,
    phi: float,
    sigma_eta_sq: float,
    mu_prior_var: float,
    table: MixtureTable = KSC_TABLE,
) -> float:
    """Likelihood of (phi, sigma_eta_sq) with level and path integrated out."""
    mean_s, var_s = _moment_arrays(s, table)
    return kernels.sv_marginal_loglik(
        np.asarray(fstar, dtype=np.float64), mean_s, var_s, phi, sigma_eta_sq, mu_prior_var
    )


def _log_prior_phi(phi: float, a: float, b: float) -> float:
    # phi = 2 phitilde - 1 with phitilde ~ Beta(a, b)
    pt = 0.5 * (phi + 1.0)
    if pt <= 0.0 or pt >= 1.0:
        return -np.inf
    logbeta = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    return (a - 1.0) * math.log(pt) + (b - 1.0) * math.log(1.0 - pt) - logbeta - math.log(2.0)


def _log_prior_invgamma(x: float, shape: float, scale: float) -> float:
    if x <= 0.0:
        return -np.inf
    return shape * math.log(scale) - math.lgamma(shape) - (shape + 1.0) * math.log(x) - scale / x


@dataclass
class PhiSigmaStep:
    """Random-walk step sizes for the (phi, sigma_eta_sq) block, with
    acceptance bookkeeping used for burn-in adaptation."""

    scale: np.ndarray = field(default_factory=lambda: np.array([0.15, 0.4]))
    accepted: int = 0
    proposed: int = 0

    def adapt(self, target: float = 0.3):
        # stepwise Robbins-Monro style rescaling during burn-in only
        if self.proposed == 0:
            return
        rate = self.accepted / self.proposed
        factor = math.exp(0.6 * (rate - target))
        self.scale = np.clip(self.scale * factor, 1e-3, 5.0)
        self.accepted = 0
        self.proposed = 0


def sample_phi_sigma(
    fstar: np.ndarray,
    s: np.ndarray,
    phi: float,
    sigma_eta_sq: float,
    priors,
    rng: np.random.Generator,
    step: PhiSigmaStep | None = None,
    table: MixtureTable = KSC_TABLE,
) -> tuple[float, float, bool]:
    """One Metropolis step for (phi, sigma_eta_sq).

    The proposal is a Gaussian random walk on (atanh phi, log sigma_eta_sq);
    the target is the integrated likelihood from :func:`sv_loglik` times the
    shifted-beta and inverse-gamma priors, with the change-of-variable
    terms included.
    """
    if step is None:
        step = PhiSigmaStep()

    def log_target(ph: float, sg2: float) -> float:
        lp = _log_prior_phi(ph, priors.phi_beta_a, priors.phi_beta_b)
        lp += _log_prior_invgamma(sg2, priors.sigma_eta_shape, priors.sigma_eta_scale)
        if not np.isfinite(lp):
            return -np.inf
        ll = sv_loglik(fstar, s, ph, sg2, priors.mu_prior_var, table)
        # Jacobian of (atanh, log) reparameterization
        return lp + ll + math.log1p(-ph * ph) + math.log(sg2)

    theta = np.array([math.atanh(phi), math.log(sigma_eta_sq)])
    prop = theta + step.scale * rng.standard_normal(2)
    phi_new = math.tanh(prop[0])
    sig_new = math.exp(prop[1])
    log_alpha = log_target(phi_new, sig_new) - log_target(phi, sigma_eta_sq)
    step.proposed += 1
    if math.log(rng.uniform()) < log_alpha:
        step.accepted += 1
        return phi_new, sig_new, True
    return phi, sigma_eta_sq, False


def sample_mu(
    h: np.ndarray,
    phi: float,
    sigma_eta_sq: float,
    prior_var: float,
    rng: np.random.Generator,
) -> float:
    """Conjugate draw of the log-variance level given the path.

    The stationary initial state and the T-1 transitions both inform mu;
    the prior is N(0, prior_var).
    """
    mean, var = mu_conditional(h, phi, sigma_eta_sq, prior_var)
    return mean + math.sqrt(var) * rng.standard_normal()


def mu_conditional(
    h: np.ndarray, phi: float, sigma_eta_sq: float, prior_var: float
) -> tuple[float, float]:
    """Posterior mean and variance behind :func:`sample_mu`."""
    h = np.asarray(h, dtype=np.float64)
    T = h.shape[0]
    one_m_phi = 1.0 - phi
    prec = 1.0 / prior_var
    num = 0.0
    if sigma_eta_sq <= 0.0:
        raise NumericalError("sigma_eta_sq must be positive in mu update")
    prec += (1.0 - phi * phi) / sigma_eta_sq
    num += (1.0 - phi * phi) * h[0] / sigma_eta_sq
    if T > 1:
        prec += (T - 1) * one_m_phi**2 / sigma_eta_sq
        num += one_m_phi * np.sum(h[1:] - phi * h[:-1]) / sigma_eta_sq
    var = 1.0 / prec
    return float(num * var), float(var)
