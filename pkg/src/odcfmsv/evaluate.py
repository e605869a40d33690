"""Evaluation measures and the simulation comparison harness.

Pure measure functions (mean absolute error, Frobenius error, normal KL
divergence and its time average) plus the replicated two-model
comparison experiment and the rolling empirical-correlation utility.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, NumericalError, OdcfmsvError
from .gibbs import ChainDraws, McmcConfig, run_chain
from .model import ModelState, ModelVariant, sigma_eps_path, sigma_y_path
from .predict import VAR_QUANTILE
from .presets import simulate_preset

__all__ = [
    "PerformanceReport",
    "ExperimentScale",
    "DeltaMklResult",
    "mae_series",
    "frobenius_error",
    "fn_mean",
    "mean_ratio",
    "kl_normal",
    "mkl",
    "delta_mkl_experiment",
    "rolling_corr",
    "corr_pairs",
    "realized_cov",
    "smoothed_corr_series",
    "smoothed_var_series",
    "true_corr_series",
    "true_var_series",
]


def mae_series(estimate, truth) -> float:
    """Mean absolute deviation between two equal-length series."""
    a = np.asarray(estimate, dtype=np.float64)
    b = np.asarray(truth, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(f"series shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


def frobenius_error(sigma_true, sigma_est) -> float:
    """Frobenius norm of the difference of two same-size matrices."""
    a = np.asarray(sigma_true, dtype=np.float64)
    b = np.asarray(sigma_est, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(f"matrix shapes differ: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def fn_mean(true_path, est_path) -> float:
    """Frobenius error averaged over the periods of two matrix paths."""
    a = np.asarray(true_path, dtype=np.float64)
    b = np.asarray(est_path, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(f"path shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean(np.sqrt(np.sum((a - b) ** 2, axis=(1, 2)))))


def mean_ratio(numerator, denominator) -> float:
    """Mean over periods of the elementwise ratio of two error series."""
    a = np.asarray(numerator, dtype=np.float64)
    b = np.asarray(denominator, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(f"series shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean(a / b))


def _chol_or_raise(S, name):
    S = np.asarray(S, dtype=np.float64)
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise NumericalError(f"{name} is not symmetric positive definite") from None


def kl_normal(sigma0, sigma_est) -> float:
    """KL divergence between zero-mean normals with the given covariances.

    -p/2 + tr(est^{-1} true)/2 - log|true|/2 + log|est|/2; both inputs
    must be SPD.
    """
    S0 = np.asarray(sigma0, dtype=np.float64)
    S1 = np.asarray(sigma_est, dtype=np.float64)
    if S0.shape != S1.shape:
        raise DataError(f"covariance shapes differ: {S0.shape} vs {S1.shape}")
    L0 = _chol_or_raise(S0, "true covariance")
    L1 = _chol_or_raise(S1, "estimated covariance")
    p = S0.shape[0]
    half = np.linalg.solve(L1, L0)  # est^{-1} true = half' half via cholesky
    trace = float(np.sum(half * half))
    logdet0 = 2.0 * float(np.sum(np.log(np.diag(L0))))
    logdet1 = 2.0 * float(np.sum(np.log(np.diag(L1))))
    return -0.5 * p + 0.5 * trace - 0.5 * logdet0 + 0.5 * logdet1


def mkl(sigma0_path, sigma_est_path) -> float:
    """Time average of kl_normal along two covariance paths."""
    A = np.asarray(sigma0_path, dtype=np.float64)
    B = np.asarray(sigma_est_path, dtype=np.float64)
    if A.shape != B.shape:
        raise DataError(f"path shapes differ: {A.shape} vs {B.shape}")
    return float(np.mean([kl_normal(A[t], B[t]) for t in range(A.shape[0])]))


# -- replicated two-model comparison ---------------------------------------


@dataclass(frozen=True)
class ExperimentScale:
    """Sample size and chain schedule of one comparison replication."""

    T: int = 300
    burn_in: int = 1000
    kept: int = 2000
    thin: int = 1
    n_workers: int = 1

    def __post_init__(self):
        if self.T < 10:
            raise ConfigError("experiment sample size too small")
        if self.n_workers < 1:
            raise ConfigError("n_workers must be positive")


@dataclass(frozen=True)
class DeltaMklResult:
    """Mean and standard error of the wrong-minus-true MKL differences."""

    mean: float
    se: float
    deltas: np.ndarray
    n_failed: int

    def __iter__(self):
        return iter((self.mean, self.se))


_DGP_PRESET = {
    ModelVariant.ODCFMSV: "paper-3.1",
    ModelVariant.PG: "paper-3.1-pg",
}


def _fit_cov_path(data, variant, scale, rng) -> np.ndarray:
    cfg = McmcConfig(
        burn_in=scale.burn_in, kept=scale.kept, thin=scale.thin, variant=variant
    )
    return run_chain(data, config=cfg, rng=rng).cov_mean


def _delta_mkl_rep(dgp: ModelVariant, scale: ExperimentScale, child_rng) -> float:
    sim_rng, fit_true_rng, fit_wrong_rng = child_rng.spawn(3)
    data, state = simulate_preset(_DGP_PRESET[dgp], sim_rng, T=scale.T)
    sigma0 = sigma_y_path(state, dgp)
    wrong = ModelVariant.PG if dgp is ModelVariant.ODCFMSV else ModelVariant.ODCFMSV
    cov_true = _fit_cov_path(data, dgp, scale, fit_true_rng)
    cov_wrong = _fit_cov_path(data, wrong, scale, fit_wrong_rng)
    return mkl(sigma0, cov_wrong) - mkl(sigma0, cov_true)


def delta_mkl_experiment(
    dgp: ModelVariant | str,
    n_reps: int,
    scale: ExperimentScale | None = None,
    rng: np.random.Generator | None = None,
) -> DeltaMklResult:
    """Replicated wrong-minus-true MKL comparison for one DGP.

    Each replication simulates a dataset from the DGP, fits both model
    variants, and differences their MKL against the true covariance
    path.  Replications use independent child rng streams and may run
    in a process pool; failed replications are excluded and counted.
    """
    dgp = ModelVariant.parse(dgp) if isinstance(dgp, str) else dgp
    if dgp not in _DGP_PRESET:
        raise ConfigError(f"no comparison DGP for variant {dgp.value!r}")
    if n_reps < 1:
        raise ConfigError("n_reps must be positive")
    scale = scale if scale is not None else ExperimentScale()
    rng = rng if rng is not None else np.random.default_rng()
    children = rng.spawn(n_reps)
    deltas, n_failed = [], 0
    if scale.n_workers > 1:
        with ProcessPoolExecutor(max_workers=scale.n_workers) as pool:
            futures = [
                pool.submit(_delta_mkl_rep, dgp, scale, c) for c in children
            ]
            for fut in futures:
                try:
                    deltas.append(fut.result())
                except (OdcfmsvError, np.linalg.LinAlgError):
                    n_failed += 1
    else:
        for c in children:
            try:
                deltas.append(_delta_mkl_rep(dgp, scale, c))
            except (OdcfmsvError, np.linalg.LinAlgError):
                n_failed += 1
    if not deltas:
        raise NumericalError("every comparison replication failed")
    arr = np.array(deltas)
    se = float(np.std(arr, ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else math.nan
    return DeltaMklResult(
        mean=float(np.mean(arr)), se=se, deltas=arr, n_failed=n_failed
    )


# -- rolling empirical correlation ------------------------------------------


def corr_pairs(q: int) -> list[tuple[int, int]]:
    """Column index pairs (i, j), i < j, in the output order of rolling_corr."""
    return [(i, j) for i in range(q) for j in range(i + 1, q)]


def rolling_corr(X, r: int) -> np.ndarray:
    """Pairwise empirical correlations over centered windows [t-r, t+r].

    Windows are truncated to the available data near the endpoints, so
    the first and last r points average over fewer observations.
    Returns shape (T, n_pairs) with pairs ordered as corr_pairs gives.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"series matrix must be 2-d, got shape {X.shape}")
    T, q = X.shape
    if r < 1:
        raise ConfigError(f"window radius must be at least 1, got {r}")
    if 2 * r + 1 > T:
        raise DataError(f"window of radius {r} does not fit in {T} periods")
    pairs = corr_pairs(q)
    out = np.empty((T, len(pairs)))
    for t in range(T):
        lo, hi = max(0, t - r), min(T, t + r + 1)
        C = np.corrcoef(X[lo:hi], rowvar=False)
        for n, (i, j) in enumerate(pairs):
            out[t, n] = C[i, j]
    return out


def realized_cov(X) -> np.ndarray:
    """Within-period sample covariance with the n/(n-1) adjustment."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise DataError("realized covariance needs at least two observations")
    Xc = X - X.mean(axis=0)
    return (Xc.T @ Xc) / (n - 1)


# -- smoothing-measure adapters ---------------------------------------------


def smoothed_corr_series(draws: ChainDraws, i: int = 0, j: int = 1) -> np.ndarray:
    """Posterior-mean smoothed correlation of factor pair (i, j)."""
    return draws.corr_mean[:, max(i, j), min(i, j)]


def smoothed_var_series(draws: ChainDraws) -> np.ndarray:
    """Posterior-mean 5% VaR path of the weighted portfolio."""
    return VAR_QUANTILE * draws.portfolio_sd_mean


def true_corr_series(state: ModelState, i: int = 0, j: int = 1) -> np.ndarray:
    """True factor correlation path implied by a simulated state."""
    return sigma_eps_path(state.corr_path)[:, max(i, j), min(i, j)]


def true_var_series(
    state: ModelState, weights, variant: ModelVariant = ModelVariant.ODCFMSV
) -> np.ndarray:
    """True 5% VaR path of the weighted portfolio under a simulated state."""
    w = np.asarray(weights, dtype=np.float64)
    sig = sigma_y_path(state, variant)
    return VAR_QUANTILE * np.sqrt(np.einsum("i,tij,j->t", w, sig, w))


@dataclass(frozen=True)
class PerformanceReport:
    """Bundle of the evaluation measures; absent entries stay None.

    Every populated measure is nonnegative except the signed MKL
    difference.
    """

    mae_rho: float | None = None
    mae_var_smooth: float | None = None
    mae_var_forecast: float | None = None
    fn: float | None = None
    r_mae_var: float | None = None
    r_fn: float | None = None
    mkl: float | None = None
    delta_mkl_mean: float | None = None
    delta_mkl_se: float | None = None

    def __post_init__(self):
        for name in (
            "mae_rho", "mae_var_smooth", "mae_var_forecast",
            "fn", "r_mae_var", "r_fn", "mkl", "delta_mkl_se",
        ):
            v = getattr(self, name)
            if v is not None and not math.isnan(v) and v < 0:
                raise DataError(f"{name} must be nonnegative, got {v}")

    def serialize(self) -> str:
        lines = ["performance-report"]
        for name in (
            "mae_rho", "mae_var_smooth", "mae_var_forecast", "fn",
            "r_mae_var", "r_fn", "mkl", "delta_mkl_mean", "delta_mkl_se",
        ):
            v = getattr(self, name)
            if v is not None:
                lines.append(f"{name} {v:.10g}")
        return "\n".join(lines) + "\n"
