"""Symmetric positive definite matrix utilities and Wishart tools.

Everything here operates on plain ``numpy`` arrays.  The light wrapper
types :class:`SpdMatrix` and :class:`CorrelationMatrix` validate their
invariants on construction and are used at API boundaries where the
domain meaning matters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NearSingularError, NotSpdError

__all__ = [
    "SpdMatrix",
    "CorrelationMatrix",
    "cholesky_spd",
    "spd_power",
    "sample_wishart",
    "wishart_logpdf",
    "log_mvgamma",
    "standardize_corr",
]

# Default floor for eigenvalues / diagonal entries before a matrix is
# treated as numerically singular.
EIG_FLOOR = 1e-12

_SYM_RTOL = 1e-8


def _as_square(M: np.ndarray, name: str = "matrix") -> np.ndarray:
    A = np.asarray(M, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    return A


def _check_symmetric(A: np.ndarray, name: str = "matrix") -> None:
    scale = max(1.0, float(np.max(np.abs(A))))
    if not np.all(np.abs(A - A.T) <= _SYM_RTOL * scale):
        raise NotSpdError(f"{name} is not symmetric")


@dataclass(frozen=True)
class SpdMatrix:
    """Validated symmetric positive definite matrix.

    Construction runs a Cholesky factorization, so a non-SPD argument
    fails immediately with the offending pivot index.
    """

    entries: np.ndarray

    def __post_init__(self):
        A = _as_square(self.entries, "SpdMatrix")
        _check_symmetric(A, "SpdMatrix")
        cholesky_spd(A)  # raises NotSpdError when not positive definite
        object.__setattr__(self, "entries", A)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class CorrelationMatrix:
    """SPD matrix with unit diagonal and off-diagonals in [-1, 1]."""

    entries: np.ndarray

    def __post_init__(self):
        A = _as_square(self.entries, "CorrelationMatrix")
        _check_symmetric(A, "CorrelationMatrix")
        if not np.allclose(np.diag(A), 1.0, atol=1e-10):
            raise NotSpdError("CorrelationMatrix diagonal must be 1")
        if np.any(np.abs(A) > 1.0 + 1e-10):
            raise NotSpdError("CorrelationMatrix entries must lie in [-1, 1]")
        cholesky_spd(A)
        object.__setattr__(self, "entries", A)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def cholesky_spd(M: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of an SPD matrix.

    Parameters
    ----------
    M : ndarray, shape (n, n)
        Symmetric positive definite matrix.

    Returns
    -------
    L : ndarray, shape (n, n)
        Lower triangular with ``L @ L.T == M``.

    Raises
    ------
    NotSpdError
        When a pivot is non-positive; the error names the failing pivot
        index (0-based).
    """
    A = _as_square(M, "cholesky input")
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        pass
    # Rerun slowly to locate the failing pivot for the error message.
    n = A.shape[0]
    L = np.zeros_like(A)
    for j in range(n):
        d = A[j, j] - L[j, :j] @ L[j, :j]
        if d <= 0.0 or not np.isfinite(d):
            raise NotSpdError(
                f"matrix is not positive definite: pivot {j} is {d:.3e}",
                pivot=j,
            )
        L[j, j] = math.sqrt(d)
        if j + 1 < n:
            L[j + 1 :, j] = (A[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    raise NotSpdError("matrix is not positive definite", pivot=n - 1)


def spd_power(M: np.ndarray, a: float, floor: float = EIG_FLOOR) -> np.ndarray:
    """Matrix power ``M**a`` of an SPD matrix via its spectral decomposition.

    Parameters
    ----------
    M : ndarray, shape (n, n)
        SPD matrix.
    a : float
        Exponent; any real value.
    floor : float
        Smallest admissible eigenvalue.

    Returns
    -------
    ndarray
        Symmetrized ``Q diag(w**a) Q'``.

    Raises
    ------
    NearSingularError
        When the smallest eigenvalue falls below ``floor``.
    """
    A = _as_square(M, "spd_power input")
    _check_symmetric(A, "spd_power input")
    w, Q = np.linalg.eigh(A)
    if w[0] < floor:
        raise NearSingularError(
            f"eigenvalue {w[0]:.3e} below floor {floor:.1e} in spd_power"
        )
    P = (Q * w**a) @ Q.T
    return 0.5 * (P + P.T)


def sample_wishart(df: float, S: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw from the Wishart distribution W(df, S) via the Bartlett factorization.

    Parameters
    ----------
    df : float
        Degrees of freedom; must be at least ``dim(S)``.
    S : ndarray, shape (q, q)
        SPD scale matrix, so the mean of the draw is ``df * S``.
    rng : numpy.random.Generator

    Returns
    -------
    ndarray
        One SPD draw.
    """
    A = _as_square(S, "Wishart scale")
    q = A.shape[0]
    if df < q:
        raise ValueError(f"Wishart df must be >= dimension ({q}), got {df}")
    C = cholesky_spd(A)
    T = np.zeros((q, q))
    for i in range(q):
        T[i, i] = math.sqrt(rng.chisquare(df - i))
        T[i, :i] = rng.standard_normal(i)
    L = C @ T
    return L @ L.T


def log_mvgamma(q: int, a: float) -> float:
    """Log of the multivariate gamma function Gamma_q(a).

    Defined for ``a > (q - 1) / 2``.
    """
    if q < 1:
        raise ValueError(f"dimension must be positive, got {q}")
    if a <= (q - 1) / 2.0:
        raise ValueError(f"log_mvgamma requires a > (q-1)/2 = {(q - 1) / 2}, got {a}")
    out = 0.25 * q * (q - 1) * math.log(math.pi)
    for i in range(1, q + 1):
        out += math.lgamma(a + (1 - i) / 2.0)
    return out


def wishart_logpdf(X: np.ndarray, df: float, S: np.ndarray) -> float:
    """Log density of W(df, S) evaluated at the SPD matrix ``X``."""
    Xa = _as_square(X, "Wishart point")
    Sa = _as_square(S, "Wishart scale")
    q = Xa.shape[0]
    if Sa.shape[0] != q:
        raise ValueError("X and S dimensions differ")
    if df < q:
        raise ValueError(f"Wishart df must be >= dimension ({q}), got {df}")
    Lx = cholesky_spd(Xa)
    Ls = cholesky_spd(Sa)
    logdet_x = 2.0 * float(np.sum(np.log(np.diag(Lx))))
    logdet_s = 2.0 * float(np.sum(np.log(np.diag(Ls))))
    # tr(S^{-1} X) = || Ls^{-1} Lx ||_F^2
    M = np.linalg.solve(Ls, Lx)
    trace_term = float(np.sum(M * M))
    return (
        0.5 * (df - q - 1.0) * logdet_x
        - 0.5 * trace_term
        - 0.5 * df * q * math.log(2.0)
        - 0.5 * df * logdet_s
        - log_mvgamma(q, 0.5 * df)
    )


def standardize_corr(P: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    """Rescale an SPD matrix to a correlation matrix.

    Computes ``diag(P)^{-1/2} P diag(P)^{-1/2}`` with an exactly-unit
    diagonal.

    Raises
    ------
    NearSingularError
        When a diagonal entry falls below ``floor``.
    """
    A = _as_square(P, "standardize_corr input")
    d = np.diag(A).copy()
    if np.min(d) < floor:
        raise NearSingularError(
            f"diagonal entry {np.min(d):.3e} below floor {floor:.1e}; "
            "matrix has a degenerate variance"
        )
    s = 1.0 / np.sqrt(d)
    R = A * np.outer(s, s)
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 1.0)
    return R
