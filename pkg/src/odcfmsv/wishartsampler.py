"""Correlation-process blocks: path updates, innovation scale, and the
smoothness/tail parameters.

The latent SPD path P_1..P_T evolves through a Wishart transition on its
precision, ``P_t^{-1} ~ W(k, S_{t-1})`` with
``S_{t-1} = (1/k) P_{t-1}^{-d/2} A P_{t-1}^{-d/2}``.  Path sites are
updated one at a time with the prior transition as proposal, the scale
matrix A has a conjugate Wishart conditional on its inverse, and the two
scalars (d, k) are drawn with adaptive rejection Metropolis sampling
since their conditionals are non-standard.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import SamplerError
from .matrixdist import cholesky_spd, log_mvgamma, sample_wishart, spd_power
from .model import CorrDynParams, CorrPath, PriorConfig

__all__ = [
    "ArmsConfig",
    "arms",
    "sample_pt",
    "pt_log_accept",
    "sample_A",
    "logpost_d",
    "logpost_k",
    "transition_loglik",
]

LOG2 = math.log(2.0)


# ---------------------------------------------------------------------------
# adaptive rejection Metropolis sampling


@dataclass(frozen=True)
class ArmsConfig:
    """Domain and budget for one ARMS target."""

    lo: float
    hi: float
    n_init: int = 5
    max_points: int = 50
    max_rejections: int = 1000

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("need lo < hi")
        if self.n_init < 3 or self.max_points < self.n_init:
            raise ValueError("need n_init >= 3 and max_points >= n_init")


def _line(x0, h0, x1, h1):
    # slope/intercept of the chord through two envelope points
    m = (h1 - h0) / (x1 - x0)
    return m, h0 - m * x0


def _build_envelope(xs, hs, lo, hi):
    """Piecewise-linear upper hull from chord extensions.

    Between interior points the envelope is
    ``max(inner chord, min(left extension, right extension))``; the
    boundary gaps use the nearest chord extended.  Returns a list of
    segments ``(a, b, slope, intercept)`` covering [lo, hi].
    """
    n = len(xs)
    chords = [_line(xs[i], hs[i], xs[i + 1], hs[i + 1]) for i in range(n - 1)]
    segments = []

    def add_piecewise(a, b, lines):
        # envelope restricted to [a, b] given candidate line set; the
        # candidate count is <= 3 so brute subdivision is cheap
        pts = {a, b}
        for i in range(len(lines)):
            for j in range(i + 1, len(lines)):
                m1, c1 = lines[i]
                m2, c2 = lines[j]
                if m1 != m2:
                    z = (c2 - c1) / (m1 - m2)
                    if a < z < b:
                        pts.add(z)
        cuts = sorted(pts)
        for u, v in zip(cuts[:-1], cuts[1:]):
            mid = 0.5 * (u + v)
            vals = [m * mid + c for m, c in lines]
            m, c = lines[int(np.argmax(vals))]
            segments.append((u, v, m, c))

    if lo < xs[0]:
        segments.append((lo, xs[0], *chords[0]))
    for i in range(n - 1):
        inner = chords[i]
        left = chords[i - 1] if i >= 1 else None
        right = chords[i + 1] if i + 2 <= n - 1 else None
        if left is None and right is None:
            segments.append((xs[i], xs[i + 1], *inner))
        else:
            if left is None:
                outer = [right]
            elif right is None:
                outer = [left]
            else:
                outer = [left, right]
            # max(inner, min(outer)): enumerate the distinct linear pieces
            if len(outer) == 1:
                add_piecewise(xs[i], xs[i + 1], [inner, outer[0]])
            else:
                # split where the two extensions cross, then max with inner
                m1, c1 = outer[0]
                m2, c2 = outer[1]
                zs = [xs[i], xs[i + 1]]
                if m1 != m2:
                    z = (c2 - c1) / (m1 - m2)
                    if xs[i] < z < xs[i + 1]:
                        zs = [xs[i], z, xs[i + 1]]
                for u, v in zip(zs[:-1], zs[1:]):
                    mid = 0.5 * (u + v)
                    low = outer[0] if m1 * mid + c1 <= m2 * mid + c2 else outer[1]
                    add_piecewise(u, v, [inner, low])
    if xs[-1] < hi:
        segments.append((xs[-1], hi, *chords[-1]))
    return segments


def _envelope_at(segments, x):
    for a, b, m, c in segments:
        if a <= x <= b:
            return m * x + c
    # x outside all segments only through float fuzz at the boundary
    a, b, m, c = segments[-1] if x > segments[-1][1] else segments[0]
    return m * x + c


def _segment_logmass(a, b, m, c):
    # log integral of exp(m x + c) over [a, b]
    d = b - a
    md = m * d
    if abs(md) < 1e-12:
        return c + m * a + math.log(d)
    if md > 0:
        return c + m * b + math.log1p(-math.exp(-md)) - math.log(m)
    return c + m * a + math.log1p(-math.exp(md)) - math.log(-m)


def _sample_segment(a, b, m, u):
    # inverse CDF of the density proportional to exp(m x) on [a, b]
    d = b - a
    md = m * d
    if abs(md) < 1e-12:
        return a + u * d
    if md > 0:
        # x = b + log(u + (1-u) exp(-md)) / m, stable for large md
        return b + math.log(u + (1.0 - u) * math.exp(-md)) / m
    return a + math.log1p(u * math.expm1(md)) / m


def _draw_from_envelope(segments, rng):
    logmass = np.array([_segment_logmass(*seg) for seg in segments])
    top = logmass.max()
    if not np.isfinite(top):
        raise SamplerError("envelope mass underflowed in ARMS")
    w = np.exp(logmass - top)
    w /= w.sum()
    idx = int(np.searchsorted(np.cumsum(w), rng.uniform(), side="right"))
    idx = min(idx, len(segments) - 1)
    a, b, m, _ = segments[idx]
    return _sample_segment(a, b, m, rng.uniform())


def arms(
    log_density,
    current: float,
    config: ArmsConfig,
    rng: np.random.Generator,
) -> float:
    """One adaptive rejection Metropolis sampling transition.

    Draws a candidate from a piecewise-exponential envelope built on
    chord secants, refines the envelope with every rejected candidate,
    and applies a final Metropolis correction against ``current`` so the
    step is exact even where the envelope underestimates the target.
    """
    lo, hi = config.lo, config.hi
    if not lo < current < hi:
        raise ValueError(f"current point {current} outside ({lo}, {hi})")
    span = hi - lo
    xs = list(lo + span * (np.arange(1, config.n_init + 1) / (config.n_init + 1.0)))
    if all(abs(current - x) > 1e-10 * span for x in xs):
        xs.append(current)
    xs.sort()
    hs = [float(log_density(x)) for x in xs]
    if not any(np.isfinite(hs)):
        raise SamplerError("ARMS initialization: target is -inf at every abscissa")
    h_curr = float(log_density(current))

    rejections = 0
    while True:
        segments = _build_envelope(xs, hs, lo, hi)
        x_cand = _draw_from_envelope(segments, rng)
        g_cand = _envelope_at(segments, x_cand)
        h_cand = float(log_density(x_cand))
        if math.log(rng.uniform()) <= h_cand - g_cand:
            break
        rejections += 1
        if rejections > config.max_rejections:
            raise SamplerError(
                f"ARMS exceeded {config.max_rejections} rejections "
                f"({len(xs)} envelope points)"
            )
        if len(xs) < config.max_points and np.isfinite(h_cand):
            pos = int(np.searchsorted(xs, x_cand))
            if (pos == 0 or x_cand - xs[pos - 1] > 1e-10 * span) and (
                pos == len(xs) or xs[pos] - x_cand > 1e-10 * span
            ):
                xs.insert(pos, x_cand)
                hs.insert(pos, h_cand)

    # Metropolis correction: candidate proposal density is
    # exp(min(h, envelope)), independent of the current point
    g_curr = _envelope_at(segments, current)
    log_ratio = (h_cand + min(h_curr, g_curr)) - (h_curr + min(h_cand, g_cand))
    if math.log(rng.uniform()) <= min(0.0, log_ratio):
        return float(x_cand)
    return float(current)


# ---------------------------------------------------------------------------
# path site update


def _standardized_loglik(P, Pinv, logdet, obs):
    d = np.diag(P)
    u = np.sqrt(d) * obs
    return -0.5 * (logdet - np.sum(np.log(d))) - 0.5 * float(u @ Pinv @ u)


def _covariance_loglik(Pinv, logdet, obs):
    return -0.5 * logdet - 0.5 * float(obs @ Pinv @ obs)


def pt_log_accept(
    P_new: np.ndarray,
    P_curr: np.ndarray,
    P_next: np.ndarray | None,
    eps_t: np.ndarray,
    corr: CorrDynParams,
    likelihood: str = "standardized",
) -> float:
    """Log acceptance ratio for a path-site proposal from the prior
    transition.

    The transition factor W(P_t^{-1} | k, S_{t-1}) cancels against the
    proposal, leaving the observation likelihood at time t and, away from
    the endpoint, the successor transition.
    """
    ld_new = 2.0 * np.sum(np.log(np.diag(cholesky_spd(P_new))))
    ld_cur = 2.0 * np.sum(np.log(np.diag(cholesky_spd(P_curr))))
    Pinv_new = np.linalg.inv(P_new)
    Pinv_cur = np.linalg.inv(P_curr)
    if likelihood == "standardized":
        out = _standardized_loglik(P_new, Pinv_new, ld_new, eps_t) - _standardized_loglik(
            P_curr, Pinv_cur, ld_cur, eps_t
        )
    elif likelihood == "covariance":
        out = _covariance_loglik(Pinv_new, ld_new, eps_t) - _covariance_loglik(
            Pinv_cur, ld_cur, eps_t
        )
    else:
        raise ValueError(f"unknown likelihood form {likelihood!r}")
    if P_next is not None:
        X_next = np.linalg.inv(P_next)
        k, d = corr.k, corr.d
        A_inv = np.linalg.inv(corr.A)

        def succ(P, ld):
            Md = spd_power(P, 0.5 * d)
            return 0.5 * k * d * ld - 0.5 * k * float(np.sum(A_inv * (Md @ X_next @ Md)))

        out += succ(P_new, ld_new) - succ(P_curr, ld_cur)
    return float(out)


def sample_pt(
    t: int,
    P_prev: np.ndarray,
    P_curr: np.ndarray,
    P_next: np.ndarray | None,
    eps_t: np.ndarray,
    corr: CorrDynParams,
    rng: np.random.Generator,
    likelihood: str = "standardized",
) -> tuple[np.ndarray, bool]:
    """Metropolis-Hastings update of one path site.

    ``P_prev`` is P_{t-1} (identity at t = 1), ``P_next`` is None at the
    final time.  Returns the (possibly unchanged) site and whether the
    proposal was accepted.
    """
    q = corr.q
    M = spd_power(P_prev, -0.5 * corr.d)
    S = (M @ corr.A @ M) / corr.k
    C = cholesky_spd(S)
    Tm = np.zeros((q, q))
    for i in range(q):
        Tm[i, i] = math.sqrt(rng.chisquare(corr.k - i))
    Z = rng.standard_normal((q, q))
    for i in range(q):
        for j in range(i):
            Tm[i, j] = Z[i, j]
    L = C @ Tm
    Linv = np.linalg.inv(L)
    P_new = Linv.T @ Linv
    log_alpha = pt_log_accept(P_new, P_curr, P_next, eps_t, corr, likelihood)
    if math.log(rng.uniform()) < log_alpha:
        return P_new, True
    return P_curr, False


# ---------------------------------------------------------------------------
# conjugate scale update and scalar posteriors


def _path_caches(corr_path: CorrPath):
    return kernels.build_corr_caches(corr_path.with_initial())


def sample_A(
    corr_path: CorrPath,
    d: float,
    k: float,
    priors: PriorConfig,
    rng: np.random.Generator,
    caches=None,
) -> np.ndarray:
    """Conjugate draw of the innovation scale A.

    The prior puts W(a_df, I/a_df) on A^{-1}; combined with the T
    transition factors the conditional of A^{-1} is Wishart with degrees
    a_df + T k and scale (a_df I + k sum_t P_{t-1}^{d/2} P_t^{-1}
    P_{t-1}^{d/2})^{-1}.  ``caches`` may carry precomputed
    :func:`kernels.build_corr_caches` output for the same path.
    """
    q = corr_path.q
    a_df = priors.a_df if priors.a_df is not None else float(q)
    Pinv, eigvals, eigvecs, _ = caches if caches is not None else _path_caches(corr_path)
    M = kernels.scale_sum(Pinv, eigvals, eigvecs, d)
    scale = np.linalg.inv(a_df * np.eye(q) + k * M)
    scale = 0.5 * (scale + scale.T)
    W = sample_wishart(a_df + corr_path.T * k, scale, rng)
    return np.linalg.inv(W)


def transition_loglik(
    sum_c: float,
    sum_ld_cur: float,
    sum_ld_prev: float,
    T: int,
    q: int,
    logdet_A: float,
    d: float,
    k: float,
) -> float:
    """sum_t log W(P_t^{-1} | k, S_{t-1}) from precomputed path sums."""
    return (
        -0.5 * (k - q - 1.0) * sum_ld_cur
        + 0.5 * k * d * sum_ld_prev
        - 0.5 * k * sum_c
        + T * (0.5 * k * q * (math.log(k) - LOG2) - 0.5 * k * logdet_A - log_mvgamma(q, 0.5 * k))
    )


def logpost_d(
    d: float,
    corr_path: CorrPath,
    A: np.ndarray,
    k: float,
    priors: PriorConfig,
    caches=None,
) -> float:
    """Log conditional posterior of the smoothness parameter, up to a
    constant; -inf outside the prior support."""
    lo, hi = priors.d_bounds
    if not lo < d < hi:
        return -np.inf
    Pinv, eigvals, eigvecs, logdet = (
        caches if caches is not None else _path_caches(corr_path)
    )
    A_inv = np.linalg.inv(A)
    sum_c, sum_ld_cur, sum_ld_prev = kernels.wishart_trans_sums(
        Pinv, eigvals, eigvecs, logdet, A_inv, d
    )
    logdet_A = 2.0 * float(np.sum(np.log(np.diag(cholesky_spd(A)))))
    return transition_loglik(
        sum_c, sum_ld_cur, sum_ld_prev, corr_path.T, corr_path.q, logdet_A, d, k
    )


def logpost_k(
    k: float,
    corr_path: CorrPath,
    A: np.ndarray,
    d: float,
    priors: PriorConfig,
    caches=None,
    sums=None,
) -> float:
    """Log conditional posterior of the tail parameter; -inf at k <= q.

    ``sums`` may carry precomputed path sums for this (path, A, d); they
    do not depend on k, so one computation serves every evaluation inside
    a rejection-sampling pass.
    """
    q = corr_path.q
    if k <= q:
        return -np.inf
    if sums is None:
        Pinv, eigvals, eigvecs, logdet = (
            caches if caches is not None else _path_caches(corr_path)
        )
        A_inv = np.linalg.inv(A)
        sums = kernels.wishart_trans_sums(Pinv, eigvals, eigvecs, logdet, A_inv, d)
    sum_c, sum_ld_cur, sum_ld_prev = sums
    logdet_A = 2.0 * float(np.sum(np.log(np.diag(cholesky_spd(A)))))
    out = transition_loglik(
        sum_c, sum_ld_cur, sum_ld_prev, corr_path.T, corr_path.q, logdet_A, d, k
    )
    return out - priors.k_rate * k
