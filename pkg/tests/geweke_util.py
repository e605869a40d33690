"""Joint-distribution (Geweke-style) checks for the Gibbs blocks.

Each runner samples the same (parameters, data) joint two ways: iid from
the prior pushed through the data model (marginal-conditional), and a
Markov chain alternating the production posterior update with a data
regeneration step (successive-conditional).  If the update targets the
correct conditional, every statistic has equal mean under both samplers;
comparison is a z-test combining an iid standard error with a
batch-means standard error.

Each block is tested in the sub-joint where its update is the exact
conditional: the loadings block holds the idiosyncratic variances fixed
(their values set the loadings prior scale), the variance block holds
the loadings fixed, the volatility block lives in the auxiliary-mixture
model it targets, and the correlation group conditions on the
innovations.  Together the blocks cover every scalar parameter of each
model variant.

The correlation group gets two runners.  Running the production sweep
alone mixes the (scale matrix, path) pair with an autocorrelation time
near 10^3, which invalidates batch-means standard errors at any
affordable chain length, so the scalar runner appends an exact blocked
refresh of (path, data) given the scalars after each production sweep;
every step leaves the same joint invariant and the refresh collapses
the autocorrelation.  The path runner then checks the Metropolis path
move on its own, with the scalars pinned, where mixing is fast.
"""

import numpy as np

from odcfmsv import kernels
from odcfmsv.gibbs import (
    corr_group_sweep,
    sample_B,
    sample_loadings_hetero,
    sample_sigma_sq,
    sv_group_sweep,
)
from odcfmsv.model import PriorConfig
from odcfmsv.svsampler import KSC_TABLE, PhiSigmaStep
from odcfmsv.wishartsampler import ArmsConfig

# test-instance prior: tame ranges so prior path simulation stays well
# conditioned; both samplers share it, so tightening does not weaken the test
CORR_PRIORS = PriorConfig(d_bounds=(-0.9, 0.9), k_rate=0.1, k_domain_width=200.0, a_df=6.0)

# truncate the tail-parameter prior to k > q + K_SHIFT on both sides: the
# marginal-conditional side shifts the exponential (memorylessness makes the
# truncated law q + K_SHIFT + Exp), the successive-conditional side restricts
# the rejection-sampler domain, so the two samplers share one joint
K_SHIFT = 2.0


def batch_se(x, nb=50):
    m = len(x) // nb
    bm = np.asarray(x)[: m * nb].reshape(nb, m).mean(axis=1)
    return bm.std(ddof=1) / np.sqrt(nb)


def zscores(mc, sc, nb=50):
    """Per-statistic z for mean(mc) - mean(sc); mc iid rows, sc chain rows."""
    out = np.empty(mc.shape[1])
    for j in range(mc.shape[1]):
        se = np.hypot(mc[:, j].std(ddof=1) / np.sqrt(mc.shape[0]), batch_se(sc[:, j], nb))
        out[j] = (mc[:, j].mean() - sc[:, j].mean()) / se
    return out


# ---------------------------------------------------------------------------
# loadings block: sigma^2 fixed, prior row_j ~ N(0, sigma_j^2 I)


def geweke_loadings(T, p, q, n_mc, n_sc, seed):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((T, q))
    sigma_sq = 0.3 + 0.4 * np.arange(p)
    sd = np.sqrt(sigma_sq)

    def stats(B, Y):
        return np.concatenate(
            [
                [B[0, 0], B[0, 0] ** 2, B[-1, -1], (B * B).sum()],
                [np.mean(Y[:, 0] ** 2), np.mean(Y[:, 0] * F[:, 0])],
            ]
        )

    labels = ["B11", "B11^2", "Bpq", "sum B^2", "mean y1^2", "mean y1 f1"]

    mc = np.empty((n_mc, len(labels)))
    for i in range(n_mc):
        B = sd[:, None] * rng.standard_normal((p, q))
        Y = F @ B.T + sd * rng.standard_normal((T, p))
        mc[i] = stats(B, Y)

    sc = np.empty((n_sc, len(labels)))
    B = sd[:, None] * rng.standard_normal((p, q))
    Y = F @ B.T + sd * rng.standard_normal((T, p))
    for i in range(n_sc):
        B = sample_B(Y, F, sigma_sq, rng)
        Y = F @ B.T + sd * rng.standard_normal((T, p))
        sc[i] = stats(B, Y)
    return mc, sc, labels


# ---------------------------------------------------------------------------
# idiosyncratic-variance block: B fixed


def geweke_sigma(T, p, q, n_mc, n_sc, seed, priors=None):
    pr = priors if priors is not None else PriorConfig()
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((T, q))
    B = rng.standard_normal((p, q))
    mean_Y = F @ B.T

    def draw_sigma(n):
        return (0.5 * pr.nu0 * pr.s0) / rng.gamma(0.5 * pr.nu0, 1.0, size=(n, p))

    def stats(sig, Y):
        resid0 = Y[:, 0] - mean_Y[:, 0]
        return np.array(
            [sig[0], np.log(sig[0]), 1.0 / sig[0], sig.sum(), np.mean(resid0**2)]
        )

    labels = ["s1", "log s1", "1/s1", "sum s", "mean r1^2"]

    mc = np.empty((n_mc, len(labels)))
    sig_all = draw_sigma(n_mc)
    for i in range(n_mc):
        Y = mean_Y + np.sqrt(sig_all[i]) * rng.standard_normal((T, p))
        mc[i] = stats(sig_all[i], Y)

    sc = np.empty((n_sc, len(labels)))
    sig = draw_sigma(1)[0]
    Y = mean_Y + np.sqrt(sig) * rng.standard_normal((T, p))
    for i in range(n_sc):
        sig = sample_sigma_sq(Y, F, B, pr, rng)
        Y = mean_Y + np.sqrt(sig) * rng.standard_normal((T, p))
        sc[i] = stats(sig, Y)
    return mc, sc, labels


# ---------------------------------------------------------------------------
# heteroskedastic loadings block: error log-variance path fixed


def geweke_loadings_hetero(T, p, q, n_mc, n_sc, seed, c0=1.0):
    pr = PriorConfig(c0=c0)
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((T, q))
    err_h = np.log(0.8) + 0.5 * rng.standard_normal((T, p))
    err_sd = np.exp(0.5 * err_h)

    def stats(B, Y):
        return np.array(
            [B[0, 0], B[0, 0] ** 2, B[-1, -1], (B * B).sum(),
             np.mean(Y[:, 0] ** 2), np.mean(Y[:, 0] * F[:, 0])]
        )

    labels = ["b11", "b11^2", "bpq", "sum b^2", "mean y1^2", "mean y1 f1"]

    mc = np.empty((n_mc, len(labels)))
    for i in range(n_mc):
        B = c0 * rng.standard_normal((p, q))
        Y = F @ B.T + err_sd * rng.standard_normal((T, p))
        mc[i] = stats(B, Y)

    sc = np.empty((n_sc, len(labels)))
    B = c0 * rng.standard_normal((p, q))
    Y = F @ B.T + err_sd * rng.standard_normal((T, p))
    for i in range(n_sc):
        B = sample_loadings_hetero(Y, F, err_h, pr.c0, rng)
        Y = F @ B.T + err_sd * rng.standard_normal((T, p))
        sc[i] = stats(B, Y)
    return mc, sc, labels


# ---------------------------------------------------------------------------
# volatility block in the auxiliary-mixture model


def draw_sv_prior(pr, rng):
    mu = rng.normal(0.0, np.sqrt(pr.mu_prior_var))
    phi = 2.0 * rng.beta(pr.phi_beta_a, pr.phi_beta_b) - 1.0
    sig2 = pr.sigma_eta_scale / rng.gamma(pr.sigma_eta_shape, 1.0)
    return mu, phi, sig2


def draw_sv_path(mu, phi, sig2, T, rng):
    h = np.empty(T)
    h[0] = mu + np.sqrt(sig2 / (1.0 - phi * phi)) * rng.standard_normal()
    for t in range(1, T):
        h[t] = mu + phi * (h[t - 1] - mu) + np.sqrt(sig2) * rng.standard_normal()
    return h


def geweke_sv(T, n_mc, n_sc, seed, priors=None):
    pr = priors if priors is not None else PriorConfig()
    rng = np.random.default_rng(seed)
    table = KSC_TABLE
    cumw = np.cumsum(table.weights)[:-1]
    m, v = table.means, table.variances

    def draw_s(rng_):
        return 1 + (rng_.uniform(size=T)[:, None] > cumw).sum(axis=1)

    def draw_fstar(h, s, rng_):
        return h + m[s - 1] + np.sqrt(v[s - 1]) * rng_.standard_normal(T)

    def stats(mu, phi, sig2, h, fs):
        return np.array(
            [mu, phi, sig2, h.mean(), h[0], fs.mean(), np.mean(fs**2)]
        )

    labels = ["mu", "phi", "sig_eta^2", "mean h", "h1", "mean f*", "mean f*^2"]

    mc = np.empty((n_mc, len(labels)))
    for i in range(n_mc):
        mu, phi, sig2 = draw_sv_prior(pr, rng)
        h = draw_sv_path(mu, phi, sig2, T, rng)
        s = draw_s(rng)
        fs = draw_fstar(h, s, rng)
        mc[i] = stats(mu, phi, sig2, h, fs)

    sc = np.empty((n_sc, len(labels)))
    mu, phi, sig2 = draw_sv_prior(pr, rng)
    h = draw_sv_path(mu, phi, sig2, T, rng)
    fs = draw_fstar(h, draw_s(rng), rng)
    mu_a, phi_a, sig2_a = np.array([mu]), np.array([phi]), np.array([sig2])
    H = h[:, None].copy()
    steps = [PhiSigmaStep()]
    for i in range(n_sc):
        s = sv_group_sweep(fs, 0, mu_a, phi_a, sig2_a, H, steps, pr, rng)
        fs = draw_fstar(H[:, 0], s, rng)
        sc[i] = stats(mu_a[0], phi_a[0], sig2_a[0], H[:, 0], fs)
    return mc, sc, labels


# ---------------------------------------------------------------------------
# correlation group: conditioned on the path observations


def _batched_spd_power(M, a):
    w, V = np.linalg.eigh(M)
    return np.einsum("nij,nj,nkj->nik", V, w**a, V)


def _simulate_corr_paths(A, d, k, T, q, rng):
    """Prior paths for n draws at once; A (n,q,q), d (n,), k (n,).
    Returns P (n, T, q, q)."""
    n = A.shape[0]
    P = np.empty((n, T, q, q))
    prev = np.broadcast_to(np.eye(q), (n, q, q)).copy()
    tril = np.tril_indices(q, -1)
    for t in range(T):
        Mh = _batched_spd_power(prev, -0.5 * d[:, None])
        S = Mh @ A @ Mh / k[:, None, None]
        C = np.linalg.cholesky(S)
        Tm = np.zeros((n, q, q))
        for i in range(q):
            Tm[:, i, i] = np.sqrt(rng.chisquare(k - i, size=n))
        Tm[:, tril[0], tril[1]] = rng.standard_normal((n, len(tril[0])))
        L = C @ Tm
        X = L @ np.swapaxes(L, 1, 2)
        prev = np.linalg.inv(X)
        P[:, t] = prev
    return P


def _draw_corr_obs(P, rng, mode):
    """One observation per time slot; P (T, q, q)."""
    T, q = P.shape[0], P.shape[1]
    if mode == 0:
        dg = np.sqrt(P.diagonal(axis1=1, axis2=2))
        cov = P / (dg[:, :, None] * dg[:, None, :])
    else:
        cov = P
    L = np.linalg.cholesky(cov)
    return np.einsum("tij,tj->ti", L, rng.standard_normal((T, q)))


def _draw_corr_prior(q, n, pr, rng):
    # scale precision ~ W(a_df, I/a_df); batched Bartlett with S = I/a_df
    a_df = pr.a_df
    tril = np.tril_indices(q, -1)
    Tm = np.zeros((n, q, q))
    for i in range(q):
        Tm[:, i, i] = np.sqrt(rng.chisquare(a_df - i, size=n))
    Tm[:, tril[0], tril[1]] = rng.standard_normal((n, len(tril[0])))
    W = (Tm @ np.swapaxes(Tm, 1, 2)) / a_df
    A = np.linalg.inv(W)
    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    d = rng.uniform(pr.d_bounds[0], pr.d_bounds[1], size=n)
    k = q + K_SHIFT + rng.exponential(1.0 / pr.k_rate, size=n)
    return A, d, k


def _corr_scalar_stats(A, d, k, P):
    dg = np.sqrt(P.diagonal(axis1=1, axis2=2))
    rho = P[:, 0, 1] / (dg[:, 0] * dg[:, 1])
    return np.array(
        [
            d, d * d, k, min(k, 40.0),
            np.linalg.slogdet(A)[1],
            np.trace(np.linalg.inv(A)),
            A[0, 1] / np.sqrt(A[0, 0] * A[1, 1]),
            rho.mean(), np.linalg.slogdet(P)[1].mean(),
        ]
    )


CORR_SCALAR_LABELS = [
    "d", "d^2", "k", "min(k,40)", "logdet A", "tr A^-1", "rho_A",
    "mean rho_t", "mean logdet P",
]


def geweke_corr_scalars(T, q, n_mc, n_sc, seed, mode=0):
    """Joint over (scale matrix, memory exponent, tail parameter, path).

    The chain step is the production correlation-group sweep followed by
    an exact refresh of (path, data) given the scalars, so the scalar
    conditionals are exercised verbatim while the refresh keeps the
    autocorrelation near one.
    """
    pr = CORR_PRIORS
    rng = np.random.default_rng(seed)

    mc = np.empty((n_mc, len(CORR_SCALAR_LABELS)))
    A, d, k = _draw_corr_prior(q, n_mc, pr, rng)
    P = _simulate_corr_paths(A, d, k, T, q, rng)
    for i in range(n_mc):
        mc[i] = _corr_scalar_stats(A[i], d[i], k[i], P[i])

    d_cfg = ArmsConfig(lo=pr.d_bounds[0], hi=pr.d_bounds[1])
    k_cfg = ArmsConfig(lo=float(q) + K_SHIFT, hi=float(q) + K_SHIFT + pr.k_domain_width)
    sc = np.empty((n_sc, len(CORR_SCALAR_LABELS)))
    A0, d0, k0 = _draw_corr_prior(q, 1, pr, rng)
    A1, d1, k1 = A0[0], float(d0[0]), float(k0[0])
    P_full = np.empty((T + 1, q, q))
    P_full[0] = np.eye(q)
    P_full[1:] = _simulate_corr_paths(A0, d0, k0, T, q, rng)[0]
    obs = _draw_corr_obs(P_full[1:], rng, mode)
    for i in range(n_sc):
        A1, d1, k1, _, _ = corr_group_sweep(
            P_full, A1, d1, k1, obs, pr, rng, mode, d_cfg, k_cfg
        )
        P_full[1:] = _simulate_corr_paths(
            A1[None], np.array([d1]), np.array([k1]), T, q, rng
        )[0]
        obs = _draw_corr_obs(P_full[1:], rng, mode)
        sc[i] = _corr_scalar_stats(A1, d1, k1, P_full[1:])
    return mc, sc, CORR_SCALAR_LABELS


CORR_PATH_LABELS = [
    "mean rho_t", "mean logdet P", "rho_T", "bounded P_T",
    "mean obs^2", "mean obs1 obs2",
]


# suite-scale instances; memoized so the per-block tests and the composite
# acceptance check pay for each run once per session
GEWEKE_BLOCKS = {
    "loadings": lambda: geweke_loadings(30, 3, 2, 60000, 30000, 101),
    "sigma": lambda: geweke_sigma(30, 3, 2, 60000, 30000, 102),
    "loadings_hetero": lambda: geweke_loadings_hetero(30, 3, 2, 60000, 30000, 103),
    "sv": lambda: geweke_sv(30, 60000, 30000, 104),
    "corr_scalars": lambda: geweke_corr_scalars(30, 2, 40000, 12000, 105),
    "corr_path_std": lambda: geweke_corr_path(30, 2, 40000, 30000, 107, 0),
    "corr_path_cov": lambda: geweke_corr_path(30, 2, 40000, 30000, 108, 1),
}

# which blocks exercise each variant's sweep (the scalar corr conditionals
# are mode-free, so one scalars run covers all variants)
VARIANT_BLOCKS = {
    "odcfmsv": ("loadings", "sigma", "sv", "corr_scalars", "corr_path_std"),
    "pg": ("loadings", "sigma", "corr_scalars", "corr_path_cov"),
    "sverr": ("loadings_hetero", "sv", "corr_scalars", "corr_path_std"),
}

_Z_CACHE: dict = {}


def geweke_z(name):
    """(z-scores, labels) for one named block, computed once per session."""
    if name not in _Z_CACHE:
        mc, sc, labels = GEWEKE_BLOCKS[name]()
        _Z_CACHE[name] = (zscores(mc, sc), labels)
    return _Z_CACHE[name]


def geweke_corr_path(T, q, n_mc, n_sc, seed, mode):
    """Joint over (path, data) with the scalars pinned.

    Checks that the single-move Metropolis path sweep leaves the path
    posterior invariant; the data regeneration feeds the acceptance
    ratio, so likelihood handling in each mode is covered.
    """
    rng = np.random.default_rng(seed)
    A = np.array([[1.2, -0.25], [-0.25, 0.9]])[:q, :q].copy()
    if q != 2:
        A = np.eye(q) + 0.1
    d, k = 0.7, float(q) + 6.0
    A_inv = np.linalg.inv(A)

    def stats(P, obs):
        dg = np.sqrt(P.diagonal(axis1=1, axis2=2))
        rho = P[:, 0, 1] / (dg[:, 0] * dg[:, 1])
        return np.array(
            [
                rho.mean(), np.linalg.slogdet(P)[1].mean(), rho[-1],
                P[-1, 0, 0] / (1.0 + P[-1, 0, 0]),
                np.mean(obs**2), np.mean(obs[:, 0] * obs[:, 1]),
            ]
        )

    mc = np.empty((n_mc, len(CORR_PATH_LABELS)))
    Pb = _simulate_corr_paths(
        np.tile(A, (n_mc, 1, 1)), np.full(n_mc, d), np.full(n_mc, k), T, q, rng
    )
    for i in range(n_mc):
        mc[i] = stats(Pb[i], _draw_corr_obs(Pb[i], rng, mode))

    sc = np.empty((n_sc, len(CORR_PATH_LABELS)))
    P_full = np.empty((T + 1, q, q))
    P_full[0] = np.eye(q)
    P_full[1:] = _simulate_corr_paths(
        A[None], np.array([d]), np.array([k]), T, q, rng
    )[0]
    obs = _draw_corr_obs(P_full[1:], rng, mode)
    for i in range(n_sc):
        caches = kernels.build_corr_caches(P_full)
        chi2 = np.empty((T, q))
        for j in range(q):
            chi2[:, j] = rng.chisquare(k - j, size=T)
        norms = rng.standard_normal((T, q, q))
        logu = np.log(rng.random(T))
        kernels.corr_path_sweep(
            P_full, *caches, np.ascontiguousarray(obs), A, A_inv,
            d, k, chi2, norms, logu, mode,
        )
        obs = _draw_corr_obs(P_full[1:], rng, mode)
        sc[i] = stats(P_full[1:], obs)
    return mc, sc, CORR_PATH_LABELS
