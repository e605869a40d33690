"""Hot numerical loops.

Each kernel is written as a plain numpy function and compiled with numba
unless ``ODCFMSV_DISABLE_NUMBA`` is set (see :mod:`odcfmsv.backend`).
The ``*_py`` aliases keep the uncompiled versions importable so the two
paths can be compared.

All randomness is drawn by the caller and passed in as arrays, so every
kernel is a deterministic function of its inputs and the two backends
produce identical chains.
"""

import math

import numpy as np

from .backend import NUMBA_ENABLED, jit_kernel

LOG2PI = math.log(2.0 * math.pi)


def _chol_lower(A):
    # Cholesky with a success flag instead of an exception so proposal
    # construction failures can be counted and rejected inside a kernel.
    n = A.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if s <= 0.0 or not np.isfinite(s):
            return L, False
        L[j, j] = math.sqrt(s)
        for i in range(j + 1, n):
            s2 = A[i, j]
            for k in range(j):
                s2 -= L[i, k] * L[j, k]
            L[i, j] = s2 / L[j, j]
    return L, True


def _tri_inv_lower(L):
    n = L.shape[0]
    M = np.zeros((n, n))
    for i in range(n):
        M[i, i] = 1.0 / L[i, i]
        for j in range(i):
            s = 0.0
            for k in range(j, i):
                s += L[i, k] * M[k, j]
            M[i, j] = -s / L[i, i]
    return M


def _eig_scale(w, V, a):
    # V diag(w**a) V'
    n = w.shape[0]
    tmp = np.empty((n, n))
    for k in range(n):
        wk = w[k] ** a
        for i in range(n):
            tmp[i, k] = V[i, k] * wk
    return tmp @ V.T


def _ffbs_impl(y, mean_s, var_s, mu, phi, sig2, z):
    # Forward filter, backward sampler for the AR(1) log-volatility state
    # under observation y_t = h_t + mean_s[t] + N(0, var_s[t]).
    T = y.shape[0]
    m = np.empty(T)
    P = np.empty(T)
    a = mu
    p = sig2 / (1.0 - phi * phi)
    for t in range(T):
        if t > 0:
            a = mu + phi * (m[t - 1] - mu)
            p = phi * phi * P[t - 1] + sig2
        F = p + var_s[t]
        K = p / F
        v = y[t] - mean_s[t] - a
        m[t] = a + K * v
        P[t] = p * (1.0 - K)
    h = np.empty(T)
    pv = P[T - 1]
    if pv < 0.0:
        pv = 0.0
    h[T - 1] = m[T - 1] + math.sqrt(pv) * z[T - 1]
    for t in range(T - 2, -1, -1):
        R = phi * phi * P[t] + sig2
        if R > 0.0:
            C = phi * P[t] / R
            cm = m[t] + C * (h[t + 1] - (mu + phi * (m[t] - mu)))
            cv = P[t] - C * C * R
        else:
            cm = m[t]
            cv = P[t]
        if cv < 0.0:
            cv = 0.0
        h[t] = cm + math.sqrt(cv) * z[t]
    return h


def _smoother_mean_impl(y, mean_s, var_s, mu, phi, sig2):
    # Deterministic posterior mean of the state path (RTS smoother).
    T = y.shape[0]
    m = np.empty(T)
    P = np.empty(T)
    a = mu
    p = sig2 / (1.0 - phi * phi)
    for t in range(T):
        if t > 0:
            a = mu + phi * (m[t - 1] - mu)
            p = phi * phi * P[t - 1] + sig2
        F = p + var_s[t]
        K = p / F
        v = y[t] - mean_s[t] - a
        m[t] = a + K * v
        P[t] = p * (1.0 - K)
    s = np.empty(T)
    s[T - 1] = m[T - 1]
    for t in range(T - 2, -1, -1):
        R = phi * phi * P[t] + sig2
        if R > 0.0:
            C = phi * P[t] / R
            s[t] = m[t] + C * (s[t + 1] - (mu + phi * (m[t] - mu)))
        else:
            s[t] = m[t]
    return s


def _sv_marginal_loglik_impl(y, mean_s, var_s, phi, sig2, mu_var):
    # Marginal likelihood of (phi, sig2) with the level mu and the state
    # path integrated out: Kalman filter on the 2-d state (h_t, mu).
    T = y.shape[0]
    m0 = 0.0
    m1 = 0.0
    p00 = mu_var + sig2 / (1.0 - phi * phi)
    p01 = mu_var
    p11 = mu_var
    ll = 0.0
    for t in range(T):
        if t > 0:
            b = 1.0 - phi
            nm0 = phi * m0 + b * m1
            np00 = phi * phi * p00 + 2.0 * phi * b * p01 + b * b * p11 + sig2
            np01 = phi * p01 + b * p11
            m0 = nm0
            p00 = np00
            p01 = np01
        F = p00 + var_s[t]
        v = y[t] - mean_s[t] - m0
        k0 = p00 / F
        k1 = p01 / F
        m0 += k0 * v
        m1 += k1 * v
        q00 = p00 - k0 * p00
        q01 = p01 - k0 * p01
        q11 = p11 - k1 * p01
        p00 = q00
        p01 = q01
        p11 = q11
        ll += -0.5 * (LOG2PI + math.log(F) + v * v / F)
    return ll


def _corr_loglik_terms(P, Pinv, logdet, obs, lik_mode):
    # lik_mode 0: obs is a standardized-residual vector with covariance
    #   diag(P)^{-1/2} P diag(P)^{-1/2}
    # lik_mode 1: obs has covariance P itself
    q = P.shape[0]
    if lik_mode == 0:
        sumlog = 0.0
        quad = 0.0
        for i in range(q):
            sumlog += math.log(P[i, i])
        for i in range(q):
            ui = math.sqrt(P[i, i]) * obs[i]
            for j in range(q):
                quad += ui * Pinv[i, j] * math.sqrt(P[j, j]) * obs[j]
        return -0.5 * (logdet - sumlog) - 0.5 * quad
    quad = 0.0
    for i in range(q):
        for j in range(q):
            quad += obs[i] * Pinv[i, j] * obs[j]
    return -0.5 * logdet - 0.5 * quad


def _succ_term(w, V, logdet, Xnext, A_inv, d, k):
    # P-dependent part of log W(X_next | k, S(P)) with
    # S(P) = (1/k) P^{-d/2} A P^{-d/2}
    Md = _eig_scale(w, V, 0.5 * d)
    M1 = Md @ Xnext @ Md
    q = w.shape[0]
    c = 0.0
    for i in range(q):
        for j in range(q):
            c += A_inv[i, j] * M1[j, i]
    return 0.5 * k * d * logdet - 0.5 * k * c


def _corr_path_sweep_impl(
    P, Pinv, eigvals, eigvecs, logdet, obs, A, A_inv, d, k, chi2, norms, logu, lik_mode
):
    # Single-move Metropolis-Hastings pass over the correlation-process
    # path.  Slot 0 of the state arrays holds the fixed initial matrix.
    # The proposal for X_t = P_t^{-1} is its own transition W(k, S_{t-1}),
    # which cancels against the matching factor of the target, leaving the
    # data likelihood and the successor transition in the ratio.
    Tn = P.shape[0] - 1
    q = P.shape[1]
    accepts = 0
    chol_fails = 0
    for t in range(1, Tn + 1):
        wprev = eigvals[t - 1]
        Vprev = eigvecs[t - 1]
        Mdm = _eig_scale(wprev, Vprev, -0.5 * d)
        S = (Mdm @ A @ Mdm) / k
        C, ok = _chol_lower(S)
        if not ok:
            chol_fails += 1
            continue
        # Bartlett draw of X_new ~ W(k, S) from pre-drawn randomness
        Tm = np.zeros((q, q))
        for i in range(q):
            Tm[i, i] = math.sqrt(chi2[t - 1, i])
            for j in range(i):
                Tm[i, j] = norms[t - 1, i, j]
        L = C @ Tm
        Xnew = L @ L.T
        Linv = _tri_inv_lower(L)
        Pnew = Linv.T @ Linv
        ld_new = 0.0
        for i in range(q):
            ld_new -= 2.0 * math.log(L[i, i])
        ll_new = _corr_loglik_terms(Pnew, Xnew, ld_new, obs[t - 1], lik_mode)
        ll_old = _corr_loglik_terms(P[t], Pinv[t], logdet[t], obs[t - 1], lik_mode)
        log_alpha = ll_new - ll_old
        wnew = np.empty(q)
        Vnew = np.empty((q, q))
        if t < Tn:
            wnew, Vnew = np.linalg.eigh(Pnew)
            g_new = _succ_term(wnew, Vnew, ld_new, Pinv[t + 1], A_inv, d, k)
            g_old = _succ_term(eigvals[t], eigvecs[t], logdet[t], Pinv[t + 1], A_inv, d, k)
            log_alpha += g_new - g_old
        if not np.isfinite(log_alpha):
            continue
        if logu[t - 1] < log_alpha:
            if t == Tn:
                wnew, Vnew = np.linalg.eigh(Pnew)
            P[t] = Pnew
            Pinv[t] = Xnew
            eigvals[t] = wnew
            eigvecs[t] = Vnew
            logdet[t] = ld_new
            accepts += 1
    return accepts, chol_fails


def _wishart_trans_sums_impl(Pinv, eigvals, eigvecs, logdet, A_inv, d):
    # Sufficient pieces of sum_t log W(P_t^{-1} | k, S_{t-1}) that depend
    # on the path: trace terms and the two log-determinant sums.
    Tn = Pinv.shape[0] - 1
    q = Pinv.shape[1]
    sum_c = 0.0
    sum_ld_cur = 0.0
    sum_ld_prev = 0.0
    for t in range(1, Tn + 1):
        Md = _eig_scale(eigvals[t - 1], eigvecs[t - 1], 0.5 * d)
        M1 = Md @ Pinv[t] @ Md
        for i in range(q):
            for j in range(q):
                sum_c += A_inv[i, j] * M1[j, i]
        sum_ld_cur += logdet[t]
        sum_ld_prev += logdet[t - 1]
    return sum_c, sum_ld_cur, sum_ld_prev


def _scale_sum_impl(Pinv, eigvals, eigvecs, d):
    # sum_t P_{t-1}^{d/2} P_t^{-1} P_{t-1}^{d/2}, the data part of the
    # posterior scale for the correlation-innovation matrix
    Tn = Pinv.shape[0] - 1
    q = Pinv.shape[1]
    out = np.zeros((q, q))
    for t in range(1, Tn + 1):
        Md = _eig_scale(eigvals[t - 1], eigvecs[t - 1], 0.5 * d)
        out += Md @ Pinv[t] @ Md
    return out


# keep the uncompiled versions importable for the fallback benchmark and
# for backend-agreement tests
ffbs_core_py = _ffbs_impl
smoother_mean_py = _smoother_mean_impl
sv_marginal_loglik_py = _sv_marginal_loglik_impl
corr_path_sweep_py = _corr_path_sweep_impl
wishart_trans_sums_py = _wishart_trans_sums_impl
scale_sum_py = _scale_sum_impl

if NUMBA_ENABLED:
    # rebind the helper names first so the compiled callers resolve them
    # to compiled versions at their own compile time
    _chol_lower = jit_kernel(_chol_lower)
    _tri_inv_lower = jit_kernel(_tri_inv_lower)
    _eig_scale = jit_kernel(_eig_scale)
    _corr_loglik_terms = jit_kernel(_corr_loglik_terms)
    _succ_term = jit_kernel(_succ_term)

ffbs_core = jit_kernel(_ffbs_impl)
smoother_mean = jit_kernel(_smoother_mean_impl)
sv_marginal_loglik = jit_kernel(_sv_marginal_loglik_impl)
corr_path_sweep = jit_kernel(_corr_path_sweep_impl)
wishart_trans_sums = jit_kernel(_wishart_trans_sums_impl)
scale_sum = jit_kernel(_scale_sum_impl)


def build_corr_caches(P_path):
    """Eigendecomposition caches for a correlation-process path.

    Parameters
    ----------
    P_path : ndarray, shape (T+1, q, q)
        SPD path including the fixed initial matrix in slot 0.

    Returns
    -------
    (Pinv, eigvals, eigvecs, logdet)
    """
    P_path = np.ascontiguousarray(P_path, dtype=np.float64)
    eigvals, eigvecs = np.linalg.eigh(P_path)
    if np.any(eigvals <= 0.0):
        raise np.linalg.LinAlgError("correlation path contains a non-SPD matrix")
    inv_scaled = eigvecs / eigvals[:, None, :]
    Pinv = inv_scaled @ np.swapaxes(eigvecs, -1, -2)
    logdet = np.sum(np.log(eigvals), axis=-1)
    return np.ascontiguousarray(Pinv), eigvals, np.ascontiguousarray(eigvecs), logdet
