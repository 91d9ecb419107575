# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pure``; same signatures and results."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, INFINITY

cnp.import_array()


cdef inline double _logaddexp(double a, double b) nogil:
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    if a > b:
        return a + log(1.0 + exp(b - a))
    return b + log(1.0 + exp(a - b))


def cox_loglik_grad(eta, time, event):
    cdef cnp.ndarray[cnp.float64_t] t_arr = np.ascontiguousarray(time, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t] g_arr = np.ascontiguousarray(eta, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t] e_arr = np.ascontiguousarray(event, dtype=np.float64)
    cdef cnp.ndarray[cnp.intp_t] order = np.argsort(t_arr, kind="stable")
    cdef Py_ssize_t n = t_arr.shape[0]
    cdef double[::1] t = t_arr[order]
    cdef double[::1] g = g_arr[order]
    cdef double[::1] e = e_arr[order]
    cdef double[::1] log_s0 = np.empty(n)
    cdef double[::1] grad_sorted = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t] grad = np.empty(n)
    cdef Py_ssize_t i, j, start, stop
    cdef double acc = -INFINITY
    cdef double loglik = 0.0
    cdef double log_cum = -INFINITY

    # backward sweep: log risk-set sums, shared within tie groups
    i = n - 1
    while i >= 0:
        j = i
        while j > 0 and t[j - 1] == t[i]:
            j -= 1
        stop = i
        while stop >= j:
            acc = _logaddexp(acc, g[stop])
            stop -= 1
        for stop in range(j, i + 1):
            log_s0[stop] = acc
        i = j - 1

    # forward sweep: log cumulative event hazard, tie groups included whole
    i = 0
    while i < n:
        start = i
        while i + 1 < n and t[i + 1] == t[start]:
            i += 1
        for j in range(start, i + 1):
            if e[j] > 0:
                loglik += g[j] - log_s0[j]
                log_cum = _logaddexp(log_cum, -log_s0[j])
        for j in range(start, i + 1):
            grad_sorted[j] = e[j] - exp(g[j] + log_cum)
        i += 1

    for i in range(n):
        grad[order[i]] = grad_sorted[i]
    return loglik, grad


def cox_newton_terms(X, beta, time, event):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] X_arr = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t] b_arr = np.ascontiguousarray(beta, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t] t_arr = np.ascontiguousarray(time, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t] e_arr = np.ascontiguousarray(event, dtype=np.float64)
    cdef cnp.ndarray[cnp.intp_t] order = np.argsort(t_arr, kind="stable")
    cdef Py_ssize_t n = X_arr.shape[0]
    cdef Py_ssize_t p = X_arr.shape[1]
    cdef double[:, ::1] x = np.ascontiguousarray(X_arr[order])
    cdef double[::1] t = t_arr[order]
    cdef double[::1] e = e_arr[order]
    cdef double[::1] eta = np.asarray(x) @ b_arr
    cdef double[::1] w = np.empty(n)
    cdef double[::1] s1 = np.zeros(p)
    cdef double[:, ::1] s2 = np.zeros((p, p))
    cdef cnp.ndarray[cnp.float64_t] score = np.zeros(p)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] hess = np.zeros((p, p))
    cdef double shift = -INFINITY
    cdef double s0 = 0.0
    cdef double loglik = 0.0
    cdef double m_a, m_b
    cdef Py_ssize_t i, j, a, b, lo

    for i in range(n):
        if eta[i] > shift:
            shift = eta[i]
    for i in range(n):
        w[i] = exp(eta[i] - shift)

    i = n - 1
    while i >= 0:
        lo = i
        while lo > 0 and t[lo - 1] == t[i]:
            lo -= 1
        for j in range(lo, i + 1):
            s0 += w[j]
            for a in range(p):
                s1[a] += w[j] * x[j, a]
                for b in range(p):
                    s2[a, b] += w[j] * x[j, a] * x[j, b]
        for j in range(lo, i + 1):
            if e[j] > 0:
                loglik += eta[j] - shift - log(s0)
                for a in range(p):
                    m_a = s1[a] / s0
                    score[a] += x[j, a] - m_a
                    for b in range(p):
                        m_b = s1[b] / s0
                        hess[a, b] -= s2[a, b] / s0 - m_a * m_b
        i = lo - 1
    return loglik, score, hess


def concordance_counts(time, event, risk):
    cdef const double[::1] t = np.ascontiguousarray(time, dtype=np.float64)
    cdef const double[::1] e = np.ascontiguousarray(event, dtype=np.float64)
    cdef const double[::1] r = np.ascontiguousarray(risk, dtype=np.float64)
    cdef Py_ssize_t n = t.shape[0]
    cdef Py_ssize_t i, j
    cdef long long concordant = 0, tied = 0, comparable = 0
    with nogil:
        for i in range(n):
            if e[i] <= 0:
                continue
            for j in range(n):
                if t[j] > t[i]:
                    comparable += 1
                    if r[i] > r[j]:
                        concordant += 1
                    elif r[i] == r[j]:
                        tied += 1
    return int(concordant), int(tied), int(comparable)


def relief_accumulate(U, F, ydiff, sample_idx, Py_ssize_t k, double sigma):
    cdef const double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef const double[:, ::1] f = np.ascontiguousarray(F, dtype=np.float64)
    cdef const double[::1] y = np.ascontiguousarray(ydiff, dtype=np.float64)
    cdef cnp.ndarray[cnp.intp_t] samples = np.ascontiguousarray(sample_idx, dtype=np.intp)
    cdef Py_ssize_t n = f.shape[0]
    cdef Py_ssize_t p = f.shape[1]
    cdef Py_ssize_t q = u.shape[1]
    cdef cnp.ndarray[cnp.float64_t] dist_arr = np.empty(n)
    cdef double[::1] dist = dist_arr
    cdef double[::1] infl = np.empty(k)
    cdef cnp.ndarray[cnp.float64_t] n_df = np.zeros(p)
    cdef cnp.ndarray[cnp.float64_t] n_dydf = np.zeros(p)
    cdef cnp.ndarray[cnp.intp_t] nbrs
    cdef double n_dy = 0.0
    cdef double total = 0.0
    cdef double dy, d, acc
    cdef Py_ssize_t s, i, j, a, r

    for r in range(k):
        infl[r] = exp(-((r + 1.0) / sigma) ** 2)
        total += infl[r]
    for r in range(k):
        infl[r] /= total

    for s in range(samples.shape[0]):
        i = samples[s]
        for j in range(n):
            acc = 0.0
            for a in range(q):
                acc += fabs(u[j, a] - u[i, a])
            dist[j] = acc
        dist[i] = INFINITY
        nbrs = np.argsort(dist_arr, kind="stable")[:k]
        for r in range(k):
            j = nbrs[r]
            dy = fabs(y[j] - y[i])
            n_dy += dy * infl[r]
            for a in range(p):
                d = fabs(f[j, a] - f[i, a])
                n_df[a] += infl[r] * d
                n_dydf[a] += dy * infl[r] * d
    return n_dy, n_df, n_dydf
