"""NumPy implementations of the hot kernels.

These are the reference versions; the compiled module mirrors each function
signature and must agree to floating-point round-off.
"""
import numpy as np


def _tie_bounds(sorted_time):
    first = np.searchsorted(sorted_time, sorted_time, side="left")
    last = np.searchsorted(sorted_time, sorted_time, side="right") - 1
    return first, last


def cox_loglik_grad(eta, time, event):
    """Breslow log partial likelihood and its gradient w.r.t. the log-risk.

    Parameters
    ----------
    eta : (n,) float array
        Log-partial-hazard of every instance.
    time, event : (n,) arrays
        Observed durations and event indicators (1 = event).

    Returns
    -------
    loglik : float
    grad : (n,) float array
        d loglik / d eta.
    """
    eta = np.asarray(eta, dtype=float)
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=float)
    order = np.argsort(time, kind="stable")
    t = time[order]
    e = event[order]
    g = eta[order]
    first, last = _tie_bounds(t)

    # log of the reverse cumulative sum of exp(g), i.e. log risk-set size
    log_rev = np.logaddexp.accumulate(g[::-1])[::-1]
    log_s0 = log_rev[first]

    loglik = float(np.sum(e * (g - log_s0)))

    # sum_{events k with T_k <= T_j} exp(g_j) / S0(T_k), in logs: every
    # term has g_j <= log S0(T_k), so g + log_cum <= log n
    log_inv = np.where(e > 0, -log_s0, -np.inf)
    log_cum = np.logaddexp.accumulate(log_inv)[last]
    grad_sorted = e - np.exp(g + log_cum)
    grad = np.empty_like(grad_sorted)
    grad[order] = grad_sorted
    return loglik, grad


def cox_newton_terms(X, beta, time, event):
    """Log partial likelihood, score vector and Hessian for a linear Cox model."""
    X = np.asarray(X, dtype=float)
    beta = np.asarray(beta, dtype=float)
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=float)
    n, p = X.shape
    order = np.argsort(time, kind="stable")
    t = time[order]
    e = event[order]
    x = X[order]
    eta = x @ beta
    first, _ = _tie_bounds(t)

    shift = eta.max()
    w = np.exp(eta - shift)
    s0 = np.cumsum(w[::-1])[::-1][first]
    s1 = np.cumsum((w[:, None] * x)[::-1], axis=0)[::-1][first]

    ev = e > 0
    loglik = float(np.sum(eta[ev] - shift - np.log(s0[ev])))
    mean = s1[ev] / s0[ev, None]
    score = x[ev].sum(axis=0) - mean.sum(axis=0)

    s2 = np.cumsum((w[:, None, None] * x[:, :, None] * x[:, None, :])[::-1], axis=0)[::-1]
    s2 = s2[first[ev]]
    hess = -(s2 / s0[ev, None, None]).sum(axis=0) + mean.T @ mean
    return loglik, score, hess


def concordance_counts(time, event, risk):
    """Count concordant, tied-risk and comparable pairs.

    A pair (i, j) is comparable when ``time[i] < time[j]`` and ``event[i] == 1``.
    """
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=float)
    risk = np.asarray(risk, dtype=float)
    concordant = 0
    tied = 0
    comparable = 0
    for i in np.flatnonzero(event > 0):
        later = time > time[i]
        if not later.any():
            continue
        r = risk[later]
        comparable += int(later.sum())
        concordant += int(np.sum(risk[i] > r))
        tied += int(np.sum(risk[i] == r))
    return concordant, tied, comparable


def relief_accumulate(U, F, ydiff, sample_idx, k, sigma):
    """RReliefF accumulators over sampled instances.

    Parameters
    ----------
    U : (n, p) array
        Columns used for the Manhattan neighbour distance.
    F : (n, p) array
        Columns already divided by their range, so ``|F_i - F_j|`` is the
        per-feature difference in [0, 1].
    ydiff : (n,) array
        Target divided by its range.
    sample_idx : (m,) int array
        Indices of the instances the weights are estimated from.
    k : int
        Number of nearest neighbours.
    sigma : float
        Width of the rank-based neighbour influence ``exp(-(rank/sigma)**2)``.

    Returns
    -------
    n_dy : float
    n_df, n_dydf : (p,) arrays
    """
    U = np.asarray(U, dtype=float)
    F = np.asarray(F, dtype=float)
    ydiff = np.asarray(ydiff, dtype=float)
    n, p = F.shape
    ranks = np.arange(1, k + 1, dtype=float)
    infl = np.exp(-((ranks / sigma) ** 2))
    infl /= infl.sum()

    n_dy = 0.0
    n_df = np.zeros(p)
    n_dydf = np.zeros(p)
    for i in sample_idx:
        dist = np.abs(U - U[i]).sum(axis=1)
        dist[i] = np.inf
        nbrs = np.argsort(dist, kind="stable")[:k]
        dy = np.abs(ydiff[nbrs] - ydiff[i])
        df = np.abs(F[nbrs] - F[i])
        n_dy += float(np.sum(dy * infl))
        n_df += infl @ df
        n_dydf += (dy * infl) @ df
    return n_dy, n_df, n_dydf
