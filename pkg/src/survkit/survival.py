"""Linear Cox model, baseline estimators, concordance and the binary-choice baseline.

Ties use the Breslow convention throughout: every event at time ``t`` shares
the risk set ``{j : T_j >= t}``, which includes the event itself.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _kernels
from .dataset import Dataset
from .errors import ConvergenceWarning, SeparationError, SingularMatrixError

__all__ = [
    "SurvivalCurve", "CoxModel", "CoxSummary", "LogisticBaseline",
    "log_partial_likelihood", "fit_cox", "cox_summary", "breslow_baseline",
    "kaplan_meier", "concordance_index", "fit_logistic_baseline",
    "expand_intervals", "save_cox_json", "load_cox_json",
]


@dataclass(frozen=True)
class SurvivalCurve:
    """Right-continuous step function: ``survival[i]`` holds on ``[times[i], times[i+1])``."""

    times: np.ndarray
    survival: np.ndarray
    cumulative_hazard: np.ndarray | None = None

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        return np.where(idx >= 0, self.survival[np.maximum(idx, 0)], 1.0)


@dataclass(frozen=True)
class CoxModel:
    beta: np.ndarray
    covariate_names: tuple[str, ...]
    log_likelihood: float
    iterations: int
    converged: bool
    information: np.ndarray | None = field(default=None, repr=False)

    def predict_log_hazard(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.beta

    __call__ = predict_log_hazard


@dataclass(frozen=True)
class CoxSummary:
    names: tuple[str, ...]
    coef: np.ndarray
    hazard_ratio: np.ndarray
    se: np.ndarray
    z: np.ndarray
    p: np.ndarray

    def rows(self) -> list[dict]:
        return [
            {"covariate": nm, "coef": float(c), "hazard_ratio": float(h),
             "se": float(s), "z": float(z), "p": float(p)}
            for nm, c, h, s, z, p in zip(self.names, self.coef, self.hazard_ratio,
                                         self.se, self.z, self.p)
        ]


@dataclass(frozen=True)
class LogisticBaseline:
    intercept: float
    beta: np.ndarray
    names: tuple[str, ...]
    interval: float = 0.1
    reference_elapsed: float = 0.0

    def probability(self, X, elapsed) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        eta = self.intercept + X @ self.beta[:-1] + self.beta[-1] * np.asarray(elapsed, dtype=float)
        return 1.0 / (1.0 + np.exp(-eta))

    def predict_risk(self, X) -> np.ndarray:
        """Crossing probability at the reference elapsed time; used for the C-index."""
        X = np.asarray(X, dtype=float)
        return self.probability(X, np.full(len(X), self.reference_elapsed))


def _check_beta(beta, width):
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.shape != (width,):
        raise ValueError(f"beta has length {beta.size}, dataset width is {width}")
    if np.any(np.isnan(beta)):
        raise ValueError("beta contains NaN")
    return beta


def log_partial_likelihood(ds: Dataset, beta) -> float:
    """Breslow log partial likelihood of a linear Cox model at ``beta``."""
    beta = _check_beta(beta, ds.width)
    ds.require_events()
    loglik, _ = _kernels.cox_loglik_grad(ds.X @ beta, ds.duration, ds.event)
    return loglik


def _newton_terms(ds, beta):
    return _kernels.cox_newton_terms(ds.X, beta, ds.duration, ds.event)


def _check_information(info, names):
    if info.size == 0:
        return
    eig = np.linalg.eigvalsh(info)
    if not np.all(np.isfinite(eig)) or eig[0] <= 1e-10 * max(eig[-1], 1e-300):
        raise SingularMatrixError(
            "information matrix is singular; screen collinear covariates with vif_filter "
            f"(columns: {list(names)})"
        )


_STEP_TOL = 1e-6


def fit_cox(ds: Dataset, tol: float = 1e-8, max_iter: int = 100, bound: float = 50.0) -> CoxModel:
    """Maximise the partial likelihood by Newton-Raphson with step halving.

    Converged when ``max|score| < tol`` and the Newton step is negligible
    (monotone likelihoods drive the score to zero while steps stay large). Raises :class:`SingularMatrixError`
    for a non-invertible information matrix and :class:`SeparationError`
    when any ``|beta|`` exceeds ``bound``.
    """
    ds.require_events()
    beta = np.zeros(ds.width)
    loglik, score, hess = _newton_terms(ds, beta)
    converged = False
    it = 0
    while True:
        small = ds.width == 0 or np.max(np.abs(score)) < tol
        if ds.width == 0 or (it >= max_iter and not small):
            converged = small
            break
        try:
            _check_information(-hess, ds.columns)
        except SingularMatrixError:
            if small and it == 0:  # already stationary at zero, e.g. an all-zero column
                converged = True
                break
            if small:
                raise SeparationError(
                    "likelihood flattened out at large coefficients: likely monotone "
                    "likelihood (perfect separation)") from None
            raise
        step = np.linalg.solve(-hess, score)
        # a vanishing score with non-vanishing Newton steps is a likelihood
        # still climbing towards infinity, not an optimum
        if small and np.max(np.abs(step)) <= _STEP_TOL * (1.0 + np.max(np.abs(beta))):
            converged = True
            break
        if it >= max_iter:
            break
        scale = 1.0
        for _ in range(30):
            cand = beta + scale * step
            if np.max(np.abs(cand)) > bound:
                raise SeparationError(
                    f"coefficients exceed |beta| = {bound}: likely monotone likelihood "
                    "(perfect separation)"
                )
            c_ll, c_score, c_hess = _newton_terms(ds, cand)
            if np.isfinite(c_ll) and c_ll >= loglik - 1e-12 * abs(loglik):
                break
            scale *= 0.5
        beta, loglik, score, hess = cand, c_ll, c_score, c_hess
        it += 1
    if not converged:
        warnings.warn(f"fit_cox did not converge in {max_iter} iterations", ConvergenceWarning,
                      stacklevel=2)
    return CoxModel(beta=beta, covariate_names=tuple(ds.columns), log_likelihood=loglik,
                    iterations=it, converged=converged, information=-hess)


def cox_summary(model: CoxModel, ds: Dataset) -> CoxSummary:
    """Wald standard errors, hazard ratios, z-scores and two-sided p-values."""
    if not model.converged:
        raise ValueError("cox_summary needs a converged model")
    _, _, hess = _newton_terms(ds, model.beta)
    info = -hess
    _check_information(info, ds.columns)
    cov = np.linalg.inv(info)
    se = np.sqrt(np.diag(cov))
    coef = np.asarray(model.beta, dtype=float)
    z = coef / se
    p = 2.0 * stats.norm.sf(np.abs(z))
    return CoxSummary(tuple(model.covariate_names), coef, np.exp(coef), se, z, p)


def _event_table(duration, event):
    times = np.unique(duration[event > 0])
    at_risk = np.array([(duration >= t).sum() for t in times], dtype=float)
    deaths = np.array([((duration == t) & (event > 0)).sum() for t in times], dtype=float)
    return times, at_risk, deaths


def breslow_baseline(model: CoxModel, ds: Dataset) -> SurvivalCurve:
    """Breslow cumulative baseline hazard and ``S0(t) = exp(-Lambda0(t))``."""
    ds.require_events()
    risk = np.exp(ds.X @ model.beta)
    times = np.unique(ds.duration[ds.event > 0])
    incr = np.array([
        ((ds.duration == t) & (ds.event > 0)).sum() / risk[ds.duration >= t].sum()
        for t in times
    ])
    cumhaz = np.cumsum(incr)
    times = np.concatenate([[0.0], times]) if times[0] > 0 else times
    if len(times) > len(cumhaz):
        cumhaz = np.concatenate([[0.0], cumhaz])
    return SurvivalCurve(times, np.exp(-cumhaz), cumhaz)


def kaplan_meier(ds: Dataset) -> SurvivalCurve:
    """Product-limit estimate; censored rows leave the risk set without a factor."""
    ds.require_events()
    times, at_risk, deaths = _event_table(ds.duration, ds.event)
    surv = np.cumprod(1.0 - deaths / at_risk)
    if times[0] > 0:
        times = np.concatenate([[0.0], times])
        surv = np.concatenate([[1.0], surv])
    return SurvivalCurve(times, surv)


def concordance_index(durations, events, risks) -> float:
    """Fraction of comparable pairs ordered correctly by predicted risk.

    A pair is comparable when the shorter duration ends in an event; equal
    risks count one half.
    """
    durations = np.asarray(durations, dtype=float)
    events = np.asarray(events, dtype=float)
    risks = np.asarray(risks, dtype=float)
    if not (len(durations) == len(events) == len(risks)):
        raise ValueError("durations, events and risks must have equal length")
    conc, tied, comp = _kernels.concordance_counts(durations, events, risks)
    if comp == 0:
        raise ValueError("no comparable pairs")
    return (conc + 0.5 * tied) / comp


def expand_intervals(ds: Dataset, interval: float = 0.1):
    """Person-period expansion: one row per ``interval`` of waiting.

    Returns ``(X, elapsed, label, owner)`` where ``elapsed`` is the start of
    each interval and only the final row of an instance with an event is
    labelled 1.
    """
    if interval <= 0:
        raise ValueError("interval must be positive")
    if np.any(ds.duration <= 0):
        raise ValueError("binary-choice expansion needs strictly positive durations")
    counts = np.ceil(np.round(ds.duration / interval, 9)).astype(int)
    owner = np.repeat(np.arange(ds.n), counts)
    step = np.concatenate([np.arange(c) for c in counts])
    elapsed = step * interval
    last = np.cumsum(counts) - 1
    label = np.zeros(len(owner))
    label[last] = ds.event
    return ds.X[owner], elapsed, label, owner


def fit_logistic_baseline(ds: Dataset, interval: float = 0.1, tol: float = 1e-8,
                          max_iter: int = 100, bound: float = 50.0,
                          reference_elapsed: float = 0.0) -> LogisticBaseline:
    """Logistic regression of 'cross now' on covariates plus elapsed time."""
    X, elapsed, y, _ = expand_intervals(ds, interval)
    if y.min() == y.max():
        raise SeparationError(
            "binary-choice labels are all equal; crossing probability is degenerate (separation)"
        )
    A = np.column_stack([np.ones(len(y)), X, elapsed])
    w = np.zeros(A.shape[1])

    def loglik(w):
        eta = A @ w
        return float(np.sum(y * eta - np.logaddexp(0.0, eta)))

    ll = loglik(w)
    for _ in range(max_iter):
        mu = 0.5 * (1.0 + np.tanh(0.5 * (A @ w)))
        grad = A.T @ (y - mu)
        H = (A * (mu * (1 - mu))[:, None]).T @ A
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            raise SingularMatrixError("binary-choice information matrix is singular") from None
        if np.max(np.abs(grad)) < tol and np.max(np.abs(step)) <= _STEP_TOL * (1.0 + np.max(np.abs(w))):
            break
        scale = 1.0
        for _ in range(30):
            cand = w + scale * step
            if np.max(np.abs(cand)) > bound:
                raise SeparationError(
                    f"binary-choice coefficients exceed |beta| = {bound}: perfect separation"
                )
            c_ll = loglik(cand)
            if c_ll >= ll - 1e-12 * abs(ll):
                break
            scale *= 0.5
        w, ll = cand, c_ll
    else:
        warnings.warn("binary-choice fit did not converge", ConvergenceWarning, stacklevel=2)
    return LogisticBaseline(intercept=float(w[0]), beta=w[1:],
                            names=tuple(ds.columns) + ("elapsed",), interval=interval,
                            reference_elapsed=reference_elapsed)


def save_cox_json(model: CoxModel, path, summary: CoxSummary | None = None) -> None:
    doc = {
        "format": "survkit.cox/1",
        "covariate_names": list(model.covariate_names),
        "beta": [float(b) for b in model.beta],
        "se": None if summary is None else [float(s) for s in summary.se],
        "log_likelihood": model.log_likelihood,
        "iterations": model.iterations,
        "converged": model.converged,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_cox_json(path) -> CoxModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "survkit.cox/1":
        raise ValueError(f"{path}: not a survkit Cox model document")
    ll = doc["log_likelihood"]
    return CoxModel(beta=np.asarray(doc["beta"], dtype=float),
                    covariate_names=tuple(doc["covariate_names"]),
                    log_likelihood=float(ll) if ll is not None else math.nan,
                    iterations=int(doc["iterations"]), converged=bool(doc["converged"]))
