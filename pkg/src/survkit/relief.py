"""RReliefF feature weights for a continuous target (here: wait time)."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dataset import Dataset

__all__ = ["ReliefWeights", "rrelieff", "top_n", "write_weights_csv"]


@dataclass(frozen=True)
class ReliefWeights:
    names: tuple[str, ...]
    weights: np.ndarray
    ranking: np.ndarray
    k_neighbors: int
    n_sampled: int
    sigma: float

    def as_dict(self) -> dict[str, float]:
        return {nm: float(w) for nm, w in zip(self.names, self.weights)}


def _rank(weights: np.ndarray) -> np.ndarray:
    # descending weight, ties by column order
    return np.lexsort((np.arange(len(weights)), -weights))


def rrelieff(ds: Dataset, k: int = 10, m: int | None = None, sigma: float = 20.0,
             seed: int = 0, target=None) -> ReliefWeights:
    """Estimate RReliefF weights ``W_f`` with the rank-weighted accumulator.

    For each of ``m`` sampled instances the ``k`` nearest neighbours are
    found by Manhattan distance over standardized continuous columns and raw
    0/1 binary columns. Neighbour ``r`` (1-based rank) gets influence
    ``exp(-(r/sigma)**2)`` normalised over the ``k`` neighbours, and

        W_f = N_dYdF[f] / N_dY - (N_dF[f] - N_dYdF[f]) / (m - N_dY)

    Feature and target differences are scaled by their ranges. Rows are put
    in canonical order by ``ds.ids`` before sampling, so row order does not
    matter for a fixed seed. ``m=None`` uses every instance.

    Parameters
    ----------
    ds : Dataset
    k : int
        Neighbours per sampled instance; must be smaller than ``ds.n``.
    m : int, optional
        Number of sampled instances (without replacement).
    sigma : float
        Rank influence width.
    seed : int
        Seed for instance sampling.
    target : array, optional
        Regression target; defaults to ``ds.duration``.
    """
    n = ds.n
    if k < 1 or k >= n:
        raise ValueError(f"k must satisfy 1 <= k < n (k={k}, n={n})")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    order = np.argsort(ds.ids, kind="stable")
    X = np.asarray(ds.X, dtype=float)[order]
    y = np.asarray(ds.duration if target is None else target, dtype=float)[order]

    m = n if m is None else int(m)
    if not 1 <= m <= n:
        raise ValueError(f"m must be in [1, {n}]")
    if m == n:
        sample = np.arange(n)
    else:
        sample = np.sort(np.random.default_rng(seed).choice(n, size=m, replace=False))

    p = X.shape[1]
    y_range = np.ptp(y)
    if y_range == 0:
        warnings.warn("all target values are identical; RReliefF weights are zero", stacklevel=2)
        w = np.zeros(p)
        return ReliefWeights(tuple(ds.columns), w, _rank(w), k, m, sigma)

    rng_f = np.ptp(X, axis=0)
    F = np.divide(X, rng_f, out=np.zeros_like(X), where=rng_f > 0)

    U = X.copy()
    for j, kind in enumerate(ds.kinds):
        if kind == "continuous":
            sd = U[:, j].std()
            U[:, j] = (U[:, j] - U[:, j].mean()) / sd if sd > 0 else 0.0

    n_dy, n_df, n_dydf = _kernels.relief_accumulate(U, F, y / y_range, sample, k, sigma)
    if n_dy == 0 or n_dy == m:
        w = np.zeros(p)
    else:
        w = n_dydf / n_dy - (n_df - n_dydf) / (m - n_dy)
    return ReliefWeights(tuple(ds.columns), np.asarray(w), _rank(np.asarray(w)), k, m, sigma)


def top_n(weights: ReliefWeights, n: int) -> list[int]:
    """Indices of the ``n`` highest-weighted columns, best first."""
    if not 1 <= n <= len(weights.names):
        raise ValueError(f"n must be in [1, {len(weights.names)}]")
    return [int(i) for i in weights.ranking[:n]]


def write_weights_csv(weights: ReliefWeights, path) -> None:
    rank_of = np.empty(len(weights.ranking), dtype=int)
    rank_of[weights.ranking] = np.arange(1, len(weights.ranking) + 1)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "weight", "rank"])
        for i in weights.ranking:
            w.writerow([weights.names[i], repr(float(weights.weights[i])), int(rank_of[i])])
