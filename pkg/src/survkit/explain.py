"""Shapley attributions of a risk model's log-partial hazard.

Absent features are filled in from a single baseline vector, so the value of
a coalition ``S`` is ``g(x_S)`` with ``x_S`` taking instance values on ``S``
and baseline values elsewhere.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset

__all__ = [
    "default_baseline", "resolve_baseline", "shap_exact", "shap_sampled",
    "ShapReport", "shap_report", "conditional_interactions",
    "write_report_csv", "write_report_json", "write_beeswarm_csv", "write_interactions_csv",
]

MAX_EXACT_FEATURES = 20


def default_baseline(ds: Dataset) -> dict[str, object]:
    """Mean for continuous columns, zero for binary columns."""
    return {c: ("zero" if k == "binary" else "mean") for c, k in zip(ds.columns, ds.kinds)}


def resolve_baseline(ds: Dataset, convention=None) -> np.ndarray:
    """Turn a per-column convention (``"mean"``, ``"zero"`` or a number) into a vector."""
    conv = default_baseline(ds)
    if convention:
        unknown = set(convention) - set(ds.columns)
        if unknown:
            raise ValueError(f"baseline names unknown columns {sorted(unknown)}")
        conv.update(convention)
    out = np.empty(ds.width)
    for j, c in enumerate(ds.columns):
        rule = conv[c]
        if rule == "mean":
            out[j] = ds.X[:, j].mean()
        elif rule == "zero":
            out[j] = 0.0
        else:
            out[j] = float(rule)
    return out


def _popcount(a: np.ndarray) -> np.ndarray:
    a = a.astype(np.int64)
    count = np.zeros_like(a)
    while np.any(a):
        count += a & 1
        a >>= 1
    return count


def _coalitions(z, baseline, F):
    masks = np.arange(1 << F, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(F)) & 1).astype(bool)
    return masks, np.where(bits, z, baseline)


def shap_exact(g, z, baseline) -> np.ndarray:
    """Exact Shapley values by enumerating all ``2**F`` coalitions.

    ``g`` maps an ``(m, F)`` array to ``m`` outputs.
    """
    z = np.asarray(z, dtype=float)
    baseline = np.asarray(baseline, dtype=float)
    F = z.shape[0]
    if F > MAX_EXACT_FEATURES:
        raise ValueError(f"{F} features is too many for exact enumeration; use shap_sampled")
    masks, X = _coalitions(z, baseline, F)
    v = np.asarray(g(X), dtype=float)
    size = _popcount(masks)
    fact = np.array([math.factorial(k) for k in range(F + 1)], dtype=float)
    weight = fact[size] * fact[np.maximum(F - size - 1, 0)] / fact[F]
    phi = np.empty(F)
    for i in range(F):
        without = masks[(masks >> i) & 1 == 0]
        phi[i] = np.sum(weight[without] * (v[without | (1 << i)] - v[without]))
    return phi


def shap_sampled(g, z, baseline, samples: int = 200, seed: int = 0):
    """Antithetic permutation-sampling estimate of the Shapley values.

    Each draw evaluates a random feature order and its reverse; the pair
    average is one replicate. Returns ``(phi, std_error)``.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    z = np.asarray(z, dtype=float)
    baseline = np.asarray(baseline, dtype=float)
    F = z.shape[0]
    rng = np.random.default_rng(seed)
    perms = np.array([rng.permutation(F) for _ in range(samples)])
    orders = np.concatenate([perms, perms[:, ::-1]])
    n_paths = len(orders)
    # path point k has the first k features of the order switched on
    on = np.zeros((n_paths, F + 1, F), dtype=bool)
    for k in range(1, F + 1):
        on[np.arange(n_paths), k:, orders[:, k - 1]] = True
    X = np.where(on, z, baseline).reshape(-1, F)
    v = np.asarray(g(X), dtype=float).reshape(n_paths, F + 1)
    marg = np.empty((n_paths, F))
    marg[np.arange(n_paths)[:, None], orders] = np.diff(v, axis=1)
    reps = 0.5 * (marg[:samples] + marg[samples:])
    phi = reps.mean(axis=0)
    if samples > 1:
        se = reps.std(axis=0, ddof=1) / math.sqrt(samples)
    else:
        se = np.full(F, np.inf)
    return phi, se


@dataclass(frozen=True)
class ShapReport:
    """Per-instance attributions with feature aggregates.

    ``included[i, f]`` is False when binary feature ``f`` is 0 for instance
    ``i``; those entries do not enter the aggregates. ``table`` rows are
    sorted by descending absolute mean.
    """

    names: tuple[str, ...]
    kinds: tuple[str, ...]
    phi: np.ndarray
    values: np.ndarray
    baseline: np.ndarray
    method: str
    included: np.ndarray
    table: tuple[dict, ...]
    std_error: np.ndarray | None = None


def _aggregate(names, phi, included):
    rows = []
    for j, nm in enumerate(names):
        col = phi[included[:, j], j]
        if col.size == 0:
            continue
        mean = float(col.mean())
        std = float(col.std())
        rows.append({"feature": nm, "mean": mean, "std": std,
                     "uniform": abs(mean) > std, "n": int(col.size)})
    rows.sort(key=lambda r: -abs(r["mean"]))
    return rows


def shap_report(model, ds: Dataset, baseline=None, method: str = "auto",
                samples: int = 200, seed: int = 0) -> ShapReport:
    """Attribute ``model`` (a callable on ``(m, F)`` arrays) over every row of ``ds``.

    ``method`` is ``"exact"``, ``"sampled"`` or ``"auto"`` (exact up to 12
    features). ``baseline`` is a per-column convention; see
    :func:`resolve_baseline`.
    """
    if method == "auto":
        method = "exact" if ds.width <= 12 else "sampled"
    if method not in ("exact", "sampled"):
        raise ValueError(f"unknown method {method!r}")
    base = resolve_baseline(ds, baseline)
    X = np.asarray(ds.X, dtype=float)
    phi = np.empty_like(X)
    se = np.empty_like(X) if method == "sampled" else None
    for i in range(ds.n):
        if method == "exact":
            phi[i] = shap_exact(model, X[i], base)
        else:
            phi[i], se[i] = shap_sampled(model, X[i], base, samples, seed + i)
    binary = np.array([k == "binary" for k in ds.kinds])
    included = ~(binary[None, :] & (X == 0.0))
    for j in np.flatnonzero(binary & ~included.any(axis=0)):
        warnings.warn(f"binary feature {ds.columns[j]!r} is 0 for every instance; "
                      "left out of the report", stacklevel=2)
    label = "exact" if method == "exact" else f"sampled(samples={samples}, seed={seed})"
    return ShapReport(tuple(ds.columns), tuple(ds.kinds), phi, X, base, label, included,
                      tuple(_aggregate(ds.columns, phi, included)), se)


def conditional_interactions(report: ShapReport, condition, targets=None,
                             threshold: float | None = None, min_count: int = 10) -> list[dict]:
    """Mean attributions restricted to instances meeting ``condition``.

    ``condition`` is ``(feature, level)``. Binary features match the level
    directly; with ``threshold`` set, level 1 means ``value >= threshold``
    and level 0 means ``value < threshold``. Only rows flagged uniform are
    returned, as ``{"condition", "feature", "mean", "std", "n"}``.
    """
    feat, level = condition
    j = report.names.index(feat)
    col = report.values[:, j]
    if threshold is None:
        keep = col == float(level)
    else:
        keep = col >= threshold if level else col < threshold
    count = int(keep.sum())
    if count == 0:
        raise ValueError(f"no instances satisfy {feat} = {level}")
    if count < min_count:
        raise ValueError(f"only {count} instances satisfy {feat} = {level} "
                         f"(need at least {min_count})")
    names = [n for n in report.names if n != feat] if targets is None else list(targets)
    idx = [report.names.index(n) for n in names]
    rows = _aggregate(names, report.phi[keep][:, idx], report.included[keep][:, idx])
    cond = f"{feat}={level}" if threshold is None else \
        f"{feat}{'>=' if level else '<'}{threshold:g}"
    return [{"condition": cond, **r} for r in rows if r["uniform"]]


def write_report_csv(report: ShapReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "mean", "std", "uniform", "n"])
        for r in report.table:
            w.writerow([r["feature"], repr(r["mean"]), repr(r["std"]), int(r["uniform"]), r["n"]])


def write_report_json(report: ShapReport, path) -> None:
    doc = {
        "method": report.method,
        "baseline": dict(zip(report.names, map(float, report.baseline))),
        "table": list(report.table),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def write_beeswarm_csv(report: ShapReport, path) -> None:
    """Long-format per-instance data for summary plots."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instance", "feature", "shap", "value", "included"])
        for i in range(report.phi.shape[0]):
            for j, nm in enumerate(report.names):
                w.writerow([i, nm, repr(float(report.phi[i, j])), repr(float(report.values[i, j])),
                            int(report.included[i, j])])


def write_interactions_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["condition", "feature", "mean", "std", "n"])
        for r in rows:
            w.writerow([r["condition"], r["feature"], repr(r["mean"]), repr(r["std"]), r["n"]])
