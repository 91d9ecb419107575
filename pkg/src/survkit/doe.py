"""D-optimal scenario designs for the type-I censored exponential Cox model.

Each scenario ``S`` is a level combination encoded as ``Z = (1, one-hot...)``.
Its information is ``(1 - exp(-c * exp(beta . Z))) * Z Z^T``; a design is a
weighted set of distinct scenarios and is scored by ``log det`` of the
weighted sum. The optimiser is simulated annealing over scenario swaps and
weight perturbations.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Factor", "FactorCatalog", "Design", "AnnealConfig", "AnnealResult",
    "crossing_catalog", "fisher_info", "information_matrix", "vector_objective",
    "design_objective",
    "random_design", "anneal", "anneal_restarts", "select_scenarios",
    "write_design_csv", "read_design_csv",
]


@dataclass(frozen=True)
class Factor:
    name: str
    levels: tuple
    numeric: bool = False

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        if len(self.levels) < 2:
            raise ValueError(f"factor {self.name!r} needs at least 2 levels")


@dataclass(frozen=True)
class FactorCatalog:
    """Ordered factors; scenario ``k`` is the mixed-radix index into their levels.

    Categorical factors one-hot encode against their first level; numeric
    factors contribute one column holding the level value.
    """

    factors: tuple[Factor, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))

    @classmethod
    def from_list(cls, items) -> "FactorCatalog":
        return cls(tuple(Factor(it["name"], tuple(it["levels"]), bool(it.get("numeric", False)))
                         for it in items))

    @classmethod
    def from_json(cls, path) -> "FactorCatalog":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls.from_list(doc["factors"] if isinstance(doc, dict) else doc)

    def to_list(self) -> list[dict]:
        return [{"name": f.name, "levels": list(f.levels), "numeric": f.numeric}
                for f in self.factors]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(f.levels) for f in self.factors)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def dimension(self) -> int:
        return 1 + sum(1 if f.numeric else len(f.levels) - 1 for f in self.factors)

    @property
    def column_names(self) -> list[str]:
        cols = ["intercept"]
        for f in self.factors:
            if f.numeric:
                cols.append(f.name)
            else:
                cols.extend(f"{f.name}={lvl}" for lvl in f.levels[1:])
        return cols

    def level_indices(self, scenarios) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(scenarios), self.shape), axis=-1)

    def levels_of(self, scenario: int) -> dict:
        idx = self.level_indices([scenario])[0]
        return {f.name: f.levels[i] for f, i in zip(self.factors, idx)}

    def index_of(self, levels: dict) -> int:
        idx = []
        for f in self.factors:
            value = levels[f.name]
            match = [i for i, lvl in enumerate(f.levels) if str(lvl) == str(value)]
            if not match:
                raise ValueError(f"{f.name}: illegal level {value!r}")
            idx.append(match[0])
        return int(np.ravel_multi_index(idx, self.shape))

    def encode(self, scenarios) -> np.ndarray:
        lv = self.level_indices(scenarios)
        Z = np.zeros((len(lv), self.dimension))
        Z[:, 0] = 1.0
        col = 1
        for j, f in enumerate(self.factors):
            if f.numeric:
                Z[:, col] = np.asarray(f.levels, dtype=float)[lv[:, j]]
                col += 1
            else:
                for lvl in range(1, len(f.levels)):
                    Z[:, col] = lv[:, j] == lvl
                    col += 1
        return Z


def crossing_catalog(numeric: bool = False) -> FactorCatalog:
    """The nine controlled variables of the VR experiment and their levels."""
    return FactorCatalog((
        Factor("speed_limit", (30, 40, 50), numeric),
        Factor("min_gap", (1.0, 1.5, 2.0), numeric),
        Factor("lane_width", (2.5, 2.75, 3.0), numeric),
        Factor("road_type", ("one_way", "two_way", "two_way_median")),
        Factor("braking_level", (1, 2, 3)),
        Factor("automation", ("HDV", "Mixed", "AV")),
        Factor("arrival_rate", (530, 750, 1100), numeric),
        Factor("time_of_day", ("Day", "Night")),
        Factor("weather", ("Clear", "Snowy")),
    ))


@dataclass(frozen=True)
class Design:
    scenarios: np.ndarray
    weights: np.ndarray
    objective: float = math.nan

    def __post_init__(self):
        s = np.asarray(self.scenarios, dtype=np.int64)
        w = np.asarray(self.weights, dtype=float)
        if s.shape != w.shape:
            raise ValueError("scenarios and weights differ in length")
        if np.any(w < 0) or not math.isclose(w.sum(), 1.0, abs_tol=1e-9):
            raise ValueError("weights must be nonnegative and sum to 1")
        if len(np.unique(s)) != len(s):
            raise ValueError("design scenarios must be distinct")
        object.__setattr__(self, "scenarios", s)
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class AnnealConfig:
    beta_prior: tuple | None = None
    censor_time: float = 30.0
    m: int = 90
    iters: int = 20000
    T0: float = 1e-4
    alpha: float = 0.9997
    seed: int = 0
    swap_probability: float = 0.5
    weight_concentration: float = 500.0
    relative: str = "logdet"


@dataclass(frozen=True)
class AnnealResult:
    design: Design
    initial_objective: float
    trace: np.ndarray = field(repr=False)
    accepted_worse: int = 0
    proposed_worse: int = 0
    proposed_singular: int = 0


def _censor_factor(eta, c):
    # 1 - exp(-c * exp(eta)) without overflow for large eta
    rate = c * np.exp(np.minimum(eta, 700.0))
    return -np.expm1(-rate)


def fisher_info(Z, beta, c: float) -> np.ndarray:
    """Information of one scenario vector: ``(1 - exp(-c exp(beta.Z))) Z Z^T``."""
    Z = np.asarray(Z, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if Z.shape != beta.shape:
        raise ValueError("Z and beta dimensions differ")
    if c < 0:
        raise ValueError("censoring time must be nonnegative")
    if math.isinf(c):
        return np.outer(Z, Z)
    return float(_censor_factor(Z @ beta, c)) * np.outer(Z, Z)


def information_matrix(Z, weights, beta, c) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if math.isinf(c):
        f = np.ones(len(Z))
    else:
        f = _censor_factor(Z @ np.asarray(beta, dtype=float), c)
    return (Z * (np.asarray(weights) * f)[:, None]).T @ Z


def _logdet(M) -> float:
    sign, val = np.linalg.slogdet(M)
    if sign <= 0 or not np.isfinite(val):
        return -math.inf
    eig = np.linalg.eigvalsh(M)
    if eig[0] <= 1e-12 * eig[-1]:
        return -math.inf
    return float(val)


def vector_objective(Z, weights, beta, c: float) -> float:
    """``log det`` of the weighted information of explicit design vectors."""
    return _logdet(information_matrix(Z, weights, beta, c))


def design_objective(design: Design, catalog: FactorCatalog, beta=None, c: float = 30.0) -> float:
    """``log det M``, or ``-inf`` when the information matrix is singular."""
    beta = np.zeros(catalog.dimension) if beta is None else np.asarray(beta, dtype=float)
    return vector_objective(catalog.encode(design.scenarios), design.weights, beta, c)


def random_design(catalog: FactorCatalog, m: int, rng, weights: str = "dirichlet") -> Design:
    if m > catalog.size:
        raise ValueError(f"m = {m} exceeds the {catalog.size} available scenarios")
    s = rng.choice(catalog.size, size=m, replace=False)
    w = rng.dirichlet(np.ones(m)) if weights == "dirichlet" else np.full(m, 1.0 / m)
    return Design(s, w)


def _delta(best, cand, mode):
    # relative decrease of the objective; inf for singular candidates
    if cand == -math.inf:
        return 0.0 if best == -math.inf else math.inf
    if mode == "det":
        db, dc = math.exp(best), math.exp(cand)
        return (db - dc) / db
    return (best - cand) / abs(best) if best != 0 else best - cand


def anneal(catalog: FactorCatalog, cfg: AnnealConfig = AnnealConfig()) -> AnnealResult:
    """Simulated annealing for a D-optimal ``m``-scenario design.

    Each iteration proposes, with probability ``swap_probability``, swapping
    one scenario for a uniformly drawn scenario not in the design, otherwise
    a Dirichlet perturbation of the weights. Improvements are accepted;
    worse proposals are accepted with probability ``exp(-delta / T)``, where
    ``delta`` is the relative objective decrease (on log det by default,
    on det with ``relative="det"``). ``T`` is multiplied by ``alpha`` every
    iteration. The best design visited is returned.
    """
    dim = catalog.dimension
    if cfg.m < dim:
        raise ValueError(f"m = {cfg.m} is below the design dimension {dim}: every design is singular")
    if cfg.m > catalog.size:
        raise ValueError(f"m = {cfg.m} exceeds the {catalog.size} available scenarios")
    if not 0 < cfg.alpha < 1 or cfg.T0 <= 0:
        raise ValueError("need T0 > 0 and 0 < alpha < 1")
    beta = np.zeros(dim) if cfg.beta_prior is None else np.asarray(cfg.beta_prior, dtype=float)
    if beta.shape != (dim,):
        raise ValueError(f"beta prior has length {beta.size}, design dimension is {dim}")
    rng = np.random.default_rng(cfg.seed)
    c = cfg.censor_time

    cur = random_design(catalog, cfg.m, rng)
    cur_s, cur_w = cur.scenarios.copy(), cur.weights.copy()
    Z = catalog.encode(cur_s)
    cur_obj = _logdet(information_matrix(Z, cur_w, beta, c))
    init_obj = cur_obj
    best = (cur_s.copy(), cur_w.copy(), cur_obj)
    in_design = set(cur_s.tolist())
    trace = np.empty(cfg.iters + 1)
    trace[0] = cur_obj
    T = cfg.T0
    can_swap = catalog.size > cfg.m
    acc_worse = prop_worse = prop_singular = 0
    for it in range(1, cfg.iters + 1):
        s, w, Zn = cur_s, cur_w, Z
        if can_swap and rng.random() < cfg.swap_probability:
            j = int(rng.integers(cfg.m))
            new = int(rng.integers(catalog.size))
            while new in in_design:
                new = int(rng.integers(catalog.size))
            s = cur_s.copy()
            s[j] = new
            Zn = Z.copy()
            Zn[j] = catalog.encode([new])[0]
        else:
            w = rng.dirichlet(cfg.weight_concentration * cfg.m * cur_w + 1e-3)
        obj = _logdet(information_matrix(Zn, w, beta, c))
        if obj >= cur_obj:
            accept = True  # ties are neutral moves
        else:
            d = _delta(cur_obj, obj, cfg.relative)
            if not math.isfinite(d):
                accept = False
                prop_singular += 1
            else:
                if T > 0:
                    accept = math.exp(-d / T) >= rng.random()
                else:  # temperature underflowed
                    accept = d <= 0
                prop_worse += 1
                acc_worse += accept
        if accept:
            if s is not cur_s:
                in_design.discard(int(cur_s[j]))
                in_design.add(int(s[j]))
            cur_s, cur_w, Z, cur_obj = s, w, Zn, obj
            if obj > best[2]:
                best = (s.copy(), w.copy(), obj)
        trace[it] = cur_obj
        T *= cfg.alpha
    design = Design(best[0], best[1], best[2])
    return AnnealResult(design, init_obj, trace, acc_worse, prop_worse, prop_singular)


def anneal_restarts(catalog: FactorCatalog, cfg: AnnealConfig, restarts: int = 4) -> AnnealResult:
    """Independent chains with seeds ``cfg.seed + r``; the best objective wins (first on ties)."""
    from dataclasses import replace
    results = [anneal(catalog, replace(cfg, seed=cfg.seed + r)) for r in range(restarts)]
    best = 0
    for i, r in enumerate(results):
        if r.design.objective > results[best].design.objective:
            best = i
    return results[best]


def select_scenarios(design: Design, budget: int) -> list[int]:
    """Top ``budget`` scenarios by weight; ties go to the lower catalog index."""
    if not 0 <= budget <= len(design.scenarios):
        raise ValueError(f"budget must be in [0, {len(design.scenarios)}]")
    order = np.lexsort((design.scenarios, -design.weights))
    return [int(design.scenarios[i]) for i in order[:budget]]


def write_design_csv(design: Design, catalog: FactorCatalog, path) -> None:
    names = [f.name for f in catalog.factors]
    order = np.lexsort((design.scenarios, -design.weights))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario"] + names + ["weight"])
        for i in order:
            lv = catalog.levels_of(int(design.scenarios[i]))
            w.writerow([int(design.scenarios[i])] + [lv[n] for n in names]
                       + [repr(float(design.weights[i]))])


def read_design_csv(path, catalog: FactorCatalog) -> Design:
    scen, wts = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            scen.append(catalog.index_of(row))
            wts.append(float(row["weight"]))
    w = np.asarray(wts)
    return Design(np.asarray(scen), w / w.sum())
