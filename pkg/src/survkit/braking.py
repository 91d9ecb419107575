"""Staged AV braking profiles and a synthetic crossing-cohort generator.

A level-L vehicle splits the distance ``d`` to the barrier into L equal
stages and plans to pass the k-th boundary at speed ``v0 * (L - k) / L``.
Each stage uses the constant deceleration that meets its target, capped at
``a_max``. A capped stage arrives at the next boundary faster than planned
and the next stage plans from the state actually reached; a capped final
stage stops beyond the barrier.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Covariate, CovariateSchema, Dataset

__all__ = [
    "Stage", "BrakingProfile", "braking_profile", "velocity_at", "profile_samples",
    "write_profile_csv", "kmh", "ScenarioSpec", "COHORT_SCHEMA", "SCENARIO_LEVELS",
    "DEFAULT_MARGINALS", "all_scenarios", "generate_cohort", "hazard_log_rate",
    "write_scenarios_csv", "read_scenarios_csv",
]


def kmh(speed: float) -> float:
    """km/h to m/s."""
    return speed / 3.6


@dataclass(frozen=True)
class Stage:
    decel: float
    start_distance: float
    end_distance: float
    start_speed: float
    end_speed: float
    clamped: bool


@dataclass(frozen=True)
class BrakingProfile:
    level: int
    v0: float
    d: float
    a_max: float
    stages: tuple[Stage, ...]

    @property
    def stop_distance(self) -> float:
        return self.stages[-1].end_distance

    @property
    def overshoot(self) -> float:
        """Distance travelled past the barrier (0 when the vehicle stops in time)."""
        return max(self.stop_distance - self.d, 0.0)

    @property
    def clamped(self) -> bool:
        return any(s.clamped for s in self.stages)


def braking_profile(level: int, v0: float, d: float, a_max: float = 3.0) -> BrakingProfile:
    """Stages of a level-1, 2 or 3 braking manoeuvre (speeds m/s, distances m)."""
    if level not in (1, 2, 3):
        raise ValueError("braking level must be 1, 2 or 3")
    if not (v0 > 0 and d > 0 and a_max > 0):
        raise ValueError("v0, d and a_max must be positive")
    stages = []
    x, v = 0.0, float(v0)
    run = None  # (x, v) where the current stretch of clamped stages began
    for k in range(1, level + 1):
        x_end = d * k / level
        target = v0 * (level - k) / level
        length = x_end - x
        need = (v * v - target * target) / (2.0 * length)
        if need <= a_max:
            stages.append(Stage(need, x, x_end, v, target, False))
            x, v, run = x_end, target, None
            continue
        run = run or (x, v)
        if k < level:
            v_end = math.sqrt(run[1] ** 2 - 2.0 * a_max * (x_end - run[0]))
            stages.append(Stage(a_max, x, x_end, v, v_end, True))
            x, v = x_end, v_end
        else:
            # measured from the start of the clamped stretch so that equal
            # physics gives bit-identical stop points across levels
            stop = run[0] + run[1] ** 2 / (2.0 * a_max)
            stages.append(Stage(a_max, x, stop, v, 0.0, True))
    return BrakingProfile(level, float(v0), float(d), float(a_max), tuple(stages))


def velocity_at(profile: BrakingProfile, x: float) -> float:
    """Speed at distance ``x`` from the point where braking starts.

    Points within 1e-9 of the stop point (rounding slack) give speed 0.
    """
    stop = profile.stop_distance
    if x < 0 or x > stop + 1e-9 * max(1.0, stop):
        raise ValueError(f"x = {x} outside [0, {stop}]")
    last = profile.stages[-1]
    for s in profile.stages[:-1]:
        if x <= s.end_distance:
            return math.sqrt(max(s.start_speed ** 2 - 2.0 * s.decel * (x - s.start_distance), 0.0))
    # the last stage ends at rest, so measure back from the stop point
    return math.sqrt(max(2.0 * last.decel * (stop - x), 0.0))


def profile_samples(profile: BrakingProfile, step: float = 0.5) -> list[tuple[float, float]]:
    xs = np.arange(0.0, profile.stop_distance, step).tolist() + [profile.stop_distance]
    return [(x, velocity_at(profile, x)) for x in xs]


def write_profile_csv(profiles, path, step: float = 0.5) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "x", "v"])
        for p in profiles:
            for x, v in profile_samples(p, step):
                w.writerow([p.level, repr(x), repr(v)])


SCENARIO_LEVELS = {
    "speed_limit": (30, 40, 50),
    "min_gap": (1.0, 1.5, 2.0),
    "lane_width": (2.5, 2.75, 3.0),
    "road_type": ("two_way", "one_way", "two_way_median"),
    "braking_level": (1, 2, 3),
    "automation": ("HDV", "Mixed", "AV"),
    "arrival_rate": (530, 750, 1100),
    "time_of_day": ("Day", "Night"),
    "weather": ("Clear", "Snowy"),
}


@dataclass(frozen=True)
class ScenarioSpec:
    speed_limit: float
    min_gap: float
    lane_width: float
    road_type: str
    braking_level: int
    automation: str
    arrival_rate: float
    time_of_day: str
    weather: str

    def __post_init__(self):
        for name, levels in SCENARIO_LEVELS.items():
            value = getattr(self, name)
            if not any(str(value) == str(lvl) or _num_eq(value, lvl) for lvl in levels):
                raise ValueError(f"{name}: illegal level {value!r}")

    @property
    def density(self) -> float:
        """Vehicles per km implied by arrival rate and speed."""
        return self.arrival_rate / self.speed_limit

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in SCENARIO_LEVELS}


def _num_eq(a, b) -> bool:
    try:
        return float(a) == float(b)
    except (TypeError, ValueError):
        return False


def all_scenarios() -> list[ScenarioSpec]:
    """Full factorial over the controlled-variable levels."""
    import itertools
    return [ScenarioSpec(*combo) for combo in itertools.product(*SCENARIO_LEVELS.values())]


def write_scenarios_csv(scenarios, path) -> None:
    names = list(SCENARIO_LEVELS)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for s in scenarios:
            w.writerow([getattr(s, n) for n in names])


def read_scenarios_csv(path) -> list[ScenarioSpec]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(ScenarioSpec(
                speed_limit=float(row["speed_limit"]), min_gap=float(row["min_gap"]),
                lane_width=float(row["lane_width"]), road_type=row["road_type"],
                braking_level=int(float(row["braking_level"])), automation=row["automation"],
                arrival_rate=float(row["arrival_rate"]), time_of_day=row["time_of_day"],
                weather=row["weather"]))
    return out


COHORT_SCHEMA = CovariateSchema((
    Covariate("speed_limit", "continuous", unit="km/h"),
    Covariate("min_gap", "continuous", unit="s"),
    Covariate("lane_width", "continuous", unit="m"),
    Covariate("road_type", "categorical", SCENARIO_LEVELS["road_type"]),
    Covariate("braking_level", "categorical", ("1", "2", "3")),
    Covariate("automation", "categorical", SCENARIO_LEVELS["automation"]),
    Covariate("arrival_rate", "continuous", unit="veh/h"),
    Covariate("density", "continuous", unit="veh/km"),
    Covariate("night", "binary"),
    Covariate("snowy", "binary"),
    Covariate("age", "categorical", ("40-49", "18-29", "30-39", "50+")),
    Covariate("female", "binary"),
    Covariate("walk_to_work", "binary"),
    Covariate("walk_to_shop", "binary"),
    Covariate("license", "binary"),
    Covariate("cars", "categorical", ("1", "0", "2+")),
    Covariate("main_mode", "categorical", ("transit", "active", "car")),
    Covariate("vr_experience", "binary"),
))

# participant attribute marginals: categorical -> level probabilities, binary -> P(1)
DEFAULT_MARGINALS = {
    "age": {"40-49": 0.2, "18-29": 0.45, "30-39": 0.2, "50+": 0.15},
    "female": 0.45,
    "walk_to_work": 0.35,
    "walk_to_shop": 0.5,
    "license": 0.75,
    "cars": {"1": 0.45, "0": 0.3, "2+": 0.25},
    "main_mode": {"transit": 0.4, "active": 0.3, "car": 0.3},
    "vr_experience": 0.4,
}


def _term_columns(term):
    if "columns" in term:
        return list(term["columns"])
    return [term["column"]]


def hazard_log_rate(X: np.ndarray, columns, hazard: dict, center=None, scale=None) -> np.ndarray:
    """Evaluate a declared log-rate on encoded covariates.

    ``hazard = {"intercept": float, "terms": [...]}``; each term has a
    ``kind`` in ``linear | square | sin | product`` plus ``coef`` and
    ``column`` (``columns`` for products; ``sin`` also takes ``scale``).
    ``center``/``scale`` standardize columns before evaluation.
    """
    columns = list(columns)
    unknown = sorted({c for t in hazard.get("terms", []) for c in _term_columns(t)} - set(columns))
    if unknown:
        raise ValueError(f"hazard references unknown covariate(s) {unknown}")
    Z = np.asarray(X, dtype=float)
    if center is not None:
        Z = (Z - center) / scale
    out = np.full(len(Z), float(hazard.get("intercept", 0.0)))
    for t in hazard.get("terms", []):
        kind = t.get("kind", "linear")
        coef = float(t.get("coef", 1.0))
        cols = [Z[:, columns.index(c)] for c in _term_columns(t)]
        if kind == "linear":
            out += coef * cols[0]
        elif kind == "square":
            out += coef * cols[0] ** 2
        elif kind == "sin":
            out += coef * np.sin(float(t.get("scale", 1.0)) * cols[0])
        elif kind == "product":
            out += coef * np.prod(cols, axis=0)
        else:
            raise ValueError(f"unknown hazard term kind {kind!r}")
    return out


def _draw_attr(rng, spec):
    if isinstance(spec, dict):
        levels = list(spec)
        p = np.asarray([spec[k] for k in levels], dtype=float)
        return levels[int(rng.choice(len(levels), p=p / p.sum()))]
    return int(rng.random() < float(spec))


def generate_cohort(scenarios, hazard: dict, n_participants: int, seed: int = 0,
                    scenarios_per_participant: int = 15, dangerous_cross_prob: float = 0.05,
                    censor_time: float | None = None, marginals: dict | None = None,
                    standardize_hazard: bool = True) -> Dataset:
    """Simulate wait times for participants facing drawn scenarios.

    Every participant gets attributes from ``marginals`` and a draw without
    replacement of ``scenarios_per_participant`` scenarios, each with its own
    seed derived from ``seed``. Wait times are exponential with log-rate
    :func:`hazard_log_rate`; with ``standardize_hazard`` continuous columns
    are standardized by their mean and sd over ``scenarios`` first. Rows are
    discarded as dangerous crossings with probability
    ``dangerous_cross_prob``, and censored at ``censor_time`` if given.
    """
    if n_participants < 1:
        raise ValueError("n_participants must be at least 1")
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("scenario list is empty")
    schema = COHORT_SCHEMA
    columns = schema.columns
    hazard_log_rate(np.zeros((0, schema.width)), columns, hazard)  # validate names early
    marg = dict(DEFAULT_MARGINALS)
    if marginals:
        marg.update(marginals)

    def scenario_record(s: ScenarioSpec) -> dict:
        return {
            "speed_limit": float(s.speed_limit), "min_gap": float(s.min_gap),
            "lane_width": float(s.lane_width), "road_type": s.road_type,
            "braking_level": str(int(s.braking_level)), "automation": s.automation,
            "arrival_rate": float(s.arrival_rate), "density": s.density,
            "night": int(s.time_of_day == "Night"), "snowy": int(s.weather == "Snowy"),
        }

    scen_rows = [scenario_record(s) for s in scenarios]
    center = scale = None
    if standardize_hazard:
        ref = np.array([schema.encode({**r, **{k: _first(v) for k, v in marg.items()}})
                        for r in scen_rows])
        center = np.zeros(schema.width)
        scale = np.ones(schema.width)
        for j, kind in enumerate(schema.column_kinds):
            if kind == "continuous" and ref[:, j].std() > 0:
                center[j] = ref[:, j].mean()
                scale[j] = ref[:, j].std()

    per = min(scenarios_per_participant, len(scenarios))
    X, dur, ev = [], [], []
    children = np.random.SeedSequence(seed).spawn(n_participants)
    for child in children:
        rng = np.random.default_rng(child)
        person = {name: _draw_attr(rng, spec) for name, spec in marg.items()}
        picks = rng.choice(len(scenarios), size=per, replace=False)
        rows = np.array([schema.encode({**scen_rows[i], **person}) for i in picks])
        rate = np.exp(hazard_log_rate(rows, columns, hazard, center, scale))
        t = rng.exponential(1.0 / rate)
        dangerous = rng.random(per) < dangerous_cross_prob
        for r in range(per):
            if dangerous[r]:
                continue
            if censor_time is not None and t[r] > censor_time:
                dur.append(float(censor_time))
                ev.append(0.0)
            else:
                dur.append(float(t[r]))
                ev.append(1.0)
            X.append(rows[r])
    if not dur:
        raise ValueError("cohort is empty after filtering")
    return Dataset.from_arrays(np.array(X), dur, ev, schema=schema, ids=np.arange(len(dur)))


def _first(spec):
    if isinstance(spec, dict):
        return next(iter(spec))
    return 0
