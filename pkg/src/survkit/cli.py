"""``survkit`` command line: simulate, fit, rank, train, explain, design, evaluate.

Every command reads defaults, then ``--config`` (flat JSON object), then
``--set key=value`` overrides (values parsed as JSON when possible), then
``--seed``. The effective configuration is written next to the outputs.
Exit status is 0 on success, 1 for invalid input and 2 for numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import braking, deep, doe, explain, relief, survival
from .dataset import (CovariateSchema, Dataset, apply_standardization, load_csv, standardize, vif,
                      vif_filter, write_csv)
from .errors import NumericalError

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2

DEFAULT_HAZARD = {
    "intercept": -1.5,
    "terms": [
        {"kind": "linear", "column": "density", "coef": -0.83},
        {"kind": "sin", "column": "min_gap", "coef": 0.6, "scale": 2.0},
        {"kind": "square", "column": "lane_width", "coef": 0.3},
        {"kind": "linear", "column": "automation=AV", "coef": 0.4},
        {"kind": "linear", "column": "age=18-29", "coef": 0.3},
        {"kind": "product", "columns": ["night", "snowy"], "coef": -0.5},
    ],
}

DEFAULTS = {
    "simulate": {
        "n_participants": 14, "scenarios_per_participant": 15, "scenario_pool": 90,
        "design": None, "hazard": DEFAULT_HAZARD, "dangerous_cross_prob": 0.05,
        "censor_time": None, "seed": 0,
    },
    "fit": {"data": "cohort.csv", "schema": "schema.json", "standardize": True,
            "vif_threshold": None, "seed": 0},
    "rank": {"data": "cohort.csv", "schema": "schema.json", "k": 10, "m": None,
             "sigma": 20.0, "standardize": True, "seed": 0},
    "train": {
        "data": "cohort.csv", "schema": "schema.json", "test_fraction": 0.2, "folds": 5,
        "top_n": 10, "relief_k": 10, "relief_m": None, "hidden_layers": 2, "hidden_units": 32,
        "dropout_rate": 0.1, "use_batch_norm": True, "activation": "relu",
        "learning_rate": 0.05, "lr_decay": 0.001, "momentum": 0.9, "epochs": 200,
        "interval": 0.1, "seed": 0,
    },
    "explain": {
        "data": "cohort.csv", "schema": "schema.json", "model": "model.json",
        "standardization": "standardization.json", "method": "auto", "samples": 200,
        "baseline": None, "conditions": None, "min_count": 10, "max_instances": None, "seed": 0,
    },
    "design": {
        "catalog": "crossing", "m": 90, "iters": 20000, "T0": 1e-4, "alpha": 0.9997,
        "censor_time": 30.0, "beta_prior": None, "weight_concentration": 500.0,
        "restarts": 1, "seed": 0,
    },
    "evaluate": {"data": "cohort.csv", "schema": "schema.json", "model": "cox_model.json",
                 "standardization": "standardization.json", "seed": 0},
}


class _Invalid(ValueError):
    pass


def _seeds(seed: int, n: int) -> list[int]:
    """``n`` independent integer seeds derived from one root seed."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n, dtype=np.uint32)]


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_config(command: str, config_path=None, overrides=(), seed=None) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS[command]))
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise _Invalid("config file must hold a JSON object")
        # either a flat object or one block per command
        if isinstance(loaded.get(command), dict):
            loaded = loaded[command]
        elif set(loaded) & (set(COMMANDS) - {command}):
            loaded = {}
        cfg.update(loaded)
    for item in overrides:
        if "=" not in item:
            raise _Invalid(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg[key.strip()] = _parse_value(value)
    if seed is not None:
        cfg["seed"] = seed
    unknown = sorted(set(cfg) - set(DEFAULTS[command]))
    if unknown:
        raise _Invalid(f"unknown {command} setting(s) {unknown}")
    return cfg


def _write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def _resolve(out: Path, name):
    """Relative input paths are looked up in the output directory first."""
    p = Path(name)
    if not p.is_absolute() and not p.exists() and (out / p).exists():
        return out / p
    return p


def _load(cfg, out) -> Dataset:
    schema = CovariateSchema.from_json(_resolve(out, cfg["schema"]))
    return load_csv(_resolve(out, cfg["data"]), schema)


def _drop_constant(ds: Dataset, rows=None):
    """Remove columns with no variation over ``rows``; returns (dataset, dropped names)."""
    X = ds.X if rows is None else ds.X[rows]
    keep = [c for j, c in enumerate(ds.columns) if np.ptp(X[:, j]) > 0]
    dropped = [c for c in ds.columns if c not in keep]
    return (ds.select(keep) if dropped else ds), dropped


def _standardization_doc(ds: Dataset) -> dict:
    return {k: [float(m), float(s)] for k, (m, s) in sorted((ds.standardization or {}).items())}


# -- commands ---------------------------------------------------------------

def cmd_simulate(cfg, out: Path) -> dict:
    s_pool, s_cohort = _seeds(cfg["seed"], 2)
    if cfg["design"]:
        catalog = doe.crossing_catalog()
        design = doe.read_design_csv(_resolve(out, cfg["design"]), catalog)
        pool = [braking.ScenarioSpec(**catalog.levels_of(int(i))) for i in design.scenarios]
    else:
        everything = braking.all_scenarios()
        size = int(cfg["scenario_pool"])
        if not 1 <= size <= len(everything):
            raise _Invalid(f"scenario_pool must be in [1, {len(everything)}]")
        pick = np.sort(np.random.default_rng(s_pool).choice(len(everything), size, replace=False))
        pool = [everything[i] for i in pick]
    ds = braking.generate_cohort(
        pool, cfg["hazard"], int(cfg["n_participants"]), seed=s_cohort,
        scenarios_per_participant=int(cfg["scenarios_per_participant"]),
        dangerous_cross_prob=float(cfg["dangerous_cross_prob"]),
        censor_time=cfg["censor_time"])
    write_csv(ds, out / "cohort.csv")
    ds.schema.to_json(out / "schema.json")
    braking.write_scenarios_csv(pool, out / "scenarios.csv")
    return {"rows": ds.n, "events": ds.n_events, "scenarios": len(pool)}


def cmd_fit(cfg, out: Path) -> dict:
    ds, dropped = _drop_constant(_load(cfg, out))
    if cfg["standardize"]:
        ds = standardize(ds)
    removed = []
    if cfg["vif_threshold"] is not None:
        ds, removed = vif_filter(ds, float(cfg["vif_threshold"]))
    model = survival.fit_cox(ds)
    summary = survival.cox_summary(model, ds)
    rows = summary.rows()
    _write_rows(out / "cox_summary.csv", ["covariate", "coef", "hazard_ratio", "se", "z", "p"],
                [[r[k] for k in ("covariate", "coef", "hazard_ratio", "se", "z", "p")] for r in rows])
    survival.save_cox_json(model, out / "cox_model.json", summary)
    _write_json(out / "standardization.json", _standardization_doc(ds))
    cidx = survival.concordance_index(ds.duration, ds.event, model(ds.X))
    km = survival.kaplan_meier(ds)
    _write_rows(out / "kaplan_meier.csv", ["time", "survival"],
                zip(map(float, km.times), map(float, km.survival)))
    report = {"train_cindex": cidx, "log_likelihood": model.log_likelihood,
              "iterations": model.iterations, "n": ds.n, "events": ds.n_events,
              "constant_dropped": dropped, "vif_removed": [[n, v] for n, v in removed]}
    _write_json(out / "fit_report.json", report)
    return {"train_cindex": round(cidx, 6), "covariates": ds.width}


def cmd_rank(cfg, out: Path) -> dict:
    ds, _ = _drop_constant(_load(cfg, out))
    if cfg["standardize"]:
        ds = standardize(ds)
    w = relief.rrelieff(ds, k=int(cfg["k"]), m=cfg["m"], sigma=float(cfg["sigma"]), seed=cfg["seed"])
    relief.write_weights_csv(w, out / "relief_weights.csv")
    values = vif(ds)
    _write_rows(out / "vif.csv", ["covariate", "vif"], [[c, float(values[c])] for c in ds.columns])
    return {"top": [w.names[i] for i in relief.top_n(w, 5)]}


def _split(n: int, fraction: float, seed: int):
    if not 0 < fraction < 1:
        raise _Invalid("test_fraction must be in (0, 1)")
    perm = np.random.default_rng(seed).permutation(n)
    n_test = max(1, int(round(n * fraction)))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def _cv_cindex(ds: Dataset, folds: int, seed: int, fit_predict) -> float:
    perm = np.random.default_rng(seed).permutation(ds.n)
    scores = []
    for fold in np.array_split(perm, folds):
        mask = np.ones(ds.n, bool)
        mask[fold] = False
        tr, va = ds.subset(np.flatnonzero(mask)), ds.subset(np.sort(fold))
        try:
            scores.append(survival.concordance_index(va.duration, va.event, fit_predict(tr)(va.X)))
        except (ValueError, NumericalError):
            scores.append(math.nan)
    return float(np.nanmean(scores)) if np.isfinite(scores).any() else math.nan


def cmd_train(cfg, out: Path) -> dict:
    s_split, s_cv, s_relief, s_net, s_train = _seeds(cfg["seed"], 5)
    raw = _load(cfg, out)
    tr_idx, te_idx = _split(raw.n, float(cfg["test_fraction"]), s_split)
    raw, dropped = _drop_constant(raw, tr_idx)
    ds = standardize(raw, fit_rows=tr_idx)
    train_ds, test_ds = ds.subset(tr_idx), ds.subset(te_idx)
    train_ds.require_events()

    ranking = relief.rrelieff(train_ds, k=int(cfg["relief_k"]), m=cfg["relief_m"], seed=s_relief)
    n_top = min(int(cfg["top_n"]), train_ds.width)
    top_cols = [train_ds.columns[i] for i in relief.top_n(ranking, n_top)]
    tcfg = deep.TrainConfig(learning_rate=float(cfg["learning_rate"]), lr_decay=float(cfg["lr_decay"]),
                            epochs=int(cfg["epochs"]), momentum=float(cfg["momentum"]), seed=s_train)

    def deep_fitter(columns):
        def fit(d):
            d = d.select(columns)
            spec = deep.NetworkSpec(len(columns), int(cfg["hidden_layers"]), int(cfg["hidden_units"]),
                                    float(cfg["dropout_rate"]), bool(cfg["use_batch_norm"]),
                                    cfg["activation"], s_net)
            model = deep.train(d, spec, tcfg)
            idx = [ds.columns.index(c) for c in columns]
            return lambda X: model.predict(np.asarray(X)[:, idx]), model
        return fit

    fitters = {
        "binary_choice": lambda d: (survival.fit_logistic_baseline(d, float(cfg["interval"])).predict_risk, None),
        "linear_cph": lambda d: (survival.fit_cox(d), None),
        "dcph1": deep_fitter(list(ds.columns)),
        "dcph2": deep_fitter(top_cols),
    }
    rows, models = [], {}
    for name, fitter in fitters.items():
        val = _cv_cindex(train_ds, int(cfg["folds"]), s_cv, lambda d, f=fitter: f(d)[0])
        predict, model = fitter(train_ds)
        test = survival.concordance_index(test_ds.duration, test_ds.event, predict(test_ds.X))
        rows.append([name, val, float(test)])
        models[name] = model
    _write_rows(out / "comparison.csv", ["model", "validation_cindex", "test_cindex"], rows)
    deep.save_model(models["dcph2"], out / "model.json")
    deep.write_train_log(models["dcph2"], out / "train_log.csv")
    _write_json(out / "standardization.json", _standardization_doc(ds))
    _write_json(out / "split.json", {"train": tr_idx.tolist(), "test": te_idx.tolist(),
                                     "dcph2_features": top_cols, "constant_dropped": dropped})
    relief.write_weights_csv(ranking, out / "relief_weights.csv")
    return {r[0]: {"validation": round(r[1], 4), "test": round(r[2], 4)} for r in rows}


def _prepared(cfg, out, columns):
    ds = _load(cfg, out)
    std_path = _resolve(out, cfg["standardization"])
    if Path(std_path).exists():
        with open(std_path, encoding="utf-8") as fh:
            record = {k: tuple(v) for k, v in json.load(fh).items()}
        ds = apply_standardization(ds, record)
    missing = [c for c in columns if c not in ds.columns]
    if missing:
        raise _Invalid(f"model expects columns missing from the data: {missing}")
    return ds.select(list(columns))


def cmd_explain(cfg, out: Path) -> dict:
    model = deep.load_model(_resolve(out, cfg["model"]))
    ds = _prepared(cfg, out, model.columns)
    if cfg["max_instances"] is not None:
        ds = ds.subset(np.arange(min(int(cfg["max_instances"]), ds.n)))
    report = explain.shap_report(model, ds, baseline=cfg["baseline"], method=cfg["method"],
                                 samples=int(cfg["samples"]), seed=cfg["seed"])
    explain.write_report_csv(report, out / "shap_summary.csv")
    explain.write_report_json(report, out / "shap_summary.json")
    explain.write_beeswarm_csv(report, out / "shap_beeswarm.csv")
    conditions = cfg["conditions"]
    if conditions is None:
        conditions = [[c, 1] for c, k in zip(ds.columns, ds.kinds) if k == "binary"]
    rows, skipped = [], []
    for feat, level in conditions:
        if feat not in ds.columns:
            raise _Invalid(f"condition names unknown column {feat!r}")
        try:
            rows.extend(explain.conditional_interactions(report, (feat, level),
                                                         min_count=int(cfg["min_count"])))
        except ValueError as exc:
            skipped.append({"condition": f"{feat}={level}", "reason": str(exc)})
    explain.write_interactions_csv(rows, out / "interactions.csv")
    _write_json(out / "interactions_skipped.json", skipped)
    return {"top": [r["feature"] for r in report.table[:5]], "interactions": len(rows)}


def cmd_design(cfg, out: Path) -> dict:
    if cfg["catalog"] == "crossing":
        catalog = doe.crossing_catalog()
    else:
        catalog = doe.FactorCatalog.from_json(_resolve(out, cfg["catalog"]))
    beta = None if cfg["beta_prior"] is None else tuple(cfg["beta_prior"])
    acfg = doe.AnnealConfig(beta_prior=beta, censor_time=float(cfg["censor_time"]), m=int(cfg["m"]),
                            iters=int(cfg["iters"]), T0=float(cfg["T0"]), alpha=float(cfg["alpha"]),
                            seed=cfg["seed"], weight_concentration=float(cfg["weight_concentration"]))
    result = doe.anneal_restarts(catalog, acfg, int(cfg["restarts"]))
    doe.write_design_csv(result.design, catalog, out / "design.csv")
    _write_rows(out / "design_trace.csv", ["iteration", "objective"],
                [[i, float(v)] for i, v in enumerate(result.trace)])
    _write_json(out / "design.json", {
        "objective": result.design.objective, "initial_objective": result.initial_objective,
        "accepted_worse": result.accepted_worse, "proposed_worse": result.proposed_worse,
        "m": int(cfg["m"]), "catalog_size": catalog.size})
    return {"objective": round(result.design.objective, 6)}


def cmd_evaluate(cfg, out: Path) -> dict:
    path = _resolve(out, cfg["model"])
    with open(path, encoding="utf-8") as fh:
        fmt = json.load(fh).get("format", "")
    if fmt.startswith("survkit.cox"):
        model = survival.load_cox_json(path)
        columns = model.covariate_names
    elif fmt.startswith("survkit.deepcox"):
        model = deep.load_model(path)
        columns = model.columns
    else:
        raise _Invalid(f"{path}: unrecognized model format {fmt!r}")
    ds = _prepared(cfg, out, columns)
    cidx = survival.concordance_index(ds.duration, ds.event, model(ds.X))
    _write_json(out / "evaluation.json", {"cindex": cidx, "n": ds.n, "events": ds.n_events,
                                          "model_format": fmt})
    return {"cindex": round(cidx, 6)}


COMMANDS = {
    "simulate": cmd_simulate, "fit": cmd_fit, "rank": cmd_rank, "train": cmd_train,
    "explain": cmd_explain, "design": cmd_design, "evaluate": cmd_evaluate,
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of settings")
    common.add_argument("--seed", type=int, help="root random seed")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one setting; repeatable")
    common.add_argument("--json-errors", action="store_true",
                        help="also print errors as JSON on stderr")
    p = argparse.ArgumentParser(prog="survkit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=COMMANDS[name].__name__[4:])
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = build_config(args.command, args.config, args.set, args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / f"{args.command}_config.json", cfg)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with np.errstate(all="ignore"):
                summary = COMMANDS[args.command](cfg, out)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return _fail(args, exc, EXIT_NUMERICAL)
    except (ValueError, OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        return _fail(args, exc, EXIT_INVALID)
    print(json.dumps({"command": args.command, "config": cfg, "result": summary}, sort_keys=True))
    return EXIT_OK


def _fail(args, exc, code) -> int:
    msg = str(exc) or type(exc).__name__
    print(f"survkit {args.command}: error: {msg}", file=sys.stderr)
    if args.json_errors:
        print(json.dumps({"error": type(exc).__name__, "message": msg, "exit_code": code}),
              file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
