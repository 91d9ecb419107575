"""Deep Cox model: a dense network as the log-partial hazard, trained on the
average negative log partial likelihood with hand-written backpropagation.

Hidden layer order is affine -> batch norm -> activation -> dropout. When
batch norm is on the affine map carries no bias (the batch-norm shift takes
that role). Dropout uses inverted scaling and applies to hidden layers only.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import _kernels
from .dataset import Dataset
from .errors import NumericalError
from .survival import concordance_index

__all__ = [
    "NetworkSpec", "TrainConfig", "DeepCoxModel", "HyperSearchSpace",
    "init_model", "forward", "cox_loss", "cox_loss_grad", "backward", "train",
    "cross_validate", "random_search", "save_model", "load_model", "write_train_log",
]

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass(frozen=True)
class NetworkSpec:
    input_width: int
    hidden_layers: int = 3
    hidden_units: int = 90
    dropout_rate: float = 0.1
    use_batch_norm: bool = True
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        if self.input_width < 1:
            raise ValueError("input_width must be positive")
        if self.hidden_layers < 0 or (self.hidden_layers > 0 and self.hidden_units < 1):
            raise ValueError("invalid hidden layer shape")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    lr_decay: float = 0.001
    epochs: int = 100
    folds: int = 10
    seed: int = 0
    momentum: float = 0.0
    batch_size: int | None = None

    def lr_at(self, epoch: int) -> float:
        return self.learning_rate / (1.0 + self.lr_decay * epoch)


@dataclass
class DeepCoxModel:
    """Network weights plus training history.

    ``params`` maps names (``W0``, ``gamma0``, ``Wout`` ...) to arrays;
    ``running`` holds batch-norm running means and variances.
    """

    spec: NetworkSpec
    params: dict[str, np.ndarray]
    running: dict[str, np.ndarray]
    columns: tuple[str, ...] | None = None
    train_log: list[dict] = field(default_factory=list)
    version: int = 0

    def predict(self, X) -> np.ndarray:
        """Inference-mode log-partial hazard."""
        out, _ = forward(self, X, mode="infer")
        return out

    __call__ = predict

    def copy(self) -> "DeepCoxModel":
        return DeepCoxModel(self.spec, {k: v.copy() for k, v in self.params.items()},
                            {k: v.copy() for k, v in self.running.items()},
                            self.columns, list(self.train_log), self.version)


def init_model(spec: NetworkSpec, columns=None) -> DeepCoxModel:
    rng = np.random.default_rng(spec.seed)
    gain = 6.0 if spec.activation == "relu" else 3.0
    params, running = {}, {}
    width = spec.input_width
    for l in range(spec.hidden_layers):
        lim = math.sqrt(gain / width)
        params[f"W{l}"] = rng.uniform(-lim, lim, size=(width, spec.hidden_units))
        if spec.use_batch_norm:
            params[f"gamma{l}"] = np.ones(spec.hidden_units)
            params[f"beta{l}"] = np.zeros(spec.hidden_units)
            running[f"mean{l}"] = np.zeros(spec.hidden_units)
            running[f"var{l}"] = np.ones(spec.hidden_units)
        else:
            params[f"b{l}"] = np.zeros(spec.hidden_units)
        width = spec.hidden_units
    lim = math.sqrt(3.0 / width)
    params["Wout"] = rng.uniform(-lim, lim, size=(width, 1))
    params["bout"] = np.zeros(1)
    return DeepCoxModel(spec, params, running, tuple(columns) if columns is not None else None)


def forward(model: DeepCoxModel, Z, mode: str = "infer", rng=None):
    """Network output ``g(Z)``, one scalar per row.

    Returns ``(g, cache)``. In ``"train"`` mode batch statistics are used and
    dropout masks are drawn from ``rng``; the cache feeds :func:`backward`.
    Neither mode mutates the model.
    """
    if mode not in ("train", "infer"):
        raise ValueError("mode must be 'train' or 'infer'")
    spec = model.spec
    h = np.asarray(Z, dtype=float)
    if h.ndim != 2 or h.shape[1] != spec.input_width:
        raise ValueError(f"input has shape {h.shape}, network expects width {spec.input_width}")
    train = mode == "train"
    if train and spec.dropout_rate > 0 and rng is None:
        raise ValueError("train-mode forward with dropout needs an rng")
    p = model.params
    layers = []
    for l in range(spec.hidden_layers):
        inp = h
        a = inp @ p[f"W{l}"]
        rec = {"inp": inp}
        if spec.use_batch_norm:
            if train:
                mu = a.mean(axis=0)
                var = a.var(axis=0)
            else:
                mu = model.running[f"mean{l}"]
                var = model.running[f"var{l}"]
            inv = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (a - mu) * inv
            a = p[f"gamma{l}"] * xhat + p[f"beta{l}"]
            rec.update(xhat=xhat, inv=inv, mu=mu, var=var)
        else:
            a = a + p[f"b{l}"]
        if spec.activation == "relu":
            h = np.maximum(a, 0.0)
        else:
            h = np.tanh(a)
        rec["act"] = h
        if train and spec.dropout_rate > 0:
            keep = 1.0 - spec.dropout_rate
            mask = (rng.random(h.shape) < keep) / keep
            h = h * mask
            rec["mask"] = mask
        layers.append(rec)
    out = (h @ p["Wout"] + p["bout"])[:, 0]
    cache = {"mode": mode, "layers": layers, "last": h, "version": model.version}
    return out, cache


def cox_loss(g, durations, events) -> float:
    """Average negative Breslow log partial likelihood over events."""
    loss, _ = cox_loss_grad(g, durations, events)
    return loss


def cox_loss_grad(g, durations, events):
    """Loss and its gradient with respect to ``g``."""
    events = np.asarray(events, dtype=float)
    n_events = events.sum()
    if n_events < 1:
        raise ValueError("batch has no events; the partial likelihood is undefined")
    loglik, grad = _kernels.cox_loglik_grad(g, durations, events)
    return -loglik / n_events, -grad / n_events


def backward(model: DeepCoxModel, cache, durations, events):
    """Exact gradient of :func:`cox_loss` with respect to every parameter.

    ``cache`` must come from a train-mode :func:`forward` on the current
    weights. Returns ``(loss, grads)``.
    """
    if cache is None or cache.get("mode") != "train":
        raise ValueError("backward needs the cache of a train-mode forward pass")
    if cache["version"] != model.version:
        raise ValueError("stale cache: weights changed since the forward pass")
    spec = model.spec
    p = model.params
    h = cache["last"]
    g = (h @ p["Wout"] + p["bout"])[:, 0]
    loss, dg = cox_loss_grad(g, durations, events)
    grads = {}
    dout = dg[:, None]
    grads["Wout"] = h.T @ dout
    grads["bout"] = dout.sum(axis=0)
    dh = dout @ p["Wout"].T
    for l in reversed(range(spec.hidden_layers)):
        rec = cache["layers"][l]
        if "mask" in rec:
            dh = dh * rec["mask"]
        if spec.activation == "relu":
            da = dh * (rec["act"] > 0)
        else:
            da = dh * (1.0 - rec["act"] ** 2)
        if spec.use_batch_norm:
            xhat = rec["xhat"]
            grads[f"gamma{l}"] = np.sum(da * xhat, axis=0)
            grads[f"beta{l}"] = da.sum(axis=0)
            dx = da * p[f"gamma{l}"]
            m = dx.shape[0]
            da = (rec["inv"] / m) * (m * dx - dx.sum(axis=0) - xhat * np.sum(dx * xhat, axis=0))
        else:
            grads[f"b{l}"] = da.sum(axis=0)
        grads[f"W{l}"] = rec["inp"].T @ da
        dh = da @ p[f"W{l}"].T
    return loss, grads


def _update_running(model, cache):
    for l, rec in enumerate(cache["layers"]):
        if "mu" in rec:
            rm, rv = model.running[f"mean{l}"], model.running[f"var{l}"]
            rm *= 1.0 - BN_MOMENTUM
            rm += BN_MOMENTUM * rec["mu"]
            rv *= 1.0 - BN_MOMENTUM
            rv += BN_MOMENTUM * rec["var"]


def _batches(order_rng, n, batch_size, events):
    if batch_size is None or batch_size >= n:
        return [np.arange(n)]
    perm = order_rng.permutation(n)
    out = []
    for s in range(0, n, batch_size):
        idx = np.sort(perm[s:s + batch_size])
        if events[idx].sum() >= 1 and len(idx) > 1:
            out.append(idx)
    return out


def train(ds: Dataset, spec: NetworkSpec, cfg: TrainConfig = TrainConfig(),
          valid: Dataset | None = None) -> DeepCoxModel:
    """Gradient descent with ``lr / (1 + decay * epoch)`` and optional momentum.

    Risk sets span the whole training split each epoch unless
    ``cfg.batch_size`` is set. Each epoch logs the training loss and, when
    ``valid`` is given, its C-index.
    """
    ds.require_events()
    if ds.width != spec.input_width:
        raise ValueError(f"dataset width {ds.width} != network input width {spec.input_width}")
    model = init_model(spec, ds.columns)
    rng = np.random.default_rng([cfg.seed, spec.seed])
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    X, T, E = ds.X, ds.duration, ds.event
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        losses = []
        for idx in _batches(rng, ds.n, cfg.batch_size, E):
            _, cache = forward(model, X[idx], mode="train", rng=rng)
            loss, grads = backward(model, cache, T[idx], E[idx])
            if not np.isfinite(loss) or any(not np.all(np.isfinite(gr)) for gr in grads.values()):
                raise NumericalError(f"non-finite loss at epoch {epoch} (learning rate {lr:g})")
            _update_running(model, cache)
            for k, gr in grads.items():
                v = velocity[k]
                v *= cfg.momentum
                v -= lr * gr
                model.params[k] += v
            model.version += 1
            losses.append(loss)
        row = {"epoch": epoch, "lr": lr, "loss": float(np.mean(losses))}
        if valid is not None:
            try:
                row["val_cindex"] = concordance_index(valid.duration, valid.event, model.predict(valid.X))
            except ValueError:
                row["val_cindex"] = math.nan
        model.train_log.append(row)
    return model


def _folds(n, k, seed):
    if k < 2 or k > n:
        raise ValueError(f"folds must be in [2, {n}]")
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, k)


def cross_validate(ds: Dataset, spec: NetworkSpec, cfg: TrainConfig) -> list[float]:
    """Validation C-index for each of ``cfg.folds`` seed-derived folds."""
    scores = []
    for fold in _folds(ds.n, cfg.folds, cfg.seed):
        mask = np.ones(ds.n, bool)
        mask[fold] = False
        tr, va = ds.subset(np.flatnonzero(mask)), ds.subset(fold)
        model = train(tr, spec, cfg)
        try:
            scores.append(concordance_index(va.duration, va.event, model.predict(va.X)))
        except ValueError:
            scores.append(math.nan)
    return scores


@dataclass(frozen=True)
class HyperSearchSpace:
    """Ranges for random search.

    Each field is either a list of choices (sampled uniformly) or a
    ``(low, high)`` tuple sampled uniformly (integers for integer fields).
    ``n_features`` is only used when a feature ranking is supplied.
    """

    n_features: object = None
    hidden_layers: object = (1, 3)
    hidden_units: object = (8, 90)
    dropout_rate: object = (0.0, 0.5)
    use_batch_norm: object = (True, False)
    learning_rate: object = field(default_factory=lambda: [1e-4, 1e-3, 1e-2])
    lr_decay: object = field(default_factory=lambda: [0.0, 1e-3, 1e-2])
    trials: int = 10
    seed: int = 0


def _draw(rng, rng_spec, integer=False):
    if isinstance(rng_spec, list) or (
            isinstance(rng_spec, tuple) and any(isinstance(v, bool) for v in rng_spec)):
        choices = list(rng_spec)
        return choices[int(rng.integers(len(choices)))]
    if isinstance(rng_spec, tuple):
        lo, hi = rng_spec
        if integer:
            return int(rng.integers(int(lo), int(hi) + 1))
        return float(rng.uniform(lo, hi))
    return rng_spec


def random_search(ds: Dataset, space: HyperSearchSpace, base: TrainConfig = TrainConfig(),
                  ranking=None, activation: str = "relu"):
    """Random hyperparameter search scored by mean fold C-index.

    Returns ``(best, table)``: ``best`` is the winning table row (with
    ``spec``, ``config`` and ``features``), ``table`` holds every trial.
    Trials that fail numerically are recorded and skipped.
    """
    if space.trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(space.seed)
    table = []
    for t in range(space.trials):
        if ranking is not None and space.n_features is not None:
            n = int(_draw(rng, space.n_features, integer=True))
            features = [int(i) for i in list(ranking)[:n]]
        else:
            features = list(range(ds.width))
        spec = NetworkSpec(
            input_width=len(features),
            hidden_layers=int(_draw(rng, space.hidden_layers, integer=True)),
            hidden_units=int(_draw(rng, space.hidden_units, integer=True)),
            dropout_rate=float(_draw(rng, space.dropout_rate)),
            use_batch_norm=bool(_draw(rng, space.use_batch_norm)),
            activation=activation,
            seed=space.seed * 1000 + t,
        )
        cfg = replace(base, learning_rate=float(_draw(rng, space.learning_rate)),
                      lr_decay=float(_draw(rng, space.lr_decay)), seed=base.seed)
        row = {"trial": t, "features": features, "spec": spec, "config": cfg}
        sub = ds.select([ds.columns[i] for i in features])
        try:
            scores = cross_validate(sub, spec, cfg)
            row["fold_cindex"] = scores
            row["mean_cindex"] = float(np.nanmean(scores))
            row["status"] = "ok"
        except (NumericalError, FloatingPointError) as exc:
            row["fold_cindex"] = []
            row["mean_cindex"] = math.nan
            row["status"] = f"failed: {exc}"
        table.append(row)
    ok = [r for r in table if r["status"] == "ok" and np.isfinite(r["mean_cindex"])]
    if not ok:
        raise NumericalError("every random-search trial failed")
    best = max(ok, key=lambda r: (r["mean_cindex"], -r["trial"]))
    return best, table


def save_model(model: DeepCoxModel, path) -> None:
    doc = {
        "format": "survkit.deepcox/1",
        "spec": asdict(model.spec),
        "columns": list(model.columns) if model.columns is not None else None,
        "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                   for k, v in sorted(model.params.items())},
        "running": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                    for k, v in sorted(model.running.items())},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path) -> DeepCoxModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "survkit.deepcox/1":
        raise ValueError(f"{path}: not a survkit deep Cox model document")

    def arrays(block):
        return {k: np.asarray(v["data"], dtype=float).reshape(v["shape"]) for k, v in block.items()}

    cols = doc.get("columns")
    return DeepCoxModel(NetworkSpec(**doc["spec"]), arrays(doc["params"]),
                        arrays(doc["running"]), tuple(cols) if cols is not None else None)


def write_train_log(model: DeepCoxModel, path) -> None:
    keys = ["epoch", "lr", "loss", "val_cindex"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for row in model.train_log:
            w.writerow([repr(row.get(k, "")) if isinstance(row.get(k), float) else row.get(k, "")
                        for k in keys])
