"""Stratified dev splits, Adam, single-model training with early stopping, ensembles."""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .evaluation import confusion_matrix, metrics_from_confusion
from .model import Ensemble, MCCNNModel, ModelConfig, forward, init_model, model_gradients

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 5
    dev_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ValueError("learning_rate and epsilon must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")
        if not 0 < self.dev_fraction < 1:
            raise ValueError("dev_fraction must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    dev_macro_f1: list[float] = field(default_factory=list)
    dev_accuracy: list[float] = field(default_factory=list)
    dev_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1

    @property
    def n_epochs(self) -> int:
        return len(self.train_loss)

    def to_tsv(self) -> str:
        rows = ["epoch\ttrain_loss\ttrain_accuracy\tdev_macro_f1\tdev_accuracy\tdev_loss\tbest"]
        for e in range(self.n_epochs):
            rows.append(
                f"{e}\t{self.train_loss[e]!r}\t{self.train_accuracy[e]!r}\t{self.dev_macro_f1[e]!r}"
                f"\t{self.dev_accuracy[e]!r}\t{self.dev_loss[e]!r}\t{int(e == self.best_epoch)}")
        return "\n".join(rows) + "\n"


def _dev_count(n: int, fraction: float) -> int:
    # round first so 10 * 0.3 = 3.0000000000000004 does not ceil to 4
    return math.ceil(round(n * fraction, 9))


def stratified_split_indices(labels, dev_fraction: float, seed: int = 0):
    """Per class, ceil(count * dev_fraction) seeded-random indices go to dev.

    Returns sorted ``(train_idx, dev_idx)`` integer arrays.
    """
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("cannot split an empty dataset")
    if not 0 < dev_fraction < 1:
        raise ValueError("dev_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    dev = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        dev.extend(rng.permutation(idx)[:_dev_count(idx.size, dev_fraction)])
    dev_idx = np.sort(np.asarray(dev, dtype=np.int64))
    train_idx = np.setdiff1d(np.arange(labels.size), dev_idx)
    return train_idx, dev_idx


def stratified_split(dataset, dev_fraction: float, seed: int = 0, num_classes: int | None = None):
    labels = []
    for ex in dataset:
        if ex.label is None:
            raise ValueError(f"example {ex.id!r} is unlabeled")
        labels.append(ex.label)
    if num_classes is not None:
        empty = sorted(set(range(num_classes)) - set(labels))
        if empty:
            raise ValueError(f"classes {empty} have no examples to split")
    train_idx, dev_idx = stratified_split_indices(labels, dev_fraction, seed)
    return [dataset[i] for i in train_idx], [dataset[i] for i in dev_idx]


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params, grads, state: AdamState, t: int, config: TrainConfig):
    """One bias-corrected Adam update at step ``t`` (1-based), in place."""
    if t < 1:
        raise ValueError("Adam step index starts at 1")
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {k} has shape {g.shape}, parameter has {p.shape}")
        m, v = state.m[k], state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + config.epsilon)
    state.t = t
    return params, state


def _evaluate(model: MCCNNModel, X, y, num_classes):
    losses = np.empty(len(X))
    preds = np.empty(len(X), dtype=np.int64)
    for i, (seq, label) in enumerate(zip(X, y)):
        probs = forward(model, seq)
        # probabilities are strictly positive; floor guards log(0) after underflow
        losses[i] = -math.log(max(probs[label], 1e-300))
        preds[i] = int(np.argmax(probs))
    report = metrics_from_confusion(confusion_matrix(y, preds, num_classes))
    return float(losses.mean()), report


def train_single(config: ModelConfig, tconfig: TrainConfig, X_train, y_train, X_dev, y_dev):
    """Train one network with mini-batch Adam; keep the best dev epoch.

    ``X_*`` are lists of T x d embedded sequences, ``y_*`` class indices.
    The selection key is dev macro-F1, ties broken by lower dev loss.
    Returns ``(model, history)``.
    """
    y_train = np.asarray(y_train, dtype=np.int64)
    y_dev = np.asarray(y_dev, dtype=np.int64)
    if len(X_train) == 0 or len(X_dev) == 0:
        raise ValueError("training and dev sets must be nonempty")
    if len(X_train) != y_train.size or len(X_dev) != y_dev.size:
        raise ValueError("sequence and label counts differ")
    C = config.num_classes
    for name, y in (("train", y_train), ("dev", y_dev)):
        if y.min() < 0 or y.max() >= C:
            raise ValueError(f"{name} labels must lie in [0, {C})")
    use_accuracy = np.unique(y_dev).size == 1
    if use_accuracy:
        warnings.warn("dev set holds a single class; early stopping on dev accuracy", RuntimeWarning)

    model = init_model(config)
    rng = np.random.default_rng(tconfig.seed)
    state = AdamState.zeros_like(model.params)
    history = TrainHistory()
    best_key, best_params, wait, step = None, None, 0, 0
    n = len(X_train)

    for epoch in range(tconfig.max_epochs):
        order = rng.permutation(n)
        for start in range(0, n, tconfig.batch_size):
            batch = order[start:start + tconfig.batch_size]
            acc = {k: np.zeros_like(p) for k, p in model.params.items()}
            for i in batch:
                _, g = model_gradients(model, X_train[i], int(y_train[i]))
                for k in acc:
                    acc[k] += g[k]
            for k in acc:
                acc[k] /= len(batch)
            step += 1
            adam_step(model.params, acc, state, step, tconfig)

        train_loss, train_rep = _evaluate(model, X_train, y_train, C)
        dev_loss, dev_rep = _evaluate(model, X_dev, y_dev, C)
        history.train_loss.append(train_loss)
        history.train_accuracy.append(train_rep.accuracy)
        history.dev_macro_f1.append(dev_rep.macro_f1)
        history.dev_accuracy.append(dev_rep.accuracy)
        history.dev_loss.append(dev_loss)
        metric = dev_rep.accuracy if use_accuracy else dev_rep.macro_f1
        key = (metric, -dev_loss)
        logger.debug("epoch %d train_loss=%.5f dev_metric=%.4f dev_loss=%.5f",
                     epoch, train_loss, metric, dev_loss)
        if best_key is None or key > best_key:
            best_key, wait = key, 0
            best_params = {k: p.copy() for k, p in model.params.items()}
            history.best_epoch = epoch
        else:
            wait += 1
            if wait >= max(tconfig.patience, 1):
                break

    return MCCNNModel(config, best_params), history


def member_configs(config: ModelConfig, tconfig: TrainConfig, i: int):
    """Configs of ensemble member ``i``: both seeds offset by the member index."""
    return (ModelConfig.from_dict({**config.to_dict(), "seed": config.seed + i}),
            TrainConfig.from_dict({**tconfig.__dict__, "seed": tconfig.seed + i}))


def train_ensemble(config: ModelConfig, tconfig: TrainConfig, X_train, y_train, X_dev, y_dev,
                   n_jobs: int = 1):
    """Train ``config.ensemble_size`` independent members; returns ``(ensemble, histories)``.

    Members may run on ``n_jobs`` threads; results are always assembled in
    member order so the output does not depend on ``n_jobs``.
    """
    def run(i):
        mcfg, tcfg = member_configs(config, tconfig, i)
        model, hist = train_single(mcfg, tcfg, X_train, y_train, X_dev, y_dev)
        # members share the base config so the checkpoint records one config
        return MCCNNModel(config, model.params), hist

    idx = range(config.ensemble_size)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, idx))
    else:
        results = [run(i) for i in idx]
    return Ensemble([r[0] for r in results]), [r[1] for r in results]
