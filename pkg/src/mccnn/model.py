"""The MC-CNN network: grouped-softmax convolution, tanh hidden layer, softmax output.

Parameters live in a flat, ordered ``dict`` of float64 arrays so optimizers,
gradient checks and the checkpoint writer can treat them uniformly::

    conv{i}.weights  (group_size * groups_per_size[i], filter_sizes[i] * d)
    conv{i}.biases   (group_size * groups_per_size[i],)
    hidden.weights   (hidden_size, concat_dim)
    hidden.biases    (hidden_size,)
    output.weights   (num_classes, hidden_size)
    output.biases    (num_classes,)
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import numerics
from .numerics import ConvCache, DenseLayer, FilterBank

FORMAT_VERSION = 1
_MAGIC = "mccnn-checkpoint"


@dataclass(frozen=True)
class ModelConfig:
    embedding_dim: int = 32
    filter_sizes: tuple[int, ...] = (1, 2, 3, 4)
    groups_per_size: tuple[int, ...] = (10, 6, 4, 2)
    group_size: int = 7
    filter_activation: str = "sigmoid"
    hidden_size: int = 10
    hidden_activation: str = "tanh"
    num_classes: int = 2
    ensemble_size: int = 5
    max_tokens: int = 80
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "filter_sizes", tuple(int(k) for k in self.filter_sizes))
        object.__setattr__(self, "groups_per_size", tuple(int(g) for g in self.groups_per_size))
        if len(self.filter_sizes) != len(self.groups_per_size):
            raise ValueError("filter_sizes and groups_per_size must have equal length")
        if not self.filter_sizes:
            raise ValueError("at least one filter size is required")
        counts = {
            "embedding_dim": self.embedding_dim,
            "group_size": self.group_size,
            "hidden_size": self.hidden_size,
            "ensemble_size": self.ensemble_size,
            "max_tokens": self.max_tokens,
        }
        for name, value in counts.items():
            if int(value) < 1:
                raise ValueError(f"{name} must be >= 1, got {value}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if any(k < 1 for k in self.filter_sizes) or any(g < 1 for g in self.groups_per_size):
            raise ValueError("filter sizes and group counts must be >= 1")
        numerics.get_activation(self.filter_activation)
        numerics.get_activation(self.hidden_activation)

    @property
    def concat_dim(self) -> int:
        return self.group_size * sum(self.groups_per_size)

    def filters_per_size(self) -> list[int]:
        return [self.group_size * g for g in self.groups_per_size]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["filter_sizes"] = list(self.filter_sizes)
        d["groups_per_size"] = list(self.groups_per_size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def parameter_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        for i, (k, m) in enumerate(zip(self.filter_sizes, self.filters_per_size())):
            shapes[f"conv{i}.weights"] = (m, k * self.embedding_dim)
            shapes[f"conv{i}.biases"] = (m,)
        shapes["hidden.weights"] = (self.hidden_size, self.concat_dim)
        shapes["hidden.biases"] = (self.hidden_size,)
        shapes["output.weights"] = (self.num_classes, self.hidden_size)
        shapes["output.biases"] = (self.num_classes,)
        return shapes


@dataclass
class MCCNNModel:
    config: ModelConfig
    params: dict[str, np.ndarray]

    def filter_bank(self, i: int) -> FilterBank:
        return FilterBank(self.params[f"conv{i}.weights"], self.params[f"conv{i}.biases"],
                          self.config.filter_sizes[i])

    @property
    def hidden(self) -> DenseLayer:
        return DenseLayer(self.params["hidden.weights"], self.params["hidden.biases"],
                          self.config.hidden_activation)

    @property
    def output(self) -> DenseLayer:
        return DenseLayer(self.params["output.weights"], self.params["output.biases"], "identity")

    def n_parameters(self) -> int:
        return sum(a.size for a in self.params.values())

    def copy(self) -> "MCCNNModel":
        return MCCNNModel(self.config, {k: v.copy() for k, v in self.params.items()})


@dataclass
class Ensemble:
    members: list[MCCNNModel] = field(default_factory=list)

    def __post_init__(self):
        if not self.members:
            raise ValueError("an ensemble needs at least one member")
        cfg = self.members[0].config
        if any(m.config != cfg for m in self.members[1:]):
            raise ValueError("ensemble members must share one config")

    @property
    def config(self) -> ModelConfig:
        return self.members[0].config

    def __len__(self):
        return len(self.members)


def init_model(config: ModelConfig, seed: int | None = None) -> MCCNNModel:
    """Glorot-uniform weights, zero biases; deterministic in (config, seed)."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    params = {}
    for name, shape in config.parameter_shapes().items():
        if name.endswith(".biases"):
            params[name] = np.zeros(shape)
        else:
            fan_out, fan_in = shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-limit, limit, size=shape)
    return MCCNNModel(config, params)


@dataclass
class ForwardTrace:
    """Every intermediate of one forward pass; ``grouped`` is the post-group-softmax vector."""

    seq: np.ndarray
    conv_caches: list[ConvCache]
    pooled: np.ndarray
    grouped: np.ndarray
    hidden: np.ndarray
    logits: np.ndarray
    probs: np.ndarray


def _check_seq(model: MCCNNModel, seq) -> np.ndarray:
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[1] != model.config.embedding_dim:
        raise ValueError(
            f"embedded sequence has shape {seq.shape}, model expects (T, {model.config.embedding_dim})"
        )
    return seq


def trace_forward(model: MCCNNModel, seq) -> ForwardTrace:
    cfg = model.config
    seq = _check_seq(model, seq)
    pooled, caches = [], []
    for i in range(len(cfg.filter_sizes)):
        p, cache = numerics.conv_pool(seq, model.filter_bank(i), cfg.filter_activation, return_cache=True)
        pooled.append(p)
        caches.append(cache)
    pooled = np.concatenate(pooled)
    grouped = numerics.grouped_softmax(pooled, cfg.group_size)
    hidden = numerics.dense_forward(grouped, model.hidden)
    logits = numerics.dense_forward(hidden, model.output)
    return ForwardTrace(seq, caches, pooled, grouped, hidden, logits, numerics.softmax(logits))


def forward(model: MCCNNModel, seq) -> np.ndarray:
    return trace_forward(model, seq).probs


def loss(model: MCCNNModel, seq, true_class: int) -> float:
    return numerics.softmax_cross_entropy(trace_forward(model, seq).logits, true_class)[0]


def model_gradients(model: MCCNNModel, seq, true_class: int):
    """Cross-entropy loss and its exact gradient w.r.t. every parameter.

    Returns ``(loss, grads)`` with ``grads`` keyed like ``model.params``.
    """
    cfg = model.config
    tr = trace_forward(model, seq)
    loss_value, d_logits = numerics.softmax_cross_entropy(tr.logits, true_class)

    grads = {}
    grads["output.weights"], grads["output.biases"], d_hidden = numerics.dense_backward(
        d_logits, tr.hidden, tr.logits, model.output)
    grads["hidden.weights"], grads["hidden.biases"], d_grouped = numerics.dense_backward(
        d_hidden, tr.grouped, tr.hidden, model.hidden)
    d_pooled = numerics.grouped_softmax_backward(d_grouped, tr.grouped, cfg.group_size)

    offset = 0
    for i, m in enumerate(cfg.filters_per_size()):
        d_w, d_b = numerics.conv_pool_backward(
            d_pooled[offset:offset + m], model.filter_bank(i), tr.conv_caches[i], cfg.filter_activation)
        grads[f"conv{i}.weights"] = d_w
        grads[f"conv{i}.biases"] = d_b
        offset += m
    return loss_value, {k: grads[k] for k in model.params}


def finite_difference_gradients(model: MCCNNModel, seq, true_class: int, eps: float = 1e-5):
    work = model.copy()
    seq = _check_seq(model, seq)
    return numerics.central_differences(lambda: loss(work, seq, true_class), work.params, eps)


def ensemble_predict(ensemble: Ensemble, seq) -> np.ndarray:
    """Mean of member probability vectors, accumulated in member order."""
    if not ensemble.members:
        raise ValueError("cannot predict with an empty ensemble")
    total = np.zeros(ensemble.config.num_classes)
    for member in ensemble.members:
        total += forward(member, seq)
    return total / len(ensemble.members)


def predict_class(probs) -> int:
    # np.argmax returns the first maximum, i.e. ties go to the lowest index
    return int(np.argmax(probs))


def count_parameters(config: ModelConfig) -> int:
    d, h, c = config.embedding_dim, config.hidden_size, config.num_classes
    conv = sum(config.group_size * g * (k * d + 1)
               for k, g in zip(config.filter_sizes, config.groups_per_size))
    return conv + (config.concat_dim * h + h) + (h * c + c)


# -- checkpoints -------------------------------------------------------------

class CheckpointError(ValueError):
    pass


def save_model(ensemble: Ensemble, path) -> None:
    """Write a self-describing text checkpoint; floats are stored as exact hex literals."""
    lines = [f"{_MAGIC} {FORMAT_VERSION}",
             "config " + json.dumps(ensemble.config.to_dict(), sort_keys=True),
             f"members {len(ensemble)}"]
    for idx, member in enumerate(ensemble.members):
        lines.append(f"member {idx}")
        for name, arr in member.params.items():
            lines.append(f"tensor {name} " + " ".join(str(s) for s in arr.shape))
            rows = arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr.reshape(1, -1)
            for row in rows:
                lines.append(" ".join(float(x).hex() for x in row))
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> Ensemble:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    it = iter(enumerate(lines, start=1))

    def next_line(what):
        try:
            return next(it)
        except StopIteration:
            raise CheckpointError(f"{path}: truncated checkpoint, expected {what}") from None

    _, head = next_line("header")
    parts = head.split()
    if len(parts) != 2 or parts[0] != _MAGIC:
        raise CheckpointError(f"{path}: not an MC-CNN checkpoint")
    try:
        version = int(parts[1])
    except ValueError:
        raise CheckpointError(f"{path}: unreadable format version {parts[1]!r}") from None
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint format version {version} (this build reads {FORMAT_VERSION})")

    lineno, line = next_line("config")
    if not line.startswith("config "):
        raise CheckpointError(f"{path}: line {lineno}: expected config record")
    try:
        config = ModelConfig.from_dict(json.loads(line[len("config "):]))
    except (ValueError, TypeError) as exc:
        raise CheckpointError(f"{path}: line {lineno}: invalid config: {exc}") from None

    lineno, line = next_line("member count")
    parts = line.split()
    if len(parts) != 2 or parts[0] != "members" or not parts[1].isdigit():
        raise CheckpointError(f"{path}: line {lineno}: expected 'members N'")
    n_members = int(parts[1])
    shapes = config.parameter_shapes()

    members = []
    for idx in range(n_members):
        lineno, line = next_line(f"member {idx}")
        if line.split() != ["member", str(idx)]:
            raise CheckpointError(f"{path}: line {lineno}: expected 'member {idx}'")
        params = {}
        for name, shape in shapes.items():
            lineno, line = next_line(f"tensor {name}")
            parts = line.split()
            if len(parts) < 2 or parts[0] != "tensor" or parts[1] != name:
                raise CheckpointError(f"{path}: line {lineno}: expected header for tensor {name}")
            try:
                got = tuple(int(s) for s in parts[2:])
            except ValueError:
                raise CheckpointError(f"{path}: line {lineno}: bad shape header for tensor {name}") from None
            if got != shape:
                raise CheckpointError(
                    f"{path}: line {lineno}: tensor {name} has shape {got}, config implies {shape}")
            n_rows = shape[0] if len(shape) > 1 else 1
            row_len = int(np.prod(shape)) // n_rows
            data = np.empty((n_rows, row_len))
            for r in range(n_rows):
                lineno, line = next_line(f"data for tensor {name}")
                vals = line.split()
                if len(vals) != row_len:
                    raise CheckpointError(
                        f"{path}: line {lineno}: tensor {name} row {r} has {len(vals)} values, expected {row_len}")
                try:
                    data[r] = [float.fromhex(v) for v in vals]
                except ValueError:
                    raise CheckpointError(f"{path}: line {lineno}: bad value in tensor {name}") from None
            params[name] = data.reshape(shape)
        members.append(MCCNNModel(config, params))
    lineno, line = next_line("end marker")
    if line.strip() != "end":
        raise CheckpointError(f"{path}: line {lineno}: expected end marker")
    return Ensemble(members)
