"""Float64 kernels for the grouped-softmax CNN and their reverse-mode derivatives.

Every forward kernel that participates in training has a matching ``*_backward``
function taking the upstream gradient and whatever the forward pass cached.
"""
from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def sigmoid(x):
    # split by sign so exp never overflows
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x):
    return np.maximum(x, 0.0)


def identity(x):
    return np.asarray(x, dtype=np.float64)


ACTIVATIONS: dict[str, Callable] = {
    "sigmoid": sigmoid,
    "relu": relu,
    "tanh": np.tanh,
    "identity": identity,
}


def activation_grad(name: str, pre, out):
    """d act / d pre, expressed through the cached pre-activation and output."""
    if name == "sigmoid":
        return out * (1.0 - out)
    if name == "tanh":
        return 1.0 - out * out
    if name == "relu":
        return (pre > 0).astype(np.float64)
    if name == "identity":
        return np.ones_like(out)
    raise ValueError(f"unknown activation {name!r}")


def get_activation(name: str) -> Callable:
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}") from None


@dataclass
class FilterBank:
    """``count`` filters of ``width`` tokens over ``dim``-dimensional embeddings."""

    weights: np.ndarray  # (m, k*d)
    biases: np.ndarray  # (m,)
    width: int

    @property
    def count(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1] // self.width


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)
    activation: str = "identity"


@dataclass
class ConvCache:
    windows: np.ndarray  # (P, k*d) flattened n-gram windows
    pre: np.ndarray  # (P, m)
    act: np.ndarray  # (P, m)
    argmax: np.ndarray  # (m,) winning position per filter


def _windows(seq: np.ndarray, width: int) -> np.ndarray:
    n, d = seq.shape
    if n < width:
        seq = np.vstack([seq, np.zeros((width - n, d))])
    return sliding_window_view(seq, (width, d))[:, 0].reshape(-1, width * d)


def conv_pool(seq, bank: FilterBank, activation: str = "sigmoid", return_cache: bool = False):
    """Convolve, apply ``activation`` elementwise, max-pool over time.

    Sequences shorter than the filter width are zero-padded to the width.
    Ties in the max go to the earliest position.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[1] != bank.dim:
        raise ValueError(
            f"sequence shape {seq.shape} does not match filter bank dimension {bank.dim}"
        )
    act_fn = get_activation(activation)
    windows = _windows(seq, bank.width)
    pre = windows @ bank.weights.T + bank.biases
    act = act_fn(pre)
    argmax = np.argmax(act, axis=0)
    pooled = act[argmax, np.arange(act.shape[1])]
    if return_cache:
        return pooled, ConvCache(windows, pre, act, argmax)
    return pooled


def conv_pool_backward(d_pooled, bank: FilterBank, cache: ConvCache, activation: str):
    """Gradients of the filter weights and biases; only the argmax position gets signal."""
    cols = np.arange(bank.count)
    pre = cache.pre[cache.argmax, cols]
    out = cache.act[cache.argmax, cols]
    d_pre = d_pooled * activation_grad(activation, pre, out)
    d_weights = d_pre[:, None] * cache.windows[cache.argmax]
    return d_weights, d_pre.copy()


def grouped_softmax(v, group_size: int):
    v = np.asarray(v, dtype=np.float64)
    if group_size < 1 or v.ndim != 1 or v.size % group_size:
        raise ValueError(f"vector length {v.size} is not divisible by group size {group_size}")
    blocks = v.reshape(-1, group_size)
    e = np.exp(blocks - blocks.max(axis=1, keepdims=True))
    return (e / e.sum(axis=1, keepdims=True)).reshape(-1)


def grouped_softmax_backward(d_out, out, group_size: int):
    s = out.reshape(-1, group_size)
    g = np.asarray(d_out).reshape(-1, group_size)
    return (s * (g - (s * g).sum(axis=1, keepdims=True))).reshape(-1)


def dense_forward(x, layer: DenseLayer):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != layer.weights.shape[1]:
        raise ValueError(
            f"input of length {x.shape} does not match layer input size {layer.weights.shape[1]}"
        )
    return get_activation(layer.activation)(layer.weights @ x + layer.biases)


def dense_backward(d_out, x, out, layer: DenseLayer):
    """Returns (d_weights, d_biases, d_x)."""
    d_pre = d_out * activation_grad(layer.activation, None, out)
    return np.outer(d_pre, x), d_pre, layer.weights.T @ d_pre


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def softmax_cross_entropy(logits, true_class: int):
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= true_class < logits.shape[0]:
        raise IndexError(f"class index {true_class} out of range for {logits.shape[0]} classes")
    shifted = logits - logits.max()
    log_z = np.log(np.exp(shifted).sum())
    loss = float(log_z - shifted[true_class])
    d_logits = np.exp(shifted - log_z)
    d_logits[true_class] -= 1.0
    return loss, d_logits


def central_differences(loss_fn: Callable[[], float], params: dict[str, np.ndarray], eps: float = 1e-5):
    """Numerical gradient of ``loss_fn`` w.r.t. every scalar in ``params``.

    ``params`` arrays are perturbed in place and restored; ``loss_fn`` must
    read them on each call.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    grads = {}
    for name, arr in params.items():
        if not arr.flags.c_contiguous:
            raise ValueError(f"parameter {name!r} must be C-contiguous to perturb in place")
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn()
            flat[i] = orig - eps
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * eps)
        grads[name] = g
    return grads


def relative_error(a, b) -> float:
    """||a - b|| / max(||a||, ||b||); 0 when both are exactly zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)
