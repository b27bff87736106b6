"""Dense feedforward networks trained with intermittent grouped projection.

A small numpy implementation: affine layers with relu, sigmoid or linear
activations, mean squared error or softmax cross-entropy, and SGD or Adam.
Every ``period`` optimiser steps the weight matrix of one layer is replaced by
its grouped sparse projection (rows by default, i.e. the fan-in vector of each
neuron), which pins the average sparsity of that layer at the target.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .data_io import make_rng
from .exceptions import ConfigurationError, DomainError
from .gsp import ProjectionConfig, project_group
from .sparsity import VectorGroup, spar

__all__ = [
    "ACTIVATIONS",
    "Layer",
    "Network",
    "ProjectionSchedule",
    "ProjectionEvent",
    "TrainConfig",
    "TrainResult",
    "forward",
    "backward",
    "loss_and_grad",
    "evaluate",
    "layer_sparsity",
    "project_layer",
    "train_with_projection",
    "two_blobs",
]

ACTIVATIONS = ("relu", "sigmoid", "linear")
LOSSES = ("mse", "ce")


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    return z


def _act_grad(name, z, a):
    if name == "relu":
        return (z > 0).astype(np.float64)
    if name == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


@dataclass
class Layer:
    """Affine map followed by an activation. ``W`` has shape (out, in)."""

    W: np.ndarray
    b: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        self.W = np.array(self.W, dtype=np.float64)
        self.b = np.array(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise DomainError(f"bias shape {self.b.shape} does not match weights {self.W.shape}")
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"unknown activation {self.activation!r}")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise DomainError("layer parameters must be finite")


@dataclass
class Network:
    layers: List[Layer]

    def __post_init__(self):
        if not self.layers:
            raise DomainError("a network needs at least one layer")
        for i in range(1, len(self.layers)):
            if self.layers[i].W.shape[1] != self.layers[i - 1].W.shape[0]:
                raise DomainError(
                    f"layer {i} expects {self.layers[i].W.shape[1]} inputs, "
                    f"layer {i - 1} gives {self.layers[i - 1].W.shape[0]}"
                )

    @classmethod
    def init(cls, sizes: Sequence[int], activations=None, seed=0) -> "Network":
        """Random network with weights uniform on +-1/sqrt(fan_in), zero biases.

        ``activations`` defaults to relu for hidden layers and linear output.
        """
        sizes = [int(v) for v in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise DomainError(f"invalid layer sizes {sizes}")
        if activations is None:
            activations = ["relu"] * (len(sizes) - 2) + ["linear"]
        if len(activations) != len(sizes) - 1:
            raise DomainError("need one activation per layer")
        rng = make_rng(seed)
        layers = []
        for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
            bound = 1.0 / np.sqrt(fan_in)
            layers.append(Layer(rng.uniform(-bound, bound, (fan_out, fan_in)), np.zeros(fan_out), act))
        return cls(layers)

    @property
    def sizes(self):
        return [self.layers[0].W.shape[1]] + [l.W.shape[0] for l in self.layers]

    def copy(self) -> "Network":
        return Network([Layer(l.W.copy(), l.b.copy(), l.activation) for l in self.layers])


def forward(net: Network, X) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Activations ``[X, a_1, ..., a_L]`` and pre-activations ``[z_1, ..., z_L]``
    for a batch X of shape (samples, inputs)."""
    a = np.asarray(X, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != net.layers[0].W.shape[1]:
        raise DomainError(f"input of shape {a.shape} does not fit {net.layers[0].W.shape[1]} inputs")
    acts, pre = [a], []
    for layer in net.layers:
        z = a @ layer.W.T + layer.b
        a = _act(layer.activation, z)
        pre.append(z)
        acts.append(a)
    return acts, pre


def backward(net: Network, acts, pre, loss_grad) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Gradients ``(dW, db)`` per layer given dLoss/d(output)."""
    delta = np.asarray(loss_grad, dtype=np.float64)
    grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        delta = delta * _act_grad(layer.activation, pre[i], acts[i + 1])
        grads[i] = (delta.T @ acts[i], delta.sum(axis=0))
        if i > 0:
            delta = delta @ layer.W
    return grads


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(output, target, loss="mse") -> Tuple[float, np.ndarray]:
    """Batch-mean loss and its gradient with respect to ``output``.

    ``mse``: mean over samples of ||output - target||^2 / 2.
    ``ce``: softmax cross-entropy, ``output`` are logits and ``target``
    integer labels.
    """
    N = output.shape[0]
    if loss == "mse":
        diff = output - target
        return float(0.5 * np.sum(diff * diff) / N), diff / N
    if loss == "ce":
        labels = np.asarray(target, dtype=np.int64)
        P = _softmax(output)
        logp = np.log(np.clip(P[np.arange(N), labels], 1e-300, None))
        grad = P.copy()
        grad[np.arange(N), labels] -= 1.0
        return float(-logp.mean()), grad / N
    raise ConfigurationError(f"unknown loss {loss!r}")


def evaluate(net: Network, X, y, loss="ce") -> Tuple[float, Optional[float]]:
    """Loss and accuracy (None for regression targets); parameters untouched."""
    out = forward(net, X)[0][-1]
    value, _ = loss_and_grad(out, y, loss)
    acc = None
    if loss == "ce":
        acc = float(np.mean(np.argmax(out, axis=1) == np.asarray(y)))
    return value, acc


@dataclass(frozen=True)
class ProjectionSchedule:
    """Project layer ``layer`` to average sparsity ``s`` every ``period`` steps."""

    s: float
    layer: int = 0
    grouping: str = "rows"
    period: int = 15
    eps: float = 1e-4

    def __post_init__(self):
        if not 0.0 <= self.s <= 1.0:
            raise ConfigurationError(f"s must be in [0, 1], got {self.s}")
        if int(self.period) < 1:
            raise ConfigurationError(f"period must be >= 1, got {self.period}")
        if self.grouping not in ("rows", "cols"):
            raise ConfigurationError(f"grouping must be 'rows' or 'cols', got {self.grouping!r}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 0.001
    optimizer: str = "adam"
    loss: str = "ce"
    projection: Optional[ProjectionSchedule] = None
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        if self.loss not in LOSSES:
            raise ConfigurationError(f"unknown loss {self.loss!r}")
        if int(self.epochs) < 0 or int(self.batch_size) < 1 or not self.lr > 0:
            raise ConfigurationError("epochs >= 0, batch_size >= 1 and lr > 0 are required")


@dataclass
class TrainResult:
    net: Network
    loss_trace: List[float] = field(default_factory=list)
    accuracy_trace: List[Optional[float]] = field(default_factory=list)
    sparsity_trace: List[float] = field(default_factory=list)
    projection_events: List["ProjectionEvent"] = field(default_factory=list)

    @property
    def projection_sparsity(self) -> List[float]:
        return [e.achieved for e in self.projection_events]


@dataclass(frozen=True)
class ProjectionEvent:
    """Outcome of one scheduled projection.

    ``already_sparse`` marks events where the layer met the target before
    projecting and was left unchanged; ``discontinuous`` that the target fell
    inside a jump of the sparsity curve.
    """

    step: int
    achieved: float
    already_sparse: bool
    discontinuous: bool


def _layer_group(W, grouping):
    M = W if grouping == "rows" else W.T
    live = np.flatnonzero(np.any(M != 0, axis=1))
    return M, live


def layer_sparsity(net: Network, layer: int, grouping="rows") -> float:
    """Average sparsity of the nonzero rows (or columns) of a layer's weights."""
    M, live = _layer_group(net.layers[layer].W, grouping)
    if M.shape[1] < 2 or live.size == 0:
        return float("nan")
    return float(np.mean([spar(M[i]) for i in live]))


def project_layer(net: Network, sched: ProjectionSchedule, step: int = 0) -> ProjectionEvent:
    """Replace the scheduled layer's weights by their grouped projection in place."""
    if not 0 <= sched.layer < len(net.layers):
        raise ConfigurationError(
            f"projection layer {sched.layer} out of range for {len(net.layers)} layers"
        )
    W = net.layers[sched.layer].W
    M, live = _layer_group(W, sched.grouping)
    if live.size == 0:
        return ProjectionEvent(step, float("nan"), True, False)
    res = project_group(VectorGroup.from_matrix(M[live], "rows"), ProjectionConfig(sched.s, sched.eps))
    M = M.copy()
    M[live] = res.projected_matrix("rows")
    net.layers[sched.layer].W = M if sched.grouping == "rows" else M.T.copy()
    return ProjectionEvent(step, float(res.achieved_sparsity), res.feasible_at_zero, res.discontinuous)


class _Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class _Sgd:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


def train_with_projection(net: Network, X, y, cfg: TrainConfig) -> TrainResult:
    """Minibatch training; the network is modified in place and returned.

    Traces have one entry per epoch plus the initial state at index 0.
    ``projection_events`` records every scheduled projection.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    sched = cfg.projection
    if sched is not None and not 0 <= sched.layer < len(net.layers):
        raise ConfigurationError(
            f"projection layer {sched.layer} out of range for {len(net.layers)} layers"
        )
    if X.shape[0] != y.shape[0]:
        raise DomainError(f"{X.shape[0]} samples but {y.shape[0]} targets")
    rng = make_rng(cfg.seed)
    params = [p for l in net.layers for p in (l.W, l.b)]
    opt = _Adam(params, cfg.lr) if cfg.optimizer == "adam" else _Sgd(params, cfg.lr)
    watch = sched.layer if sched is not None else 0
    grouping = sched.grouping if sched is not None else "rows"
    out = TrainResult(net=net)

    def record():
        loss, acc = evaluate(net, X, y, cfg.loss)
        out.loss_trace.append(loss)
        out.accuracy_trace.append(acc)
        out.sparsity_trace.append(layer_sparsity(net, watch, grouping))

    record()
    step = 0
    N = X.shape[0]
    for _ in range(int(cfg.epochs)):
        order = rng.permutation(N)
        for start in range(0, N, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            acts, pre = forward(net, X[idx])
            _, dout = loss_and_grad(acts[-1], y[idx], cfg.loss)
            grads = backward(net, acts, pre, dout)
            opt.step(params, [g for pair in grads for g in pair])
            step += 1
            if sched is not None and step % sched.period == 0:
                out.projection_events.append(project_layer(net, sched, step))
                # projection swapped the weight array; keep the optimiser on it
                params[2 * sched.layer] = net.layers[sched.layer].W
        record()
    return out


def two_blobs(n_per_class: int, seed: int, spread: float = 1.0):
    """Two Gaussian clouds in the plane centred at (-2, -2) and (2, 2).

    Returns (X, y) with labels 0/1, samples interleaved by class.
    """
    rng = make_rng(seed)
    X0 = rng.normal(-2.0, spread, (n_per_class, 2))
    X1 = rng.normal(2.0, spread, (n_per_class, 2))
    X = np.empty((2 * n_per_class, 2))
    X[0::2], X[1::2] = X0, X1
    y = np.empty(2 * n_per_class, dtype=np.int64)
    y[0::2], y[1::2] = 0, 1
    return X, y
