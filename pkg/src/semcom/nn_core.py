"""Small dense-network kernel: forward, reverse-mode gradients, SGD, softplus, RNG.

Everything runs in float64 on numpy arrays.  Inputs may be a single vector
of shape ``(d,)`` or a batch of shape ``(n, d)``; outputs keep that shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CacheError, FrozenModelError, LabelError, ShapeError

ACTIVATIONS = ("relu", "identity")
OUTPUT_HEADS = ("linear_logits", "feature")


@dataclass(frozen=True)
class NetworkSpec:
    layer_dims: tuple[int, ...]
    activation: tuple[str, ...]
    output_head: str = "linear_logits"

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        acts = self.activation
        if isinstance(acts, str):
            acts = (acts,) * max(len(dims) - 2, 0)
        object.__setattr__(self, "activation", tuple(acts))
        if len(dims) < 2:
            raise ShapeError("a network needs at least an input and an output dimension")
        if any(d < 1 for d in dims):
            raise ShapeError(f"layer widths must be >= 1, got {dims}")
        if len(self.activation) != len(dims) - 2:
            raise ShapeError(
                f"expected {len(dims) - 2} hidden activations, got {len(self.activation)}"
            )
        for a in self.activation:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        if self.output_head not in OUTPUT_HEADS:
            raise ValueError(f"unknown output head {self.output_head!r}")

    @property
    def num_layers(self) -> int:
        return len(self.layer_dims) - 1


@dataclass(eq=False)
class Network:
    """Weights are stored as ``(fan_in, fan_out)`` so ``h @ W + b`` maps a row batch."""

    spec: NetworkSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    frozen: bool = False
    version: int = 0

    def __post_init__(self):
        dims = self.spec.layer_dims
        if len(self.weights) != self.spec.num_layers or len(self.biases) != self.spec.num_layers:
            raise ShapeError("parameter count does not match the network spec")
        self.weights = [np.array(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.array(b, dtype=np.float64).reshape(-1) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise ShapeError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch dims {dims}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite parameters")
        if self.frozen:
            self._lock()

    @classmethod
    def init(cls, spec: NetworkSpec, rng: "Rng") -> "Network":
        """He-normal weights, zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(spec.layer_dims[:-1], spec.layer_dims[1:]):
            scale = np.sqrt(2.0 / fan_in)
            weights.append(rng.normal((fan_in, fan_out)) * scale)
            biases.append(np.zeros(fan_out))
        return cls(spec, weights, biases)

    @property
    def input_dim(self) -> int:
        return self.spec.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.spec.layer_dims[-1]

    def _lock(self):
        for a in (*self.weights, *self.biases):
            a.flags.writeable = False

    def freeze(self) -> "Network":
        self.frozen = True
        self._lock()
        return self

    def copy(self) -> "Network":
        return Network(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def parameters(self) -> list[np.ndarray]:
        """Parameters in serialization order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


@dataclass
class ForwardCache:
    network: Network
    version: int
    batched: bool
    inputs: list[np.ndarray]  # input to each layer
    preacts: list[np.ndarray]  # h @ W + b of each layer


@dataclass
class GradBundle:
    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]
    input_grad: np.ndarray


def _activate(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(x, 0.0)
    return x


def forward(net: Network, x) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 2
    h = x if batched else x.reshape(1, -1)
    if h.ndim != 2 or h.shape[1] != net.input_dim:
        raise ShapeError(f"input shape {x.shape} does not match network input dim {net.input_dim}")
    inputs, preacts = [], []
    last = net.spec.num_layers - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        a = h @ w + b
        preacts.append(a)
        h = a if i == last else _activate(net.spec.activation[i], a)
    out = h if batched else h[0]
    return out, ForwardCache(net, net.version, batched, inputs, preacts)


def predict(net: Network, x) -> np.ndarray:
    return forward(net, x)[0]


def backward(net: Network, cache: ForwardCache, dout) -> GradBundle:
    """Reverse-mode pass.  For a batch, parameter gradients are summed over rows."""
    if cache.network is not net or cache.version != net.version:
        raise CacheError("cache was produced by a different network or a stale parameter version")
    g = np.asarray(dout, dtype=np.float64)
    g = g if cache.batched else g.reshape(1, -1)
    if g.shape != cache.preacts[-1].shape:
        raise ShapeError(f"upstream gradient shape {g.shape} != output shape {cache.preacts[-1].shape}")
    n_layers = net.spec.num_layers
    wg: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    bg: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for i in range(n_layers - 1, -1, -1):
        if i < n_layers - 1 and net.spec.activation[i] == "relu":
            g = g * (cache.preacts[i] > 0.0)
        wg[i] = cache.inputs[i].T @ g
        bg[i] = g.sum(axis=0)
        g = g @ net.weights[i].T
    input_grad = g if cache.batched else g[0]
    return GradBundle(wg, bg, input_grad)


def softmax_cross_entropy(logits, labels) -> tuple[np.ndarray | float, np.ndarray]:
    """Cross-entropy and its gradient w.r.t. the logits.

    Vector logits with an integer label give a scalar loss; a ``(n, C)`` batch
    with ``n`` labels gives per-row losses and per-row gradients.
    """
    z = np.asarray(logits, dtype=np.float64)
    batched = z.ndim == 2
    z2 = z if batched else z.reshape(1, -1)
    y = np.atleast_1d(np.asarray(labels)).astype(np.int64)
    if y.shape[0] != z2.shape[0]:
        raise LabelError("one label per row of logits is required")
    if np.any(y < 0) or np.any(y >= z2.shape[1]):
        raise LabelError(f"label out of range for {z2.shape[1]} classes")
    shifted = z2 - z2.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    denom = ex.sum(axis=1, keepdims=True)
    rows = np.arange(z2.shape[0])
    loss = np.log(denom[:, 0]) - shifted[rows, y]
    grad = ex / denom
    grad[rows, y] -= 1.0
    if batched:
        return loss, grad
    return float(loss[0]), grad[0]


@dataclass
class Velocity:
    buffers: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def zeros_like(cls, net: Network) -> "Velocity":
        return cls([np.zeros_like(p) for p in net.parameters()])


def sgd_step(net: Network, grads: GradBundle, lr: float, momentum: float = 0.0,
             state: Velocity | None = None) -> Network:
    """In-place heavy-ball update: ``v = momentum*v + g; p -= lr*v``."""
    if net.frozen:
        raise FrozenModelError("cannot update a frozen network")
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    if not 0.0 <= momentum < 1.0:
        raise ValueError("momentum must lie in [0, 1)")
    if state is None:
        state = Velocity.zeros_like(net)
    elif not state.buffers:
        state.buffers = Velocity.zeros_like(net).buffers
    flat = []
    for gw, gb in zip(grads.weight_grads, grads.bias_grads):
        flat.extend((gw, gb))
    for p, g, v in zip(net.parameters(), flat, state.buffers):
        v *= momentum
        v += g
        p -= lr * v
    net.version += 1
    return net


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return float(out) if out.ndim == 0 else out


def softplus_grad(x):
    """Logistic function, evaluated without overflow for either sign."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return float(out) if out.ndim == 0 else out


class Rng:
    """Seeded stream of float64 draws.

    ``(seed, stream_id)`` feed a numpy ``SeedSequence`` driving PCG64, so the
    same pair yields the same sequence on every platform.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(stream_id) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, self.stream_id])))

    def __repr__(self):
        return f"Rng(seed={self.seed}, stream_id={self.stream_id})"

    def spawn(self, *path: int) -> "Rng":
        """Independent child stream keyed by ``path``; does not advance this stream."""
        ss = np.random.SeedSequence([self.seed, self.stream_id, *[int(p) & 0xFFFFFFFFFFFFFFFF for p in path]])
        child = Rng.__new__(Rng)
        child.seed, child.stream_id = self.seed, self.stream_id
        child._gen = np.random.Generator(np.random.PCG64(ss))
        return child

    def normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def uniform(self, shape=None):
        return self._gen.random(shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def sample_standard_normal(rng: Rng, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.normal(int(n))


def stack_params(params: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(p, dtype=np.float64).ravel() for p in params])
