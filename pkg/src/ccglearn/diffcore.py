"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

A ``Tensor`` records the tape of operations that produced it; ``backward()``
on a scalar walks the tape in reverse topological order and accumulates
gradients into every reachable ``Tensor`` with ``requires_grad``.  The op set
is exactly what the classifiers, the generator/discriminator pair, and the
trainable transition matrix need: dense affine maps, a couple of
rectifier-style activations, row softmax, log/exp/softplus, element picking,
concatenation, and reductions.  No broadcasting beyond bias rows.

All arithmetic is 64-bit; hot elementwise pieces dispatch through
:mod:`ccglearn.kernels` so they can run jitted or in pure numpy.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels

PROB_FLOOR = 1e-12
LEAKY_SLOPE = 0.2


class GraphError(ValueError):
    """Structural problem in a computation graph (shape mismatch, bad node)."""


class DivergenceError(FloatingPointError):
    """Raised when training produces NaN gradients or losses."""


def _as_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


class Tensor:
    """A node on the autodiff tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, parents=(), op="leaf"):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = None
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    # -- graph construction helpers -------------------------------------

    @staticmethod
    def _make(data, parents, op, backward):
        out = Tensor(data, requires_grad=any(p.requires_grad for p in parents),
                     parents=parents, op=op)
        out._backward = backward
        return out

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, (int, float)):
            c = float(other)

            def backward(g):
                if self.requires_grad:
                    self._accum(g)
            return Tensor._make(self.data + c, (self,), "shift", backward)
        other = other if isinstance(other, Tensor) else Tensor(other)
        if self.data.shape != other.data.shape and other.data.ndim != 1:
            raise GraphError(
                f"add: incompatible shapes {self.data.shape} vs {other.data.shape}")
        data = self.data + other.data

        def backward(g):
            if self.requires_grad:
                self._accum(g)
            if other.requires_grad:
                if other.data.shape == g.shape:
                    other._accum(g)
                else:  # bias row broadcast over the batch axis
                    other._accum(g.sum(axis=0))
        return Tensor._make(data, (self, other), "add", backward)

    def __radd__(self, other):
        return self.__add__(other)

    def __neg__(self):
        def backward(g):
            if self.requires_grad:
                self._accum(-g)
        return Tensor._make(-self.data, (self,), "neg", backward)

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            c = float(other)

            def backward(g):
                if self.requires_grad:
                    self._accum(c * g)
            return Tensor._make(self.data * c, (self,), "scale", backward)
        if self.data.shape != other.data.shape:
            raise GraphError(
                f"mul: incompatible shapes {self.data.shape} vs {other.data.shape}")

        def backward(g):
            if self.requires_grad:
                self._accum(g * other.data)
            if other.requires_grad:
                other._accum(g * self.data)
        return Tensor._make(self.data * other.data, (self, other), "mul", backward)

    def __rmul__(self, other):
        return self.__mul__(other)

    def matmul(self, other: "Tensor") -> "Tensor":
        if self.data.ndim != 2 or other.data.ndim != 2 \
                or self.data.shape[1] != other.data.shape[0]:
            raise GraphError(
                f"matmul: incompatible shapes {self.data.shape} vs {other.data.shape}")
        data = self.data @ other.data

        def backward(g):
            if self.requires_grad:
                self._accum(g @ other.data.T)
            if other.requires_grad:
                other._accum(self.data.T @ g)
        return Tensor._make(data, (self, other), "matmul", backward)

    def __matmul__(self, other):
        return self.matmul(other)

    # -- elementwise nonlinearities -------------------------------------

    def relu(self):
        data = np.maximum(self.data, 0.0)

        def backward(g):
            if self.requires_grad:
                self._accum(np.where(self.data > 0.0, g, 0.0))
        return Tensor._make(data, (self,), "relu", backward)

    def leaky_relu(self, slope=LEAKY_SLOPE):
        data = kernels.leaky_relu(self.data, slope)

        def backward(g):
            if self.requires_grad:
                self._accum(kernels.leaky_relu_grad(self.data, g, slope))
        return Tensor._make(data, (self,), "leaky_relu", backward)

    def sigmoid(self):
        data = 1.0 / (1.0 + np.exp(-self.data))

        def backward(g):
            if self.requires_grad:
                self._accum(g * data * (1.0 - data))
        return Tensor._make(data, (self,), "sigmoid", backward)

    def softplus(self):
        # log(1 + e^x), computed stably
        data = np.logaddexp(0.0, self.data)

        def backward(g):
            if self.requires_grad:
                self._accum(g / (1.0 + np.exp(-self.data)))
        return Tensor._make(data, (self,), "softplus", backward)

    def log(self):
        if np.any(self.data <= 0.0):
            raise GraphError("log: non-positive input; clamp first")
        data = np.log(self.data)

        def backward(g):
            if self.requires_grad:
                self._accum(g / self.data)
        return Tensor._make(data, (self,), "log", backward)

    def exp(self):
        data = np.exp(self.data)

        def backward(g):
            if self.requires_grad:
                self._accum(g * data)
        return Tensor._make(data, (self,), "exp", backward)

    def clip_min(self, floor: float):
        """Lower clamp; gradient passes only where the input was above it."""
        data = np.maximum(self.data, floor)

        def backward(g):
            if self.requires_grad:
                self._accum(np.where(self.data > floor, g, 0.0))
        return Tensor._make(data, (self,), "clip_min", backward)

    def square(self):
        def backward(g):
            if self.requires_grad:
                self._accum(2.0 * g * self.data)
        return Tensor._make(self.data ** 2, (self,), "square", backward)

    # -- structural ops --------------------------------------------------

    def softmax(self):
        """Row softmax with max-subtraction; input must be 2-D logits."""
        if self.data.ndim != 2:
            raise GraphError(f"softmax: expected 2-D logits, got {self.data.shape}")
        s = kernels.softmax_rows(self.data)

        def backward(g):
            if self.requires_grad:
                dot = (g * s).sum(axis=1, keepdims=True)
                self._accum(s * (g - dot))
        return Tensor._make(s, (self,), "softmax", backward)

    def pick(self, idx: np.ndarray):
        """Select one column per row: out[i] = self[i, idx[i]]."""
        idx = np.asarray(idx, dtype=np.int64)
        if self.data.ndim != 2 or idx.shape != (self.data.shape[0],):
            raise GraphError("pick: need 2-D input and one index per row")
        rows = np.arange(self.data.shape[0])
        data = self.data[rows, idx]

        def backward(g):
            if self.requires_grad:
                full = np.zeros_like(self.data)
                np.add.at(full, (rows, idx), g)
                self._accum(full)
        return Tensor._make(data, (self,), "pick", backward)

    def slice_rows(self, start: int, stop: int):
        data = self.data[start:stop]

        def backward(g):
            if self.requires_grad:
                full = np.zeros_like(self.data)
                full[start:stop] = g
                self._accum(full)
        return Tensor._make(data, (self,), "slice_rows", backward)

    @staticmethod
    def concat(tensors, axis=1):
        datas = [t.data for t in tensors]
        data = np.concatenate(datas, axis=axis)
        splits = np.cumsum([d.shape[axis] for d in datas])[:-1]

        def backward(g):
            parts = np.split(g, splits, axis=axis)
            for t, part in zip(tensors, parts):
                if t.requires_grad:
                    t._accum(part)
        return Tensor._make(data, tuple(tensors), "concat", backward)

    def reshape(self, *shape):
        data = self.data.reshape(*shape)

        def backward(g):
            if self.requires_grad:
                self._accum(g.reshape(self.data.shape))
        return Tensor._make(data, (self,), "reshape", backward)

    # -- reductions -------------------------------------------------------

    def sum(self):
        def backward(g):
            if self.requires_grad:
                self._accum(np.full_like(self.data, float(g)))
        return Tensor._make(self.data.sum(), (self,), "sum", backward)

    def mean(self):
        n = self.data.size

        def backward(g):
            if self.requires_grad:
                self._accum(np.full_like(self.data, float(g) / n))
        return Tensor._make(self.data.mean(), (self,), "mean", backward)

    # -- backward pass -----------------------------------------------------

    def backward(self):
        backward(self)


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every reachable requires_grad leaf of ``loss``."""
    if loss.data.ndim != 0:
        raise GraphError(f"backward: loss must be scalar, got shape {loss.shape}")
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    loss._accum(np.ones(()))
    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        g = node.grad
        node.grad = None
        node._backward(g)


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# MLP building blocks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MlpSpec:
    """Fully-connected network: widths[0] inputs through widths[-1] outputs."""

    widths: tuple
    activation: str = "relu"       # relu | leaky_relu
    head: str = "softmax"          # softmax | linear | sigmoid

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ValueError("MlpSpec needs at least input and output widths")
        if any(int(w) < 1 for w in self.widths):
            raise ValueError("all widths must be positive")
        if self.activation not in ("relu", "leaky_relu"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.head not in ("softmax", "linear", "sigmoid"):
            raise ValueError(f"unknown head {self.head!r}")
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))


class Mlp:
    """Dense network owning named parameter tensors.

    ``forward`` returns pre-head activations (logits); apply ``softmax`` or
    ``sigmoid`` downstream as the loss requires.
    """

    def __init__(self, spec: MlpSpec, rng: np.random.Generator, name="mlp"):
        self.spec = spec
        self.name = name
        self.params: dict[str, Tensor] = {}
        for i, (fan_in, fan_out) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
            a = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-a, a, size=(fan_in, fan_out))
            self.params[f"{name}.w{i}"] = Tensor(w, requires_grad=True)
            self.params[f"{name}.b{i}"] = Tensor(np.zeros(fan_out), requires_grad=True)
        self.n_layers = len(spec.widths) - 1

    def parameters(self):
        return list(self.params.values())

    def forward(self, x) -> Tensor:
        h = x if isinstance(x, Tensor) else Tensor(x)
        if h.data.ndim != 2 or h.data.shape[1] != self.spec.widths[0]:
            raise GraphError(
                f"{self.name}: expected input (n, {self.spec.widths[0]}), "
                f"got {h.data.shape}")
        for i in range(self.n_layers):
            h = h @ self.params[f"{self.name}.w{i}"] + self.params[f"{self.name}.b{i}"]
            if i < self.n_layers - 1:
                if self.spec.activation == "relu":
                    h = h.relu()
                else:
                    h = h.leaky_relu()
        return h

    __call__ = forward

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        logits = self.forward(x)
        if self.spec.head == "softmax":
            return kernels.softmax_rows(logits.data)
        if self.spec.head == "sigmoid":
            return 1.0 / (1.0 + np.exp(-logits.data))
        return logits.data

    def state_dict(self) -> dict:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict) -> None:
        for k, v in self.params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != v.data.shape:
                raise GraphError(f"checkpoint shape mismatch for {k}")
            v.data = arr.copy()


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean CE of softmax(logits) against integer labels, fused for stability."""
    labels = np.asarray(labels, dtype=np.int64)
    probs = logits.softmax().clip_min(PROB_FLOOR)
    return -(probs.pick(labels).log().mean())


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------

@dataclass
class OptimizerConfig:
    kind: str = "sgd"              # sgd | adam
    lr: float = 1e-2
    momentum: float = 0.0
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 128

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


class Optimizer:
    def __init__(self, params, cfg: OptimizerConfig):
        self.params = list(params)
        self.cfg = cfg
        self.t = 0
        if cfg.kind == "adam":
            self.state = [(np.zeros_like(p.data), np.zeros_like(p.data))
                          for p in self.params]
        else:
            self.state = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        cfg = self.cfg
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            if not np.all(np.isfinite(p.grad)):
                raise DivergenceError("non-finite gradient during optimizer step")
            if cfg.kind == "adam":
                m, v = self.state[i]
                kernels.adam_update(p.data, p.grad, m, v, cfg.lr, cfg.beta1,
                                    cfg.beta2, cfg.epsilon, cfg.weight_decay,
                                    self.t)
            else:
                kernels.sgd_update(p.data, p.grad, self.state[i], cfg.lr,
                                   cfg.momentum, cfg.weight_decay)

    def zero_grad(self):
        zero_grads(self.params)


def sgd_defaults() -> OptimizerConfig:
    """Warm-up stage settings: SGD, lr 1e-2, momentum 0.9, weight decay 5e-4."""
    return OptimizerConfig(kind="sgd", lr=1e-2, momentum=0.9,
                           weight_decay=5e-4, batch_size=128)


def adam_defaults() -> OptimizerConfig:
    """Joint stage settings: Adam, lr 2e-4, beta1 0.5, beta2 0.999."""
    return OptimizerConfig(kind="adam", lr=2e-4, beta1=0.5, beta2=0.999,
                           batch_size=128)


# ---------------------------------------------------------------------------
# Finite-difference oracle
# ---------------------------------------------------------------------------

def finite_difference_grad(loss_fn, params, step=1e-5):
    """Central-difference gradient of ``loss_fn()`` w.r.t. each tensor in params.

    ``loss_fn`` must be a zero-argument callable returning a float and reading
    the current contents of the parameter tensors.  Returns a list of arrays
    shaped like the parameters.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_fn()
            flat[i] = orig - step
            lo = loss_fn()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * step)
        grads.append(g)
    return grads


# ---------------------------------------------------------------------------
# Checkpoint container: "CCGN" magic, u32 version, then per tensor
# u32 name length, utf-8 name, u32 ndim, u32 dims, row-major f64 payload.
# Everything little-endian.
# ---------------------------------------------------------------------------

_MAGIC = b"CCGN"
_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, tensors: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<I", d))
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path) -> dict:
    out = {}
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise CheckpointError(f"bad magic {magic!r}, expected {_MAGIC!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        while True:
            head = fh.read(4)
            if not head:
                break
            (nlen,) = struct.unpack("<I", head)
            name = fh.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack("<" + "I" * ndim, fh.read(4 * ndim))
            count = int(np.prod(shape)) if ndim else 1
            payload = fh.read(8 * count)
            if len(payload) != 8 * count:
                raise CheckpointError(f"truncated payload for tensor {name!r}")
            out[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    return out
