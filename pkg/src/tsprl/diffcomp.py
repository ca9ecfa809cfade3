"""A small reverse-mode autodiff engine over numpy arrays.

Only the operations the policy network needs are provided. Broadcasting is
limited to a scalar or a row vector against a matrix. Gradients of
parameters accumulate (``+=``) across backward passes until
:meth:`ParameterStore.zero_grad` is called.
"""
from __future__ import annotations

import contextlib
import math
from collections import OrderedDict
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

MASK_FILL = -1e9

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording the graph (inference only)."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "is_param", "name")

    def __init__(self, value, parents: Sequence["Tensor"] = (), backward_fn=None,
                 is_param: bool = False, name: Optional[str] = None):
        value = np.asarray(value)
        # long double passes through so finite differences can run in extended precision
        self.value = value if value.dtype == np.longdouble else value.astype(np.float64, copy=False)
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.is_param = is_param
        self.name = name
        self.grad = np.zeros_like(self.value) if is_param else None

    @property
    def shape(self):
        return self.value.shape

    @property
    def requires_grad(self) -> bool:
        return self.is_param or bool(self.parents)

    def item(self) -> float:
        return float(self.value.reshape(-1)[0]) if self.value.size == 1 else float(self.value)

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value, parents, backward_fn) -> Tensor:
    parents = tuple(parents)
    if not _grad_enabled or not any(p.requires_grad for p in parents):
        return Tensor(value)
    return Tensor(value, parents, backward_fn)


def _check_broadcast(a: np.ndarray, b: np.ndarray, op: str):
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return
    if b.ndim == 2 and a.ndim == 1 and b.shape[1] == a.shape[0]:
        return
    raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    if grad.shape == shape:
        return grad
    size = int(np.prod(shape)) if shape else 1
    if size == 1:
        return np.full(shape, grad.sum())
    # row vector against a matrix
    return grad.sum(axis=0).reshape(shape)


# -- operations -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast(a.value, b.value, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.value + b.value, (a, b), backward)


def neg(a) -> Tensor:
    a = _wrap(a)
    return _node(-a.value, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    """Element-wise product."""
    a, b = _wrap(a), _wrap(b)
    _check_broadcast(a.value, b.value, "mul")
    av, bv = a.value, b.value

    def backward(g):
        return _unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)

    return _node(av * bv, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    av, bv = a.value, b.value
    if av.ndim not in (1, 2) or bv.ndim not in (1, 2) or av.shape[-1] != bv.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {av.shape} and {bv.shape}")

    def backward(g):
        if av.ndim == 2 and bv.ndim == 2:
            return g @ bv.T, av.T @ g
        if av.ndim == 1 and bv.ndim == 2:
            return bv @ g, np.outer(av, g)
        if av.ndim == 2:
            return np.outer(g, bv), av.T @ g
        return g * bv, g * av

    return _node(av @ bv, (a, b), backward)


def tanh(a) -> Tensor:
    a = _wrap(a)
    out = np.tanh(a.value)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a) -> Tensor:
    a = _wrap(a)
    pos = a.value > 0
    return _node(np.where(pos, a.value, 0.0), (a,), lambda g: (g * pos,))


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


def log(a) -> Tensor:
    a = _wrap(a)
    av = a.value
    return _node(np.log(av), (a,), lambda g: (g / av,))


def total(a) -> Tensor:
    """Sum of all entries."""
    a = _wrap(a)
    return _node(a.value.sum(), (a,), lambda g: (np.full(a.shape, g),))


def mean(a) -> Tensor:
    a = _wrap(a)
    k = a.value.size
    return _node(a.value.mean(), (a,), lambda g: (np.full(a.shape, g / k),))


def take(a, index) -> Tensor:
    """Select an entry or row (plain numpy indexing)."""
    a = _wrap(a)

    def backward(g):
        out = np.zeros(a.shape)
        np.add.at(out, index, g)
        return (out,)

    return _node(a.value[index], (a,), backward)


def _masked_logits(u: np.ndarray, mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != u.shape or u.ndim != 1:
        raise ValueError(f"mask shape {mask.shape} does not match logits {u.shape}")
    if mask.all():
        raise ValueError("every entry is masked")
    return np.where(mask, u + MASK_FILL, u)


def masked_softmax(u, mask) -> Tensor:
    """Softmax over a vector where ``mask[j]`` True means entry ``j`` is excluded.

    Masked entries come out exactly 0 (``exp`` of the fill value underflows).
    """
    u = _wrap(u)
    z = _masked_logits(u.value, mask)
    e = np.exp(z - z.max())
    p = e / e.sum()

    def backward(g):
        return (p * (g - np.dot(g, p)),)

    return _node(p, (u,), backward)


def masked_log_softmax(u, mask) -> Tensor:
    u = _wrap(u)
    z = _masked_logits(u.value, mask)
    shift = z - z.max()
    lse = np.log(np.exp(shift).sum())
    out = shift - lse
    p = np.exp(out)

    def backward(g):
        return (g - p * g.sum(),)

    return _node(out, (u,), backward)


# -- backward pass ----------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor, scale: float = 1.0) -> None:
    """Accumulate ``scale * d root / d param`` into every reachable parameter."""
    if root.value.size != 1:
        raise ValueError(f"gradient root must be scalar, got shape {root.shape}")
    grads = {id(root): np.full(root.shape, float(scale))}
    for node in reversed(_topo_order(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_param:
            node.grad += g
        if node.backward_fn is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# -- parameters -------------------------------------------------------------

class ParameterStore:
    """Named trainable tensors, each with a same-shape gradient accumulator."""

    def __init__(self):
        self._slots: "OrderedDict[str, Tensor]" = OrderedDict()

    def add(self, name: str, value) -> Tensor:
        if name in self._slots:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), is_param=True, name=name)
        self._slots[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._slots[name]

    def __contains__(self, name: str) -> bool:
        return name in self._slots

    def __iter__(self):
        return iter(self._slots)

    def __len__(self):
        return len(self._slots)

    def items(self):
        return self._slots.items()

    def zero_grad(self) -> None:
        for t in self._slots.values():
            t.grad[...] = 0.0

    def values(self) -> dict[str, np.ndarray]:
        return {k: t.value.copy() for k, t in self._slots.items()}

    def grads(self) -> dict[str, np.ndarray]:
        return {k: t.grad.copy() for k, t in self._slots.items()}

    def load(self, values: dict[str, np.ndarray]) -> None:
        missing = set(self._slots) ^ set(values)
        if missing:
            raise ValueError(f"parameter names differ: {sorted(missing)}")
        for k, v in values.items():
            v = np.asarray(v, dtype=np.float64)
            if v.shape != self._slots[k].shape:
                raise ValueError(f"shape mismatch for {k}: {v.shape} vs {self._slots[k].shape}")
            self._slots[k].value = v.copy()
            self._slots[k].grad = np.zeros_like(v)

    def copy(self) -> "ParameterStore":
        out = ParameterStore()
        for k, t in self._slots.items():
            out.add(k, t.value)
        return out

    def grad_norm(self) -> float:
        return math.sqrt(sum(float((t.grad ** 2).sum()) for t in self._slots.values()))


def init_parameters(spec: Iterable[tuple], seed) -> ParameterStore:
    """Build a store from ``(name, shape)`` or ``(name, shape, "zeros")`` entries.

    Weights are uniform in ``±1/sqrt(fan_in)`` with ``fan_in = shape[0]``.
    """
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    for entry in spec:
        name, shape = entry[0], tuple(entry[1])
        kind = entry[2] if len(entry) > 2 else "uniform"
        if any(s <= 0 for s in shape):
            raise ValueError(f"parameter {name!r} has non-positive shape {shape}")
        if name in store:
            raise ValueError(f"duplicate parameter name {name!r}")
        if kind == "zeros":
            value = np.zeros(shape)
        elif kind == "uniform":
            bound = 1.0 / math.sqrt(shape[0])
            value = rng.uniform(-bound, bound, size=shape)
        else:
            raise ValueError(f"unknown init kind {kind!r}")
        store.add(name, value)
    return store


# -- evaluation helpers -----------------------------------------------------

Graph = Callable[[ParameterStore, object], Tensor]


def evaluate_with_gradients(graph: Graph, inputs, params: ParameterStore):
    """Run ``graph(params, inputs)`` and return ``(output, {name: gradient})``."""
    params.zero_grad()
    root = graph(params, inputs)
    backward(root)
    return root.item(), params.grads()


def finite_difference_check(graph: Graph, inputs, params: ParameterStore, probe_count: int = 20,
                            epsilon: float = 1e-5, seed=0,
                            grads: Optional[dict[str, np.ndarray]] = None, floor: float = 1e-8,
                            extended: bool = True) -> float:
    """Worst relative error between reverse-mode and central-difference gradients.

    ``grads`` overrides the analytic side (useful to plant a fault). With
    ``extended`` the difference quotient is evaluated on long-double copies of
    the parameters: in float64 its round-off is about ``|f| * 1e-16 / epsilon``,
    which swamps entries whose gradient is tiny next to ``|f|``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if grads is None:
        _, grads = evaluate_with_gradients(graph, inputs, params)
    rng = np.random.default_rng(seed)
    slots = [(name, idx) for name, t in params.items() for idx in np.ndindex(t.shape)]
    picks = rng.choice(len(slots), size=min(probe_count, len(slots)), replace=False)
    dtype = np.longdouble if extended else np.float64
    saved = {name: t.value for name, t in params.items()}
    worst = 0.0
    try:
        for name, t in params.items():
            t.value = saved[name].astype(dtype)
        with no_grad():
            for k in picks:
                name, idx = slots[k]
                value = params[name].value
                orig = value[idx]
                value[idx] = orig + dtype(epsilon)
                f_plus = graph(params, inputs).value.reshape(-1)[0]
                value[idx] = orig - dtype(epsilon)
                f_minus = graph(params, inputs).value.reshape(-1)[0]
                value[idx] = orig
                numeric = float((f_plus - f_minus) / (2 * dtype(epsilon)))
                analytic = float(grads[name][idx])
                denom = max(abs(analytic), abs(numeric), floor)
                worst = max(worst, abs(analytic - numeric) / denom)
    finally:
        for name, t in params.items():
            t.value = saved[name]
    return worst


# -- optimizers -------------------------------------------------------------

def clip_grad_norm(params: ParameterStore, max_norm: float) -> float:
    norm = params.grad_norm()
    if max_norm is not None and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for _, t in params.items():
            t.grad *= scale
    return norm


class SGD:
    """Plain gradient descent; ``maximize=True`` climbs the gradient instead."""

    def __init__(self, params: ParameterStore, lr: float, maximize: bool = False):
        self.params = params
        self.lr = lr
        self.sign = 1.0 if maximize else -1.0

    def step(self) -> None:
        for _, t in self.params.items():
            t.value += self.sign * self.lr * t.grad


class Adam:
    def __init__(self, params: ParameterStore, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 maximize: bool = False):
        self.params = params
        self.sign = 1.0 if maximize else -1.0
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v.value) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.value) for k, v in params.items()}

    def step(self) -> None:
        b1, b2 = self.betas
        self.t += 1
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * p.grad
            self.v[k] = b2 * self.v[k] + (1 - b2) * p.grad * p.grad
            p.value += self.sign * self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
