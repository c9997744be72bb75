"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tensor wraps an ndarray and, while grad recording is enabled, each op
stores a closure that routes the output gradient back to its inputs.
``backward`` walks the recorded graph in reverse topological order and
accumulates into ``.grad`` (summing over every use site of a tensor).

The op set is exactly what the interview model needs: matmul, elementwise
arithmetic, concat/split/reshape, embedding lookup, (masked) softmax,
log-softmax, sigmoid/relu/exp/log/sqrt, reductions, gather ops and layer
norm. No views are created; every op materialises its output.
"""
from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "AdamState",
    "ShapeError",
    "GradientCheckError",
    "no_grad",
    "grad_enabled",
    "adam_step",
    "gradient_check",
]

class _GradMode(threading.local):
    """Recording switch, one per thread: inference on a worker thread must
    not flip recording off underneath a training thread."""

    def __init__(self):
        self.enabled = True


_grad_mode = _GradMode()

# Denominator floor for relative errors in gradient_check; avoids blowup
# when both analytic and numeric gradients are ~0.
GRADCHECK_FLOOR = 1e-8


class ShapeError(ValueError):
    """Raised when operand shapes do not conform; names the shapes."""


class GradientCheckError(RuntimeError):
    """Raised when a non-finite value surfaces during a gradient check."""


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference mode)."""
    prev = _grad_mode.enabled
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = prev


def grad_enabled() -> bool:
    return _grad_mode.enabled


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_grad_shared")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._grad_shared = False

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- graph plumbing ------------------------------------------------------

    def detach(self) -> "Tensor":
        """Same values, cut off from the graph."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None
        self._grad_shared = False

    def _accumulate(self, g: np.ndarray) -> None:
        # First write aliases the caller's array; by reverse-topological
        # order that array is final when we see it, and a second write
        # reallocates before mutating, so sharing never corrupts anyone.
        if self.grad is None:
            if g.shape != self.data.shape:
                g = np.broadcast_to(g, self.data.shape)
            self.grad = g
            self._grad_shared = True
        elif self._grad_shared:
            self.grad = self.grad + g
            self._grad_shared = False
        else:
            self.grad += g

    def backward(self) -> None:
        """Populate ``.grad`` on every reachable tensor with requires_grad.

        Only valid on scalar outputs; gradient seeds at 1.0.
        """
        if self.data.size != 1:
            raise ShapeError(
                f"backward() requires a scalar, got shape {self.shape}"
            )
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


class Parameter:
    """Named trainable tensor tagged with the component it belongs to.

    The tag (generator | selector | manager) drives freeze/fine-tune
    partitioning: optimizer steps only touch parameters whose tag is in
    the trainable set, and frozen parameters never record gradients.
    """

    COMPONENTS = ("generator", "selector", "manager")

    __slots__ = ("name", "tensor", "component_tag")

    def __init__(self, name: str, data: np.ndarray, component_tag: str):
        if component_tag not in self.COMPONENTS:
            raise ValueError(f"unknown component tag {component_tag!r}")
        self.name = name
        self.tensor = Tensor(data, requires_grad=True)
        self.component_tag = component_tag

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self) -> np.ndarray | None:
        return self.tensor.grad

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, {self.tensor.shape}, {self.component_tag})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if _grad_mode.enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- arithmetic ---------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    try:
        data = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} do not broadcast")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    try:
        data = a.data / b.data
    except ValueError:
        raise ShapeError(f"div: shapes {a.shape} and {b.shape} do not broadcast")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 1 or b.ndim < 2:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} unsupported")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"matmul: inner dims differ for shapes {a.shape} and {b.shape}"
        )
    data = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            if a.ndim == 1:
                gb = np.outer(a.data, g)
            elif b.ndim == 2 and a.ndim > 2:
                # One flat GEMM instead of a stacked product + reduction.
                a2 = a.data.reshape(-1, a.shape[-1])
                g2 = g.reshape(-1, g.shape[-1])
                gb = a2.T @ g2
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
            b._accumulate(gb)

    return _make(data, (a, b), backward)


# -- nonlinearities -----------------------------------------------------------


def relu(x) -> Tensor:
    x = _wrap(x)
    data = np.maximum(x.data, 0.0)

    def backward(g):
        x._accumulate(g * (x.data > 0.0))

    return _make(data, (x,), backward)


def sigmoid(x) -> Tensor:
    x = _wrap(x)
    # Stable in both tails.
    data = np.where(
        x.data >= 0,
        1.0 / (1.0 + np.exp(-np.abs(x.data))),
        np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))),
    )

    def backward(g):
        x._accumulate(g * data * (1.0 - data))

    return _make(data, (x,), backward)


def exp(x) -> Tensor:
    x = _wrap(x)
    data = np.exp(x.data)

    def backward(g):
        x._accumulate(g * data)

    return _make(data, (x,), backward)


def log(x) -> Tensor:
    x = _wrap(x)
    data = np.log(x.data)

    def backward(g):
        x._accumulate(g / x.data)

    return _make(data, (x,), backward)


def sqrt(x) -> Tensor:
    x = _wrap(x)
    data = np.sqrt(x.data)

    def backward(g):
        x._accumulate(g * 0.5 / data)

    return _make(data, (x,), backward)


def maximum_scalar(x, floor: float) -> Tensor:
    """max(x, floor) elementwise; gradient passes where x > floor."""
    x = _wrap(x)
    data = np.maximum(x.data, floor)

    def backward(g):
        x._accumulate(g * (x.data > floor))

    return _make(data, (x,), backward)


def where(cond: np.ndarray, a, b) -> Tensor:
    """Elementwise select on a constant boolean mask."""
    a, b = _wrap(a), _wrap(b)
    cond = np.asarray(cond, dtype=bool)
    data = np.where(cond, a.data, b.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.where(cond, g, 0.0), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.where(cond, 0.0, g), b.shape))

    return _make(data, (a, b), backward)


# -- reductions ---------------------------------------------------------------


def tsum(x, axis=None, keepdims=False) -> Tensor:
    x = _wrap(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            x._accumulate(np.broadcast_to(g, x.shape).copy())
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(g, x.shape).copy())

    return _make(data, (x,), backward)


def tmean(x, axis=None, keepdims=False) -> Tensor:
    x = _wrap(x)
    data = x.data.mean(axis=axis, keepdims=keepdims)
    denom = x.size if axis is None else x.shape[axis]

    def backward(g):
        if axis is None:
            x._accumulate(np.broadcast_to(g / denom, x.shape).copy())
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(gg / denom, x.shape).copy())

    return _make(data, (x,), backward)


# -- softmax family -----------------------------------------------------------


def softmax(x, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis.

    ``mask`` (boolean, broadcastable to x) marks the visible support:
    excluded entries contribute exactly zero weight to numerator and
    denominator. Each row must keep at least one visible entry.
    """
    x = _wrap(x)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ShapeError(f"softmax: empty last axis in shape {x.shape}")
    if not np.all(np.isfinite(x.data)):
        raise ValueError("softmax: non-finite input")
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not mask.any(axis=-1).all():
            raise ShapeError("softmax: a row has no visible entries")
        z = np.where(mask, z, -np.inf)
    m = z.max(axis=-1, keepdims=True)
    e = np.exp(z - m)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        gx = out * (g - inner)
        if mask is not None:
            gx = np.where(mask, gx, 0.0)
        x._accumulate(gx)

    return _make(out, (x,), backward)


def log_softmax(x, mask: np.ndarray | None = None) -> Tensor:
    """log(softmax(x)) over the last axis, computed stably."""
    x = _wrap(x)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ShapeError(f"log_softmax: empty last axis in shape {x.shape}")
    z = x.data
    bmask = None
    if mask is not None:
        bmask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        z = np.where(bmask, z, -np.inf)
    m = z.max(axis=-1, keepdims=True)
    e = np.exp(z - m)
    s = e.sum(axis=-1, keepdims=True)
    out = z - (m + np.log(s))
    soft = e / s

    def backward(g):
        gx = g - soft * g.sum(axis=-1, keepdims=True)
        if bmask is not None:
            gx = np.where(bmask, gx, 0.0)
        x._accumulate(gx)

    return _make(out, (x,), backward)


# -- structural ops -----------------------------------------------------------


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        parts = np.split(g, splits, axis=axis)
        for t, p in zip(tensors, parts):
            if t.requires_grad:
                t._accumulate(p)

    return _make(data, tuple(tensors), backward)


def reshape(x, shape) -> Tensor:
    x = _wrap(x)
    data = x.data.reshape(shape)

    def backward(g):
        x._accumulate(g.reshape(x.shape))

    return _make(data, (x,), backward)


def swapaxes(x, a: int, b: int) -> Tensor:
    x = _wrap(x)
    data = np.swapaxes(x.data, a, b).copy()

    def backward(g):
        x._accumulate(np.swapaxes(g, a, b))

    return _make(data, (x,), backward)


def getitem(x, key) -> Tensor:
    """Basic (non-fancy) indexing; gradient scatters into the slice."""
    x = _wrap(x)
    data = x.data[key]
    if np.isscalar(data) or data.ndim == 0:
        data = np.asarray(data)

    def backward(g):
        full = np.zeros_like(x.data)
        full[key] = g
        x._accumulate(full)

    return _make(np.array(data, copy=True), (x,), backward)


def embedding(table, ids: np.ndarray) -> Tensor:
    """Row lookup: out[..., :] = table[ids[...], :]; grads scatter-add."""
    table = _wrap(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(
            f"embedding: id out of range for table with {table.shape[0]} rows"
        )
    data = table.data[ids]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        table._accumulate(gt)

    return _make(data, (table,), backward)


def gather_rows(x, idx: np.ndarray) -> Tensor:
    """out[b] = x[b, idx[b]] for a (B, T, ...) tensor; used for last-state reads."""
    x = _wrap(x)
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(x.shape[0])
    data = x.data[rows, idx]

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, (rows, idx), g)
        x._accumulate(full)

    return _make(data, (x,), backward)


def take_axis1(x, idx: np.ndarray) -> Tensor:
    """out[:, i] = x[:, idx[i]]; duplicate indices accumulate gradient."""
    x = _wrap(x)
    idx = np.asarray(idx, dtype=np.int64)
    data = x.data[:, idx]

    def backward(g):
        full = np.zeros_like(x.data)
        rows = np.arange(x.shape[0])[:, None]
        np.add.at(full, (rows, idx[None, :]), g)
        x._accumulate(full)

    return _make(data, (x,), backward)


def take_last_axis(x, idx: np.ndarray) -> Tensor:
    """out[...] = x[..., idx[...]]; idx matches x's leading shape."""
    x = _wrap(x)
    idx = np.asarray(idx, dtype=np.int64)
    data = np.take_along_axis(x.data, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, idx[..., None], g[..., None], axis=-1)
        x._accumulate(full)

    return _make(data, (x,), backward)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    x, gain, bias = _wrap(x), _wrap(gain), _wrap(bias)
    mu = tmean(x, axis=-1, keepdims=True)
    xc = sub(x, mu)
    var = tmean(mul(xc, xc), axis=-1, keepdims=True)
    inv = div(Tensor(1.0), sqrt(add(var, eps)))
    return add(mul(mul(xc, inv), gain), bias)


def cosine_matrix(x, floor: float = 1e-12) -> Tensor:
    """Pairwise cosine similarity of the rows of a (T, H) tensor.

    Zero-norm rows produce 0 similarity (norms floored, numerator 0).
    """
    x = _wrap(x)
    sq = tsum(mul(x, x), axis=-1, keepdims=True)
    norm = maximum_scalar(sqrt(sq), floor)
    unit = div(x, norm)
    return matmul(unit, swapaxes(unit, -1, -2))


def mean_pool(x, mask: np.ndarray) -> Tensor:
    """Mean of x over axis -2 restricted to mask-true positions."""
    x = _wrap(x)
    m = np.asarray(mask, dtype=np.float64)[..., None]
    total = tsum(mul(x, Tensor(m)), axis=-2)
    return div(total, Tensor(np.maximum(m.sum(axis=-2), 1.0)))


# -- optimizer ----------------------------------------------------------------


@dataclass
class AdamState:
    """Per-parameter Adam moments plus the shared step counter."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    state: AdamState,
    params: dict[str, Parameter],
    train_tags: set[str] | None = None,
    clip_norm: float | None = None,
) -> None:
    """One bias-corrected Adam update over the trainable parameters.

    Parameters whose component_tag is outside ``train_tags`` are frozen:
    their bytes are untouched and their (absent) grads are not consulted.
    A trainable parameter without a grad is an error. Grads are cleared
    after the update.
    """
    trainable = [
        p
        for p in params.values()
        if train_tags is None or p.component_tag in train_tags
    ]
    for p in trainable:
        if p.tensor.grad is None:
            raise ValueError(f"adam_step: missing grad on trainable {p.name!r}")
    if clip_norm is not None:
        total = float(
            np.sqrt(sum(float((p.tensor.grad**2).sum()) for p in trainable))
        )
        if total > clip_norm:
            scale = clip_norm / (total + 1e-12)
            for p in trainable:
                # grads may alias shared arrays; never scale in place
                p.tensor.grad = p.tensor.grad * scale
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for p in trainable:
        g = p.tensor.grad
        m = state.m.setdefault(p.name, np.zeros_like(p.data))
        v = state.v.setdefault(p.name, np.zeros_like(p.data))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data[...] -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
        p.tensor.grad = None


# -- gradient checking --------------------------------------------------------


def gradient_check(
    fn,
    params: dict[str, Parameter],
    epsilon: float = 1e-5,
    rng: np.random.Generator | None = None,
    samples_per_param: int = 2,
) -> float:
    """Compare analytic gradients of ``fn()`` against central differences.

    ``fn`` must be a deterministic closure over ``params`` returning a
    scalar Tensor. Returns the max over sampled coordinates of
    |analytic - numeric| / max(|analytic|, |numeric|, floor). Coordinate
    sampling is driven by ``rng`` so runs are seed-deterministic.
    """
    if epsilon <= 0:
        raise ValueError("gradient_check: epsilon must be positive")
    rng = rng or np.random.default_rng(0)
    for p in params.values():
        p.tensor.grad = None
    loss = fn()
    if not np.isfinite(loss.data):
        raise GradientCheckError("non-finite loss in gradient check")
    loss.backward()
    analytic = {}
    for name, p in params.items():
        if not p.tensor.requires_grad:
            continue
        g = p.tensor.grad
        if g is None:
            g = np.zeros_like(p.data)
        elif not np.all(np.isfinite(g)):
            raise GradientCheckError(f"non-finite gradient on parameter {name!r}")
        analytic[name] = g.copy()
        p.tensor.grad = None

    worst = 0.0
    for name, p in sorted(params.items()):
        if name not in analytic:
            continue
        flat = p.data.reshape(-1)
        n = flat.size
        k = min(samples_per_param, n)
        coords = rng.choice(n, size=k, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + epsilon
            with no_grad():
                up = fn().item()
            flat[c] = orig - epsilon
            with no_grad():
                down = fn().item()
            flat[c] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise GradientCheckError(
                    f"non-finite perturbed loss on parameter {name!r}"
                )
            numeric = (up - down) / (2.0 * epsilon)
            a = analytic[name].reshape(-1)[c]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), GRADCHECK_FLOOR)
            worst = max(worst, rel)
    return worst
