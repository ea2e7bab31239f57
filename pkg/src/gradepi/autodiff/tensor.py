"""Define-by-run reverse-mode automatic differentiation over numpy arrays.

A :class:`Tape` records one node per operation whose inputs require
gradients. Node ids are assigned in creation order, so parents always have
smaller ids than their children and :func:`backward` is a single reverse
sweep over the id range.
"""

from __future__ import annotations

import threading
from collections.abc import Callable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from .. import _core
from ..errors import DetachedTensor, DomainError, NonFiniteInput, NotScalar, ShapeMismatch

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


@dataclass
class Node:
    op_kind: str
    parent_ids: tuple[int | None, ...]
    backward: BackwardFn | None
    shape: tuple[int, ...]


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager to make it the active tape for the current
    thread; tensors created with ``requires_grad=True`` register on it.
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    @property
    def next_id(self) -> int:
        return len(self.nodes)

    def record(self, op_kind: str, parent_ids: tuple[int | None, ...],
               backward: BackwardFn | None, shape: tuple[int, ...]) -> int:
        node_id = len(self.nodes)
        self.nodes.append(Node(op_kind, parent_ids, backward, shape))
        return node_id

    def __len__(self) -> int:
        return len(self.nodes)

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc: object) -> None:
        stack = _stack()
        if stack and stack[-1] is self:
            stack.pop()


_local = threading.local()


def _stack() -> list[Tape]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = [Tape()]
    return stack


def active_tape() -> Tape:
    return _stack()[-1]


class Tensor:
    """Shaped float64 array, optionally tracked on a tape."""

    __slots__ = ("data", "node_id", "tape")
    __array_priority__ = 1000

    def __init__(self, data: Any, node_id: int | None = None, tape: Tape | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.node_id = node_id
        self.tape = tape

    @property
    def requires_grad(self) -> bool:
        return self.node_id is not None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def values(self) -> list[float]:
        return self.data.reshape(-1).tolist()

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        flag = f", node_id={self.node_id}" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=6)}{flag})"

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __neg__(self): return neg(self)
    def __pow__(self, other): return pow(self, other)
    def __matmul__(self, other): return matmul(self, other)

    def __getitem__(self, idx) -> "Tensor":
        if isinstance(idx, (int, np.integer)):
            return reshape(take(self, np.array([int(idx)])), ())
        return take(self, np.asarray(idx))

    def sum(self) -> "Tensor":
        return sum(self)


def _not_scalar(t: Tensor) -> float:
    raise NotScalar(f"tensor of shape {t.shape} is not a scalar")


def leaf(values: Any, requires_grad: bool = False) -> Tensor:
    """Create a tensor from ``values`` (copied), registering it if it requires grad."""
    data = np.array(values, dtype=np.float64, copy=True)
    if data.size == 0:
        raise ShapeMismatch("leaf values must be non-empty")
    if not np.all(np.isfinite(data)):
        raise NonFiniteInput("leaf values contain NaN or Inf")
    if not requires_grad:
        return Tensor(data)
    tape = active_tape()
    return Tensor(data, tape.record("leaf", (), None, data.shape), tape)


def constant(values: Any) -> Tensor:
    return values if isinstance(values, Tensor) else Tensor(values)


def _as_tensor(x: Any) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(op_kind: str, data: np.ndarray, parents: Sequence[Tensor],
          backward: BackwardFn) -> Tensor:
    tracked = [p for p in parents if p.node_id is not None]
    if not tracked:
        return Tensor(data)
    tape = tracked[0].tape
    for p in tracked[1:]:
        if p.tape is not tape:
            raise DetachedTensor(f"{op_kind}: inputs recorded on different tapes")
    parent_ids = tuple(p.node_id for p in parents)
    node_id = tape.record(op_kind, parent_ids, backward, data.shape)
    return Tensor(data, node_id, tape)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor, op_kind: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeMismatch(f"{op_kind}: shapes {a.shape} and {b.shape} do not broadcast") from exc


# --- elementwise binary ---------------------------------------------------

def add(a: Any, b: Any) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return _make("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a: Any, b: Any) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _make("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a: Any, b: Any) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _make("mul", ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a: Any, b: Any) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "div")
    ad, bd = a.data, b.data
    out = ad / bd
    return _make("div", out, (a, b),
                 lambda g: (_unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)))


def pow(base: Any, exponent: Any) -> Tensor:  # noqa: A001 - mirrors the op-kind name
    base, exponent = _as_tensor(base), _as_tensor(exponent)
    _broadcast_shape(base, exponent, "pow")
    x, y = base.data, exponent.data
    integral = np.all(y == np.round(y))
    if exponent.requires_grad and np.any(x <= 0):
        raise DomainError("pow: base must be positive when the exponent is differentiated")
    if not integral and np.any(x <= 0):
        raise DomainError("pow: non-positive base with non-integer exponent")
    if np.any((x == 0) & (y < 1)) and base.requires_grad:
        raise DomainError("pow: derivative undefined at base 0 for exponent < 1")
    out = np.power(x, y)

    def backward(g):
        gx = _unbroadcast(g * y * np.power(x, y - 1.0), x.shape)
        gy = None
        if exponent.requires_grad:
            gy = _unbroadcast(g * out * np.log(x), y.shape)
        return gx, gy

    return _make("pow", out, (base, exponent), backward)


# --- elementwise unary ----------------------------------------------------

def neg(x: Any) -> Tensor:
    x = _as_tensor(x)
    return _make("neg", -x.data, (x,), lambda g: (-g,))


def exp(x: Any) -> Tensor:
    x = _as_tensor(x)
    out = np.exp(x.data)
    return _make("exp", out, (x,), lambda g: (g * out,))


def expm1(x: Any) -> Tensor:
    x = _as_tensor(x)
    out = np.expm1(x.data)
    return _make("expm1", out, (x,), lambda g: (g * (out + 1.0),))


def log(x: Any) -> Tensor:
    x = _as_tensor(x)
    if np.any(x.data <= 0):
        raise DomainError("log of a non-positive value")
    xd = x.data
    return _make("log", np.log(xd), (x,), lambda g: (g / xd,))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def sigmoid(x: Any) -> Tensor:
    x = _as_tensor(x)
    out = _sigmoid(x.data)
    return _make("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def softplus(x: Any) -> Tensor:
    x = _as_tensor(x)
    xd = x.data
    return _make("softplus", np.logaddexp(0.0, xd), (x,), lambda g: (g * _sigmoid(xd),))


def tanh(x: Any) -> Tensor:
    x = _as_tensor(x)
    out = np.tanh(x.data)
    return _make("tanh", out, (x,), lambda g: (g * (1.0 - out * out),))


def clamp_min_smooth(x: Any, minimum: float = 0.0, sharpness: float = 50.0) -> Tensor:
    """Smooth lower clamp ``minimum + softplus(k (x - minimum)) / k``."""
    x = _as_tensor(x)
    z = sharpness * (x.data - minimum)
    out = minimum + np.logaddexp(0.0, z) / sharpness
    return _make("clamp_min_smooth", out, (x,), lambda g: (g * _sigmoid(z),))


def lgamma(x: Any) -> Tensor:
    """Log-Gamma; the backward pass uses the digamma function."""
    x = _as_tensor(x)
    if np.any(x.data <= 0):
        raise DomainError("lgamma requires strictly positive input")
    xd = x.data
    return _make("lgamma", _core.lgamma(xd), (x,), lambda g: (g * _core.digamma(xd),))


# --- reductions and structure ---------------------------------------------

def sum(x: Any) -> Tensor:  # noqa: A001 - mirrors the op-kind name
    x = _as_tensor(x)
    shape = x.shape
    return _make("sum", np.asarray(x.data.sum()), (x,),
                 lambda g: (np.broadcast_to(g, shape).copy(),))


def segment_sum(values: Any, segment_ids: Any, n_segments: int) -> Tensor:
    """Sum ``values`` grouped by ``segment_ids``; empty segments yield 0."""
    values = _as_tensor(values)
    ids = np.asarray(segment_ids, dtype=np.int64)
    if values.data.ndim != 1 or ids.shape != values.shape:
        raise ShapeMismatch(
            f"segment_sum: values {values.shape} and segment ids {ids.shape} must be equal 1-D"
        )
    if ids.size and (ids.min() < 0 or ids.max() >= n_segments):
        raise ShapeMismatch("segment_sum: segment id out of range")
    out = _core.segment_sum(values.data, ids, n_segments)
    return _make("segment_sum", out, (values,), lambda g: (g[ids],))


def take(x: Any, index: Any) -> Tensor:
    """Gather entries of a 1-D tensor; the backward pass is a segment sum."""
    x = _as_tensor(x)
    idx = np.asarray(index, dtype=np.int64)
    if x.data.ndim != 1:
        raise ShapeMismatch("take expects a 1-D tensor")
    n = x.shape[0]
    flat = idx.reshape(-1)
    return _make("take", x.data[idx], (x,),
                 lambda g: (_core.segment_sum(g.reshape(-1), flat, n),))


def broadcast(x: Any, shape: Sequence[int]) -> Tensor:
    x = _as_tensor(x)
    shape = tuple(shape)
    try:
        out = np.broadcast_to(x.data, shape).copy()
    except ValueError as exc:
        raise ShapeMismatch(f"cannot broadcast {x.shape} to {shape}") from exc
    src = x.shape
    return _make("broadcast", out, (x,), lambda g: (_unbroadcast(g, src),))


def reshape(x: Any, shape: Sequence[int]) -> Tensor:
    x = _as_tensor(x)
    src = x.shape
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeMismatch(f"cannot reshape {src} to {tuple(shape)}") from exc
    return _make("reshape", out.copy(), (x,), lambda g: (g.reshape(src),))


def concat(parts: Sequence[Any]) -> Tensor:
    tensors = [_as_tensor(p) for p in parts]
    flats = [t.data.reshape(-1) for t in tensors]
    bounds = np.cumsum([0] + [f.size for f in flats])
    shapes = [t.shape for t in tensors]

    def backward(g):
        return tuple(g[bounds[i]:bounds[i + 1]].reshape(shapes[i]) for i in range(len(shapes)))

    return _make("concat", np.concatenate(flats), tensors, backward)


def stack(parts: Sequence[Any]) -> Tensor:
    tensors = [_as_tensor(p) for p in parts]
    shape = tensors[0].shape
    if any(t.shape != shape for t in tensors):
        raise ShapeMismatch("stack: all parts must share a shape")
    return _make("stack", np.stack([t.data for t in tensors]), tensors,
                 lambda g: tuple(g[i] for i in range(len(tensors))))


def matmul(a: Any, b: Any) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        if bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        return g @ bd.T, ad.T @ g

    return _make("matmul", ad @ bd, (a, b), backward)


def history_mix(history: Sequence[Tensor], weights: Tensor, lags: Sequence[int]) -> Tensor:
    """``sum_k weights[lags[k]] * history[k]`` over equally shaped history rows."""
    weights = _as_tensor(weights)
    rows = [_as_tensor(h) for h in history]
    lag_idx = np.asarray(lags, dtype=np.int64)
    if not rows:
        raise ShapeMismatch("history_mix needs at least one row")
    mat = np.stack([r.data for r in rows])
    w = weights.data[lag_idx]
    out = w @ mat
    n_w = weights.shape[0]

    def backward(g):
        g_rows = [w[k] * g for k in range(len(rows))]
        g_w = _core.segment_sum(mat @ g, lag_idx, n_w)
        return (g_w, *g_rows)

    return _make("history_mix", out, (weights, *rows), backward)


def venue_exposure(infl: Any, kind_w: Any, e_agent: np.ndarray, e_venue: np.ndarray,
                   e_kind: np.ndarray, venue_open: np.ndarray, n_venues: int) -> Tensor:
    """Fused two-level segmented reduction over agent-venue edges.

    For each agent ``a``: ``sum over its edges e`` of
    ``kind_w[kind(e)] * open[venue(e)] * (pressure[venue(e)] - infl[a])`` where
    ``pressure[v]`` sums ``infl`` over the members of ``v``.
    """
    infl, kind_w = _as_tensor(infl), _as_tensor(kind_w)
    n_agents = infl.shape[0]
    n_kinds = kind_w.shape[0]
    exposure, pressure = _core.venue_exposure_forward(
        infl.data, kind_w.data, e_agent, e_venue, e_kind, venue_open, n_agents, n_venues
    )
    infl_d, kind_d = infl.data, kind_w.data

    def backward(g):
        return _core.venue_exposure_backward(
            g, infl_d, kind_d, pressure, e_agent, e_venue, e_kind, venue_open, n_venues, n_kinds
        )

    return _make("venue_exposure", exposure, (infl, kind_w), backward)


# --- backward -------------------------------------------------------------

class GradientMap(Mapping[int, np.ndarray]):
    """Gradients keyed by node id; recorded but unreachable nodes read as zero."""

    def __init__(self, tape: Tape, grads: dict[int, np.ndarray]):
        self._tape = tape
        self._grads = grads

    def __getitem__(self, key: "int | Tensor") -> np.ndarray:
        if isinstance(key, Tensor):
            if key.node_id is None:
                return np.zeros(key.shape)
            key = key.node_id
        if key in self._grads:
            return self._grads[key]
        if 0 <= key < len(self._tape.nodes):
            return np.zeros(self._tape.nodes[key].shape)
        raise KeyError(key)

    def wrt(self, tensor: Tensor) -> np.ndarray:
        return self[tensor]

    def __iter__(self) -> Iterator[int]:
        return iter(range(len(self._tape.nodes)))

    def __len__(self) -> int:
        return len(self._tape.nodes)


def backward(loss: Tensor, retain_intermediate: bool = True) -> GradientMap:
    """Reverse sweep from a scalar ``loss`` over its tape.

    With ``retain_intermediate=False`` only leaf gradients are kept, which
    bounds memory for long simulations.
    """
    if loss.size != 1:
        raise NotScalar(f"loss must be scalar, got shape {loss.shape}")
    if loss.node_id is None or loss.tape is None:
        raise DetachedTensor("loss is not recorded on a tape")
    tape = loss.tape
    nodes = tape.nodes
    grads: dict[int, np.ndarray] = {loss.node_id: np.ones(loss.shape)}
    kept: dict[int, np.ndarray] = {}
    for nid in range(loss.node_id, -1, -1):
        g = grads.pop(nid, None)
        if g is None:
            continue
        node = nodes[nid]
        if node.backward is None or retain_intermediate:
            kept[nid] = g
        if node.backward is None:
            continue
        for pid, pg in zip(node.parent_ids, node.backward(g)):
            if pid is None or pg is None:
                continue
            pg = np.asarray(pg, dtype=np.float64)
            if pid in grads:
                grads[pid] = grads[pid] + pg
            else:
                grads[pid] = pg
    return GradientMap(tape, kept)


def grad(loss: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
    gmap = backward(loss, retain_intermediate=False)
    return [gmap[t] for t in wrt]


OPS: dict[str, Callable[..., Tensor]] = {
    "add": add, "sub": sub, "mul": mul, "div": div, "neg": neg, "exp": exp, "expm1": expm1,
    "log": log, "pow": pow, "sigmoid": sigmoid, "softplus": softplus, "tanh": tanh,
    "sum": sum, "segment_sum": segment_sum, "broadcast": broadcast,
    "clamp_min_smooth": clamp_min_smooth, "lgamma": lgamma, "take": take, "reshape": reshape,
    "concat": concat, "stack": stack, "matmul": matmul,
}


def apply(op: str, *inputs: Any, **kwargs: Any) -> Tensor:
    """Apply the op-kind named ``op`` to ``inputs``."""
    try:
        fn = OPS[op]
    except KeyError:
        raise ValueError(f"unknown op kind {op!r}") from None
    return fn(*inputs, **kwargs)
