"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation that touches a tensor requiring gradients records its inputs
and a closure that maps the output gradient onto them.  ``Tensor.backward``
walks that trace in reverse topological order.  Recurrent cells are fused
primitives with hand-written local derivatives, so a whole sequence costs
one graph node instead of several hundred.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

from ..errors import ConfigurationError, NumericError, UsageError
from . import _kernels

_grad_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording in the current thread."""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (), op: str = ""):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = _parents
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = op

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    # gradient plumbing

    def _accumulate(self, g: np.ndarray, owned: bool = False) -> None:
        """Add ``g`` into ``self.grad``.

        ``owned`` marks a freshly allocated array nobody else references, which
        may then be adopted as the buffer instead of copied.
        """
        if not self.requires_grad:
            return
        if self.grad is None:
            if owned:
                self.grad = g.reshape(self.data.shape)
            else:
                self.grad = np.array(g, dtype=np.float64, copy=True).reshape(self.data.shape)
        else:
            self.grad += g

    def _accumulate_at(self, index, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad[index] += g

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every leaf's ``grad``.

        Leaf gradients are added to, not overwritten; call
        ``NetworkParams.zero_grad`` between steps.  The trace is released
        afterwards, so a second call on the same loss raises.
        """
        if self.data.size != 1:
            raise UsageError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad or self._backward is None:
            raise UsageError("no recorded forward pass behind this tensor; nothing to differentiate")
        order = _topological_order(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        for node in order:
            if node._backward is not None:
                node._backward = None
                node._parents = ()
                node.grad = None if node is not self else node.grad

    # operator sugar

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def tanh(self):
        return tanh(self)

    def exp(self):
        return exp(self)

    def square(self):
        return square(self)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True, _parents=tuple(parents), op=op)
        out._backward = backward
        return out
    return Tensor(data, op=op)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def check_finite(t: Tensor, where: str) -> Tensor:
    if not np.isfinite(t.data).all():
        raise NumericError(f"non-finite values produced by {where}")
    return t


# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        a._accumulate(_unbroadcast(g * b.data, a.shape))
        b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), backward, "mul")


def square(a: Tensor) -> Tensor:
    def backward(g):
        a._accumulate(2.0 * a.data * g)

    return _result(a.data * a.data, (a,), backward, "square")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def backward(g):
        a._accumulate(g * out)

    return _result(out, (a,), backward, "exp")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def backward(g):
        a._accumulate(g * mask)

    return _result(a.data * mask, (a,), backward, "relu")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)

    def backward(g):
        a._accumulate(g * out * (1.0 - out))

    return _result(out, (a,), backward, "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def backward(g):
        a._accumulate(g * (1.0 - out * out))

    return _result(out, (a,), backward, "tanh")


# reductions and shape


def tsum(a: Tensor, axis=None) -> Tensor:
    out = a.data.sum(axis=axis)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape))

    return _result(out, (a,), backward, "sum")


def tmean(a: Tensor, axis=None) -> Tensor:
    count = a.data.size if axis is None else a.shape[axis]
    out = a.data.mean(axis=axis)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g / count, a.shape))

    return _result(out, (a,), backward, "mean")


def reshape(a: Tensor, shape) -> Tensor:
    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _result(a.data.reshape(shape), (a,), backward, "reshape")


def getitem(a: Tensor, index) -> Tensor:
    """Basic (slice/integer) indexing only; fancy indices would alias."""

    def backward(g):
        a._accumulate_at(index, g)

    return _result(a.data[index], (a,), backward, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            t._accumulate(g[tuple(index)])

    return _result(out, tensors, backward, "concat")


def pick(a: Tensor, index: np.ndarray) -> Tensor:
    """Row-wise gather: ``out[i] = a[i, index[i]]`` for a 2-D ``a``."""
    index = np.asarray(index, dtype=np.int64)
    rows = np.arange(a.shape[0])

    def backward(g):
        full = np.zeros_like(a.data)
        full[rows, index] = g
        a._accumulate(full)

    return _result(a.data[rows, index], (a,), backward, "pick")


# linear algebra


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ConfigurationError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T, owned=True)
        if b.requires_grad:
            b._accumulate(a.data.T @ g, owned=True)

    return _result(a.data @ b.data, (a, b), backward, "matmul")


def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map over the last axis: ``x[..., in] @ w[in, out] + b[out]``."""
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ConfigurationError(f"dense shape mismatch: input {x.shape} vs weight {w.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, w.shape[0])
    out = x2 @ w.data
    if b is not None:
        out += b.data
    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        g2 = g.reshape(-1, w.shape[1])
        if w.requires_grad:
            w._accumulate(x2.T @ g2, owned=True)
        if b is not None and b.requires_grad:
            b._accumulate(g2.sum(axis=0), owned=True)
        if x.requires_grad:
            x._accumulate((g2 @ w.data.T).reshape(x.shape), owned=True)

    return _result(out.reshape(lead + (w.shape[1],)), parents, backward, "dense")


def conv1d_output_length(length: int, kernel: int, stride: int) -> int:
    if stride < 1:
        raise ConfigurationError(f"stride must be >= 1, got {stride}")
    if kernel > length:
        raise ConfigurationError(f"kernel length {kernel} exceeds input length {length}")
    return (length - kernel) // stride + 1


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1) -> Tensor:
    """Valid cross-correlation of ``x[batch, len, ch]`` with ``w[k, ch, filters]``."""
    batch, length, channels = x.shape
    kernel, w_channels, filters = w.shape
    if w_channels != channels:
        raise ConfigurationError(f"conv1d expects {w_channels} input channels, got {channels}")
    out_len = conv1d_output_length(length, kernel, stride)
    taps = (np.arange(out_len) * stride)[:, None] + np.arange(kernel)[None, :]
    cols = x.data[:, taps, :].reshape(batch * out_len, kernel * channels)
    w2 = w.data.reshape(kernel * channels, filters)
    out = (cols @ w2).reshape(batch, out_len, filters)
    if b is not None:
        out = out + b.data
    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        g2 = g.reshape(batch * out_len, filters)
        if w.requires_grad:
            w._accumulate((cols.T @ g2).reshape(w.shape), owned=True)
        if b is not None and b.requires_grad:
            b._accumulate(g2.sum(axis=0), owned=True)
        if x.requires_grad:
            gcols = (g2 @ w2.T).reshape(batch, out_len, kernel, channels)
            gx = np.zeros_like(x.data)
            for k in range(kernel):
                gx[:, taps[:, k], :] += gcols[:, :, k, :]
            x._accumulate(gx, owned=True)

    return _result(out, parents, backward, "conv1d")


# fused recurrent cells
#
# ``lstm_cell``/``gru_cell`` expose one step as a graph node using the numpy
# step functions below.  ``lstm_sequence``/``gru_sequence`` run the same
# arithmetic over a whole sequence in compiled kernels; layers use those.


def _lstm_forward(xw, h, c, u):
    hidden = u.shape[0]
    z = xw + h @ u
    i = _sigmoid(z[:, :hidden])
    f = _sigmoid(z[:, hidden:2 * hidden])
    cand = np.tanh(z[:, 2 * hidden:3 * hidden])
    o = _sigmoid(z[:, 3 * hidden:])
    c_new = f * c + i * cand
    tc = np.tanh(c_new)
    return o * tc, c_new, (h, c, i, f, cand, o, tc)


def _lstm_backward(dh, dc, cache, u):
    h, c, i, f, cand, o, tc = cache
    dc = dc + dh * o * (1.0 - tc * tc)
    dz = np.concatenate([
        dc * cand * i * (1.0 - i),
        dc * c * f * (1.0 - f),
        dc * i * (1.0 - cand * cand),
        dh * tc * o * (1.0 - o),
    ], axis=1)
    return dz, dz @ u.T, dc * f, h.T @ dz


def _gru_forward(xw, h, u):
    hidden = u.shape[0]
    u_zr = u[:, :2 * hidden]
    zr = _sigmoid(xw[:, :2 * hidden] + h @ u_zr)
    z = zr[:, :hidden]
    r = zr[:, hidden:]
    rh = r * h
    n = np.tanh(xw[:, 2 * hidden:] + rh @ u[:, 2 * hidden:])
    return (1.0 - z) * n + z * h, (h, z, r, rh, n)


def _gru_backward(g, cache, u):
    h, z, r, rh, n = cache
    hidden = u.shape[0]
    u_zr = u[:, :2 * hidden]
    dn_pre = g * (1.0 - z) * (1.0 - n * n)
    drh = dn_pre @ u[:, 2 * hidden:].T
    dzr = np.concatenate([g * (h - n) * z * (1.0 - z), drh * h * r * (1.0 - r)], axis=1)
    dxw = np.concatenate([dzr, dn_pre], axis=1)
    dh = g * z + drh * r + dzr @ u_zr.T
    du = np.concatenate([h.T @ dzr, rh.T @ dn_pre], axis=1)
    return dxw, dh, du


def _check_recurrent(kind: str, xw: Tensor, state: Tensor, u: Tensor, gates: int, packed: int):
    hidden = u.shape[0]
    if u.ndim != 2 or u.shape[1] != gates * hidden:
        raise ConfigurationError(f"{kind}: recurrent matrix must be (H, {gates}H), got {u.shape}")
    if xw.shape[-1] != gates * hidden or state.ndim != 2 or state.shape[1] != packed * hidden:
        raise ConfigurationError(
            f"{kind} width mismatch: projected input {xw.shape}, state {state.shape}, hidden {hidden}")
    if xw.shape[0] != state.shape[0]:
        raise ConfigurationError(f"{kind}: batch mismatch {xw.shape[0]} vs {state.shape[0]}")


def lstm_cell(xw: Tensor, hc: Tensor, u: Tensor) -> Tensor:
    """One LSTM step.

    ``xw`` is the input projection plus bias (batch, 4H) in gate order
    input, forget, candidate, output; ``hc`` packs ``[h, c]`` as (batch, 2H);
    ``u`` is the recurrent matrix (H, 4H).  Returns the packed ``[h', c']``.
    """
    _check_recurrent("lstm_cell", xw, hc, u, 4, 2)
    hidden = u.shape[0]
    h_new, c_new, cache = _lstm_forward(xw.data, hc.data[:, :hidden], hc.data[:, hidden:], u.data)

    def backward(g):
        dz, dh, dc, du = _lstm_backward(g[:, :hidden], g[:, hidden:], cache, u.data)
        xw._accumulate(dz)
        u._accumulate(du)
        hc._accumulate(np.concatenate([dh, dc], axis=1))

    return _result(np.concatenate([h_new, c_new], axis=1), (xw, hc, u), backward, "lstm_cell")


def gru_cell(xw: Tensor, h: Tensor, u: Tensor) -> Tensor:
    """One GRU step with the reset gate applied before the recurrent product.

    ``xw`` (batch, 3H) holds input projection plus bias in gate order update,
    reset, candidate; ``u`` is (H, 3H).  ``h' = (1 - z) * n + z * h``.
    """
    _check_recurrent("gru_cell", xw, h, u, 3, 1)
    h_new, cache = _gru_forward(xw.data, h.data, u.data)

    def backward(g):
        dxw, dh, du = _gru_backward(g, cache, u.data)
        xw._accumulate(dxw)
        u._accumulate(du)
        h._accumulate(dh)

    return _result(h_new, (xw, h, u), backward, "gru_cell")


def lstm_sequence(xw: Tensor, u: Tensor, reverse: bool = False) -> Tensor:
    """Run LSTM steps over ``xw[batch, length, 4H]`` from a zero state.

    Returns the final hidden state (batch, H).  With ``reverse`` the sequence
    is consumed last-to-first.
    """
    hidden = u.shape[0]
    if xw.ndim != 3 or xw.shape[2] != 4 * hidden or u.shape[1] != 4 * hidden:
        raise ConfigurationError(f"lstm_sequence: projected input {xw.shape} vs recurrent {u.shape}")
    hs, cs, gates, tcs = _kernels.lstm_seq_forward(xw.data, u.data, reverse)

    def backward(g):
        dxw, du = _kernels.lstm_seq_backward(
            np.ascontiguousarray(g), xw.shape, u.data, hs, cs, gates, tcs, reverse)
        xw._accumulate(dxw, owned=True)
        u._accumulate(du, owned=True)

    return _result(hs[-1], (xw, u), backward, "lstm_sequence")


def gru_sequence(xw: Tensor, u: Tensor, reverse: bool = False) -> Tensor:
    """Run GRU steps over ``xw[batch, length, 3H]`` from a zero state."""
    hidden = u.shape[0]
    if xw.ndim != 3 or xw.shape[2] != 3 * hidden or u.shape[1] != 3 * hidden:
        raise ConfigurationError(f"gru_sequence: projected input {xw.shape} vs recurrent {u.shape}")
    hs, zs, rs, ns = _kernels.gru_seq_forward(xw.data, u.data, reverse)

    def backward(g):
        dxw, du = _kernels.gru_seq_backward(
            np.ascontiguousarray(g), xw.shape, u.data, hs, zs, rs, ns, reverse)
        xw._accumulate(dxw, owned=True)
        u._accumulate(du, owned=True)

    return _result(hs[-1], (xw, u), backward, "gru_sequence")
