"""Minimal reverse-mode differentiation over numpy arrays (real or complex).

Gradient convention: for a real scalar loss ``L`` and a complex entry
``z = a + ib`` the stored gradient is ``dL/da + i dL/db``.  A step along
``-grad`` therefore decreases ``L``; ``|w|**2`` has gradient ``2 w``.

Under this convention a holomorphic map ``z = f(w)`` back-propagates as
``g_w = conj(f'(w)) * g_z``; real-valued inputs keep the real part.
"""
from __future__ import annotations

import contextlib

import numpy as np

from ._errors import ContractError, LbccnError, ShapeError

_GRAD_ENABLED = True
_BRANCH_TRACE = None


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


@contextlib.contextmanager
def trace_branches():
    """Collect the branch pattern of every piecewise op evaluated in the block.

    Two evaluations with equal traces took the same side of every kink, so
    the function is smooth along the segment between them.
    """
    global _BRANCH_TRACE
    prev = _BRANCH_TRACE
    _BRANCH_TRACE = []
    try:
        yield _BRANCH_TRACE
    finally:
        _BRANCH_TRACE = prev


def note_branch(pattern):
    if _BRANCH_TRACE is not None:
        _BRANCH_TRACE.append(np.packbits(np.asarray(pattern, dtype=bool)))


class DiffTensor:
    """Array value plus a lazily allocated gradient and a tape link."""

    __array_priority__ = 1000
    __slots__ = ("value", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"DiffTensor{tag}(shape={self.shape}, dtype={self.dtype})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.value)

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "DiffTensor":
        return DiffTensor(self.value)

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self):
        return self.value.item()

    def backward(self):
        backward(self)

    # arithmetic
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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def conj(self):
        return conj(self)

    @property
    def real(self):
        return real(self)

    @property
    def imag(self):
        return imag(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def as_tensor(x) -> DiffTensor:
    return x if isinstance(x, DiffTensor) else DiffTensor(x)


def _record(value, parents, backward_fn) -> DiffTensor:
    out = DiffTensor(value)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _fit(g: np.ndarray, ref: DiffTensor) -> np.ndarray:
    """Reduce a broadcast gradient to ``ref``'s shape and real/complex kind."""
    shape = ref.shape
    if g.shape != shape:
        extra = g.ndim - len(shape)
        if extra > 0:
            g = g.sum(axis=tuple(range(extra)))
        axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
    if not ref.is_complex and np.iscomplexobj(g):
        g = g.real
    return g


def backward(loss: DiffTensor):
    """Populate ``.grad`` of every leaf reachable from ``loss``."""
    if not isinstance(loss, DiffTensor):
        raise ContractError("backward() needs a DiffTensor")
    if loss.value.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")
    if np.iscomplexobj(loss.value):
        raise ContractError("loss must be real-valued")
    if not loss.requires_grad:
        return

    order = []
    state = {}  # id -> 1 visiting, 2 done
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        key = id(node)
        if processed:
            state[key] = 2
            order.append(node)
            continue
        mark = state.get(key)
        if mark == 2:
            continue
        if mark == 1:
            raise LbccnError("cycle detected in differentiation tape")
        state[key] = 1
        stack.append((node, True))
        for parent in node._parents:
            pmark = state.get(id(parent))
            if pmark == 1:
                raise LbccnError("cycle detected in differentiation tape")
            if pmark is None and parent.requires_grad:
                stack.append((parent, False))

    grads = {id(loss): np.ones_like(loss.value, dtype=np.float64)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            pg = _fit(np.asarray(pg), parent)
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.value - b.value, (a, b), lambda g: (g, -g))


def neg(a):
    a = as_tensor(a)
    return _record(-a.value, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    return _record(av * bv, (a, b),
                   lambda g: (np.conj(bv) * g if a.requires_grad else None,
                              np.conj(av) * g if b.requires_grad else None))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    out = av / bv

    def bw(g):
        ga = g / np.conj(bv) if a.requires_grad else None
        gb = -np.conj(out / bv) * g if b.requires_grad else None
        return ga, gb
    return _record(out, (a, b), bw)


def conj(a):
    a = as_tensor(a)
    return _record(np.conj(a.value), (a,), lambda g: (np.conj(g),))


def real(a):
    a = as_tensor(a)
    return _record(np.real(a.value).copy(), (a,), lambda g: (g,))


def imag(a):
    a = as_tensor(a)
    return _record(np.imag(a.value).copy(), (a,), lambda g: (1j * g,))


def tabs(a):
    """Modulus; the gradient at exactly zero is taken as zero."""
    a = as_tensor(a)
    av = a.value
    r = np.abs(av)
    note_branch(r > 0 if np.iscomplexobj(av) else av > 0)

    def bw(g):
        if np.iscomplexobj(av):
            safe = np.where(r > 0, r, 1.0)
            return (g * np.where(r > 0, av / safe, 0),)
        return (g * np.sign(av),)
    return _record(r, (a,), bw)


def abs2(a):
    a = as_tensor(a)
    av = a.value
    return _record((av.real ** 2 + av.imag ** 2) if np.iscomplexobj(av) else av * av,
                   (a,), lambda g: (2.0 * g * av,))


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.value)
    return _record(out, (a,), lambda g: (g / (2.0 * out),))


def log10(a):
    a = as_tensor(a)
    av = a.value
    return _record(np.log10(av), (a,), lambda g: (g / (av * np.log(10.0)),))


def arctan(a):
    a = as_tensor(a)
    av = a.value
    return _record(np.arctan(av), (a,), lambda g: (g / (1.0 + av * av),))


def where(mask, a, b):
    mask = np.asarray(mask, dtype=bool)
    note_branch(mask)
    a, b = as_tensor(a), as_tensor(b)
    return _record(np.where(mask, a.value, b.value), (a, b),
                   lambda g: (np.where(mask, g, 0), np.where(mask, 0, g)))


# ---------------------------------------------------------------- reductions / shape

def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    shape = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)
    return _record(a.value.sum(axis=axis, keepdims=keepdims), (a,), bw)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        count = a.value.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[i] for i in axes]))
    return tsum(a, axis, keepdims) * (1.0 / count)


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    return _record(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes=None):
    a = as_tensor(a)
    inv = None if axes is None else tuple(np.argsort(axes))
    return _record(np.transpose(a.value, axes), (a,), lambda g: (np.transpose(g, inv),))


def _is_fancy(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def getitem(a, idx):
    a = as_tensor(a)
    fancy = _is_fancy(idx)

    def bw(g):
        buf = np.zeros(a.shape, dtype=np.result_type(g, a.value))
        if fancy:
            np.add.at(buf, idx, g)
        else:
            buf[idx] = g
        return (buf,)
    return _record(a.value[idx], (a,), bw)


def pad(a, pad_width):
    """Zero padding; ``pad_width`` as for :func:`numpy.pad`."""
    a = as_tensor(a)
    crop = tuple(slice(lo, lo + n) for (lo, _), n in zip(pad_width, a.shape))
    return _record(np.pad(a.value, pad_width), (a,), lambda g: (g[crop],))


def concatenate(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            out.append(g[tuple(sl)])
        return tuple(out)
    return _record(np.concatenate([t.value for t in tensors], axis=axis), tensors, bw)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    axis = axis % (tensors[0].ndim + 1)
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concatenate(expanded, axis=axis)


def einsum(subscripts: str, a, b):
    """Two-operand einsum; every input index must survive in the output or
    the other operand (no implicit broadcasting of dropped indices)."""
    a, b = as_tensor(a), as_tensor(b)
    lhs, out_sub = subscripts.replace(" ", "").split("->")
    sa, sb = lhs.split(",")
    for own, other in ((sa, sb), (sb, sa)):
        for ch in own:
            if ch not in other and ch not in out_sub:
                raise ShapeError(f"einsum index {ch!r} is summed from a single operand")
    av, bv = a.value, b.value

    def bw(g):
        ga = np.einsum(f"{out_sub},{sb}->{sa}", g, np.conj(bv)) if a.requires_grad else None
        gb = np.einsum(f"{out_sub},{sa}->{sb}", g, np.conj(av)) if b.requires_grad else None
        return ga, gb
    return _record(np.einsum(subscripts, av, bv, optimize=True), (a, b), bw)


def linear_op(a, forward, adjoint):
    """Wrap a real- or complex-linear map with a user-supplied adjoint.

    ``adjoint(g)`` must return the input gradient under this module's
    convention for an output gradient ``g``.
    """
    a = as_tensor(a)
    return _record(forward(a.value), (a,), lambda g: (adjoint(g),))



def matmul(a, b):
    """Broadcasting matrix product over the last two axes."""
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value

    def bw(g):
        ga = np.matmul(g, np.conj(np.swapaxes(bv, -1, -2))) if a.requires_grad else None
        gb = np.matmul(np.conj(np.swapaxes(av, -1, -2)), g) if b.requires_grad else None
        return ga, gb
    return _record(np.matmul(av, bv), (a, b), bw)
