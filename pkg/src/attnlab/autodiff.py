"""Minimal reverse-mode autodiff over float64 numpy arrays.

The attention formulas in this package are written once against a small set
of dispatch helpers (``exp``, ``relu``, ``asum`` ...). Passing plain arrays
runs pure numpy; passing :class:`Var` leaves records a tape and ``backward``
produces analytic gradients. Broadcasting follows numpy semantics, including
rank-3 batches matmul'd against rank-2 parameters.
"""

from __future__ import annotations

import numpy as np

DTYPE = np.float64


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient back to the shape of the operand it belongs to."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(
        i for i, (gd, sd) in enumerate(zip(g.shape, shape)) if sd == 1 and gd != 1
    )
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matmul that flattens (batch, n, k) @ (k, m) into one dense product."""
    if a.ndim > 2 and b.ndim == 2:
        lead = a.shape[:-1]
        return (a.reshape(-1, a.shape[-1]) @ b).reshape(lead + (b.shape[-1],))
    return a @ b


def _mm_grad_left(g: np.ndarray, b: np.ndarray, a_shape: tuple) -> np.ndarray:
    if g.ndim > 2 and b.ndim == 2:
        out = (g.reshape(-1, g.shape[-1]) @ b.T).reshape(g.shape[:-1] + (b.shape[0],))
        return _unbroadcast(out, a_shape)
    return _unbroadcast(g @ np.swapaxes(b, -1, -2), a_shape)


def _mm_grad_right(a: np.ndarray, g: np.ndarray, b_shape: tuple) -> np.ndarray:
    if a.ndim > 2 and len(b_shape) == 2:
        return a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
    return _unbroadcast(np.swapaxes(a, -1, -2) @ g, b_shape)


class Var:
    """A node in the tape: a value, its parents, and a vector-Jacobian rule."""

    __slots__ = ("value", "grad", "_parents", "_vjp")
    __array_ufunc__ = None  # force numpy to defer to our reflected operators

    def __init__(self, value, parents=(), vjp=None):
        self.value = np.asarray(value, dtype=DTYPE)
        self.grad = None
        self._parents = parents
        self._vjp = vjp

    # -- introspection ----------------------------------------------------
    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return swapaxes(self, -1, -2)

    def item(self) -> float:
        return float(self.value)

    def __repr__(self):
        return f"Var(shape={self.value.shape})"

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Var):
            return Var(
                self.value + other.value,
                (self, other),
                lambda g: (
                    _unbroadcast(g, self.value.shape),
                    _unbroadcast(g, other.value.shape),
                ),
            )
        c = np.asarray(other, dtype=DTYPE)
        return Var(
            self.value + c, (self,), lambda g: (_unbroadcast(g, self.value.shape),)
        )

    __radd__ = __add__

    def __neg__(self):
        return Var(-self.value, (self,), lambda g: (-g,))

    def __sub__(self, other):
        if isinstance(other, Var):
            return Var(
                self.value - other.value,
                (self, other),
                lambda g: (
                    _unbroadcast(g, self.value.shape),
                    _unbroadcast(-g, other.value.shape),
                ),
            )
        c = np.asarray(other, dtype=DTYPE)
        return Var(
            self.value - c, (self,), lambda g: (_unbroadcast(g, self.value.shape),)
        )

    def __rsub__(self, other):
        c = np.asarray(other, dtype=DTYPE)
        return Var(
            c - self.value, (self,), lambda g: (_unbroadcast(-g, self.value.shape),)
        )

    def __mul__(self, other):
        if isinstance(other, Var):
            return Var(
                self.value * other.value,
                (self, other),
                lambda g: (
                    _unbroadcast(g * other.value, self.value.shape),
                    _unbroadcast(g * self.value, other.value.shape),
                ),
            )
        c = np.asarray(other, dtype=DTYPE)
        return Var(
            self.value * c, (self,), lambda g: (_unbroadcast(g * c, self.value.shape),)
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            return Var(
                self.value / other.value,
                (self, other),
                lambda g: (
                    _unbroadcast(g / other.value, self.value.shape),
                    _unbroadcast(
                        -g * self.value / (other.value * other.value),
                        other.value.shape,
                    ),
                ),
            )
        c = np.asarray(other, dtype=DTYPE)
        return Var(
            self.value / c, (self,), lambda g: (_unbroadcast(g / c, self.value.shape),)
        )

    def __rtruediv__(self, other):
        c = np.asarray(other, dtype=DTYPE)
        return Var(
            c / self.value,
            (self,),
            lambda g: (
                _unbroadcast(-g * c / (self.value * self.value), self.value.shape),
            ),
        )

    def __pow__(self, exponent):
        p = float(exponent)
        out = self.value**p
        return Var(
            out, (self,), lambda g: (g * p * self.value ** (p - 1.0),)
        )

    def __matmul__(self, other):
        if isinstance(other, Var):
            return Var(
                _mm(self.value, other.value),
                (self, other),
                lambda g: (
                    _mm_grad_left(g, other.value, self.value.shape),
                    _mm_grad_right(self.value, g, other.value.shape),
                ),
            )
        c = np.asarray(other, dtype=DTYPE)
        return Var(
            _mm(self.value, c),
            (self,),
            lambda g: (_mm_grad_left(g, c, self.value.shape),),
        )

    def __rmatmul__(self, other):
        c = np.asarray(other, dtype=DTYPE)
        return Var(
            _mm(c, self.value),
            (self,),
            lambda g: (_mm_grad_right(c, g, self.value.shape),),
        )

    # -- reductions / reshaping --------------------------------------------
    def sum(self, axis=None, keepdims=False):
        return asum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return amean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, *shape)


def backward(out: Var, seed=None) -> None:
    """Accumulate gradients of ``out`` into every reachable leaf's ``.grad``."""
    if seed is None:
        seed = np.ones_like(out.value)
    out.grad = np.asarray(seed, dtype=DTYPE) + (
        0.0 if out.grad is None else out.grad
    )
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(out, False)]
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
            if id(parent) not in seen:
                stack.append((parent, False))
    for node in reversed(order):
        if node._vjp is None or node.grad is None:
            continue
        for parent, g in zip(node._parents, node._vjp(node.grad)):
            if g is None:
                continue
            parent.grad = g if parent.grad is None else parent.grad + g


# -- dispatch helpers: work on plain arrays and on Vars ---------------------


def value(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=DTYPE)


def shape_of(x) -> tuple:
    return x.shape


def exp(x):
    if isinstance(x, Var):
        out = np.exp(x.value)
        return Var(out, (x,), lambda g: (g * out,))
    return np.exp(x)


def log(x):
    if isinstance(x, Var):
        return Var(np.log(x.value), (x,), lambda g: (g / x.value,))
    return np.log(x)


def sqrt(x):
    if isinstance(x, Var):
        out = np.sqrt(x.value)
        return Var(out, (x,), lambda g: (g * (0.5 / out),))
    return np.sqrt(x)


def relu(x):
    if isinstance(x, Var):
        mask = x.value > 0.0
        return Var(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))
    return np.maximum(x, 0.0)


def leaky_relu(x, slope: float):
    if isinstance(x, Var):
        factor = np.where(x.value > 0.0, 1.0, slope)
        return Var(x.value * factor, (x,), lambda g: (g * factor,))
    return np.where(x > 0.0, x, slope * x)


def maximum(x, floor: float):
    """Elementwise max with a scalar; gradient flows where x > floor."""
    if isinstance(x, Var):
        mask = x.value > floor
        return Var(np.maximum(x.value, floor), (x,), lambda g: (g * mask,))
    return np.maximum(x, floor)


def asum(x, axis=None, keepdims=False):
    if isinstance(x, Var):
        out = x.value.sum(axis=axis, keepdims=keepdims)

        def vjp(g):
            gg = np.asarray(g, dtype=DTYPE)
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            return (np.broadcast_to(gg, x.value.shape).copy(),)

        return Var(out, (x,), vjp)
    return x.sum(axis=axis, keepdims=keepdims)


def amean(x, axis=None, keepdims=False):
    if isinstance(x, Var):
        n = x.value.size if axis is None else x.value.shape[axis]
        return asum(x, axis=axis, keepdims=keepdims) / float(n)
    return x.mean(axis=axis, keepdims=keepdims)


def swapaxes(x, a: int, b: int):
    if isinstance(x, Var):
        return Var(
            np.swapaxes(x.value, a, b), (x,), lambda g: (np.swapaxes(g, a, b),)
        )
    return np.swapaxes(x, a, b)


def reshape(x, *shape):
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    if isinstance(x, Var):
        old = x.value.shape
        return Var(x.value.reshape(shape), (x,), lambda g: (g.reshape(old),))
    return np.asarray(x).reshape(shape)


def concat(parts, axis: int = -1):
    if any(isinstance(p, Var) for p in parts):
        parts = [p if isinstance(p, Var) else Var(p) for p in parts]
        values = [p.value for p in parts]
        sizes = [v.shape[axis] for v in values]
        splits = np.cumsum(sizes)[:-1]

        def vjp(g):
            return tuple(np.split(g, splits, axis=axis))

        return Var(np.concatenate(values, axis=axis), tuple(parts), vjp)
    return np.concatenate(parts, axis=axis)


def take_rows(x, idx):
    """Gather along the token axis (-2); idx may be 1-D or 2-D.

    With idx of shape (k,) the result replaces the token axis; with shape
    (n, m) the token axis expands to two axes (n, m). Backward scatter-adds.
    """
    idx = np.asarray(idx)
    if isinstance(x, Var):
        out = x.value[..., idx, :]

        def vjp(g):
            gx = np.zeros_like(x.value)
            np.add.at(gx, (Ellipsis, idx, slice(None)), g)
            return (gx,)

        return Var(out, (x,), vjp)
    return x[..., idx, :]


def rowmax_detached(x, axis: int = -1) -> np.ndarray:
    """Max over an axis as a plain constant (no gradient); keepdims."""
    return value(x).max(axis=axis, keepdims=True)


def softmax_lastaxis(x):
    """Fused stable softmax over the last axis (max shift, exp, normalize)."""
    v = value(x)
    shifted = v - v.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)
    if not isinstance(x, Var):
        return out

    def vjp(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return ((g - inner) * out,)

    return Var(out, (x,), vjp)


def layer_norm_lastaxis(x, gain, bias, eps: float = 1e-5):
    """Fused layer norm over the last axis with affine output."""
    xv, gv, bv = value(x), value(gain), value(bias)
    mu = xv.mean(axis=-1, keepdims=True)
    centered = xv - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    sigma = np.sqrt(var + eps)
    xhat = centered / sigma
    out = xhat * gv + bv
    if not (isinstance(x, Var) or isinstance(gain, Var) or isinstance(bias, Var)):
        return out
    parents = []
    slots = []
    for operand in (x, gain, bias):
        if isinstance(operand, Var):
            parents.append(operand)
            slots.append(True)
        else:
            slots.append(False)

    def vjp(g):
        grads = []
        if slots[0]:
            dxhat = g * gv
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            grads.append((dxhat - m1 - xhat * m2) / sigma)
        if slots[1]:
            grads.append(_unbroadcast(g * xhat, gv.shape))
        if slots[2]:
            grads.append(_unbroadcast(g, bv.shape))
        return tuple(grads)

    return Var(out, tuple(parents), vjp)
