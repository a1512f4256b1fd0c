"""Small reverse-mode differentiation engine over float64 numpy arrays.

Operations executed inside a :class:`Tape` context are recorded in execution
order; :meth:`Tape.backward` walks them in reverse once. Complex quantities
are carried as :class:`Complex` pairs of real tensors and differentiated with
split (real/imaginary) calculus.

>>> with Tape() as tape:
...     x = Tensor(np.array([0.0]), requires_grad=True)
...     y = tanh(x).sum()
>>> tape.backward(y)
>>> float(x.grad[0])
1.0
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

_ACTIVE: list["Tape"] = []


class TapeError(RuntimeError):
    pass


class Tape:
    def __init__(self):
        self.nodes: list[Tensor] = []
        self.used = False

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)
        return False

    def backward(self, output: "Tensor") -> None:
        if self.used:
            raise TapeError("backward already ran on this tape; run the forward pass again")
        if not self.nodes or output not in self.nodes:
            raise TapeError("output was not produced on this tape (backward before forward)")
        if output.value.size != 1:
            raise ValueError("backward needs a scalar output")
        self.used = True
        output.grad = np.ones_like(output.value)
        stop = self.nodes.index(output)
        for node in reversed(self.nodes[: stop + 1]):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)
                _check_finite(node.grad, "gradient")


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(f"non-finite {what} encountered")


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_backward", "_parents")
    __array_priority__ = 100

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=float)
        _check_finite(self.value, "value")
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self._parents: tuple = ()

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        g = _unbroadcast(g, self.value.shape)
        self.grad = g.copy() if self.grad is None else self.grad + g

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return div(self, o)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def sum(self):
        return weighted_sum(self, None)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _make(value: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(value)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad and _ACTIVE:
        out._parents = tuple(parents)
        out._backward = backward
        _ACTIVE[-1].nodes.append(out)
    return out


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        a._accumulate(g)
        b._accumulate(g)

    return _make(a.value + b.value, (a, b), back)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        a._accumulate(g)
        b._accumulate(-g)

    return _make(a.value - b.value, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        a._accumulate(g * b.value)
        b._accumulate(g * a.value)

    return _make(a.value * b.value, (a, b), back)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        a._accumulate(g / b.value)
        b._accumulate(-g * a.value / b.value**2)

    return _make(a.value / b.value, (a, b), back)


def matmul(a, b) -> Tensor:
    """Batched matrix product (operands at least 2-D, leading axes broadcast)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim < 2 or b.value.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def back(g):
        a._accumulate(g @ np.swapaxes(b.value, -1, -2))
        b._accumulate(np.swapaxes(a.value, -1, -2) @ g)

    return _make(a.value @ b.value, (a, b), back)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.value)

    def back(g):
        a._accumulate(g * (1.0 - y**2))

    return _make(y, (a,), back)


def square(a) -> Tensor:
    a = as_tensor(a)

    def back(g):
        a._accumulate(2.0 * g * a.value)

    return _make(a.value**2, (a,), back)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    y = np.sqrt(a.value)

    def back(g):
        a._accumulate(g * 0.5 / y)

    return _make(y, (a,), back)


def log10(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.value <= 0):
        raise FloatingPointError("log10 of a nonpositive value")

    def back(g):
        a._accumulate(g / (a.value * np.log(10.0)))

    return _make(np.log10(a.value), (a,), back)


def weighted_sum(a, weights=None) -> Tensor:
    """Scalar ``sum(weights * a)``; ``weights`` is a fixed array broadcastable to ``a``."""
    a = as_tensor(a)
    w = 1.0 if weights is None else np.asarray(weights, dtype=float)

    def back(g):
        a._accumulate(np.broadcast_to(g * w, a.shape))

    return _make(np.sum(a.value * w), (a,), back)


def diff(a, axis: int = 0) -> Tensor:
    """First difference ``a[i+1] - a[i]`` along ``axis``."""
    a = as_tensor(a)
    axis = axis % a.value.ndim

    def back(g):
        full = np.zeros_like(a.value)
        lo = [slice(None)] * a.value.ndim
        hi = [slice(None)] * a.value.ndim
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        full[tuple(hi)] += g
        full[tuple(lo)] -= g
        a._accumulate(full)

    return _make(np.diff(a.value, axis=axis), (a,), back)


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(range(a.value.ndim - 2)) + (a.value.ndim - 1, a.value.ndim - 2)
    inv = np.argsort(axes)

    def back(g):
        a._accumulate(np.transpose(g, inv))

    return _make(np.transpose(a.value, axes), (a,), back)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)

    def back(g):
        a._accumulate(g.reshape(a.shape))

    return _make(a.value.reshape(shape), (a,), back)


def take(a, indices, axis: int) -> Tensor:
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=int)
    axis = axis % a.value.ndim

    def back(g):
        full = np.zeros_like(a.value)
        np.add.at(np.moveaxis(full, axis, 0), idx, np.moveaxis(g, axis, 0))
        a._accumulate(full)

    return _make(np.take(a.value, idx, axis=axis), (a,), back)


class Complex:
    """Complex tensor as a (real, imaginary) pair of :class:`Tensor`."""

    __slots__ = ("re", "im")

    def __init__(self, re, im):
        self.re = as_tensor(re)
        self.im = as_tensor(im)

    @classmethod
    def const(cls, z) -> "Complex":
        z = np.asarray(z)
        return cls(Tensor(z.real.copy()), Tensor(z.imag.copy()))

    @classmethod
    def param(cls, z) -> "Complex":
        z = np.asarray(z)
        return cls(Tensor(z.real.copy(), True), Tensor(z.imag.copy(), True))

    @property
    def shape(self):
        return self.re.shape

    @property
    def value(self) -> np.ndarray:
        return self.re.value + 1j * self.im.value

    @property
    def grad(self) -> np.ndarray:
        gr = np.zeros(self.shape) if self.re.grad is None else self.re.grad
        gi = np.zeros(self.shape) if self.im.grad is None else self.im.grad
        return gr + 1j * gi

    def __add__(self, o):
        o = _as_complex(o)
        return Complex(add(self.re, o.re), add(self.im, o.im))

    __radd__ = __add__

    def __sub__(self, o):
        o = _as_complex(o)
        return Complex(sub(self.re, o.re), sub(self.im, o.im))

    def __mul__(self, o):
        """Element-wise product; ``o`` may be a real array/tensor or Complex."""
        if isinstance(o, Complex) or np.iscomplexobj(o):
            o = _as_complex(o)
            return Complex(
                sub(mul(self.re, o.re), mul(self.im, o.im)),
                add(mul(self.re, o.im), mul(self.im, o.re)),
            )
        return Complex(mul(self.re, o), mul(self.im, o))

    __rmul__ = __mul__

    def __matmul__(self, o):
        o = _as_complex(o)
        return Complex(
            sub(matmul(self.re, o.re), matmul(self.im, o.im)),
            add(matmul(self.re, o.im), matmul(self.im, o.re)),
        )

    def __rmatmul__(self, o):
        return _as_complex(o) @ self

    def conj(self) -> "Complex":
        return Complex(self.re, mul(self.im, -1.0))

    def transpose(self, axes=None) -> "Complex":
        return Complex(transpose(self.re, axes), transpose(self.im, axes))

    @property
    def T(self):
        return self.transpose()

    def reshape(self, shape) -> "Complex":
        return Complex(reshape(self.re, shape), reshape(self.im, shape))

    def take(self, indices, axis: int) -> "Complex":
        return Complex(take(self.re, indices, axis), take(self.im, indices, axis))

    def tanh(self) -> "Complex":
        """Split activation: tanh applied to real and imaginary parts separately."""
        return Complex(tanh(self.re), tanh(self.im))

    def abs2(self) -> Tensor:
        return add(square(self.re), square(self.im))

    def abs(self, eps: float = 0.0) -> Tensor:
        """Smoothed magnitude ``sqrt(re^2 + im^2 + eps^2)``."""
        s = self.abs2()
        if eps:
            s = add(s, eps * eps)
        return sqrt(s)


def _as_complex(o) -> Complex:
    if isinstance(o, Complex):
        return o
    if isinstance(o, Tensor):
        return Complex(o, Tensor(np.zeros(o.shape)))
    return Complex.const(np.asarray(o, dtype=complex))


def adam_init(params: Sequence[np.ndarray]) -> dict:
    return {"t": 0, "m": [np.zeros_like(p) for p in params], "v": [np.zeros_like(p) for p in params]}


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``.

    Inputs are not modified.
    """
    if len(params) != len(grads) or len(params) != len(state["m"]):
        raise ValueError("params, grads and state must align")
    t = state["t"] + 1
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError("shape mismatch between parameter, gradient and moments")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new_p.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, {"t": t, "m": new_m, "v": new_v}
