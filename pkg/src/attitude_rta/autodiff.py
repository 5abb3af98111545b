"""Second-order forward-mode differentiation.

A :class:`Jet` carries a scalar value with its gradient and Hessian with
respect to the simulation state. Arithmetic on jets applies the chain rule
to second order, which is exactly what a dual number nested inside another
dual number computes, without the per-entry object overhead.

Jets built with ``hess=None`` are plain first-order duals; mixing orders
degrades the result to first order.
"""

from __future__ import annotations

import math

import numpy as np

# Bound on |d arccos / dc|; keeps barrier rows finite at the poles.
ARCCOS_SLOPE_CAP = 1e6
_MIN_SINE = 1.0 / ARCCOS_SLOPE_CAP


class Jet:
    __slots__ = ("val", "grad", "hess")

    def __init__(self, val: float, grad: np.ndarray, hess: np.ndarray | None = None):
        self.val = float(val)
        self.grad = grad
        self.hess = hess

    @classmethod
    def variable(cls, val: float, index: int, n: int, order: int = 2) -> "Jet":
        grad = np.zeros(n)
        grad[index] = 1.0
        return cls(val, grad, np.zeros((n, n)) if order == 2 else None)

    @classmethod
    def constant(cls, val: float, n: int, order: int = 2) -> "Jet":
        return cls(val, np.zeros(n), np.zeros((n, n)) if order == 2 else None)

    @property
    def n(self) -> int:
        return self.grad.shape[0]

    def _chain(self, f0: float, f1: float, f2: float) -> "Jet":
        # scalar function applied to self, with f' = f1 and f'' = f2
        grad = f1 * self.grad
        hess = None
        if self.hess is not None:
            hess = f1 * self.hess + f2 * np.outer(self.grad, self.grad)
        return Jet(f0, grad, hess)

    def __add__(self, other):
        if isinstance(other, Jet):
            hess = None if self.hess is None or other.hess is None else self.hess + other.hess
            return Jet(self.val + other.val, self.grad + other.grad, hess)
        return Jet(self.val + other, self.grad, self.hess)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.val, -self.grad, None if self.hess is None else -self.hess)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            grad = self.grad * other.val + other.grad * self.val
            hess = None
            if self.hess is not None and other.hess is not None:
                cross = np.outer(self.grad, other.grad)
                hess = self.hess * other.val + other.hess * self.val + cross + cross.T
            return Jet(self.val * other.val, grad, hess)
        other = float(other)
        return Jet(self.val * other, self.grad * other, None if self.hess is None else self.hess * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / float(other))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def reciprocal(self) -> "Jet":
        v = self.val
        return self._chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))

    def __pow__(self, k):
        k = float(k)
        v = self.val
        if k == 0.0:
            return Jet.constant(1.0, self.n, 1 if self.hess is None else 2)
        f1 = k * v ** (k - 1.0)
        f2 = k * (k - 1.0) * v ** (k - 2.0) if k != 1.0 else 0.0
        return self._chain(v**k, f1, f2)

    def __repr__(self) -> str:
        return f"Jet({self.val!r}, |grad|={np.linalg.norm(self.grad):.3g})"


def arccos(x: Jet) -> Jet:
    """arccos with the argument clamped to [-1, 1] and the slope capped."""
    c = min(1.0, max(-1.0, x.val))
    s = max(math.sqrt(max(0.0, 1.0 - c * c)), _MIN_SINE)
    return x._chain(math.acos(c), -1.0 / s, -c / (s * s * s))


def cos(x: Jet) -> Jet:
    c, s = math.cos(x.val), math.sin(x.val)
    return x._chain(c, -s, -c)


def sin(x: Jet) -> Jet:
    c, s = math.cos(x.val), math.sin(x.val)
    return x._chain(s, c, -s)


def relu(x: Jet) -> Jet:
    """max(0, x); the kink at 0 takes the zero branch."""
    if x.val > 0.0:
        return x
    return Jet.constant(0.0, x.n, 1 if x.hess is None else 2)


def minimum(x: Jet, bound: float) -> Jet:
    if x.val < bound:
        return x
    return Jet.constant(bound, x.n, 1 if x.hess is None else 2)


def maximum(x: Jet, bound: float) -> Jet:
    if x.val > bound:
        return x
    return Jet.constant(bound, x.n, 1 if x.hess is None else 2)
