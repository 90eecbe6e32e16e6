"""Forward-mode dual numbers with optional second-order (Hessian) parts.

Functions in this module accept plain floats as well as :class:`Dual`
values, so model code written against them can be evaluated either
numerically or with exact derivatives.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError


class Dual:
    """Value plus gradient (and optionally Hessian) w.r.t. a fixed variable set."""

    __slots__ = ("val", "grad", "hess")
    # make numpy scalars defer to our reflected operators
    __array_ufunc__ = None

    def __init__(self, val, grad, hess=None):
        self.val = float(val)
        self.grad = grad
        self.hess = hess

    def __repr__(self):
        return f"Dual({self.val!r}, {self.grad!r})"

    # -- helpers ---------------------------------------------------------
    def _chain(self, f0, f1, f2=0.0):
        g = self.grad
        h = None
        if self.hess is not None:
            h = f1 * self.hess + f2 * np.outer(g, g)
        return Dual(f0, f1 * g, h)

    def _lift(self, other):
        if isinstance(other, Dual):
            return other
        return Dual(other, np.zeros_like(self.grad),
                    None if self.hess is None else np.zeros_like(self.hess))

    # -- arithmetic ------------------------------------------------------
    def __neg__(self):
        return Dual(-self.val, -self.grad, None if self.hess is None else -self.hess)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Dual):
            h = None
            if self.hess is not None and other.hess is not None:
                h = self.hess + other.hess
            return Dual(self.val + other.val, self.grad + other.grad, h)
        return Dual(self.val + other, self.grad, self.hess)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            h = None
            if self.hess is not None and other.hess is not None:
                cross = np.outer(self.grad, other.grad)
                h = self.hess * other.val + other.hess * self.val + cross + cross.T
            return Dual(self.val * other.val,
                        self.grad * other.val + other.grad * self.val, h)
        return Dual(self.val * other, self.grad * other,
                    None if self.hess is None else self.hess * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return self * reciprocal(other)
        if other == 0:
            raise DomainError("division by zero")
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, other):
        return power(self, other)

    def __rpow__(self, other):
        return power(other, self)

    # -- comparisons act on the value ------------------------------------
    def __lt__(self, other):
        return self.val < value(other)

    def __le__(self, other):
        return self.val <= value(other)

    def __gt__(self, other):
        return self.val > value(other)

    def __ge__(self, other):
        return self.val >= value(other)

    def __float__(self):
        return self.val


def value(x):
    """Real part of a dual number (identity on floats)."""
    return x.val if isinstance(x, Dual) else float(x)


def _where(where):
    return f" in '{where}'" if where else ""


def reciprocal(x, where=None):
    if isinstance(x, Dual):
        if x.val == 0.0:
            raise DomainError("division by zero" + _where(where))
        r = 1.0 / x.val
        return x._chain(r, -r * r, 2.0 * r * r * r)
    x = float(x)
    if x == 0.0:
        raise DomainError("division by zero" + _where(where))
    return 1.0 / x


def div(a, b, where=None):
    if value(b) == 0.0:
        raise DomainError("division by zero" + _where(where))
    if isinstance(b, Dual):
        return a * reciprocal(b, where)
    if isinstance(a, Dual):
        return a * (1.0 / float(b))
    return float(a) / float(b)


def sqrt(x, where=None):
    v = value(x)
    if v < 0.0:
        raise DomainError(f"sqrt of negative value {v:g}" + _where(where))
    r = math.sqrt(v)
    if isinstance(x, Dual):
        if r == 0.0:
            raise DomainError("derivative of sqrt at 0" + _where(where))
        return x._chain(r, 0.5 / r, -0.25 / (r * v))
    return r


def exp(x, where=None):
    try:
        e = math.exp(value(x))
    except OverflowError:
        raise DomainError("exp overflow" + _where(where)) from None
    if isinstance(x, Dual):
        return x._chain(e, e, e)
    return e


def log(x, where=None):
    v = value(x)
    if v <= 0.0:
        raise DomainError(f"log of non-positive value {v:g}" + _where(where))
    if isinstance(x, Dual):
        return x._chain(math.log(v), 1.0 / v, -1.0 / (v * v))
    return math.log(v)


def sin(x, where=None):
    if isinstance(x, Dual):
        s, c = math.sin(x.val), math.cos(x.val)
        return x._chain(s, c, -s)
    return math.sin(x)


def cos(x, where=None):
    if isinstance(x, Dual):
        s, c = math.sin(x.val), math.cos(x.val)
        return x._chain(c, -s, -c)
    return math.cos(x)


def fabs(x, where=None):
    if isinstance(x, Dual):
        if x.val == 0.0:
            raise DomainError("derivative of abs at 0" + _where(where))
        return x if x.val > 0 else -x
    return abs(float(x))


def sign(x):
    v = value(x)
    return (v > 0) - (v < 0)


def atan2(y, x, where=None):
    yv, xv = value(y), value(x)
    a = math.atan2(yv, xv)
    if not isinstance(y, Dual) and not isinstance(x, Dual):
        return a
    r2 = xv * xv + yv * yv
    if r2 == 0.0:
        raise DomainError("atan2 derivative at the origin" + _where(where))
    # d atan2 = (x dy - y dx) / r2, built from dual arithmetic for the Hessian
    if isinstance(x, Dual) and isinstance(y, Dual):
        ref = x
    else:
        ref = x if isinstance(x, Dual) else y
    y = ref._lift(y)
    x = ref._lift(x)
    inv = 1.0 / r2
    grad = (xv * y.grad - yv * x.grad) * inv
    hess = None
    if y.hess is not None and x.hess is not None:
        # second derivatives of atan2 in (y, x)
        fyy = -2.0 * xv * yv * inv * inv
        fxx = 2.0 * xv * yv * inv * inv
        fxy = (yv * yv - xv * xv) * inv * inv
        gy, gx = y.grad, x.grad
        hess = (xv * inv) * y.hess - (yv * inv) * x.hess
        hess = hess + fyy * np.outer(gy, gy) + fxx * np.outer(gx, gx)
        cross = np.outer(gx, gy)
        hess = hess + fxy * (cross + cross.T)
    return Dual(a, grad, hess)


def power(x, y, where=None):
    """x**y with a domain error for non-integer powers of negative bases."""
    xv, yv = value(x), value(y)
    y_const = not isinstance(y, Dual) or not np.any(y.grad)
    if y_const and float(yv).is_integer():
        n = int(yv)
        if xv == 0.0 and n < 0:
            raise DomainError("zero raised to a negative power" + _where(where))
        if not isinstance(x, Dual):
            return float(xv) ** n
        if n == 0:
            return x._chain(1.0, 0.0, 0.0)
        f0 = xv ** n
        f1 = n * xv ** (n - 1) if n != 0 else 0.0
        f2 = n * (n - 1) * xv ** (n - 2) if n not in (0, 1) else 0.0
        return x._chain(f0, f1, f2)
    if xv < 0.0:
        raise DomainError(
            f"non-integer power {yv:g} of negative base {xv:g}" + _where(where))
    if y_const:
        if xv == 0.0:
            if yv < 0:
                raise DomainError("zero raised to a negative power" + _where(where))
            if isinstance(x, Dual):
                if yv < 2.0:
                    raise DomainError("derivative of power at 0" + _where(where))
                return x._chain(0.0, 0.0, 0.0)
            return 0.0
        if not isinstance(x, Dual):
            try:
                return float(xv) ** float(yv)
            except OverflowError:
                raise DomainError("power overflow" + _where(where)) from None
        f0 = xv ** yv
        return x._chain(f0, yv * f0 / xv, yv * (yv - 1.0) * f0 / (xv * xv))
    if xv == 0.0:
        raise DomainError("zero base with variable exponent" + _where(where))
    return exp(y * log(x, where), where)


# ----------------------------------------------------------------------
# derivative drivers
# ----------------------------------------------------------------------

def seed(x, order=1):
    """Independent dual variables for the coordinates of ``x``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    eye = np.eye(n)
    out = np.empty(n, dtype=object)
    for i in range(n):
        h = np.zeros((n, n)) if order >= 2 else None
        out[i] = Dual(x[i], eye[i].copy(), h)
    return out


def _parts(y, n, order):
    if isinstance(y, Dual):
        g = y.grad
        h = y.hess if y.hess is not None else np.zeros((n, n))
        return y.val, g, h
    return float(y), np.zeros(n), np.zeros((n, n))


def gradient(f, x):
    """Value and exact gradient of a scalar function written against this module."""
    x = np.asarray(x, dtype=float)
    v, g, _ = _parts(f(seed(x, 1)), x.size, 1)
    return v, np.array(g, dtype=float)


def hessian(f, x):
    x = np.asarray(x, dtype=float)
    v, g, h = _parts(f(seed(x, 2)), x.size, 2)
    return v, np.array(g, dtype=float), np.array(h, dtype=float)


def jacobian(F, x):
    """Values and Jacobian (rows = outputs) of a vector function."""
    x = np.asarray(x, dtype=float)
    ys = F(seed(x, 1))
    n = x.size
    vals = np.empty(len(ys))
    jac = np.zeros((len(ys), n))
    for i, y in enumerate(ys):
        vals[i], jac[i], _ = _parts(y, n, 1)
    return vals, jac


def central_gradient(f, x, rel_step=1e-6):
    """Central finite-difference gradient, step ``rel_step * max(1, |x|)``."""
    x = np.asarray(x, dtype=float)
    h = rel_step * max(1.0, float(np.linalg.norm(x)))
    g = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        g[i] = (float(f(x + e)) - float(f(x - e))) / (2.0 * h)
    return g
