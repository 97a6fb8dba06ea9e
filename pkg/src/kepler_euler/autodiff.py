"""Forward-mode automatic differentiation with tagged, nestable dual numbers.

Coefficient functions throughout the package take a point as a sequence of
coordinates (floats, ``ndarray`` batches, or :class:`Dual`) and must only use
arithmetic and the elementary functions defined here, so the same code path
evaluates values and exact derivatives.

Every derivative request draws a fresh tag.  A binary operation between duals
of different tags treats the older one as a constant, which keeps nested
derivatives (derivatives of functions that themselves differentiate) free of
perturbation confusion.
"""

from __future__ import annotations

import itertools
import math
from typing import Any, Callable, Sequence

import numpy as np

_tags = itertools.count(1)


class Dual:
    """``re + eps * e`` with ``e**2 == 0``; ``re`` and ``eps`` may be duals of older tags."""

    __slots__ = ("re", "eps", "tag")
    __array_ufunc__ = None  # numpy must defer to the reflected operators

    def __init__(self, re: Any, eps: Any, tag: int):
        self.re = re
        self.eps = eps
        self.tag = tag

    def __repr__(self) -> str:
        return f"Dual({self.re!r}, {self.eps!r}, tag={self.tag})"

    def __neg__(self) -> Dual:
        return Dual(-self.re, -self.eps, self.tag)

    def __pos__(self) -> Dual:
        return self

    def __add__(self, other: Any) -> Dual:
        t = _top(self, other)
        ar, ae = _split(self, t)
        br, be = _split(other, t)
        return Dual(ar + br, _tadd(ae, be), t)

    __radd__ = __add__

    def __sub__(self, other: Any) -> Dual:
        t = _top(self, other)
        ar, ae = _split(self, t)
        br, be = _split(other, t)
        return Dual(ar - br, _tadd(ae, _tneg(be)), t)

    def __rsub__(self, other: Any) -> Dual:
        return (-self).__add__(other)

    def __mul__(self, other: Any) -> Dual:
        t = _top(self, other)
        ar, ae = _split(self, t)
        br, be = _split(other, t)
        eps = None
        if be is not None:
            eps = ar * be
        if ae is not None:
            eps = ae * br if eps is None else eps + ae * br
        return Dual(ar * br, eps, t)

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> Dual:
        t = _top(self, other)
        ar, ae = _split(self, t)
        br, be = _split(other, t)
        q = ar / br
        eps = None
        if ae is not None:
            eps = ae / br
        if be is not None:
            term = q * be / br
            eps = -term if eps is None else eps - term
        return Dual(q, eps, t)

    def __rtruediv__(self, other: Any) -> Dual:
        inv = 1.0 / self.re
        return Dual(other * inv, -other * self.eps * inv * inv, self.tag)

    def __pow__(self, n: float) -> Dual:
        if isinstance(n, Dual):
            raise TypeError("dual exponents are not supported")
        if n == 2:
            return self * self
        return Dual(self.re**n, n * self.re ** (n - 1) * self.eps, self.tag)


def _top(a: Any, b: Any) -> int:
    ta = a.tag if isinstance(a, Dual) else 0
    tb = b.tag if isinstance(b, Dual) else 0
    return ta if ta > tb else tb


def _split(x: Any, tag: int) -> tuple[Any, Any]:
    if isinstance(x, Dual) and x.tag == tag:
        return x.re, x.eps
    return x, None


def _tadd(a: Any, b: Any) -> Any:
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def _tneg(a: Any) -> Any:
    return None if a is None else -a


# elementary functions -------------------------------------------------------


def sin(x: Any) -> Any:
    if isinstance(x, Dual):
        return Dual(sin(x.re), cos(x.re) * x.eps, x.tag)
    return np.sin(x)


def cos(x: Any) -> Any:
    if isinstance(x, Dual):
        return Dual(cos(x.re), -sin(x.re) * x.eps, x.tag)
    return np.cos(x)


def exp(x: Any) -> Any:
    if isinstance(x, Dual):
        e = exp(x.re)
        return Dual(e, e * x.eps, x.tag)
    return np.exp(x)


def log(x: Any) -> Any:
    if isinstance(x, Dual):
        return Dual(log(x.re), x.eps / x.re, x.tag)
    return np.log(x)


def sqrt(x: Any) -> Any:
    if isinstance(x, Dual):
        s = sqrt(x.re)
        return Dual(s, x.eps / (2.0 * s), x.tag)
    return np.sqrt(x)


def cosh(x: Any) -> Any:
    if isinstance(x, Dual):
        return Dual(cosh(x.re), sinh(x.re) * x.eps, x.tag)
    return np.cosh(x)


def sinh(x: Any) -> Any:
    if isinstance(x, Dual):
        return Dual(sinh(x.re), cosh(x.re) * x.eps, x.tag)
    return np.sinh(x)


def atan2(y: Any, x: Any) -> Any:
    if not isinstance(y, Dual) and not isinstance(x, Dual):
        return np.arctan2(y, x)
    t = _top(y, x)
    yr, ye = _split(y, t)
    xr, xe = _split(x, t)
    r2 = xr * xr + yr * yr
    eps = None
    if ye is not None:
        eps = xr * ye / r2
    if xe is not None:
        term = yr * xe / r2
        eps = -term if eps is None else eps - term
    return Dual(atan2(yr, xr), eps, t)


def primal(x: Any) -> Any:
    """Strip every perturbation and return the underlying float or array."""
    while isinstance(x, Dual):
        x = x.re
    return x


# tree helpers ----------------------------------------------------------------


def tree_map(fn: Callable[[Any], Any], tree: Any) -> Any:
    if isinstance(tree, (list, tuple)):
        return [tree_map(fn, t) for t in tree]
    return fn(tree)


def realize(tree: Any, shape: tuple[int, ...] = ()) -> np.ndarray:
    """Convert a nested-list output of leaves into a float array.

    Leaf shape ``shape`` (the batch shape) is broadcast in front of the tree
    structure, so a 3x3 matrix over a batch of N points becomes ``(N, 3, 3)``.
    """
    def leaf(v: Any) -> np.ndarray:
        return np.broadcast_to(np.asarray(primal(v), dtype=float), shape)

    arr = np.asarray(tree_map(leaf, tree), dtype=float)
    nd = arr.ndim - len(shape)
    # move the batch axes to the front
    return np.moveaxis(arr, list(range(nd, arr.ndim)), list(range(len(shape))))


# derivatives -----------------------------------------------------------------


def derivative(fn: Callable[[Sequence[Any]], Any], point: Sequence[Any],
               direction: int | Sequence[float]) -> Any:
    """Directional derivative of ``fn`` at ``point``.

    ``direction`` is either a coordinate index or a full direction vector.
    The result has the same nested-list structure as ``fn(point)``.
    """
    tag = next(_tags)
    if isinstance(direction, (int, np.integer)):
        seeded = list(point)
        seeded[direction] = Dual(point[direction], 1.0, tag)
    else:
        seeded = [Dual(p, v, tag) for p, v in zip(point, direction)]
    out = fn(seeded)
    return tree_map(lambda v: _tangent(v, tag), out)


def _tangent(v: Any, tag: int) -> Any:
    if isinstance(v, Dual) and v.tag == tag:
        return 0.0 if v.eps is None else v.eps
    return 0.0


def jacobian(fn: Callable[[Sequence[Any]], Any], point: Sequence[Any]) -> list[Any]:
    """``out[k]`` is the partial derivative of ``fn`` along coordinate ``k``."""
    return [derivative(fn, point, k) for k in range(len(point))]


def gradient(fn: Callable[[Sequence[Any]], Any], point: Sequence[Any]) -> list[Any]:
    return jacobian(fn, point)


# small dense linear algebra on nested lists (AD-compatible) -------------------


def det(m: Sequence[Sequence[Any]]) -> Any:
    n = len(m)
    if n == 1:
        return m[0][0]
    if n == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    if n == 3:
        return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))
    # cofactor expansion along the first row
    total = 0.0
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in (list(r) for r in m[1:])]
        term = m[0][j] * det(minor)
        total = total + term if j % 2 == 0 else total - term
    return total


def inv(m: Sequence[Sequence[Any]]) -> list[list[Any]]:
    n = len(m)
    d = det(m)
    if n == 1:
        return [[1.0 / d]]
    if n == 2:
        return [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]
    cof = [[None] * n for _ in range(n)]
    rows = [list(r) for r in m]
    for i in range(n):
        for j in range(n):
            minor = [r[:j] + r[j + 1:] for k, r in enumerate(rows) if k != i]
            c = det(minor)
            cof[i][j] = c if (i + j) % 2 == 0 else -c
    return [[cof[j][i] / d for j in range(n)] for i in range(n)]


def matvec(m: Sequence[Sequence[Any]], v: Sequence[Any]) -> list[Any]:
    return [dot(row, v) for row in m]


def dot(a: Sequence[Any], b: Sequence[Any]) -> Any:
    total = a[0] * b[0]
    for x, y in zip(a[1:], b[1:]):
        total = total + x * y
    return total


def matmul(a: Sequence[Sequence[Any]], b: Sequence[Sequence[Any]]) -> list[list[Any]]:
    bt = list(zip(*b))
    return [[dot(row, col) for col in bt] for row in a]


def transpose(a: Sequence[Sequence[Any]]) -> list[list[Any]]:
    return [list(r) for r in zip(*a)]


def as_point(points: np.ndarray) -> list[np.ndarray]:
    """Split an ``(N, n)`` (or ``(n,)``) array into a list of coordinate arrays."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        return [float(v) for v in arr]
    return [arr[:, i] for i in range(arr.shape[1])]


PI = math.pi
