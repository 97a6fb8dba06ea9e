"""Independent numerical oracles used by the tests.

Nothing here calls the package's AD or exterior calculus; derivatives come from
central differences or hand-coded formulas.
"""

from __future__ import annotations

import numpy as np

FD_STEP = 1e-6


def central_jacobian(f, x, h: float = FD_STEP) -> np.ndarray:
    """``out[..., k] = d f / d x_k`` by central differences at a single point."""
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def classical_curl(F, x, h: float = 1e-5) -> np.ndarray:
    """Textbook nabla x F by central differences."""
    J = central_jacobian(F, x, h)  # J[i, k] = dF_i/dx_k
    return np.array([J[2, 1] - J[1, 2], J[0, 2] - J[2, 0], J[1, 0] - J[0, 1]])


def polynomial_curl(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Exact curl of ``F_i = sum_m coeffs[i, m] * monomial_m(x)`` with monomials of degree <= 2."""
    x1, x2, x3 = x
    # d/dx_k of each monomial, monomials: 1, x1, x2, x3, x1^2, x2^2, x3^2, x1x2, x1x3, x2x3
    grads = np.array([
        [0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1],
        [2 * x1, 0, 0], [0, 2 * x2, 0], [0, 0, 2 * x3],
        [x2, x1, 0], [x3, 0, x1], [0, x3, x2],
    ], dtype=float)
    J = coeffs @ grads  # J[i, k]
    return np.array([J[2, 1] - J[1, 2], J[0, 2] - J[2, 0], J[1, 0] - J[0, 1]])


def monomials(p):
    x1, x2, x3 = p
    return [1.0 + 0.0 * x1, x1, x2, x3, x1 * x1, x2 * x2, x3 * x3, x1 * x2, x1 * x3, x2 * x3]


def abc_field(A: float, B: float, C: float):
    """Arnold-Beltrami-Childress field, curl F = F in flat space."""
    def F(p, sin=np.sin, cos=np.cos):
        x, y, z = p
        return [A * sin(z) + C * cos(y), B * sin(x) + A * cos(z), C * sin(y) + B * cos(x)]
    return F


def conformal_gauss(c: float, x) -> float:
    """Gauss curvature of lambda^2 delta from K = -Delta log(lambda) / lambda^2 by finite differences."""
    x = np.asarray(x, dtype=float)
    lam = lambda y: 2.0 / abs(y @ y - 2 * c)
    h = 1e-4
    lap = sum((np.log(lam(x + h * e)) - 2 * np.log(lam(x)) + np.log(lam(x - h * e))) / h**2
              for e in np.eye(2))
    return -lap / lam(x) ** 2


def kepler_gradient(q, p):
    """Hand-coded dH for H = |p|^2/2 - 1/|q|."""
    r = np.linalg.norm(q)
    return np.asarray(q) / r**3, np.asarray(p)
