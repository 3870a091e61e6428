"""Quadrature rules: Gauss-Legendre on intervals, a degree-4 triangle rule,
adaptive bisection and polar sector integration with the ``t = sqrt(r)``
substitution."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


# symmetric 6-point rule, exact for degree 4 (barycentric coordinates, weights sum to 1)
_A1, _B1, _W1 = 0.445948490915965, 0.108103018168070, 0.223381589678011
_A2, _B2, _W2 = 0.091576213509771, 0.816847572980459, 0.109951743655322
TRIANGLE_BARY = np.array([
    [_A1, _A1, _B1], [_A1, _B1, _A1], [_B1, _A1, _A1],
    [_A2, _A2, _B2], [_A2, _B2, _A2], [_B2, _A2, _A2],
])
TRIANGLE_WEIGHTS = np.array([_W1] * 3 + [_W2] * 3)


def adaptive_gl(f, a, b, tol=1e-10, order=20, max_depth=40, abs_floor=0.0):
    """Adaptive Gauss-Legendre integral of a vectorised (possibly complex) ``f``.

    An interval is accepted when its value and the sum over its two halves
    agree to ``tol`` relative to the running estimate of the whole integral
    (or ``abs_floor``, whichever is larger).
    """
    x, w = gauss_legendre(order)

    def rule(lo, hi):
        return (hi - lo) * np.dot(w, f(lo + (hi - lo) * x))

    whole = rule(a, b)
    stack = [(a, b, whole, 0)]
    total = 0.0
    scale = max(abs(whole), abs_floor)
    while stack:
        lo, hi, val, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        left, right = rule(lo, mid), rule(mid, hi)
        err = abs(left + right - val)
        if err <= tol * max(scale, abs_floor) or depth >= max_depth or err == 0:
            total = total + left + right
        else:
            stack.append((lo, mid, left, depth + 1))
            stack.append((mid, hi, right, depth + 1))
    return total


def integrate_segment(f, a, b, tol=1e-12, order=20):
    """Line integral of ``f(points)`` along the straight segment from a to b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    length = float(np.linalg.norm(b - a))

    def g(t):
        pts = a[None, :] + t[:, None] * (b - a)[None, :]
        return f(pts)

    return length * adaptive_gl(g, 0.0, 1.0, tol=tol, order=order)


def integrate_radial(f_r, h, tol=1e-12, order=20):
    """Integral of ``f_r(r)`` over [0, h] with the substitution r = t**2."""
    return adaptive_gl(lambda t: f_r(t * t) * 2.0 * t, 0.0, np.sqrt(h), tol=tol, order=order)


def integrate_sector(f_polar, theta_m, theta_M, radius, tol=1e-11, order=20):
    """Area integral of ``f_polar(r, theta)`` over a circular sector at the origin.

    The inner radial integral uses ``t = sqrt(r)`` so the ``r**-1/2``
    behaviour of CGO gradients and the ``exp(-s sqrt(r))`` kernels are smooth.
    """
    tmax = np.sqrt(radius)

    def inner(theta_vals):
        out = []
        for th in np.atleast_1d(theta_vals):
            g = lambda t, th=th: f_polar(t * t, np.full_like(t, th)) * 2.0 * t ** 3
            out.append(adaptive_gl(g, 0.0, tmax, tol=tol, order=order))
        return np.array(out)

    return adaptive_gl(inner, theta_m, theta_M, tol=tol, order=order)
