"""Symmetric quadrature rules on the reference triangle (0,0)-(1,0)-(0,1)."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from scipy.optimize import least_squares


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Barycentric points (n, 3) and weights summing to the reference area 1/2."""

    barycentric: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def points(self) -> np.ndarray:
        return self.barycentric[:, 1:]

    def __len__(self):
        return len(self.weights)


def monomial_integral(a: int, b: int) -> float:
    """Exact integral of x**a * y**b over the reference triangle."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


# Dunavant orbit seeds: ("s21", a, w) -> perms of (a, a, 1-2a);
# ("s111", a, b, w) -> perms of (a, b, 1-a-b). Weights normalized to sum 1.
_SEEDS = {
    2: [("s21", 1.0 / 6.0, 1.0 / 3.0)],
    4: [
        ("s21", 0.445948490915965, 0.223381589678011),
        ("s21", 0.091576213509771, 0.109951743655322),
    ],
    6: [
        ("s21", 0.249286745170910, 0.116786275726379),
        ("s21", 0.063089014491502, 0.050844906370207),
        ("s111", 0.053145049844817, 0.310352451033784, 0.082851075618374),
    ],
}


def _expand(orbits, params):
    pts, wts = [], []
    k = 0
    for kind, *_ in orbits:
        if kind == "s21":
            a, w = params[k], params[k + 1]
            k += 2
            c = 1 - 2 * a
            pts += [(a, a, c), (a, c, a), (c, a, a)]
            wts += [w] * 3
        else:
            a, b, w = params[k], params[k + 1], params[k + 2]
            k += 3
            c = 1 - a - b
            pts += [(a, b, c), (b, a, c), (a, c, b), (c, a, b), (b, c, a), (c, b, a)]
            wts += [w] * 6
    return np.array(pts), 0.5 * np.array(wts)


def _moment_residual(params, orbits, degree):
    bary, w = _expand(orbits, params)
    x, y = bary[:, 1], bary[:, 2]
    return np.array([
        w @ (x**a * y**b) - monomial_integral(a, b)
        for a in range(degree + 1)
        for b in range(degree + 1 - a)
    ])


@lru_cache(maxsize=None)
def make_quadrature(degree: int) -> QuadratureRule:
    """Return a rule exact for polynomials of total degree <= ``degree`` (2, 4 or 6).

    The tabulated Dunavant parameters carry 15 digits; they are polished by
    least squares on the moment equations to full double precision.
    """
    if degree not in _SEEDS:
        raise ValueError(f"unsupported quadrature degree {degree}; use 2, 4 or 6")
    orbits = _SEEDS[degree]
    params = np.array([v for orb in orbits for v in orb[1:]], dtype=float)
    sol = least_squares(
        _moment_residual, params, args=(orbits, degree),
        method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
    )
    bary, w = _expand(orbits, sol.x)
    bary.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(bary, w, degree)


def gauss_legendre(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss rule mapped to [a, b]."""
    x, w = np.polynomial.legendre.leggauss(n)
    h = 0.5 * (b - a)
    return a + h * (x + 1.0), h * w
