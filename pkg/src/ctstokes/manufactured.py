"""Analytic unsteady Stokes solution on (-1, 1)^2 and its forcing.

    u(t, x) = a sin(lam t) U(x),   U = pi (sin(2 pi y) sin^2(pi x), -sin(2 pi x) sin^2(pi y))
    p(t, x) = a sin(lam t) P(x),   P = cos(pi x) sin(pi y)
    f = du/dt - mu lap u + grad p = cos(lam t) A(x) + sin(lam t) B(x)

with A = a lam U and B = a (grad P - mu lap U). The amplitude ``a`` is 1 for
the reference experiment and 0 for the zero-data case.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import FemSystem
from .quadrature import gauss_legendre

PI = np.pi


def _u(x, y):
    return PI * np.column_stack([
        np.sin(2 * PI * y) * np.sin(PI * x) ** 2,
        -np.sin(2 * PI * x) * np.sin(PI * y) ** 2,
    ])


def _grad_u(x, y):
    s2x, s2y = np.sin(2 * PI * x), np.sin(2 * PI * y)
    g = np.empty((np.size(x), 2, 2))
    g[:, 0, 0] = PI**2 * s2y * s2x
    g[:, 0, 1] = 2 * PI**2 * np.cos(2 * PI * y) * np.sin(PI * x) ** 2
    g[:, 1, 0] = -2 * PI**2 * np.cos(2 * PI * x) * np.sin(PI * y) ** 2
    g[:, 1, 1] = -PI**2 * s2x * s2y
    return g


def _lap_u(x, y):
    return 2 * PI**3 * np.column_stack([
        np.sin(2 * PI * y) * (1 - 4 * np.sin(PI * x) ** 2),
        -np.sin(2 * PI * x) * (1 - 4 * np.sin(PI * y) ** 2),
    ])


def _p(x, y):
    return np.cos(PI * x) * np.sin(PI * y)


def _grad_p(x, y):
    return PI * np.column_stack([
        -np.sin(PI * x) * np.sin(PI * y),
        np.cos(PI * x) * np.cos(PI * y),
    ])


def _xy(x, y):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return np.broadcast_arrays(x, y)


def averaged_coefficients(lam: float, t0: float, t1: float) -> tuple[float, float]:
    """Exact means of cos(lam t) and sin(lam t) over [t0, t1]."""
    h = 0.5 * lam * (t1 - t0)
    sinc = 1.0 if h == 0.0 else np.sin(h) / h
    tm = 0.5 * (t0 + t1)
    return float(np.cos(lam * tm) * sinc), float(np.sin(lam * tm) * sinc)


@dataclass(frozen=True)
class AnalyticStokes:
    lam: float = 10.0
    mu: float = 1.0
    amplitude: float = 1.0

    def _s(self, t):
        return self.amplitude * np.sin(self.lam * t)

    def velocity(self, t, x, y):
        x, y = _xy(x, y)
        return self._s(t) * _u(x, y)

    def velocity_gradient(self, t, x, y):
        x, y = _xy(x, y)
        return self._s(t) * _grad_u(x, y)

    def velocity_time_derivative(self, t, x, y):
        x, y = _xy(x, y)
        return self.amplitude * self.lam * np.cos(self.lam * t) * _u(x, y)

    def velocity_divergence(self, t, x, y):
        g = self.velocity_gradient(t, x, y)
        return g[:, 0, 0] + g[:, 1, 1]

    def velocity_laplacian(self, t, x, y):
        x, y = _xy(x, y)
        return self._s(t) * _lap_u(x, y)

    def pressure(self, t, x, y):
        x, y = _xy(x, y)
        return self._s(t) * _p(x, y)

    def pressure_gradient(self, t, x, y):
        x, y = _xy(x, y)
        return self._s(t) * _grad_p(x, y)

    # spatial factors of the forcing: f = cos(lam t) A + sin(lam t) B
    def forcing_cos_part(self, x, y):
        x, y = _xy(x, y)
        return self.amplitude * self.lam * _u(x, y)

    def forcing_sin_part(self, x, y):
        x, y = _xy(x, y)
        return self.amplitude * (_grad_p(x, y) - self.mu * _lap_u(x, y))

    def forcing(self, t, x, y):
        return (np.cos(self.lam * t) * self.forcing_cos_part(x, y)
                + np.sin(self.lam * t) * self.forcing_sin_part(x, y))

    def averaged_forcing_coefficients(self, t0, t1):
        return averaged_coefficients(self.lam, t0, t1)


class CaseData:
    """Spatial quadrature data of an :class:`AnalyticStokes` case on one system.

    Everything time-independent is sampled once at the error quadrature
    points; time enters only through scalar sin/cos factors.
    """

    def __init__(self, system: FemSystem, case: AnalyticStokes):
        self.system = system
        self.case = case
        q = system.quad
        x, y = q.points[:, 0], q.points[:, 1]
        a = case.amplitude
        self.A = case.forcing_cos_part(x, y)
        self.B = case.forcing_sin_part(x, y)
        self.load_A = q.velocity_load(self.A)
        self.load_B = q.velocity_load(self.B)
        # spatial factors of u, du/dt, grad p
        self.grad_U = a * _grad_u(x, y)
        self.load_U = q.velocity_load(a * _u(x, y))
        self.load_gradP = q.velocity_load(a * _grad_p(x, y))
        w = q.weights
        self.AA = float(w @ np.sum(self.A * self.A, axis=1))
        self.AB = float(w @ np.sum(self.A * self.B, axis=1))
        self.BB = float(w @ np.sum(self.B * self.B, axis=1))

    def averaged_load(self, t0: float, t1: float) -> np.ndarray:
        """Load vector of the exact time average of f over [t0, t1]."""
        c, s = averaged_coefficients(self.case.lam, t0, t1)
        return c * self.load_A + s * self.load_B

    def load_at(self, t: float) -> np.ndarray:
        lam = self.case.lam
        return np.cos(lam * t) * self.load_A + np.sin(lam * t) * self.load_B

    def data_oscillation(self, t0: float, t1: float, n_gauss: int = 5) -> float:
        """Integral over [t0, t1] of ||f - mean f||^2, Gauss in time."""
        lam = self.case.lam
        c, s = averaged_coefficients(lam, t0, t1)
        ts, ws = gauss_legendre(n_gauss, t0, t1)
        dc = np.cos(lam * ts) - c
        ds = np.sin(lam * ts) - s
        vals = dc * dc * self.AA + 2 * dc * ds * self.AB + ds * ds * self.BB
        return float(ws @ np.maximum(vals, 0.0))


def averaged_load(data: CaseData, grid, n: int) -> np.ndarray:
    """Load vector for the forcing averaged over step ``n`` of ``grid``."""
    return data.averaged_load(grid.times[n], grid.times[n + 1])
