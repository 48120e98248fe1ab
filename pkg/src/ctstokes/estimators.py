"""Time-discretization error estimators and true errors, interval by interval.

Notation per interval (t_n, t_{n+1}]: a = u^{n-1/2}, b = u^{n+1/2},
dt = dt_n; the reconstructed velocity is linear from a to b, so every
estimator integrand is a polynomial of degree <= 2 in t and is integrated in
closed form. Error integrals against the analytic solution use Gauss rules in
time and the degree-6 rule in space.

Cumulative estimators at T = t_{n+1}:

    est1 = sum grad_increment + sum div_l2 + (sum div_rate_l1)^2
    est2 = sum grad_increment + sum div_l2 + sum div_rate_l2
    est3 = sum grad_increment + sum pressure_increment
    error = sum err_grad + sum err_dual
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .fem import FemSystem
from .linalg import DEFAULT_MAXIT, DEFAULT_TOL, SolverError, SPDSolver
from .manufactured import AnalyticStokes, CaseData
from .quadrature import gauss_legendre


@dataclass(frozen=True)
class IntervalTerms:
    grad_increment: float = 0.0
    div_l2: float = 0.0
    div_rate_l1: float = 0.0
    div_rate_l2: float = 0.0
    pressure_increment: float = 0.0
    div_endpoint_sq_max: float = 0.0
    data_osc: float = 0.0
    err_grad: float = 0.0
    err_dual: float = 0.0
    # unweighted integral of ||div u^dt||^2 over the interval, for the
    # lower-bound proof chain
    div_sq_integral: float = 0.0
    dt: float = 0.0


def interval_terms(system: FemSystem, a, b, p0, p1, dt: float, dt_next: float) -> IntervalTerms:
    """Closed-form reconstruction terms of one interval.

    ``p0``, ``p1`` are p^n and p^{n+1}; ``dt_next`` is dt_{n+1}.
    """
    q = system.quad_exact
    w = q.weights
    mu = system.mu
    da, db = q.velocity_divergence(a), q.velocity_divergence(b)
    aa, ab, bb = w @ (da * da), w @ (da * db), w @ (db * db)
    dd = w @ ((db - da) ** 2)
    gj = q.velocity_gradients(b - a)
    gg = w @ np.sum(gj * gj, axis=(1, 2))
    div_sq = dt / 3.0 * (aa + ab + bb)
    gp = dt_next * q.pressure_gradients(p1) - dt * q.pressure_gradients(p0)
    return IntervalTerms(
        grad_increment=float(mu * dt / 3.0 * gg),
        div_l2=float(mu * div_sq),
        div_rate_l1=float(math.sqrt(dd)),
        div_rate_l2=float(dd / dt),
        pressure_increment=float(w @ np.sum(gp * gp, axis=1)),
        div_endpoint_sq_max=float(max(aa, bb)),
        div_sq_integral=float(div_sq),
        dt=float(dt),
    )


def assemble_riesz_load(system: FemSystem, g, t=None) -> np.ndarray:
    """Load vector (g, phi_i) of a pointwise vector field by degree-6 quadrature."""
    q = system.quad
    x, y = q.points[:, 0], q.points[:, 1]
    vals = g(x, y) if t is None else g(t, x, y)
    return q.velocity_load(np.asarray(vals, dtype=float))


def riesz_solver(system: FemSystem, method: str = "cg", tol: float = DEFAULT_TOL,
                 maxit: int = DEFAULT_MAXIT) -> SPDSolver:
    """Solver for the full-H1 Riesz system (grad w, grad v) + (w, v) on Dirichlet dofs."""
    key = ("riesz", method, tol, maxit)
    if key not in system._cache:
        system._cache[key] = SPDSolver(system.restrict(system.K + system.M), method,
                                       tol=tol, maxit=maxit)
    return system._cache[key]


def dual_norm_sq(system: FemSystem, g, t=None, solver: SPDSolver | None = None,
                 x0=None, return_representative: bool = False):
    """Squared discrete dual norm of g with respect to the full H1 norm.

    ``g`` is either an assembled load vector or a pointwise field
    ``g(x, y)`` / ``g(t, x, y)``. Returns (g, w) with w the Riesz
    representative in the Dirichlet P2 space.
    """
    if callable(g):
        g = assemble_riesz_load(system, g, t)
    solver = solver or riesz_solver(system)
    gf = np.asarray(g, dtype=float)[system.velocity.free]
    w, report = solver.solve(gf, x0)
    if not report.converged:
        raise SolverError(f"Riesz solve did not converge: {report}")
    val = max(float(gf @ w), 0.0)
    return (val, w) if return_representative else val


class ErrorEvaluator:
    """True-error integrals of a scheme run against an analytic solution."""

    def __init__(self, system: FemSystem, case: AnalyticStokes, time_points: int = 3,
                 osc_points: int = 5, method: str = "cg", tol: float = DEFAULT_TOL,
                 maxit: int = DEFAULT_MAXIT):
        if time_points < 1:
            raise ValueError("need at least one time quadrature point")
        self.system = system
        self.case = case
        self.data = CaseData(system, case)
        self.time_points = time_points
        self.osc_points = osc_points
        self.solver = riesz_solver(system, method, tol, maxit)
        self._w = None

    def error_terms(self, a, b, p0, t0: float, t1: float) -> tuple[float, float, float]:
        """(err_grad, err_dual, data_osc) over (t0, t1]."""
        s = self.system
        q = s.quad
        lam = self.case.lam
        dt = t1 - t0
        ga, gb = q.velocity_gradients(a), q.velocity_gradients(b)
        rate_load = s.M @ ((b - a) / dt) + s.G @ p0
        ts, ws = gauss_legendre(self.time_points, t0, t1)
        err_grad = err_dual = 0.0
        for t, wt in zip(ts, ws):
            r = (t - t0) / dt
            e = np.sin(lam * t) * self.data.grad_U - (r * gb + (1.0 - r) * ga)
            err_grad += wt * (q.weights @ np.sum(e * e, axis=(1, 2)))
            load = (lam * np.cos(lam * t)) * self.data.load_U \
                + np.sin(lam * t) * self.data.load_gradP - rate_load
            val, self._w = dual_norm_sq(s, load, solver=self.solver, x0=self._w,
                                        return_representative=True)
            err_dual += wt * val
        osc = self.data.data_oscillation(t0, t1, self.osc_points)
        return float(s.mu * err_grad), float(err_dual), osc


def error_terms(system, traj, n, case, time_rule: int = 3):
    """(err_grad, err_dual, data_osc) of interval n of a stored trajectory."""
    ev = ErrorEvaluator(system, case, time_points=time_rule)
    t0, t1 = traj.grid.times[n], traj.grid.times[n + 1]
    return ev.error_terms(traj[n].u, traj[n + 1].u, traj[n].p, t0, t1)


def effectivity(estimate: float, error: float) -> float:
    """estimate / error; NaN flags a zero error."""
    return estimate / error if error > 0.0 else float("nan")


@dataclass(frozen=True)
class Checkpoint:
    n: int
    T: float
    est1: float
    est2: float
    est3: float
    linf_term: float
    error_grad_sq: float
    error_dual_sq: float
    error_total: float
    data_osc: float
    eff1: float
    eff2: float
    eff3: float


class EstimatorLedger:
    """Ordered fold of :class:`IntervalTerms` into cumulative estimators."""

    _SUMMED = ("grad_increment", "div_l2", "div_rate_l1", "div_rate_l2",
               "pressure_increment", "data_osc", "err_grad", "err_dual")

    def __init__(self, n_steps: int, include_linf: bool = True):
        self.n_steps = n_steps
        self.include_linf = include_linf
        self.sums = {k: 0.0 for k in self._SUMMED}
        self.linf = 0.0
        self.T = 0.0
        self.next_interval = 0
        self.proof_rhs = 0.0          # sum 12 N / dt_n * int ||div u^dt||^2
        self._pending_ratio: list[tuple[float, float]] = []
        self.checkpoints: list[Checkpoint] = []

    def accumulate(self, terms: IntervalTerms, n: int, t: float | None = None) -> Checkpoint:
        if n != self.next_interval:
            raise ValueError(f"interval {n} supplied out of order (expected {self.next_interval})")
        for k in self._SUMMED:
            self.sums[k] += getattr(terms, k)
        self.linf = max(self.linf, terms.div_endpoint_sq_max)
        self.T = self.T + terms.dt if t is None else float(t)
        self.next_interval += 1
        if terms.dt > 0:
            self.proof_rhs += 12.0 * self.n_steps / terms.dt * terms.div_sq_integral
        if terms.div_rate_l1 > 0:
            self._pending_ratio.append((terms.pressure_increment, terms.div_rate_l1**2))
        cp = self.checkpoint(n + 1)
        self.checkpoints.append(cp)
        return cp

    @property
    def est1(self) -> float:
        s = self.sums
        return s["grad_increment"] + s["div_l2"] + s["div_rate_l1"] ** 2

    @property
    def est2(self) -> float:
        s = self.sums
        return s["grad_increment"] + s["div_l2"] + s["div_rate_l2"]

    @property
    def est3(self) -> float:
        s = self.sums
        return s["grad_increment"] + s["pressure_increment"]

    @property
    def error(self) -> float:
        return self.sums["err_grad"] + self.sums["err_dual"]

    @property
    def proof_lhs(self) -> float:
        return self.sums["div_rate_l1"] ** 2

    def pressure_ratio(self) -> float:
        """max_n pressure_increment_n / ||div(b - a)||^2 over intervals with nonzero rate."""
        if not self._pending_ratio:
            return 0.0
        return max(pi / dd for pi, dd in self._pending_ratio)

    def checkpoint(self, n: int) -> Checkpoint:
        extra = self.linf if self.include_linf else 0.0
        err = self.error
        return Checkpoint(
            n=n, T=self.T,
            est1=self.est1, est2=self.est2, est3=self.est3, linf_term=self.linf,
            error_grad_sq=self.sums["err_grad"], error_dual_sq=self.sums["err_dual"],
            error_total=err, data_osc=self.sums["data_osc"],
            eff1=effectivity(self.est1 + extra, err),
            eff2=effectivity(self.est2 + extra, err),
            eff3=effectivity(self.est3 + extra, err),
        )


def accumulate(ledger: EstimatorLedger, terms: IntervalTerms, n: int) -> EstimatorLedger:
    ledger.accumulate(terms, n)
    return ledger


def with_errors(terms: IntervalTerms, err_grad: float, err_dual: float,
                data_osc: float) -> IntervalTerms:
    values = {f.name: getattr(terms, f.name) for f in fields(terms)}
    values.update(err_grad=err_grad, err_dual=err_dual, data_osc=data_osc)
    return IntervalTerms(**values)
