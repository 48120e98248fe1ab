"""Chorin-Temam pressure-correction time stepping.

Given u^{-1/2} = u0 and p^0 = 0, each step n solves

    (M/dt_n + mu K) u^{n+1/2} = L(f^{n+1}) + (M/dt_n) u^{n-1/2} - G p^n   (Dirichlet dofs = 0)
    Kp p^{n+1} = -(1/dt_{n+1}) D u^{n+1/2}                                  (zero mean)

where f^{n+1} is the forcing averaged over (t_n, t_{n+1}). The pressure
step uses the *next* step size; after the last step dt_N := dt_{N-1}.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fem import FemSystem
from .linalg import DEFAULT_MAXIT, DEFAULT_TOL, SolveReport, SolverError, SPDSolver

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TimeGrid:
    steps: np.ndarray

    def __post_init__(self):
        steps = np.asarray(self.steps, dtype=float)
        if steps.ndim != 1 or len(steps) == 0 or np.any(steps <= 0):
            raise ValueError("time steps must be a non-empty list of positive reals")
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "times", np.concatenate([[0.0], np.cumsum(steps)]))

    @classmethod
    def uniform(cls, T: float, dt: float) -> "TimeGrid":
        if dt <= 0 or T <= 0:
            raise ValueError("T and dt must be positive")
        N = int(round(T / dt))
        if N < 1 or abs(N * dt - T) > 1e-9 * T:
            raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
        grid = cls(np.full(N, T / N))
        grid.times[-1] = T
        return grid

    @property
    def N(self) -> int:
        return len(self.steps)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def dt(self, n: int) -> float:
        """Step size dt_n, with dt_N defined as dt_{N-1}."""
        return float(self.steps[min(n, self.N - 1)])


@dataclass(frozen=True, eq=False)
class Snapshot:
    """State n: t_n, dt_n, u^{n-1/2}, p^n."""

    n: int
    t: float
    dt: float
    u: np.ndarray
    p: np.ndarray
    reports: tuple[SolveReport, ...] = ()


@dataclass(eq=False)
class SchemeTrajectory:
    grid: TimeGrid
    states: list[Snapshot] = field(default_factory=list)

    def __len__(self):
        return len(self.states)

    def __getitem__(self, n) -> Snapshot:
        return self.states[n]


class ChorinTemam:
    """Stepper holding the factorized/preconditioned operators of one system.

    ``method`` selects the linear solver, ``"cg"`` (Jacobi PCG) or
    ``"direct"`` (sparse LU factorized once per step size).
    """

    def __init__(self, system: FemSystem, method: str = "cg",
                 tol: float = DEFAULT_TOL, maxit: int = DEFAULT_MAXIT):
        self.system = system
        self.method = method
        self.tol = tol
        self.maxit = maxit
        self._velocity_solvers: dict[float, SPDSolver] = {}
        self._pressure_solver = SPDSolver(
            system.Kp, method, nullspace="constants",
            weights=system.pressure.lumped_weights, tol=tol, maxit=maxit,
        )

    def velocity_matrix(self, dt: float):
        s = self.system
        return s.restrict(s.M / dt + s.mu * s.K)

    def _velocity_solver(self, dt: float) -> SPDSolver:
        if dt not in self._velocity_solvers:
            self._velocity_solvers[dt] = SPDSolver(
                self.velocity_matrix(dt), self.method, tol=self.tol, maxit=self.maxit
            )
        return self._velocity_solvers[dt]

    def velocity_rhs(self, u_prev, p, dt, load):
        s = self.system
        return load + s.M @ u_prev / dt - s.G @ p

    def velocity_step(self, u_prev: np.ndarray, p: np.ndarray, dt: float,
                      load: np.ndarray) -> tuple[np.ndarray, SolveReport]:
        """u^{n+1/2} from u^{n-1/2}, p^n and the averaged load vector."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        s = self.system
        b = self.velocity_rhs(u_prev, p, dt, load)[s.velocity.free]
        x0 = u_prev[s.velocity.free] if self.method == "cg" else None
        x, report = self._velocity_solver(dt).solve(b, x0)
        if not report.converged:
            raise SolverError(f"velocity solve did not converge: {report}")
        return s.extend(x), report

    def pressure_step(self, u_half: np.ndarray, dt_next: float,
                      p0: np.ndarray | None = None) -> tuple[np.ndarray, SolveReport]:
        """p^{n+1} from u^{n+1/2}; zero lumped-mass mean."""
        if dt_next <= 0:
            raise ValueError("dt must be positive")
        b = -(self.system.D @ u_half) / dt_next
        p, report = self._pressure_solver.solve(b, p0)
        if not report.converged:
            raise SolverError(f"pressure solve did not converge: {report}")
        return p, report

    def run(self, grid: TimeGrid, load: Callable[[int], np.ndarray],
            u0: np.ndarray | None = None,
            visitor: Callable[[Snapshot], None] | None = None,
            store: bool = True) -> SchemeTrajectory:
        """March N steps. ``load(n)`` returns the load vector of f^{n+1}.

        Each snapshot is passed to ``visitor`` as soon as it exists; with
        ``store=False`` only the visitor sees them.
        """
        s = self.system
        u = np.zeros(s.velocity.ndof) if u0 is None else np.array(u0, dtype=float)
        u[s.velocity.dirichlet] = 0.0
        p = np.zeros(s.pressure.ndof)
        traj = SchemeTrajectory(grid)

        def emit(snap):
            if store:
                traj.states.append(snap)
            if visitor is not None:
                visitor(snap)

        emit(Snapshot(0, 0.0, grid.dt(0), u, p))
        for n in range(grid.N):
            dt = grid.dt(n)
            try:
                u_new, rep_u = self.velocity_step(u, p, dt, load(n))
                p_new, rep_p = self.pressure_step(u_new, grid.dt(n + 1),
                                                  p if self.method == "cg" else None)
            except SolverError as exc:
                raise SolverError(f"step {n}: {exc}") from exc
            log.debug(
                "step %d t=%.6g it_u=%d it_p=%d |div u|=%.3e", n, grid.times[n],
                rep_u.iterations, rep_p.iterations, np.sqrt(max(s.div_norm_sq(u_new), 0.0)),
            )
            u, p = u_new, p_new
            emit(Snapshot(n + 1, float(grid.times[n + 1]), grid.dt(n + 1), u, p, (rep_u, rep_p)))
        return traj


def run_scheme(system: FemSystem, grid: TimeGrid, load, u0=None, **kwargs) -> SchemeTrajectory:
    visitor = kwargs.pop("visitor", None)
    store = kwargs.pop("store", True)
    return ChorinTemam(system, **kwargs).run(grid, load, u0, visitor, store)


def reconstruct(traj: SchemeTrajectory, t: float):
    """Evaluate (u^dt(t), p^dt(t), u^{dt,+}(t)) for t in (0, T].

    On (t_n, t_{n+1}] the velocity is the linear interpolant between
    u^{n-1/2} (at t_n) and u^{n+1/2} (at t_{n+1}), the pressure is p^n and
    the forward velocity is u^{n+1/2}.
    """
    times = traj.grid.times
    if not (0.0 < t <= times[-1]):
        raise ValueError(f"t={t} outside (0, {times[-1]}]")
    n = int(np.searchsorted(times, t, side="left")) - 1
    a, b = traj[n].u, traj[n + 1].u
    dt = traj.grid.dt(n)
    s = (t - times[n]) / dt
    return s * b + (1.0 - s) * a, traj[n].p, b
