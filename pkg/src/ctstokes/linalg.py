"""Sparse storage and symmetric solvers.

Matrices are ``scipy.sparse.csr_matrix`` with sorted, unique column indices.
The conjugate gradient solver is written out here because it has to deflate
the constant kernel of the Neumann pressure Laplacian.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAXIT = 10000


class SolverError(RuntimeError):
    pass


class InconsistentSystemError(SolverError):
    """Right-hand side of a singular system is not orthogonal to its kernel."""


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    final_residual: float
    converged: bool


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    return A


def symmetrize(A) -> sp.csr_matrix:
    return as_csr(0.5 * (A + A.T))


def spmv(A: sp.csr_matrix, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {x.shape}")
    return A @ x


def weighted_mean(x: np.ndarray, weights: np.ndarray) -> float:
    return float(weights @ x / weights.sum())


def cg_solve(
    A: sp.csr_matrix,
    b: np.ndarray,
    tol: float = DEFAULT_TOL,
    maxit: int = DEFAULT_MAXIT,
    precond: str = "diagonal",
    nullspace: str = "none",
    weights: np.ndarray | None = None,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Preconditioned conjugate gradients for SPD / constant-kernel SPSD systems.

    With ``nullspace="constants"`` the right-hand side, the preconditioned
    residuals and the iterates are kept in the Euclidean complement of the
    constant vector; the returned solution is shifted to have zero mean with
    respect to ``weights`` (uniform when omitted).

    Returns the solution and a :class:`SolveReport`; non-convergence is
    reported, not raised.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"dimension mismatch: {A.shape} vs rhs {b.shape}")
    if precond not in ("none", "diagonal"):
        raise ValueError(f"unknown preconditioner {precond!r}")
    if nullspace not in ("none", "constants"):
        raise ValueError(f"unknown nullspace {nullspace!r}")
    deflate = nullspace == "constants"

    # unit-scaled rhs keeps norms and recurrences clear of under/overflow
    scale = float(np.max(np.abs(b))) if n else 0.0
    if scale == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True)
    b = b / scale
    bnorm = np.linalg.norm(b)
    if deflate:
        if abs(b.sum()) > 1e-10 * bnorm * np.sqrt(n):
            raise InconsistentSystemError(
                f"rhs not orthogonal to constants: sum={b.sum() * scale:.3e}, "
                f"norm={bnorm * scale:.3e}"
            )
        b = b - b.mean()
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            return np.zeros(n), SolveReport(0, 0.0, True)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float) / scale
    if deflate:
        x -= x.mean()

    inv_diag = 1.0 / A.diagonal() if precond == "diagonal" else None

    def precondition(r):
        z = r * inv_diag if inv_diag is not None else r.copy()
        if deflate:
            z -= z.mean()
        return z

    it = 0
    # the recurrence residual drifts from b - A x; restart from the true one
    # when it claims convergence the true residual does not confirm
    for _ in range(4):
        r = b - A @ x
        if np.linalg.norm(r) <= tol * bnorm or it >= maxit:
            break
        z = precondition(r)
        d = z.copy()
        rz = r @ z
        while it < maxit:
            it += 1
            q = A @ d
            alpha = rz / (d @ q)
            x += alpha * d
            r -= alpha * q
            if np.linalg.norm(r) <= tol * bnorm:
                break
            z = precondition(r)
            rz_new = r @ z
            d = z + (rz_new / rz) * d
            rz = rz_new

    if deflate:
        x -= x.mean() if weights is None else weighted_mean(x, weights)
    true_res = np.linalg.norm(b - A @ x) / bnorm
    return x * scale, SolveReport(it, float(true_res), bool(true_res <= tol))


class SPDSolver:
    """Repeated solves with one fixed matrix.

    ``method="cg"`` runs :func:`cg_solve` (optionally warm-started);
    ``method="direct"`` factorizes once with SuperLU. For the constant-kernel
    case the direct route factorizes the system bordered by the constant
    vector, which selects the Euclidean zero-mean solution.
    """

    def __init__(
        self,
        A: sp.csr_matrix,
        method: str = "cg",
        nullspace: str = "none",
        weights: np.ndarray | None = None,
        tol: float = DEFAULT_TOL,
        maxit: int = DEFAULT_MAXIT,
    ):
        if method not in ("cg", "direct"):
            raise ValueError(f"unknown solver method {method!r}")
        self.A = A
        self.method = method
        self.nullspace = nullspace
        self.weights = weights
        self.tol = tol
        self.maxit = maxit
        self._lu = None
        if method == "direct":
            M = A
            if nullspace == "constants":
                n = A.shape[0]
                ones = np.ones((n, 1))
                M = sp.bmat([[A, ones], [ones.T, None]])
            self._lu = spla.splu(sp.csc_matrix(M))

    def solve(self, b: np.ndarray, x0: np.ndarray | None = None):
        if self.method == "cg":
            return cg_solve(
                self.A, b, self.tol, self.maxit, "diagonal", self.nullspace,
                self.weights, x0,
            )
        b = np.asarray(b, dtype=float)
        n = b.shape[0]
        scale = float(np.max(np.abs(b))) if n else 0.0
        if scale == 0.0:
            return np.zeros(n), SolveReport(0, 0.0, True)
        b = b / scale
        bnorm = np.linalg.norm(b)
        if self.nullspace == "constants":
            if abs(b.sum()) > 1e-10 * bnorm * np.sqrt(n):
                raise InconsistentSystemError(
                    f"rhs not orthogonal to constants: sum={b.sum() * scale:.3e}"
                )
            b = b - b.mean()
            bnorm = np.linalg.norm(b)
            if bnorm == 0.0:
                return np.zeros(n), SolveReport(0, 0.0, True)
            x = self._lu.solve(np.append(b, 0.0))[:n]
            if self.weights is not None:
                x -= weighted_mean(x, self.weights)
        else:
            x = self._lu.solve(b)
        res = np.linalg.norm(b - self.A @ x) / bnorm
        return x * scale, SolveReport(1, float(res), bool(res <= self.tol))
