"""P2/P1 Taylor-Hood spaces, bilinear-form assembly and quadrature evaluation.

Velocity dof layout: scalar P2 nodes are the mesh vertices followed by the edge
midpoints; the two components are interleaved, so component ``c`` of node
``i`` is dof ``2 * i + c``. Pressure dofs are the mesh vertices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .linalg import as_csr, symmetrize
from .mesh import Mesh
from .quadrature import QuadratureRule, make_quadrature

ASSEMBLY_DEGREE = 4
ERROR_DEGREE = 6

# local edge k joins local vertices k and (k + 1) % 3
_EDGE_VERTS = np.array([[0, 1], [1, 2], [2, 0]])


def barycentric_gradients(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Per-triangle gradients of the barycentric coordinates (F, 3, 2) and areas (F,)."""
    p = mesh.vertices[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    g = np.empty((len(p), 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        g[:, i, 0] = (y[:, j] - y[:, k]) / area2
        g[:, i, 1] = (x[:, k] - x[:, j]) / area2
    return g, 0.5 * area2


def p2_values(bary: np.ndarray) -> np.ndarray:
    """P2 shape functions at barycentric points, (nq, 6)."""
    L = bary
    vals = [L[:, i] * (2 * L[:, i] - 1) for i in range(3)]
    vals += [4 * L[:, a] * L[:, b] for a, b in _EDGE_VERTS]
    return np.column_stack(vals)


def p2_gradients(bary: np.ndarray, bgrad: np.ndarray) -> np.ndarray:
    """Physical P2 shape gradients, (F, nq, 6, 2)."""
    L = bary[None, :, :, None]           # 1, nq, 3, 1
    G = bgrad[:, None, :, :]             # F, 1, 3, 2
    out = np.empty((bgrad.shape[0], bary.shape[0], 6, 2))
    out[:, :, :3] = (4 * L - 1) * G
    for k, (a, b) in enumerate(_EDGE_VERTS):
        out[:, :, 3 + k] = 4 * (L[:, :, a] * G[:, :, b] + L[:, :, b] * G[:, :, a])
    return out


@dataclass(eq=False)
class VelocitySpace:
    mesh: Mesh

    def __post_init__(self):
        m = self.mesh
        nv = m.n_vertices
        self.n_nodes = nv + m.n_edges
        self.ndof = 2 * self.n_nodes
        self.element_nodes = np.hstack([m.triangles, nv + m.triangle_edges])
        self.node_coords = np.vstack([m.vertices, m.edge_midpoints()])
        on_boundary = np.concatenate([m.boundary_vertex, m.boundary_edge])
        self.dirichlet = np.repeat(on_boundary, 2)
        self.free = np.flatnonzero(~self.dirichlet)
        # (F, 12) vector dofs, ordered 2 * local_node + component
        self.element_dofs = (2 * self.element_nodes[:, :, None] + np.arange(2)).reshape(-1, 12)


@dataclass(eq=False)
class PressureSpace:
    mesh: Mesh

    def __post_init__(self):
        m = self.mesh
        self.ndof = m.n_vertices
        self.element_dofs = m.triangles
        areas = m.signed_areas()
        self.lumped_weights = np.bincount(
            m.triangles.ravel(), weights=np.repeat(areas / 3.0, 3), minlength=self.ndof
        )


def interpolate(space, analytic, t=None) -> np.ndarray:
    """Nodal interpolant of ``analytic``.

    ``analytic`` is called as ``analytic(x, y)`` or, when ``t`` is given,
    ``analytic(t, x, y)`` with coordinate arrays; for the velocity space it must
    return an array of shape (n, 2) (or a pair of arrays).
    """
    if isinstance(space, VelocitySpace):
        xy = space.node_coords
    else:
        xy = space.mesh.vertices
    args = (xy[:, 0], xy[:, 1]) if t is None else (t, xy[:, 0], xy[:, 1])
    vals = analytic(*args)
    if isinstance(space, VelocitySpace):
        vals = np.asarray(vals, dtype=float)
        if vals.shape[0] == 2 and vals.ndim == 2 and vals.shape[1] != 2:
            vals = vals.T
        return np.broadcast_to(vals, (len(xy), 2)).ravel().copy()
    return np.broadcast_to(np.asarray(vals, dtype=float), (len(xy),)).copy()


def _scatter(rows, cols, vals, shape) -> sp.csr_matrix:
    return as_csr(sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape))


def _pairs(row_dofs, col_dofs):
    r = np.broadcast_to(row_dofs[:, :, None], row_dofs.shape + (col_dofs.shape[1],))
    c = np.broadcast_to(col_dofs[:, None, :], r.shape)
    return r, c


class QuadratureData:
    """Quadrature points of every triangle with sparse evaluation operators.

    Points are ordered triangle-major. The operators map coefficient vectors
    to values at the points: scalar P2 (node space) values and partial
    derivatives, and P1 values and partial derivatives.
    """

    def __init__(self, mesh: Mesh, rule: QuadratureRule):
        self.mesh = mesh
        self.rule = rule
        vspace = VelocitySpace(mesh)
        bgrad, areas = barycentric_gradients(mesh)
        nt, nq = mesh.n_triangles, len(rule)
        self.n_points = nt * nq
        verts = mesh.vertices[mesh.triangles]                       # F,3,2
        self.points = np.einsum("qk,fkd->fqd", rule.barycentric, verts).reshape(-1, 2)
        self.weights = (2.0 * areas[:, None] * rule.weights[None, :]).ravel()

        rows = np.broadcast_to(np.arange(self.n_points).reshape(nt, nq, 1), (nt, nq, 6))
        cols = np.broadcast_to(vspace.element_nodes[:, None, :], (nt, nq, 6))
        shape = (self.n_points, vspace.n_nodes)
        phi = np.broadcast_to(p2_values(rule.barycentric)[None], (nt, nq, 6))
        dphi = p2_gradients(rule.barycentric, bgrad)
        self.p2 = _scatter(rows, cols, phi, shape)
        self.p2_dx = _scatter(rows, cols, dphi[..., 0], shape)
        self.p2_dy = _scatter(rows, cols, dphi[..., 1], shape)

        rows = rows[..., :3]
        cols = np.broadcast_to(mesh.triangles[:, None, :], (nt, nq, 3))
        shape = (self.n_points, mesh.n_vertices)
        psi = np.broadcast_to(rule.barycentric[None], (nt, nq, 3))
        dpsi = np.broadcast_to(bgrad[:, None], (nt, nq, 3, 2))
        self.p1 = _scatter(rows, cols, psi, shape)
        self.p1_dx = _scatter(rows, cols, dpsi[..., 0], shape)
        self.p1_dy = _scatter(rows, cols, dpsi[..., 1], shape)

    def integrate(self, values: np.ndarray) -> float:
        return float(self.weights @ values)

    def velocity_values(self, U: np.ndarray) -> np.ndarray:
        N = U.reshape(-1, 2)
        return self.p2 @ N

    def velocity_gradients(self, U: np.ndarray) -> np.ndarray:
        """(n_points, 2, 2) with entry [i, j] = d u_i / d x_j."""
        N = U.reshape(-1, 2)
        return np.stack([self.p2_dx @ N, self.p2_dy @ N], axis=-1)

    def velocity_divergence(self, U: np.ndarray) -> np.ndarray:
        N = U.reshape(-1, 2)
        return self.p2_dx @ N[:, 0] + self.p2_dy @ N[:, 1]

    def pressure_values(self, P: np.ndarray) -> np.ndarray:
        return self.p1 @ P

    def pressure_gradients(self, P: np.ndarray) -> np.ndarray:
        return np.column_stack([self.p1_dx @ P, self.p1_dy @ P])

    def velocity_load(self, values: np.ndarray) -> np.ndarray:
        """Load vector (g, phi_i) for a vector field sampled at the points, (n, 2)."""
        wv = self.weights[:, None] * values
        return (self.p2.T @ wv).ravel()


def integrate_field(quad: QuadratureData, integrand, **fields) -> float:
    """Quadrature of ``integrand(x, **sampled)`` over the mesh.

    Keyword ``fields`` name FE fields as ``(kind, coefficients)`` with kind one
    of ``"u"``, ``"grad_u"``, ``"div_u"``, ``"p"``, ``"grad_p"``; each is
    sampled at the points and passed to ``integrand`` under the same name.
    """
    sample = {
        "u": quad.velocity_values,
        "grad_u": quad.velocity_gradients,
        "div_u": quad.velocity_divergence,
        "p": quad.pressure_values,
        "grad_p": quad.pressure_gradients,
    }
    sampled = {name: sample[kind](coef) for name, (kind, coef) in fields.items()}
    return quad.integrate(integrand(quad.points, **sampled))


@dataclass(eq=False)
class FemSystem:
    """Assembled Taylor-Hood operators on one mesh.

    All velocity operators are kept on the full dof set; solvers restrict them
    to ``velocity.free`` (homogeneous Dirichlet data, so the elimination adds
    nothing to the right-hand side).

    M, K : velocity mass and gradient-gradient stiffness
    C    : div-div form (div phi_i, div phi_j), for ||div u||^2
    Kp   : pressure Neumann stiffness
    Mp   : pressure consistent mass
    D    : (q_k, div phi_j), pressure rows by velocity columns
    G    : (phi_i, grad q_k), velocity rows by pressure columns
    """

    mesh: Mesh
    mu: float
    velocity: VelocitySpace
    pressure: PressureSpace
    M: sp.csr_matrix
    K: sp.csr_matrix
    C: sp.csr_matrix
    Kp: sp.csr_matrix
    Mp: sp.csr_matrix
    D: sp.csr_matrix
    G: sp.csr_matrix
    error_degree: int = ERROR_DEGREE
    _cache: dict = field(default_factory=dict, repr=False)

    @cached_property
    def quad(self) -> QuadratureData:
        """High-order quadrature used for every error integral."""
        return QuadratureData(self.mesh, make_quadrature(self.error_degree))

    @cached_property
    def quad_exact(self) -> QuadratureData:
        """Degree-2 rule: exact for products of P2 gradients/divergences."""
        return QuadratureData(self.mesh, make_quadrature(2))

    def restrict(self, A: sp.csr_matrix) -> sp.csr_matrix:
        f = self.velocity.free
        return as_csr(A[f][:, f])

    def extend(self, Uf: np.ndarray) -> np.ndarray:
        U = np.zeros(self.velocity.ndof)
        U[self.velocity.free] = Uf
        return U

    def grad_norm_sq(self, U) -> float:
        return float(U @ (self.K @ U))

    def div_norm_sq(self, U) -> float:
        return float(U @ (self.C @ U))

    def div_inner(self, U, V) -> float:
        return float(U @ (self.C @ V))

    def pressure_grad_norm_sq(self, P) -> float:
        return float(P @ (self.Kp @ P))


def assemble_system(mesh: Mesh, mu: float, degree: int = ASSEMBLY_DEGREE,
                    error_degree: int = ERROR_DEGREE) -> FemSystem:
    if mu <= 0:
        raise ValueError("viscosity must be positive")
    rule = make_quadrature(degree)
    vspace, pspace = VelocitySpace(mesh), PressureSpace(mesh)
    bgrad, areas = barycentric_gradients(mesh)
    w = 2.0 * areas[:, None] * rule.weights[None, :]            # F, nq

    phi = p2_values(rule.barycentric)                            # nq, 6
    dphi = p2_gradients(rule.barycentric, bgrad)                 # F, nq, 6, 2
    psi = rule.barycentric                                       # nq, 3 (P1)

    Ms = np.einsum("fq,qi,qj->fij", w, phi, phi)
    Ks = np.einsum("fq,fqid,fqjd->fij", w, dphi, dphi)
    # vector dof a = 2 * i + c; div of (phi_i e_c) is d_c phi_i
    divv = dphi.reshape(dphi.shape[0], dphi.shape[1], 12)
    Cl = np.einsum("fq,fqa,fqb->fab", w, divv, divv)
    Dl = np.einsum("fq,qk,fqa->fka", w, psi, divv)               # F, 3, 12
    # (phi_i e_c) . grad q_k = phi_i d_c q_k
    Gl = np.einsum("fq,qi,fkc->fick", w, phi, bgrad).reshape(-1, 12, 3)
    Kpl = np.einsum("f,fid,fjd->fij", areas, bgrad, bgrad)
    Mpl = np.einsum("fq,qi,qj->fij", w, psi, psi)

    nn, nv = vspace.n_nodes, pspace.ndof
    sdofs = vspace.element_nodes
    Ms = _scatter(*_pairs(sdofs, sdofs), Ms, (nn, nn))
    Ks = _scatter(*_pairs(sdofs, sdofs), Ks, (nn, nn))
    I2 = sp.identity(2, format="csr")
    vd, pd = vspace.element_dofs, pspace.element_dofs
    return FemSystem(
        mesh=mesh,
        mu=float(mu),
        velocity=vspace,
        pressure=pspace,
        M=symmetrize(sp.kron(Ms, I2)),
        K=symmetrize(sp.kron(Ks, I2)),
        C=symmetrize(_scatter(*_pairs(vd, vd), Cl, (2 * nn, 2 * nn))),
        Kp=symmetrize(_scatter(*_pairs(pd, pd), Kpl, (nv, nv))),
        Mp=symmetrize(_scatter(*_pairs(pd, pd), Mpl, (nv, nv))),
        D=_scatter(*_pairs(pd, vd), Dl, (nv, 2 * nn)),
        G=_scatter(*_pairs(vd, pd), Gl, (2 * nn, nv)),
        error_degree=error_degree,
    )


def locate_points(mesh: Mesh, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Containing triangle and barycentric coordinates of each point (brute force)."""
    bgrad, _ = barycentric_gradients(mesh)
    v0 = mesh.vertices[mesh.triangles[:, 0]]
    tri = np.empty(len(points), dtype=int)
    bary = np.empty((len(points), 3))
    for n, x in enumerate(np.atleast_2d(points)):
        l12 = np.einsum("fkd,fd->fk", bgrad[:, 1:], x - v0)
        L = np.column_stack([1 - l12.sum(1), l12])
        f = int(np.argmax(L.min(axis=1)))
        tri[n], bary[n] = f, L[f]
    return tri, bary


def evaluate_velocity(mesh: Mesh, U: np.ndarray, points: np.ndarray) -> np.ndarray:
    vspace = VelocitySpace(mesh)
    tri, bary = locate_points(mesh, points)
    phi = p2_values(bary)                                        # n, 6
    N = U.reshape(-1, 2)[vspace.element_nodes[tri]]             # n, 6, 2
    return np.einsum("ni,nic->nc", phi, N)


def evaluate_pressure(mesh: Mesh, P: np.ndarray, points: np.ndarray) -> np.ndarray:
    tri, bary = locate_points(mesh, points)
    return np.einsum("nk,nk->n", bary, P[mesh.triangles[tri]])
