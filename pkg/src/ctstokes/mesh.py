"""Structured triangulations of a rectangle.

The mesh carries the vertex/edge/triangle connectivity needed by continuous
P1 (vertex) and P2 (vertex + edge midpoint) finite elements.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Rect:
    xmin: float = -1.0
    xmax: float = 1.0
    ymin: float = -1.0
    ymax: float = 1.0

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation with deduplicated edges and boundary flags.

    Attributes
    ----------
    vertices : (V, 2) float array
    triangles : (F, 3) int array, counterclockwise
    edges : (E, 2) int array, lower vertex index first
    triangle_edges : (F, 3) int array
        Local edge k joins local vertices k and (k + 1) % 3.
    boundary_vertex : (V,) bool array
    boundary_edge : (E,) bool array
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    triangle_edges: np.ndarray
    boundary_vertex: np.ndarray
    boundary_edge: np.ndarray
    rect: Rect | None = None
    shape: tuple[int, int] | None = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    def to_text(self) -> str:
        """Plain-text dump: vertex count, coordinates, triangle list."""
        lines = [str(self.n_vertices)]
        lines += [f"{x:.17g} {y:.17g}" for x, y in self.vertices]
        lines.append(str(self.n_triangles))
        lines += [f"{a} {b} {c}" for a, b, c in self.triangles]
        return "\n".join(lines) + "\n"


def _connectivity(triangles: np.ndarray, n_vertices: int):
    local = np.array([[0, 1], [1, 2], [2, 0]])
    pairs = np.sort(triangles[:, local].reshape(-1, 2), axis=1)
    edges, inverse, counts = np.unique(
        pairs, axis=0, return_inverse=True, return_counts=True
    )
    inverse = inverse.reshape(-1)
    triangle_edges = inverse.reshape(-1, 3)
    boundary_edge = counts == 1
    boundary_vertex = np.zeros(n_vertices, dtype=bool)
    boundary_vertex[edges[boundary_edge].ravel()] = True
    return edges, triangle_edges, boundary_edge, boundary_vertex


def build_structured_mesh(rect: Rect, nx: int, ny: int) -> Mesh:
    """Uniform nx-by-ny grid, every cell cut along its lower-left/upper-right diagonal."""
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"nx and ny must be positive integers, got {nx}, {ny}")
    nx, ny = int(nx), int(ny)
    x = np.linspace(rect.xmin, rect.xmax, nx + 1)
    y = np.linspace(rect.ymin, rect.ymax, ny + 1)
    X, Y = np.meshgrid(x, y)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    v00 = (j * (nx + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)

    edges, triangle_edges, boundary_edge, boundary_vertex = _connectivity(
        triangles, len(vertices)
    )
    return Mesh(
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        triangle_edges=triangle_edges,
        boundary_vertex=boundary_vertex,
        boundary_edge=boundary_edge,
        rect=rect,
        shape=(nx, ny),
    )


def mesh_statistics(mesh: Mesh) -> tuple[float, float, float]:
    """Return (min_area, max_area, total_area) of the triangles."""
    areas = mesh.signed_areas()
    return float(areas.min()), float(areas.max()), float(areas.sum())
