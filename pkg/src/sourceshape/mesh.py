"""Triangulations of the hold-all square and basic geometric queries."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, MeshError

__all__ = [
    "TriMesh",
    "build_square_mesh",
    "refine_uniform",
    "element_geometry",
    "write_vtk",
]


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Conforming triangulation with counterclockwise triangles.

    Parameters
    ----------
    vertices : (N, 2) array
        Vertex coordinates.
    triangles : (T, 3) int array
        Vertex indices, counterclockwise.
    boundary_edges : (E, 2) int array
        Boundary edges ordered along closed counterclockwise loops.
    boundary_parent : (E,) int array
        Triangle owning each boundary edge.
    vertex_is_boundary : (N,) bool array
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_parent: np.ndarray
    vertex_is_boundary: np.ndarray

    @classmethod
    def from_arrays(cls, vertices, triangles) -> "TriMesh":
        """Build a mesh from raw arrays, deriving the boundary topology."""
        vertices = np.ascontiguousarray(vertices, dtype=float)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        edges, edge_tris, counts = _edge_table(triangles)
        if np.any(counts > 2):
            raise MeshError("non-manifold edge shared by more than two triangles")
        bmask = counts == 1
        bedges = edges[bmask]
        bparent = edge_tris[bmask, 0]
        # orient boundary edges as they appear in the owning triangle (ccw)
        for e in range(len(bedges)):
            tri = triangles[bparent[e]]
            a, b = bedges[e]
            pos = int(np.flatnonzero(tri == a)[0])
            if tri[(pos + 1) % 3] != b:
                bedges[e] = (b, a)
        order = _order_loops(bedges)
        is_b = np.zeros(len(vertices), dtype=bool)
        is_b[bedges.ravel()] = True
        mesh = cls(vertices, triangles, bedges[order], bparent[order], is_b)
        if np.any(mesh.areas <= 0.0):
            bad = int(np.flatnonzero(mesh.areas <= 0.0)[0])
            raise MeshError(f"triangle {bad} has non-positive area")
        return mesh

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Gradients of the barycentric coordinates, shape (T, 3, 2)."""
        p = self.vertices[self.triangles]
        two_a = 2.0 * self.signed_areas
        grads = np.empty((self.n_triangles, 3, 2))
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            # rotate the opposite edge by -90 degrees
            edge = p[:, k] - p[:, j]
            grads[:, i, 0] = -edge[:, 1] / two_a
            grads[:, i, 1] = edge[:, 0] / two_a
        return grads

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges (sorted vertex pairs)."""
        return _edge_table(self.triangles)[0]

    @cached_property
    def h(self) -> float:
        """Maximum edge length."""
        e = self.edges
        return float(np.max(np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)))

    @cached_property
    def boundary_lengths(self) -> np.ndarray:
        e = self.boundary_edges
        return np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def triangle_neighbors(self) -> np.ndarray:
        """Pairs of triangles sharing an interior edge, shape (M, 2)."""
        _, edge_tris, counts = _edge_table(self.triangles)
        return edge_tris[counts == 2]

    @cached_property
    def _locator(self) -> "_BucketLocator":
        return _BucketLocator(self)

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Find the containing triangle and barycentric coordinates of points.

        Points slightly outside the mesh are assigned to the nearest candidate
        triangle; their barycentric coordinates are clipped and renormalised.
        """
        return self._locator(np.atleast_2d(np.asarray(points, dtype=float)))

    def interpolate(self, values: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Evaluate the P1 interpolant of nodal ``values`` at ``points``."""
        tri, bary = self.locate(points)
        return np.einsum("qi,qi...->q...", bary, values[self.triangles[tri]])


def _edge_table(triangles):
    """Unique edges, their (up to two) adjacent triangles and multiplicity."""
    t = len(triangles)
    local = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    owner = np.tile(np.arange(t), 3)
    key = np.sort(local, axis=1)
    edges, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    order = np.argsort(inverse, kind="stable")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    edge_tris = np.full((len(edges), 2), -1, dtype=np.int64)
    edge_tris[:, 0] = owner[order[starts]]
    two = counts >= 2
    edge_tris[two, 1] = owner[order[starts[two] + 1]]
    return edges, edge_tris, counts


def _order_loops(bedges):
    """Permutation of directed boundary edges that walks each closed loop."""
    nxt = {int(a): i for i, (a, _) in enumerate(bedges)}
    if len(nxt) != len(bedges):
        raise MeshError("boundary vertex with more than one outgoing edge")
    seen = np.zeros(len(bedges), dtype=bool)
    order = []
    for start in range(len(bedges)):
        if seen[start]:
            continue
        e = start
        while not seen[e]:
            seen[e] = True
            order.append(e)
            head = int(bedges[e, 1])
            if head not in nxt:
                raise MeshError("open boundary chain")
            e = nxt[head]
    return np.asarray(order, dtype=np.int64)


class _BucketLocator:
    """Uniform-grid bucketing of triangles for vectorised point location."""

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        p = mesh.vertices[mesh.triangles]
        lo = mesh.vertices.min(axis=0)
        hi = mesh.vertices.max(axis=0)
        nb = max(1, int(np.sqrt(mesh.n_triangles / 2)))
        self.lo, self.nb = lo, nb
        self.cell = (hi - lo) / nb * (1 + 1e-12)
        tmin = np.floor((p.min(axis=1) - lo) / self.cell).astype(int).clip(0, nb - 1)
        tmax = np.floor((p.max(axis=1) - lo) / self.cell).astype(int).clip(0, nb - 1)
        buckets: list[list[int]] = [[] for _ in range(nb * nb)]
        for t in range(mesh.n_triangles):
            for ix in range(tmin[t, 0], tmax[t, 0] + 1):
                for iy in range(tmin[t, 1], tmax[t, 1] + 1):
                    buckets[ix * nb + iy].append(t)
        width = max(len(b) for b in buckets)
        table = np.full((nb * nb, width), -1, dtype=np.int64)
        for i, b in enumerate(buckets):
            table[i, : len(b)] = b
        self.table = table

    def __call__(self, points):
        mesh = self.mesh
        idx = np.floor((points - self.lo) / self.cell).astype(int).clip(0, self.nb - 1)
        cand = self.table[idx[:, 0] * self.nb + idx[:, 1]]  # (Q, W)
        valid = cand >= 0
        c = np.where(valid, cand, 0)
        grads = mesh.basis_gradients[c]  # (Q, W, 3, 2)
        x0 = mesh.vertices[mesh.triangles[c]]  # (Q, W, 3, 2)
        # lambda_i(x) = lambda_i(x_v) + grad_i . (x - x_v), anchored at vertex 0
        dx = points[:, None, :] - x0[:, :, 0, :]
        bary = np.einsum("qwid,qwd->qwi", grads, dx)
        bary[:, :, 0] += 1.0
        score = np.where(valid, bary.min(axis=2), -np.inf)
        best = np.argmax(score, axis=1)
        rows = np.arange(len(points))
        tri = c[rows, best]
        b = bary[rows, best]
        if np.any(score[rows, best] < -1e-10):
            b = np.clip(b, 0.0, None)
            b /= b.sum(axis=1, keepdims=True)
        return tri, b


def build_square_mesh(n: int, mode: str = "structured", seed: int = 0,
                      lower: float = -1.0, upper: float = 1.0) -> TriMesh:
    """Triangulate the square ``(lower, upper)^2`` with ``n`` cells per side.

    Each grid cell is split along one diagonal, alternating the diagonal
    direction in a checkerboard pattern. ``mode="perturbed"`` additionally
    jitters interior vertices by at most ``0.2 h`` (``h`` the grid spacing).
    """
    if n < 1:
        raise ConfigurationError(f"mesh subdivisions must be >= 1, got {n}")
    if mode not in ("structured", "perturbed"):
        raise ConfigurationError(f"unknown mesh mode {mode!r}")
    t = np.linspace(lower, upper, n + 1)
    X, Y = np.meshgrid(t, t, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (n + 1) + j

    I, J = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    I, J = I.ravel(), J.ravel()
    a, b, c, d = vid(I, J), vid(I + 1, J), vid(I + 1, J + 1), vid(I, J + 1)
    flip = (I + J) % 2 == 1
    t1 = np.where(flip[:, None], np.column_stack([a, b, d]), np.column_stack([a, b, c]))
    t2 = np.where(flip[:, None], np.column_stack([b, c, d]), np.column_stack([a, c, d]))
    tris = np.concatenate([t1, t2])

    if mode == "perturbed":
        h = (upper - lower) / n
        rng = np.random.default_rng(seed)
        interior = (X.ravel() > lower) & (X.ravel() < upper) & (Y.ravel() > lower) & (Y.ravel() < upper)
        r = 0.2 * h * np.sqrt(rng.uniform(size=interior.sum()))
        ang = rng.uniform(0, 2 * np.pi, size=interior.sum())
        verts[interior] += np.column_stack([r * np.cos(ang), r * np.sin(ang)])
    return TriMesh.from_arrays(verts, tris)


def refine_uniform(mesh: TriMesh) -> TriMesh:
    """Split every triangle into four children through its edge midpoints."""
    edges = mesh.edges
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    lookup = {(int(a), int(b)): nv + k for k, (a, b) in enumerate(edges)}

    def mid(u, v):
        return np.array([lookup[(min(a, b), max(a, b))] for a, b in zip(u, v)], dtype=np.int64)

    t = mesh.triangles
    m01, m12, m20 = mid(t[:, 0], t[:, 1]), mid(t[:, 1], t[:, 2]), mid(t[:, 2], t[:, 0])
    children = np.concatenate([
        np.column_stack([t[:, 0], m01, m20]),
        np.column_stack([m01, t[:, 1], m12]),
        np.column_stack([m20, m12, t[:, 2]]),
        np.column_stack([m01, m12, m20]),
    ])
    return TriMesh.from_arrays(np.vstack([mesh.vertices, mids]), children)


def element_geometry(mesh: TriMesh, t: int) -> tuple[float, np.ndarray]:
    """Area and barycentric basis gradients (3, 2) of triangle ``t``."""
    if not 0 <= t < mesh.n_triangles:
        raise IndexError(f"triangle index {t} out of range")
    area = float(mesh.signed_areas[t])
    if area <= 0.0:
        raise MeshError(f"triangle {t} is degenerate (area {area:g})")
    return area, mesh.basis_gradients[t].copy()


def write_vtk(path, mesh: TriMesh, point_data: dict | None = None, title: str = "sourceshape") -> None:
    """Write the mesh and optional nodal scalars as legacy ASCII VTK."""
    point_data = point_data or {}
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {mesh.n_triangles}")
    lines += ["5"] * mesh.n_triangles
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_vertices}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (mesh.n_vertices,):
                raise ValueError(f"field {name!r} has shape {values.shape}")
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [f"{v:.17g}" for v in values]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
