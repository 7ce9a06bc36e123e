"""Exact sub-triangulation of mesh elements cut by piecewise-linear level sets.

Sub-triangles are described in barycentric coordinates of their parent
element, so any number of successive clips (e.g. an intersection of two
level sets) stays exact for P1 data.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh

# tie-break for nodal values sitting exactly on the interface
TIE_EPS = 1e-12

# symmetric rules on the reference triangle: barycentric points, weights summing to 1
_RULES = {
    1: (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])),
    2: (np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.full(3, 1 / 3)),
}


def _dunavant5():
    a1, b1 = 0.059715871789770, 0.470142064105115
    a2, b2 = 0.797426985353087, 0.101286507323456
    pts = [[1 / 3, 1 / 3, 1 / 3],
           [a1, b1, b1], [b1, a1, b1], [b1, b1, a1],
           [a2, b2, b2], [b2, a2, b2], [b2, b2, a2]]
    w = [0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3
    return np.array(pts), np.array(w)


_RULES[5] = _dunavant5()


def quadrature_rule(degree: int):
    for d in sorted(_RULES):
        if d >= degree:
            return _RULES[d]
    raise ValueError(f"no rule of degree {degree}")


def tie_break(phi: np.ndarray) -> np.ndarray:
    """Move exact zeros to the positive side."""
    return np.where(phi == 0.0, TIE_EPS, phi)


def whole(mesh: TriMesh, elements=None):
    """Identity sub-triangulation of the given elements."""
    elements = np.arange(mesh.n_triangles) if elements is None else np.asarray(elements)
    bary = np.broadcast_to(np.eye(3), (len(elements), 3, 3)).copy()
    return elements, bary


def clip(parent: np.ndarray, bary: np.ndarray, nodal: np.ndarray, keep: str = "negative"):
    """Clip sub-triangles to the region where a P1 function is negative (or positive).

    Parameters
    ----------
    parent : (S,) int array
        Parent element of each sub-triangle.
    bary : (S, 3, 3) array
        Vertex barycentric coordinates (rows) of each sub-triangle.
    nodal : (S, 3) array
        Values of the P1 function at the parent element's nodes.
    keep : {"negative", "positive"}

    Returns
    -------
    parent, bary
        The clipped sub-triangulation.
    """
    vals = np.einsum("svi,si->sv", bary, tie_break(nodal))
    if keep == "positive":
        vals = -vals
    elif keep != "negative":
        raise ValueError(keep)
    vals = np.where(vals == 0.0, TIE_EPS, vals)
    neg = vals < 0
    nneg = neg.sum(axis=1)

    out_p = [parent[nneg == 3]]
    out_b = [bary[nneg == 3]]

    def cross(B, f, i, j):
        rows = np.arange(len(B))
        s = f[rows, i] / (f[rows, i] - f[rows, j])
        return B[rows, i] + s[:, None] * (B[rows, j] - B[rows, i])

    one = np.flatnonzero(nneg == 1)
    if len(one):
        B, f = bary[one], vals[one]
        i = np.argmax(neg[one], axis=1)
        j, k = (i + 1) % 3, (i + 2) % 3
        rows = np.arange(len(one))
        tri = np.stack([B[rows, i], cross(B, f, i, j), cross(B, f, i, k)], axis=1)
        out_p.append(parent[one])
        out_b.append(tri)

    two = np.flatnonzero(nneg == 2)
    if len(two):
        B, f = bary[two], vals[two]
        k = np.argmin(neg[two], axis=1)  # lone positive vertex
        i, j = (k + 1) % 3, (k + 2) % 3
        rows = np.arange(len(two))
        pki, pkj = cross(B, f, k, i), cross(B, f, k, j)
        t1 = np.stack([pki, B[rows, i], B[rows, j]], axis=1)
        t2 = np.stack([pki, B[rows, j], pkj], axis=1)
        out_p += [parent[two], parent[two]]
        out_b += [t1, t2]

    return np.concatenate(out_p), np.concatenate(out_b)


def negative_part(mesh: TriMesh, phi: np.ndarray):
    """Sub-triangulation of ``{phi_h < 0}``.

    Elements with all nodes negative are returned whole; only cut elements
    are clipped.
    """
    phi = tie_break(np.asarray(phi, dtype=float))
    loc = phi[mesh.triangles]
    inside = np.all(loc < 0, axis=1)
    cut = ~inside & np.any(loc < 0, axis=1)
    p_in, b_in = whole(mesh, np.flatnonzero(inside))
    p_cut, b_cut = whole(mesh, np.flatnonzero(cut))
    p_cut, b_cut = clip(p_cut, b_cut, loc[cut])
    return np.concatenate([p_in, p_cut]), np.concatenate([b_in, b_cut])


def area_fractions(bary: np.ndarray) -> np.ndarray:
    """Sub-triangle area as a fraction of its parent's area."""
    return np.abs(np.linalg.det(bary))


def quadrature(mesh: TriMesh, parent: np.ndarray, bary: np.ndarray, degree: int = 2):
    """Quadrature points on a sub-triangulation.

    Returns
    -------
    elem : (Q,) parent element of each point
    lam : (Q, 3) barycentric coordinates in the parent
    weights : (Q,) physical weights (sum = area covered)
    """
    pts, w = quadrature_rule(degree)
    frac = area_fractions(bary) * mesh.areas[parent]
    lam = np.einsum("qm,smi->sqi", pts, bary).reshape(-1, 3)
    weights = (frac[:, None] * w[None, :]).ravel()
    elem = np.repeat(parent, len(w))
    return elem, lam, weights


def points_of(mesh: TriMesh, elem: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Physical coordinates of barycentric points."""
    return np.einsum("qi,qid->qd", lam, mesh.vertices[mesh.triangles[elem]])
