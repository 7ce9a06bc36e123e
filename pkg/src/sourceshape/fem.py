"""P1 finite elements for the forward problem and the coupled optimality system.

Nodal fields (state ``u``, adjoint ``p``, data interpolants, intensity ``q``)
are plain arrays with one value per mesh vertex. Boundary data are also
stored as full nodal arrays; only the boundary entries are ever read.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import cutcell
from .errors import ConfigurationError
from .levelset import measure_perimeter, measure_volume
from .mesh import TriMesh
from .sparse import DEFAULT_TOL, from_triplets, solve_general, solve_spd

__all__ = [
    "assemble_stiffness",
    "assemble_mass",
    "assemble_h1",
    "assemble_boundary_mass",
    "assemble_indicator_mass",
    "load_volume",
    "load_boundary",
    "operators",
    "solve_forward_neumann",
    "CoupledSolution",
    "solve_coupled_state",
    "coupled_residual",
    "recover_intensity",
    "ObjectiveTerms",
    "compute_objective",
    "l2_error",
    "h1_error",
    "interpolate",
]


def interpolate(mesh: TriMesh, fn) -> np.ndarray:
    """Nodal interpolant of ``fn(x, y)`` (scalars are broadcast)."""
    if np.isscalar(fn):
        return np.full(mesh.n_vertices, float(fn))
    x, y = mesh.vertices.T
    return np.broadcast_to(np.asarray(fn(x, y), dtype=float), (mesh.n_vertices,)).copy()


def _scatter(mesh: TriMesh, local: np.ndarray) -> sp.csr_matrix:
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1)
    cols = np.tile(t, (1, 3))
    n = mesh.n_vertices
    return from_triplets(rows.ravel(), cols.ravel(), local.reshape(len(t), 9).ravel(), n, n)


def assemble_stiffness(mesh: TriMesh) -> sp.csr_matrix:
    G = mesh.basis_gradients
    local = mesh.areas[:, None, None] * np.einsum("tid,tjd->tij", G, G)
    return _scatter(mesh, local)


_MASS_REF = (np.ones((3, 3)) + np.eye(3)) / 12.0


def assemble_mass(mesh: TriMesh) -> sp.csr_matrix:
    return _scatter(mesh, mesh.areas[:, None, None] * _MASS_REF[None])


def assemble_h1(mesh: TriMesh) -> sp.csr_matrix:
    """Matrix of ``a(u, v) = (grad u, grad v) + (u, v)``."""
    return (assemble_stiffness(mesh) + assemble_mass(mesh)).tocsr()


def assemble_boundary_mass(mesh: TriMesh) -> sp.csr_matrix:
    """Exact P1 mass matrix of the outer boundary."""
    e = mesh.boundary_edges
    L = mesh.boundary_lengths
    local = L[:, None, None] * np.array([[2.0, 1.0], [1.0, 2.0]])[None] / 6.0
    rows = np.repeat(e, 2, axis=1).ravel()
    cols = np.tile(e, (1, 2)).ravel()
    n = mesh.n_vertices
    return from_triplets(rows, cols, local.ravel(), n, n)


def assemble_indicator_mass(mesh: TriMesh, phi: np.ndarray) -> sp.csr_matrix:
    """Mass matrix restricted to ``{phi_h < 0}``, integrated exactly on cut elements."""
    parent, bary = cutcell.negative_part(mesh, phi)
    elem, lam, w = cutcell.quadrature(mesh, parent, bary, degree=2)
    t = mesh.triangles[elem]
    vals = w[:, None, None] * lam[:, :, None] * lam[:, None, :]
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    return from_triplets(rows, cols, vals.ravel(), n, n)


def load_volume(mesh: TriMesh, f: np.ndarray) -> np.ndarray:
    """Load vector ``(f_h, v_i)`` for a nodal interpolant ``f``."""
    return operators(mesh).mass @ np.asarray(f, dtype=float)


def load_boundary(mesh: TriMesh, g: np.ndarray) -> np.ndarray:
    """Load vector ``(g_h, v_i)_Gamma`` for nodal boundary values ``g``."""
    return operators(mesh).boundary_mass @ np.asarray(g, dtype=float)


@dataclass(frozen=True)
class Operators:
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    h1: sp.csr_matrix
    boundary_mass: sp.csr_matrix


_OPS: "weakref.WeakKeyDictionary[TriMesh, Operators]" = weakref.WeakKeyDictionary()


def operators(mesh: TriMesh) -> Operators:
    """Shape-independent matrices of ``mesh`` (cached per mesh object)."""
    ops = _OPS.get(mesh)
    if ops is None:
        K, M = assemble_stiffness(mesh), assemble_mass(mesh)
        ops = Operators(K, M, (K + M).tocsr(), assemble_boundary_mass(mesh))
        _OPS[mesh] = ops
    return ops


def solve_forward_neumann(mesh: TriMesh, f, q=None, support=None, u_n=0.0,
                          tol: float = DEFAULT_TOL) -> np.ndarray:
    """Solve ``-lap u + u = f + q chi_support`` with ``du/dn = u_n``.

    ``f``, ``q`` and ``u_n`` are nodal arrays or scalars; ``support`` is a
    nodal level set whose negative part carries ``q`` (the whole domain if
    omitted).
    """
    ops = operators(mesh)
    n = mesh.n_vertices
    f = np.broadcast_to(np.asarray(f, dtype=float), (n,))
    u_n = np.broadcast_to(np.asarray(u_n, dtype=float), (n,))
    rhs = ops.mass @ f + ops.boundary_mass @ u_n
    if q is not None:
        q = np.broadcast_to(np.asarray(q, dtype=float), (n,))
        Mw = ops.mass if support is None else assemble_indicator_mass(mesh, support)
        rhs = rhs + Mw @ q
    return solve_spd(ops.h1, rhs, tol=tol)


@dataclass(frozen=True)
class CoupledSolution:
    """State ``u`` and first adjoint ``p`` of the optimality system."""

    u: np.ndarray
    p: np.ndarray
    alpha: float


def _coupled_blocks(mesh, phi, alpha, Mw=None):
    ops = operators(mesh)
    Mw = assemble_indicator_mass(mesh, phi) if Mw is None else Mw
    return ops.h1, ops.boundary_mass, Mw


def solve_coupled_state(mesh: TriMesh, phi, f, u_n, u_d, alpha: float,
                        form: str = "rescaled", tol: float = DEFAULT_TOL,
                        method: str = "direct", indicator_mass=None) -> CoupledSolution:
    """Solve the coupled system for ``(u, p)`` on ``omega = {phi < 0}``.

    ``form="rescaled"`` solves the symmetric indefinite system in
    ``(u, p / sqrt(alpha))``; ``form="monolithic"`` solves the unscaled
    nonsymmetric block system. Both give the same discrete solution.
    """
    if not alpha > 0:
        raise ConfigurationError(f"alpha must be positive, got {alpha}")
    n = mesh.n_vertices
    A, Mg, Mw = _coupled_blocks(mesh, phi, alpha, indicator_mass)
    f = np.broadcast_to(np.asarray(f, dtype=float), (n,))
    u_n = np.broadcast_to(np.asarray(u_n, dtype=float), (n,))
    u_d = np.broadcast_to(np.asarray(u_d, dtype=float), (n,))
    F = operators(mesh).mass @ f + Mg @ u_n
    G = Mg @ u_d
    if form == "rescaled":
        s = 1.0 / np.sqrt(alpha)
        B = sp.bmat([[-s * Mg, A], [A, s * Mw]], format="csr")
        x = solve_general(B, np.concatenate([-s * G, F]), tol=tol, method=method)
        u, p = x[:n], x[n:] / s
    elif form == "monolithic":
        B = sp.bmat([[A, Mw / alpha], [-Mg, A]], format="csr")
        x = solve_general(B, np.concatenate([F, -G]), tol=tol, method=method)
        u, p = x[:n], x[n:]
    else:
        raise ValueError(f"unknown form {form!r}")
    return CoupledSolution(u, p, float(alpha))


def coupled_residual(mesh: TriMesh, phi, f, u_n, u_d, sol: CoupledSolution) -> tuple[float, float]:
    """Relative residuals of the two discrete equations."""
    n = mesh.n_vertices
    A, Mg, Mw = _coupled_blocks(mesh, phi, sol.alpha)
    F = operators(mesh).mass @ np.broadcast_to(f, (n,)) + Mg @ np.broadcast_to(u_n, (n,))
    r1 = A @ sol.u + Mw @ sol.p / sol.alpha - F
    r2 = A @ sol.p - Mg @ (sol.u - np.broadcast_to(u_d, (n,)))
    scale1 = max(np.linalg.norm(F), np.linalg.norm(A @ sol.u), 1e-300)
    scale2 = max(np.linalg.norm(A @ sol.p), np.linalg.norm(Mg @ sol.u), 1e-300)
    return float(np.linalg.norm(r1) / scale1), float(np.linalg.norm(r2) / scale2)


def recover_intensity(mesh: TriMesh, sol: CoupledSolution, phi) -> np.ndarray:
    """Intensity ``q = -p / alpha`` on the recovered support.

    Values are kept at every node of an element meeting ``{phi < 0}`` so that
    cut elements carry the unmodified ``-p/alpha`` field; the indicator
    itself is applied when integrating. All other nodes are zero.
    """
    phi = cutcell.tie_break(np.asarray(phi, dtype=float))
    touched = np.zeros(mesh.n_vertices, dtype=bool)
    touched[mesh.triangles[np.any(phi[mesh.triangles] < 0, axis=1)].ravel()] = True
    return np.where(touched, -sol.p / sol.alpha, 0.0)


@dataclass(frozen=True)
class ObjectiveTerms:
    misfit: float
    regularization: float
    perimeter: float
    volume: float

    @property
    def total(self) -> float:
        return self.misfit + self.regularization + self.perimeter + self.volume


def compute_objective(mesh: TriMesh, phi, sol: CoupledSolution, u_d, alpha: float,
                      lam: float = 0.0, beta: float = 0.0, gamma0: float = 0.0,
                      indicator_mass=None) -> ObjectiveTerms:
    """Evaluate the four terms of the shape functional.

    The volume term is ``beta * (|omega| - gamma0)``.
    """
    ops = operators(mesh)
    r = sol.u - np.broadcast_to(np.asarray(u_d, dtype=float), (mesh.n_vertices,))
    Mw = assemble_indicator_mass(mesh, phi) if indicator_mass is None else indicator_mass
    misfit = 0.5 * r @ (ops.boundary_mass @ r)
    reg = 0.5 / alpha * sol.p @ (Mw @ sol.p)
    per = lam * measure_perimeter(mesh, phi) if lam else 0.0
    vol = beta * (measure_volume(mesh, phi) - gamma0) if beta else 0.0
    return ObjectiveTerms(float(misfit), float(reg), float(per), float(vol))


def l2_error(mesh: TriMesh, uh: np.ndarray, exact) -> float:
    """``||u_h - u||_{L2}`` with a degree-5 rule."""
    elem, lam, w = cutcell.quadrature(mesh, *cutcell.whole(mesh), degree=5)
    x = cutcell.points_of(mesh, elem, lam)
    diff = np.einsum("qi,qi->q", lam, uh[mesh.triangles[elem]]) - exact(x[:, 0], x[:, 1])
    return float(np.sqrt(np.sum(w * diff**2)))


def h1_error(mesh: TriMesh, uh: np.ndarray, grad_exact) -> float:
    """``|u_h - u|_{H1}`` seminorm with a degree-5 rule."""
    elem, lam, w = cutcell.quadrature(mesh, *cutcell.whole(mesh), degree=5)
    x = cutcell.points_of(mesh, elem, lam)
    gh = np.einsum("tid,ti->td", mesh.basis_gradients, uh[mesh.triangles])[elem]
    gx, gy = grad_exact(x[:, 0], x[:, 1])
    return float(np.sqrt(np.sum(w * ((gh[:, 0] - gx) ** 2 + (gh[:, 1] - gy) ** 2))))
