"""Verification studies shared by the ``check``/``convergence`` commands and the tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import fem
from ..levelset import init_from_expression, reinitialize
from ..mesh import TriMesh, build_square_mesh, refine_uniform
from ..shapeopt import Problem, adjoint_state, finite_difference_check, shape_gradient_distributed, \
    shape_gradient_surface
from .problems import ProblemSpec, build_problem, generate_data

__all__ = [
    "ConvergenceRow", "convergence_study", "observed_rates", "stability_sweep",
    "shortcut_residuals", "random_velocity", "fd_study", "gradient_form_agreement", "setup_geometry",
]


def _u_exact(x, y):
    return np.cos(np.pi * x) * np.cos(np.pi * y)


def _grad_exact(x, y):
    return (-np.pi * np.sin(np.pi * x) * np.cos(np.pi * y),
            -np.pi * np.cos(np.pi * x) * np.sin(np.pi * y))


@dataclass(frozen=True)
class ConvergenceRow:
    n_triangles: int
    h: float
    l2: float
    h1: float


def convergence_study(n0: int = 8, refinements: int = 3) -> list[ConvergenceRow]:
    """Errors of the Neumann solver for ``u = cos(pi x) cos(pi y)``.

    Solves ``-lap u + u = (2 pi^2 + 1) u`` with ``du/dn = 0`` on the square
    mesh of size ``n0`` and on ``refinements`` uniform refinements of it.
    """
    mesh = build_square_mesh(n0)
    rows = []
    for level in range(refinements + 1):
        if level:
            mesh = refine_uniform(mesh)
        f = (2 * np.pi**2 + 1) * fem.interpolate(mesh, _u_exact)
        uh = fem.solve_forward_neumann(mesh, f, tol=1e-12)
        rows.append(ConvergenceRow(mesh.n_triangles, mesh.h, fem.l2_error(mesh, uh, _u_exact),
                                   fem.h1_error(mesh, uh, _grad_exact)))
    return rows


def observed_rates(rows: list[ConvergenceRow]) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise rates ``log(e_k / e_{k+1}) / log(h_k / h_{k+1})`` for L2 and H1."""
    h = np.array([r.h for r in rows])
    l2 = np.array([r.l2 for r in rows])
    h1 = np.array([r.h1 for r in rows])
    dh = np.log(h[:-1] / h[1:])
    return np.log(l2[:-1] / l2[1:]) / dh, np.log(h1[:-1] / h1[1:]) / dh


def _h1_norm(mesh, v):
    return float(np.sqrt(v @ (fem.operators(mesh).h1 @ v)))


def _l2_norm(mesh, v):
    return float(np.sqrt(v @ (fem.operators(mesh).mass @ v)))


def _boundary_norm(mesh, v):
    return float(np.sqrt(v @ (fem.operators(mesh).boundary_mass @ v)))


def stability_sweep(problem: Problem, phi, alphas=(1e-2, 1e-4, 1e-6)) -> list[float]:
    """``(||u||_1 + ||p||_1 / sqrt(alpha)) / (||u_d||_G + ||u_n||_G + ||f||)`` per ``alpha``."""
    mesh = problem.mesh
    data = _boundary_norm(mesh, problem.u_d) + _boundary_norm(mesh, problem.u_n) + _l2_norm(mesh, problem.f)
    out = []
    for a in alphas:
        sol = problem.solve(phi, a)
        out.append((_h1_norm(mesh, sol.u) + _h1_norm(mesh, sol.p) / np.sqrt(a)) / data)
    return out


def shortcut_residuals(problem: Problem, phi, alpha: float) -> tuple[float, float, float]:
    """Compare the solved second adjoint with the closed form ``(-p, 0)``.

    Returns ``(||v + p||_1, ||w||_1, ||p||_1)``.
    """
    mesh = problem.mesh
    sol = problem.solve(phi, alpha)
    adj = adjoint_state(problem, phi, sol, mode="solve", tol=1e-13)
    return _h1_norm(mesh, adj.v + sol.p), _h1_norm(mesh, adj.w), _h1_norm(mesh, sol.p)


def random_velocity(mesh: TriMesh, rng: np.random.Generator, modes: int = 3) -> np.ndarray:
    """Smooth random field, a trigonometric sum times a bump vanishing on the boundary."""
    x, y = mesh.vertices.T
    bump = (1 - x**2) * (1 - y**2)
    V = np.zeros((mesh.n_vertices, 2))
    for c in range(2):
        coef = rng.normal(size=(modes, modes, 2))
        for i in range(modes):
            for j in range(modes):
                V[:, c] += (coef[i, j, 0] * np.cos(np.pi * (i * x + j * y) / 2)
                            + coef[i, j, 1] * np.sin(np.pi * (i * x - j * y) / 2)) / (1 + i + j)
    V *= bump[:, None]
    V[mesh.vertex_is_boundary] = 0.0
    return V


def fd_study(problem: Problem, phi, alpha: float, beta: float, n_fields: int = 3, seed: int = 0,
             steps=(1e-2, 1e-3, 1e-4)) -> list[dict]:
    """Central-difference check of the surface derivative on random fields.

    For each field reports the analytic value and the best relative error
    over ``steps``.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_fields):
        V = random_velocity(problem.mesh, rng)
        trials = [finite_difference_check(problem, phi, V, t, alpha, beta) for t in steps]
        best = int(np.argmin([r[2] for r in trials]))
        out.append({"dJ": trials[best][0], "fd": trials[best][1], "rel_err": trials[best][2],
                    "t": steps[best], "all": [r[2] for r in trials]})
    return out


def gradient_form_agreement(problem: Problem, phi, alpha: float, beta: float, n_fields: int = 3,
                            seed: int = 0) -> list[float]:
    """Relative gap between surface and distributed derivatives on random fields."""
    rng = np.random.default_rng(seed)
    sol = problem.solve(phi, alpha)
    adj = adjoint_state(problem, phi, sol)
    gs = shape_gradient_surface(problem, phi, sol, adj, beta)
    gd = shape_gradient_distributed(problem, phi, sol, adj, beta)
    out = []
    for _ in range(n_fields):
        V = random_velocity(problem.mesh, rng)
        a, b = gs(V), gd(V)
        out.append(abs(a - b) / max(abs(a), abs(b), 1e-300))
    return out


def setup_geometry(spec: ProblemSpec, coarse_n: int | None = None, seed: int = 0):
    """Problem on the exact support of ``spec``, with redistanced ``phi``.

    Returns ``(problem, phi)`` with data generated on ``spec.fine_n``.
    """
    if coarse_n is not None:
        spec = spec.replace(coarse_n=coarse_n)
    mesh = build_square_mesh(spec.coarse_n)
    problem = build_problem(spec, generate_data(spec, seed, coarse=mesh), mesh)
    phi = reinitialize(mesh, init_from_expression(mesh, spec.omega_e))
    return problem, phi
