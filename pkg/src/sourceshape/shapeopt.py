"""Shape gradients, descent velocities and the level-set steepest-descent loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.sparse as sp

from . import cutcell
from .errors import ConfigurationError, SourceShapeError
from .fem import (CoupledSolution, ObjectiveTerms, assemble_indicator_mass, compute_objective,
                  operators, recover_intensity, solve_coupled_state)
from .levelset import (InterfaceMesh, advect, connected_components, element_gradients,
                       extract_interface, grad_norm_deviation, measure_perimeter, measure_volume,
                       reinitialize, segment_curvature)
from .mesh import TriMesh
from .sparse import DEFAULT_TOL, solve_general, solve_spd

__all__ = [
    "Problem", "AdjointPair", "adjoint_state", "ShapeGradient",
    "shape_gradient_surface", "shape_gradient_distributed", "extend_velocity",
    "finite_difference_check", "line_search", "OptimizeConfig", "IterationRecord",
    "OptimizeResult", "optimize", "HISTORY_COLUMNS",
]

log = logging.getLogger(__name__)


@dataclass(eq=False)
class Problem:
    """Discrete inverse problem on a fixed mesh.

    ``f``, ``u_n`` and ``u_d`` are nodal arrays (boundary data only read on
    boundary vertices).
    """

    mesh: TriMesh
    f: np.ndarray
    u_n: np.ndarray
    u_d: np.ndarray
    lam: float = 0.0
    gamma0: float = 0.0

    def __post_init__(self):
        n = self.mesh.n_vertices
        self.f = np.broadcast_to(np.asarray(self.f, dtype=float), (n,)).copy()
        self.u_n = np.broadcast_to(np.asarray(self.u_n, dtype=float), (n,)).copy()
        self.u_d = np.broadcast_to(np.asarray(self.u_d, dtype=float), (n,)).copy()

    def solve(self, phi, alpha, indicator_mass=None) -> CoupledSolution:
        return solve_coupled_state(self.mesh, phi, self.f, self.u_n, self.u_d, alpha,
                                   indicator_mass=indicator_mass)

    def evaluate(self, phi, alpha, beta) -> tuple[ObjectiveTerms, CoupledSolution]:
        """Solve the state on ``{phi < 0}`` and evaluate the functional."""
        Mw = assemble_indicator_mass(self.mesh, phi)
        sol = self.solve(phi, alpha, indicator_mass=Mw)
        terms = compute_objective(self.mesh, phi, sol, self.u_d, alpha, self.lam, beta,
                                  self.gamma0, indicator_mass=Mw)
        return terms, sol


# --- adjoint ------------------------------------------------------------------

@dataclass(frozen=True)
class AdjointPair:
    v: np.ndarray
    w: np.ndarray


def adjoint_state(problem: Problem, phi, sol: CoupledSolution, mode: str = "shortcut",
                  tol: float = DEFAULT_TOL) -> AdjointPair:
    """Second adjoint pair ``(v, w)``.

    The shortcut returns the closed form ``(-p, 0)``. ``mode="solve"``
    assembles and solves the coupled adjoint system, which is only useful to
    validate the shortcut.
    """
    if mode == "shortcut":
        return AdjointPair(-sol.p, np.zeros_like(sol.p))
    if mode != "solve":
        raise ValueError(f"unknown adjoint mode {mode!r}")
    mesh = problem.mesh
    ops = operators(mesh)
    A, Mg = ops.h1, ops.boundary_mass
    Mw = assemble_indicator_mass(mesh, phi)
    a = sol.alpha
    # a(v, r) - (w, r)_G = -(u - u_d, r)_G ;  a(w, s) + (v, s)_w / a = -(p, s)_w / a
    B = sp.bmat([[A, -Mg], [Mw / a, A]], format="csr")
    rhs = np.concatenate([-Mg @ (sol.u - problem.u_d), -(Mw @ sol.p) / a])
    x = solve_general(B, rhs, tol=tol)
    n = mesh.n_vertices
    return AdjointPair(x[:n], x[n:])


# --- shape gradients ----------------------------------------------------------

@dataclass(frozen=True)
class ShapeGradient:
    """Linear functional ``W -> sum_i coeffs[i] . W_i`` on nodal vector fields.

    ``density`` holds the scalar surface density on each interface segment
    (midpoint value) when the gradient came from the boundary expression.
    """

    coeffs: np.ndarray
    density: np.ndarray | None = None

    def __call__(self, W: np.ndarray) -> float:
        return float(np.sum(self.coeffs * W))


_LINE_RULES = {
    "midpoint": (np.array([0.5]), np.array([1.0])),
    "gauss2": (np.array([0.5 - 0.5 / math.sqrt(3), 0.5 + 0.5 / math.sqrt(3)]), np.array([0.5, 0.5])),
}


def _perimeter_coeffs(mesh: TriMesh, iface: InterfaceMesh, lam: float, form: str, phi=None,
                      curvature=None) -> np.ndarray:
    coeffs = np.zeros((mesh.n_vertices, 2))
    if lam == 0.0 or len(iface) == 0:
        return coeffs
    L = iface.lengths
    tri = mesh.triangles[iface.parent]
    if form == "tangential":
        # div W - DW n.n equals the tangential derivative tau . DW tau (constant per element)
        tau = iface.tangents
        G = mesh.basis_gradients[iface.parent]
        contrib = lam * (L * 1.0)[:, None, None] * np.einsum("sid,sd->si", G, tau)[:, :, None] * tau[:, None, :]
    elif form == "curvature":
        kappa = segment_curvature(mesh, phi, iface) if curvature is None else curvature
        lam_mid = iface.bary.mean(axis=1)
        contrib = lam * (L * kappa)[:, None, None] * lam_mid[:, :, None] * iface.normals[:, None, :]
    else:
        raise ValueError(f"unknown perimeter form {form!r}")
    for k in range(3):
        np.add.at(coeffs, tri[:, k], contrib[:, k])
    return coeffs


def shape_gradient_surface(problem: Problem, phi, sol: CoupledSolution, adj: AdjointPair,
                           beta: float = 0.0, lam: float | None = None,
                           perimeter_form: str = "tangential", quadrature: str = "midpoint",
                           curvature=None) -> ShapeGradient:
    """Boundary expression of the shape derivative on the reconstructed interface.

    ``dJ(W) = int_{d omega} [(p^2 + 2 p v) / (2 alpha) + beta] W.n ds
    + lam int_{d omega} (div W - DW n.n) ds``; the perimeter part may instead
    use ``lam int kappa W.n ds`` (``perimeter_form="curvature"``).
    """
    mesh = problem.mesh
    lam = problem.lam if lam is None else lam
    alpha = sol.alpha
    iface = extract_interface(mesh, phi)
    coeffs = np.zeros((mesh.n_vertices, 2))
    if len(iface) == 0:
        return ShapeGradient(coeffs, np.zeros(0))
    tri = mesh.triangles[iface.parent]
    L = iface.lengths
    nodes, weights = _LINE_RULES[quadrature]
    local = np.zeros((len(iface), 3))
    for s, wq in zip(nodes, weights):
        lam_q = (1 - s) * iface.bary[:, 0] + s * iface.bary[:, 1]
        p = np.einsum("si,si->s", lam_q, sol.p[tri])
        v = np.einsum("si,si->s", lam_q, adj.v[tri])
        g = (p * p + 2 * p * v) / (2 * alpha) + beta
        local += (wq * L * g)[:, None] * lam_q
    contrib = local[:, :, None] * iface.normals[:, None, :]
    for k in range(3):
        np.add.at(coeffs, tri[:, k], contrib[:, k])
    lam_mid = iface.bary.mean(axis=1)
    pm = np.einsum("si,si->s", lam_mid, sol.p[tri])
    vm = np.einsum("si,si->s", lam_mid, adj.v[tri])
    density = (pm * pm + 2 * pm * vm) / (2 * alpha) + beta
    coeffs += _perimeter_coeffs(mesh, iface, lam, perimeter_form, phi, curvature)
    return ShapeGradient(coeffs, density)


def shape_gradient_distributed(problem: Problem, phi, sol: CoupledSolution, adj: AdjointPair,
                               beta: float = 0.0, lam: float | None = None,
                               perimeter_form: str = "tangential") -> ShapeGradient:
    """Volume (distributed) expression of the shape derivative.

    All domain terms are integrated exactly for P1 fields; integrals over
    ``omega`` use the cut-cell sub-triangulation.
    """
    mesh = problem.mesh
    lam = problem.lam if lam is None else lam
    alpha = sol.alpha
    u, p, v, w, f = sol.u, sol.p, adj.v, adj.w, problem.f
    G = mesh.basis_gradients  # (T, 3, 2)
    area = mesh.areas
    tri = mesh.triangles
    T = mesh.n_triangles

    # integrals of P1 products over whole elements: int_T a b = A/12 (sum a sum b + a.b)
    def prod(a, b):
        A_, B_ = a[tri], b[tri]
        return area / 12.0 * (A_.sum(1) * B_.sum(1) + np.einsum("ti,ti->t", A_, B_))

    gu, gv = element_gradients(mesh, u), element_gradients(mesh, v)
    gp, gw = element_gradients(mesh, p), element_gradients(mesh, w)
    gf = element_gradients(mesh, f)

    # (div W I - DW - DW^T) grad a . grad b  ->  coefficient of W_i
    def aniso(ga, gb):
        ab = np.einsum("td,td->t", ga, gb)
        return area[:, None, None] * (G * ab[:, None, None]
                                      - gb[:, None, :] * np.einsum("tid,td->ti", G, ga)[:, :, None]
                                      - ga[:, None, :] * np.einsum("tid,td->ti", G, gb)[:, :, None])

    local = aniso(gu, gv) + aniso(gp, gw)
    scal = prod(u, v) - prod(f, v) + prod(p, w)  # multiplies div W
    local += G * scal[:, None, None]
    # - int v grad f . W  ->  - grad f  int v lambda_i
    v_lam = area[:, None] / 12.0 * (v[tri].sum(1)[:, None] + v[tri])
    local -= v_lam[:, :, None] * gf[:, None, :]

    # omega terms: int_omega [p^2/(2a) + p v / a + beta] div W
    parent, bary = cutcell.negative_part(mesh, phi)
    elem, lamq, wq = cutcell.quadrature(mesh, parent, bary, degree=2)
    pq = np.einsum("qi,qi->q", lamq, p[tri[elem]])
    vq = np.einsum("qi,qi->q", lamq, v[tri[elem]])
    h = wq * (pq * pq / (2 * alpha) + pq * vq / alpha + beta)
    omega_int = np.bincount(elem, weights=h, minlength=T)
    local += G * omega_int[:, None, None]

    coeffs = np.zeros((mesh.n_vertices, 2))
    for k in range(3):
        np.add.at(coeffs, tri[:, k], local[:, k])
    iface = extract_interface(mesh, phi)
    coeffs += _perimeter_coeffs(mesh, iface, lam, perimeter_form, phi)
    return ShapeGradient(coeffs)


def extend_velocity(mesh: TriMesh, grad: ShapeGradient, tol: float = DEFAULT_TOL) -> np.ndarray:
    """H1 Riesz representative of ``-dJ`` with homogeneous boundary values.

    Solves ``(grad V, grad W) + (V, W) = -dJ(W)`` for all ``W`` vanishing on
    the outer boundary; returns nodal ``V`` of shape (N, 2).
    """
    A = operators(mesh).h1
    interior = ~mesh.vertex_is_boundary
    Aii = A[interior][:, interior].tocsr()
    V = np.zeros((mesh.n_vertices, 2))
    for c in range(2):
        b = -grad.coeffs[interior, c]
        V[interior, c] = solve_spd(Aii, b, tol=tol)
    return V


def h1_norm_sq(mesh: TriMesh, V: np.ndarray) -> float:
    A = operators(mesh).h1
    return float(sum(V[:, c] @ (A @ V[:, c]) for c in range(V.shape[1])))


# --- checks -------------------------------------------------------------------

def finite_difference_check(problem: Problem, phi, V, t: float, alpha: float, beta: float = 0.0,
                            gradient: str = "surface", **kwargs):
    """Compare the analytic derivative with a central difference of ``J``.

    Returns ``(dJ_analytic, dJ_fd, rel_err)``. Each ``J`` is a full coupled
    re-solve on ``phi`` advected by ``+/- t V``.
    """
    mesh = problem.mesh
    terms, sol = problem.evaluate(phi, alpha, beta)
    adj = adjoint_state(problem, phi, sol)
    if gradient == "surface":
        g = shape_gradient_surface(problem, phi, sol, adj, beta, **kwargs)
    else:
        g = shape_gradient_distributed(problem, phi, sol, adj, beta, **kwargs)
    dj = g(V)
    jp = problem.evaluate(advect(mesh, phi, V, t), alpha, beta)[0].total
    jm = problem.evaluate(advect(mesh, phi, V, -t), alpha, beta)[0].total
    fd = (jp - jm) / (2 * t)
    scale = max(abs(dj), abs(fd))
    rel = abs(dj - fd) / scale if scale > 0 else 0.0
    return dj, fd, rel


# --- optimisation -------------------------------------------------------------

@dataclass
class OptimizeConfig:
    """Parameters of the steepest-descent loop.

    ``alpha`` and ``beta`` are held for ``decay_start`` iterations and then
    multiplied by ``decay`` every iteration until ``alpha`` reaches
    ``alpha_min``. The loop stops when the relative change of ``J`` stays
    below ``eps`` for ``stop_window`` iterations, when the velocity norm
    drops below ``v_tol``, or when ``stop_window`` consecutive line searches
    fail to decrease ``J``.
    """

    alpha0: float = 1e-2
    beta0: float = 5e-3
    lam: float = 1e-6
    decay: float = 0.9
    decay_start: int = 20
    alpha_min: float = 1e-6
    eps: float = 1e-6
    stop_window: int = 5
    max_iter: int = 200
    cfl: float = 0.5
    max_halvings: int = 8
    reinit_threshold: float = 0.3
    reinit_every: int = 10
    reinit_steps: int = 30
    v_tol: float = 1e-10
    gradient: str = "surface"
    perimeter_form: str = "tangential"

    def __post_init__(self):
        if not self.alpha0 > 0:
            raise ConfigurationError("alpha0 must be positive")
        if self.lam < 0 or self.beta0 < 0:
            raise ConfigurationError("lam and beta0 must be non-negative")
        if not 0 < self.decay < 1:
            raise ConfigurationError("decay must lie in (0, 1)")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be >= 1")

    def to_dict(self):
        return asdict(self)


HISTORY_COLUMNS = ("k", "J", "J_misfit", "J_reg", "J_perim", "J_vol", "err_q",
                   "volume", "perimeter", "dt", "reinit_flag")


@dataclass
class IterationRecord:
    k: int
    J: float
    J_misfit: float
    J_reg: float
    J_perim: float
    J_vol: float
    err_q: float
    volume: float
    perimeter: float
    dt: float
    reinit_flag: bool
    alpha: float = float("nan")
    beta: float = float("nan")
    J_next: float = float("nan")
    forced: bool = False
    descent_rel_err: float = float("nan")
    velocity_norm: float = float("nan")

    def row(self):
        return [getattr(self, c) for c in HISTORY_COLUMNS]


@dataclass
class OptimizeResult:
    phi: np.ndarray
    solution: CoupledSolution
    q: np.ndarray
    history: list[IterationRecord] = field(default_factory=list)
    reason: str = ""
    alpha: float = float("nan")
    beta: float = float("nan")
    terms: ObjectiveTerms | None = None


def line_search(problem: Problem, phi, V, J_current: float, alpha: float, beta: float,
                cfl: float = 0.5, max_halvings: int = 8):
    """Backtracking on the advection time step.

    Starts from ``dt = cfl * h / max|V|`` and halves until ``J`` decreases.
    Returns ``(phi_next, dt, terms_next, sol_next, forced)``; ``forced`` is
    set when no trial decreased ``J`` and the smallest step was accepted, or
    when ``V`` vanishes (then ``phi`` is returned unchanged).
    """
    mesh = problem.mesh
    vmax = float(np.max(np.linalg.norm(V, axis=1)))
    if vmax == 0.0:
        terms, sol = problem.evaluate(phi, alpha, beta)
        return phi.copy(), 0.0, terms, sol, True
    dt = cfl * mesh.h / vmax
    for _ in range(max_halvings + 1):
        trial = advect(mesh, phi, V, dt)
        terms, sol = problem.evaluate(trial, alpha, beta)
        if terms.total < J_current:
            return trial, dt, terms, sol, False
        last = (trial, dt, terms, sol)
        dt *= 0.5
    return (*last, True)


def optimize(problem: Problem, phi0, config: OptimizeConfig | None = None,
             err_q=None, callback=None) -> OptimizeResult:
    """Level-set shape steepest descent.

    ``err_q``, if given, maps ``(phi, q)`` to the intensity error recorded in
    the history. ``callback(record, phi)`` is invoked after each iteration.
    """
    cfg = config or OptimizeConfig()
    problem.lam = cfg.lam
    mesh = problem.mesh
    phi = reinitialize(mesh, phi0, cfg.reinit_steps)
    alpha, beta = cfg.alpha0, cfg.beta0
    history: list[IterationRecord] = []
    reason = "max_iter"
    changes: list[float] = []
    for k in range(cfg.max_iter):
        try:
            terms, sol = problem.evaluate(phi, alpha, beta)
        except SourceShapeError:
            reason = "solver_failure"
            log.exception("state solve failed at iteration %d", k)
            break
        adj = adjoint_state(problem, phi, sol)
        if cfg.gradient == "surface":
            grad = shape_gradient_surface(problem, phi, sol, adj, beta, perimeter_form=cfg.perimeter_form)
        else:
            grad = shape_gradient_distributed(problem, phi, sol, adj, beta, perimeter_form=cfg.perimeter_form)
        V = extend_velocity(mesh, grad)
        vnorm2 = h1_norm_sq(mesh, V)
        dJV = grad(V)
        cert = abs(dJV + vnorm2) / vnorm2 if vnorm2 > 0 else 0.0
        rec = IterationRecord(
            k=k, J=terms.total, J_misfit=terms.misfit, J_reg=terms.regularization,
            J_perim=terms.perimeter, J_vol=terms.volume,
            err_q=float(err_q(phi, _intensity(mesh, sol, phi))) if err_q else float("nan"),
            volume=measure_volume(mesh, phi), perimeter=measure_perimeter(mesh, phi),
            dt=0.0, reinit_flag=False, alpha=alpha, beta=beta,
            descent_rel_err=cert, velocity_norm=math.sqrt(vnorm2))
        history.append(rec)
        if math.sqrt(vnorm2) <= cfg.v_tol or len(extract_interface(mesh, phi)) == 0:
            reason = "stagnation"
            break
        phi_next, dt, terms_next, _, forced = line_search(problem, phi, V, terms.total, alpha, beta,
                                                          cfg.cfl, cfg.max_halvings)
        rec.dt, rec.J_next, rec.forced = dt, terms_next.total, forced
        reinit = (grad_norm_deviation(mesh, phi_next) > cfg.reinit_threshold
                  or (k + 1) % cfg.reinit_every == 0)
        if reinit:
            phi_next = reinitialize(mesh, phi_next, cfg.reinit_steps)
        rec.reinit_flag = reinit
        phi = phi_next
        if callback is not None:
            callback(rec, phi)
        changes.append(abs(terms_next.total - terms.total) / max(abs(terms.total), 1e-300))
        if len(changes) >= cfg.stop_window and max(changes[-cfg.stop_window:]) < cfg.eps:
            reason = "converged"
            break
        if len(history) >= cfg.stop_window and all(r.forced for r in history[-cfg.stop_window:]):
            reason = "stagnation"
            break
        if k + 1 >= cfg.decay_start and alpha > cfg.alpha_min:
            factor = max(cfg.decay, cfg.alpha_min / alpha)
            alpha *= factor
            beta *= factor
    else:
        reason = "max_iter"
    terms, sol = problem.evaluate(phi, alpha, beta)
    return OptimizeResult(phi, sol, _intensity(mesh, sol, phi), history, reason, alpha, beta, terms)


def _intensity(mesh, sol, phi):
    return recover_intensity(mesh, sol, phi)
