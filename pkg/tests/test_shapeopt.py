import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sourceshape import fem
from sourceshape.errors import ConfigurationError
from sourceshape.harness import get_example
from sourceshape.harness.studies import (fd_study, gradient_form_agreement, random_velocity,
                                         setup_geometry, shortcut_residuals)
from sourceshape.levelset import disk, extract_interface, init_from_expression, reinitialize
from sourceshape.mesh import build_square_mesh
from sourceshape.shapeopt import (AdjointPair, OptimizeConfig, Problem, ShapeGradient, adjoint_state,
                                  extend_velocity, finite_difference_check, h1_norm_sq, line_search,
                                  optimize, shape_gradient_distributed, shape_gradient_surface)

ALPHA, BETA = 1e-2, 5e-3


@pytest.fixture(scope="module")
def e1_small():
    return setup_geometry(get_example("e1").replace(coarse_n=30, fine_n=61))


@pytest.fixture(scope="module")
def e1_full():
    return setup_geometry(get_example("e1"))


def _state(problem, phi, alpha=ALPHA):
    sol = problem.solve(phi, alpha)
    return sol, adjoint_state(problem, phi, sol)


def test_adjoint_zero_for_consistent_data():
    m = build_square_mesh(20)
    u = fem.solve_forward_neumann(m, 1.0, u_n=0.5)
    problem = Problem(m, 1.0, 0.5, u)
    phi = init_from_expression(m, disk(0, 0, 0.3))
    sol = problem.solve(phi, ALPHA)
    for mode in ("shortcut", "solve"):
        adj = adjoint_state(problem, phi, sol, mode=mode, tol=1e-13)
        assert np.abs(adj.v).max() < 1e-9 and np.abs(adj.w).max() < 1e-9


@pytest.mark.parametrize("name", ["e1", "e2", "e3", "e4", "e5", "e6"])
def test_shortcut_matches_solved_adjoint(name):
    problem, phi = setup_geometry(get_example(name).replace(coarse_n=24, fine_n=49))
    dv, dw, pn = shortcut_residuals(problem, phi, ALPHA)
    assert dv <= 1e-8 * pn
    assert dw <= 1e-8 * max(pn, 1.0)


def test_surface_density_identity(e1_small):
    problem, phi = e1_small
    sol, adj = _state(problem, phi)
    g = shape_gradient_surface(problem, phi, sol, adj, BETA)
    iface = extract_interface(problem.mesh, phi)
    pm = np.einsum("si,si->s", iface.bary.mean(axis=1), sol.p[problem.mesh.triangles[iface.parent]])
    np.testing.assert_allclose(g.density, -pm**2 / (2 * ALPHA) + BETA, rtol=1e-12, atol=1e-15)


def test_gradients_vanish_on_zero_field(e1_small):
    problem, phi = e1_small
    sol, adj = _state(problem, phi)
    W = np.zeros((problem.mesh.n_vertices, 2))
    assert shape_gradient_surface(problem, phi, sol, adj, BETA)(W) == 0.0
    assert shape_gradient_distributed(problem, phi, sol, adj, BETA)(W) == 0.0


@settings(max_examples=10)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_gradient_linearity(a, b, seed):
    problem, phi = _linearity_setup()
    sol, adj = _state(problem, phi)
    rng = np.random.default_rng(seed)
    W1, W2 = random_velocity(problem.mesh, rng), random_velocity(problem.mesh, rng)
    for g in (shape_gradient_surface(problem, phi, sol, adj, BETA),
              shape_gradient_distributed(problem, phi, sol, adj, BETA)):
        lhs = g(a * W1 + b * W2)
        rhs = a * g(W1) + b * g(W2)
        assert abs(lhs - rhs) <= 1e-12 * (abs(a * g(W1)) + abs(b * g(W2)) + 1e-300)


_CACHE = {}


def _linearity_setup():
    if "p" not in _CACHE:
        _CACHE["p"] = setup_geometry(get_example("e1").replace(coarse_n=16, fine_n=33))
    return _CACHE["p"]


def test_surface_and_distributed_agree_on_resolved_disk():
    spec = get_example("e4")  # disk of radius 0.3
    gaps = []
    for n in (36, 71):
        problem, phi = setup_geometry(spec.replace(coarse_n=n, fine_n=2 * n + 1))
        gaps.append(max(gradient_form_agreement(problem, phi, ALPHA, 0.5 * ALPHA * 0.25, n_fields=4)))
    # h <= r/8 at n = 71
    assert gaps[1] <= 0.05
    assert gaps[1] < gaps[0]


def test_distributed_w_terms_vanish(e1_small):
    problem, phi = e1_small
    sol, adj = _state(problem, phi)
    assert np.all(adj.w == 0)
    rng = np.random.default_rng(3)
    W = random_velocity(problem.mesh, rng)
    base = shape_gradient_distributed(problem, phi, sol, adj, BETA)(W)
    w = rng.normal(size=problem.mesh.n_vertices)
    with_w = shape_gradient_distributed(problem, phi, sol, AdjointPair(adj.v, w), BETA)(W)
    assert with_w != base


def test_extension_of_zero_functional(mesh16):
    V = extend_velocity(mesh16, ShapeGradient(np.zeros((mesh16.n_vertices, 2))))
    assert np.all(V == 0)


def test_extension_certificate(e1_full):
    problem, phi = e1_full
    sol, adj = _state(problem, phi)
    g = shape_gradient_surface(problem, phi, sol, adj, BETA)
    V = extend_velocity(problem.mesh, g)
    assert np.all(V[problem.mesh.vertex_is_boundary] == 0)
    n2 = h1_norm_sq(problem.mesh, V)
    assert n2 > 0
    assert abs(g(V) + n2) <= 1e-8 * n2


def test_fd_zero_field(e1_small):
    problem, phi = e1_small
    dj, fd, rel = finite_difference_check(problem, phi, np.zeros((problem.mesh.n_vertices, 2)),
                                          1e-3, ALPHA, BETA)
    assert dj == 0 and fd == 0 and rel == 0


def test_fd_agrees_with_surface_gradient(e1_full):
    problem, phi = e1_full
    rows = fd_study(problem, phi, ALPHA, BETA, n_fields=3, seed=0)
    for row in rows:
        assert row["rel_err"] <= 1e-2, row
        # the largest step is dominated by truncation error
        assert row["all"][0] > row["rel_err"]


def test_line_search_zero_velocity(e1_small):
    problem, phi = e1_small
    J = problem.evaluate(phi, ALPHA, BETA)[0].total
    out, dt, terms, _, forced = line_search(problem, phi, np.zeros((problem.mesh.n_vertices, 2)),
                                            J, ALPHA, BETA)
    assert forced and dt == 0.0
    np.testing.assert_array_equal(out, phi)


def test_line_search_step_bound_and_descent(e1_small):
    problem, phi0 = e1_small
    mesh = problem.mesh
    phi = reinitialize(mesh, init_from_expression(mesh, disk(-0.1, 0, 0.2)))
    terms, sol = problem.evaluate(phi, ALPHA, BETA)
    V = extend_velocity(mesh, shape_gradient_surface(problem, phi, sol, adjoint_state(problem, phi, sol), BETA))
    _, dt, new, _, forced = line_search(problem, phi, V, terms.total, ALPHA, BETA)
    assert dt * np.max(np.linalg.norm(V, axis=1)) <= 0.5 * mesh.h * (1 + 1e-12)
    assert not forced and new.total < terms.total


def test_optimize_stops_at_fixed_point():
    # data generated without any source: p = 0 for every omega, so V = 0
    m = build_square_mesh(20)
    u = fem.solve_forward_neumann(m, 1.0, u_n=0.5)
    problem = Problem(m, 1.0, 0.5, u)
    cfg = OptimizeConfig(beta0=0.0, lam=0.0, max_iter=20)
    res = optimize(problem, init_from_expression(m, disk(0, 0, 0.3)), cfg)
    assert len(res.history) <= 3
    assert res.history[-1].velocity_norm < 1e-10
    assert res.reason == "stagnation"


def test_optimize_run_properties():
    spec = get_example("e1").replace(coarse_n=30, fine_n=61)
    problem, _ = setup_geometry(spec)
    cfg = OptimizeConfig(alpha0=1e-2, beta0=5e-3, max_iter=26, eps=0.0)
    m = problem.mesh
    res = optimize(problem, init_from_expression(m, spec.omega_0), cfg)
    h = res.history
    assert len(h) == 26
    assert all(r.descent_rel_err <= 1e-6 for r in h)
    ok = [r.J_next < r.J for r in h if not r.forced]
    assert sum(ok) == len(ok)
    assert sum(not r.forced for r in h) >= 0.95 * len(h)
    # alpha held for 20 iterations, then decays by 0.9
    alphas = np.array([r.alpha for r in h])
    assert np.all(alphas[:20] == 1e-2)
    np.testing.assert_allclose(alphas[20:], 1e-2 * 0.9 ** np.arange(1, 7), rtol=1e-12)
    np.testing.assert_allclose([r.beta / r.alpha for r in h], 0.5, rtol=1e-12)
    # accepted values never increase while the parameters are fixed
    J = np.array([r.J for r in h[:20]])
    assert np.all(np.diff(J) < 0)
    assert h[-1].err_q != h[-1].err_q  # no metric supplied: NaN


def test_alpha_floor():
    spec = get_example("e1").replace(coarse_n=16, fine_n=33)
    problem, _ = setup_geometry(spec)
    cfg = OptimizeConfig(alpha0=1e-2, beta0=5e-3, alpha_min=8e-3, max_iter=25, eps=0.0, decay_start=2)
    res = optimize(problem, init_from_expression(problem.mesh, spec.omega_0), cfg)
    assert min(r.alpha for r in res.history) == pytest.approx(8e-3)


@pytest.mark.parametrize("kw", [dict(alpha0=0.0), dict(lam=-1.0), dict(beta0=-1.0), dict(decay=1.0),
                                dict(max_iter=0)])
def test_config_validation(kw):
    with pytest.raises(ConfigurationError):
        OptimizeConfig(**kw)
